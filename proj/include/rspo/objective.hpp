#pragma once

// Group-relative advantages and the policy objectives built on centered
// relative scores: RSPO, the advantage-weighted (AW) surrogate and the
// matched quadratic objective. Gradients are assembled from per-sample
// score gradients d(delta_i)/d(theta); the batch center never contributes.

#include <span>
#include <vector>

#include "rspo/score.hpp"

namespace rspo {

inline constexpr double kDefaultLambda = 0.01;

struct AdvantageConfig {
    bool normalize = false;
    double epsilon = 1e-4;
};

// r_i - mean(r), optionally divided by (population std + epsilon).
// Zero-variance groups give all-zero advantages.
std::vector<double> group_advantages(std::span<const double> rewards, const AdvantageConfig& cfg);

bool is_zero_variance_group(std::span<const double> rewards);

struct LossOutput {
    double loss = 0.0;
    std::vector<double> weights;    // detached coefficients w_i
    std::vector<double> residuals;  // e_i = A_i - lambda * centered_i
    std::vector<double> gradient;   // filled only by the overloads taking score gradients
};

// w_i = A_i - lambda * centered_i. lambda must be positive.
std::vector<double> rspo_weights(std::span<const double> advantages,
                                 std::span<const double> centered, double lambda);

// -(1/N) sum w_i * centered_i. lambda = 0 dispatches to aw_loss.
LossOutput rspo_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                     double lambda);
LossOutput rspo_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                     double lambda, std::span<const std::vector<double>> score_grads);

// -(1/N) sum A_i * centered_i.
LossOutput aw_loss(const RelativeScoreBatch& batch, std::span<const double> advantages);
LossOutput aw_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                   std::span<const std::vector<double>> score_grads);

// -<A, delta>_B + (lambda/2) ||centered||_B^2 together with its completed-square form
//   (lambda/2) ||centered - A/lambda||^2 - ||A||^2/(2 lambda) - center <A, 1>.
struct QuadLossOutput {
    double loss = 0.0;
    double square_term = 0.0;
    double target_constant = 0.0;
    double shift_term = 0.0;
    double identity_gap = 0.0;  // |loss - (square + constant + shift)|
    std::vector<double> gradient;
};

QuadLossOutput quad_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                         double lambda);
QuadLossOutput quad_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                         double lambda, std::span<const std::vector<double>> score_grads);

// -(1/N) sum (A_i - lambda * centered_i) grad delta_i, summed in index order.
std::vector<double> rspo_gradient(const RelativeScoreBatch& batch,
                                  std::span<const double> advantages, double lambda,
                                  std::span<const std::vector<double>> score_grads);

// Gradient of quad_loss assembled as fit term plus penalty term.
std::vector<double> quad_gradient(const RelativeScoreBatch& batch,
                                  std::span<const double> advantages, double lambda,
                                  std::span<const std::vector<double>> score_grads);

// max_i |A_i - lambda * centered_i|.
double fixed_point_residual(const RelativeScoreBatch& batch, std::span<const double> advantages,
                            double lambda);

// Batch inner product <a, b>_B = (1/N) sum a_i b_i.
double batch_inner(std::span<const double> a, std::span<const double> b);
double batch_norm(std::span<const double> a);

}  // namespace rspo
