#include "rspo/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rspo {

namespace {

void check_lengths(const RelativeScoreBatch& batch, std::span<const double> advantages) {
    if (batch.size() == 0) throw std::invalid_argument("objective: empty batch");
    if (advantages.size() != batch.size() || batch.centered.size() != batch.size())
        throw std::invalid_argument("objective: " + std::to_string(advantages.size()) +
                                    " advantages for a batch of " + std::to_string(batch.size()));
}

void check_grads(const RelativeScoreBatch& batch, std::span<const std::vector<double>> grads) {
    if (grads.size() != batch.size())
        throw std::invalid_argument("objective: need one score gradient per sample");
    for (const auto& g : grads)
        if (g.size() != grads[0].size())
            throw std::invalid_argument("objective: score gradients have mismatched dimensions");
}

// -(1/N) sum coeff_i * g_i in index order.
std::vector<double> assemble(std::span<const double> coeff,
                             std::span<const std::vector<double>> grads) {
    const std::size_t dim = grads.empty() ? 0 : grads[0].size();
    std::vector<double> out(dim, 0.0);
    const double scale = -1.0 / static_cast<double>(coeff.size());
    for (std::size_t i = 0; i < coeff.size(); ++i) {
        const double c = scale * coeff[i];
        const std::vector<double>& g = grads[i];
        for (std::size_t d = 0; d < dim; ++d) out[d] += c * g[d];
    }
    return out;
}

}  // namespace

double batch_inner(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("batch_inner: size mismatch or empty");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s / static_cast<double>(a.size());
}

double batch_norm(std::span<const double> a) { return std::sqrt(batch_inner(a, a)); }

bool is_zero_variance_group(std::span<const double> rewards) {
    for (double r : rewards)
        if (r != rewards[0]) return false;
    return true;
}

std::vector<double> group_advantages(std::span<const double> rewards, const AdvantageConfig& cfg) {
    if (rewards.size() < 2) throw std::invalid_argument("group_advantages: group size must be >= 2");
    if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("group_advantages: epsilon must be > 0");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    std::vector<double> adv(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
    if (cfg.normalize) {
        double ss = 0.0;
        for (double a : adv) ss += a * a;
        const double scale = std::sqrt(ss / n) + cfg.epsilon;
        for (double& a : adv) a /= scale;
    }
    return adv;
}

std::vector<double> rspo_weights(std::span<const double> advantages,
                                 std::span<const double> centered, double lambda) {
    if (!(lambda > 0.0))
        throw std::invalid_argument("rspo_weights: lambda must be > 0 (lambda = 0 is the AW objective)");
    if (advantages.size() != centered.size())
        throw std::invalid_argument("rspo_weights: length mismatch");
    std::vector<double> w(advantages.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = advantages[i] - lambda * centered[i];
    return w;
}

LossOutput aw_loss(const RelativeScoreBatch& batch, std::span<const double> advantages) {
    check_lengths(batch, advantages);
    LossOutput out;
    out.weights.assign(advantages.begin(), advantages.end());
    out.residuals = out.weights;
    out.loss = -batch_inner(out.weights, batch.centered);
    return out;
}

LossOutput aw_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                   std::span<const std::vector<double>> score_grads) {
    LossOutput out = aw_loss(batch, advantages);
    check_grads(batch, score_grads);
    out.gradient = assemble(out.weights, score_grads);
    return out;
}

LossOutput rspo_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                     double lambda) {
    if (lambda < 0.0 || !std::isfinite(lambda))
        throw std::invalid_argument("rspo_loss: lambda must be finite and >= 0");
    if (lambda == 0.0) return aw_loss(batch, advantages);
    check_lengths(batch, advantages);
    LossOutput out;
    out.weights = rspo_weights(advantages, batch.centered, lambda);
    out.residuals = out.weights;
    out.loss = -batch_inner(out.weights, batch.centered);
    return out;
}

LossOutput rspo_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                     double lambda, std::span<const std::vector<double>> score_grads) {
    LossOutput out = rspo_loss(batch, advantages, lambda);
    check_grads(batch, score_grads);
    out.gradient = assemble(out.weights, score_grads);
    return out;
}

std::vector<double> rspo_gradient(const RelativeScoreBatch& batch,
                                  std::span<const double> advantages, double lambda,
                                  std::span<const std::vector<double>> score_grads) {
    return rspo_loss(batch, advantages, lambda, score_grads).gradient;
}

QuadLossOutput quad_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                         double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("quad_loss: lambda must be > 0");
    check_lengths(batch, advantages);
    QuadLossOutput out;
    const double fit = -batch_inner(advantages, batch.deltas);
    const double penalty = 0.5 * lambda * batch_inner(batch.centered, batch.centered);
    out.loss = fit + penalty;

    std::vector<double> gap(batch.size());
    double sum_adv = 0.0;
    for (std::size_t i = 0; i < gap.size(); ++i) {
        gap[i] = batch.centered[i] - advantages[i] / lambda;
        sum_adv += advantages[i];
    }
    out.square_term = 0.5 * lambda * batch_inner(gap, gap);
    out.target_constant = -batch_inner(advantages, advantages) / (2.0 * lambda);
    out.shift_term = -batch.center * sum_adv / static_cast<double>(batch.size());
    out.identity_gap = std::abs(out.loss - (out.square_term + out.target_constant + out.shift_term));
    return out;
}

std::vector<double> quad_gradient(const RelativeScoreBatch& batch,
                                  std::span<const double> advantages, double lambda,
                                  std::span<const std::vector<double>> score_grads) {
    if (!(lambda > 0.0)) throw std::invalid_argument("quad_gradient: lambda must be > 0");
    check_lengths(batch, advantages);
    check_grads(batch, score_grads);
    // d/dtheta of -<A, delta>: -(1/N) sum A_i grad_i.
    std::vector<double> fit = assemble(advantages, score_grads);
    // d/dtheta of (lambda/2)||delta - c||^2 with c detached: (lambda/N) sum centered_i grad_i.
    std::vector<double> scaled(batch.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = -lambda * batch.centered[i];
    std::vector<double> penalty = assemble(scaled, score_grads);
    for (std::size_t d = 0; d < fit.size(); ++d) fit[d] += penalty[d];
    return fit;
}

QuadLossOutput quad_loss(const RelativeScoreBatch& batch, std::span<const double> advantages,
                         double lambda, std::span<const std::vector<double>> score_grads) {
    QuadLossOutput out = quad_loss(batch, advantages, lambda);
    out.gradient = quad_gradient(batch, advantages, lambda, score_grads);
    return out;
}

double fixed_point_residual(const RelativeScoreBatch& batch, std::span<const double> advantages,
                            double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("fixed_point_residual: lambda must be > 0");
    check_lengths(batch, advantages);
    double worst = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i)
        worst = std::max(worst, std::abs(advantages[i] - lambda * batch.centered[i]));
    return worst;
}

}  // namespace rspo
