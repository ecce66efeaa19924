#pragma once

// Brute-force and closed-form references for tiny instances. Nothing here
// calls the score or objective code; the denoiser is reached only through
// DenoiserModel::log_probs.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "rspo/mdm.hpp"

namespace rspo::oracle {

struct TinyLimits {
    int max_outputs = 4;
    int max_completion = 4;
    int max_steps = 4;
    std::uint64_t max_enumeration = 1'000'000;
};

// Expectation of the one-mask ELBO estimator under t ~ U(0,1], Bernoulli(t)
// masking conditioned on a nonempty set. Enumerates all 2^L - 1 sets with
// their Beta-integral weights.
double exact_elbo_expectation(const DenoiserModel& model, std::span<const Token> prompt,
                              std::span<const Token> completion, const TinyLimits& limits = {});

// log P(reverse chain on the grid t_k = k/T ends at completion), starting
// from the all-mask state; dynamic programming over masked sets.
double exact_sequence_loglik(const DenoiserModel& model, std::span<const Token> prompt,
                             std::span<const Token> completion, int steps, Token mask_id,
                             const TinyLimits& limits = {});

struct KlOptimum {
    std::vector<double> pi_star;
    std::vector<double> delta_star;  // r/beta - log Z
    double log_z = 0.0;
    // max_i |(delta*_i - mean delta*) - (r_i - mean r)/beta|
    double centered_identity_gap = 0.0;
};

// pi* = pi_ref exp(r/beta) / Z over an enumerable support.
KlOptimum kl_regularized_optimum(std::span<const double> pi_ref, std::span<const double> rewards,
                                 double beta);

struct KlProxy {
    double kl_pq = 0.0;
    double kl_qp = 0.0;
    double half_var = 0.0;  // (1/2) Var_{Y~P} log(Q/P)
    double gap_pq = 0.0;    // |kl_pq - half_var|
    double gap_qp = 0.0;
};

KlProxy kl_proxy(std::span<const double> p, std::span<const double> q);

struct PerturbationCheck {
    double eps = 0.0;
    double lhs_aw = 0.0;
    double lhs_rspo = 0.0;
    double rhs_aw = 0.0;
    double rhs_rspo = 0.0;

    // lhs <= rhs up to a 1e-12 relative rounding allowance.
    bool holds() const;
};

// Surrogate-error bound for the scalar AW and RSPO losses when the ideal
// centered scores r_hat are replaced by r_hat + centered(xi), |xi_i| <= eps.
PerturbationCheck perturbation_bound_check(std::span<const double> advantages,
                                           std::span<const double> r_hat,
                                           std::span<const double> xi, double lambda);

// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace rspo::oracle
