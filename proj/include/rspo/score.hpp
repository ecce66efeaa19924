#pragma once

// ELBO sequence scores with coupled masks, per-token relative scores and
// detached micro-batch centering.

#include <span>
#include <vector>

#include "rspo/mdm.hpp"
#include "rspo/rng.hpp"

namespace rspo {

// One Monte Carlo corruption of a completion. positions is sorted and nonempty.
struct MaskSample {
    double t = 1.0;
    std::vector<int> positions;
};

// t ~ Uniform(0,1], each completion position masked with probability t;
// empty draws are resampled (both t and the set).
MaskSample sample_mask_set(int completion_len, Rng& rng);

struct ElboEstimate {
    double value = 0.0;  // likelihood-oriented: larger means more likely
    int k = 0;
    std::vector<MaskSample> masks;
    std::vector<double> per_mask;  // (L_c/|M_k|) * sum of masked log-probs

    // Standard error of value from the spread of per_mask (0 when k < 2).
    double standard_error() const;
};

// (1/K) sum_k (L_c/|M_k|) sum_{i in M_k} log pi(o_i | o with M_k masked, q).
ElboEstimate elbo_score(const DenoiserParams& params, std::span<const Token> prompt,
                        std::span<const Token> completion, std::span<const MaskSample> masks);

// Same value; also adds scale * d(value)/d(theta) into grad.
double elbo_score_grad(const DenoiserParams& params, std::span<const Token> prompt,
                       std::span<const Token> completion, std::span<const MaskSample> masks,
                       double scale, std::span<double> grad);

struct ScoreOptions {
    int k_masks = 2;
    bool subtract_reference = true;  // false: delta = E_theta / L_c
    bool want_grad = true;
};

struct CompletionScore {
    double delta = 0.0;
    double elbo_current = 0.0;
    double elbo_reference = 0.0;
    std::vector<MaskSample> masks;
    std::vector<double> grad;  // d(delta)/d(theta_current) when requested
};

// Draws K masks once and scores both models on them.
CompletionScore score_completion(const DenoiserParams& current, const DenoiserParams& reference,
                                 std::span<const Token> prompt, std::span<const Token> completion,
                                 const ScoreOptions& opts, Rng& rng);

// Coupled relative score (E_cur - E_ref) / L_c with K shared masks.
double coupled_delta(const DenoiserParams& current, const DenoiserParams& reference,
                     std::span<const Token> prompt, std::span<const Token> completion, int k_masks,
                     Rng& rng);

struct ScoreItem {
    std::span<const Token> prompt;
    std::span<const Token> completion;
    Rng rng;
};

// Scores every item; item i uses only its own rng. The OpenMP kernel and the
// serial reference return bit-identical results.
std::vector<CompletionScore> score_batch(const DenoiserParams& current,
                                         const DenoiserParams& reference,
                                         std::span<const ScoreItem> items, const ScoreOptions& opts);
std::vector<CompletionScore> score_batch_serial(const DenoiserParams& current,
                                                const DenoiserParams& reference,
                                                std::span<const ScoreItem> items,
                                                const ScoreOptions& opts);

struct RelativeScoreBatch {
    std::vector<double> deltas;
    double center = 0.0;            // detached; 0 when centering is off
    std::vector<double> centered;   // deltas - center
    bool centering = true;

    std::size_t size() const { return deltas.size(); }
};

// center = mean(deltas), treated as a constant by every gradient routine.
RelativeScoreBatch center_scores(std::span<const double> deltas);
// Ablation: no centering, centered == deltas.
RelativeScoreBatch uncentered_scores(std::span<const double> deltas);

// Population variance of the raw deltas.
double var_delta(const RelativeScoreBatch& batch);

// Mean of the values the loss sees: centered ones when centering is on,
// raw deltas otherwise.
double batch_mean_offset(const RelativeScoreBatch& batch);

}  // namespace rspo
