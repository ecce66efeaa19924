#include "rspo/score.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rspo/parallel.hpp"

namespace rspo {

MaskSample sample_mask_set(int completion_len, Rng& rng) {
    if (completion_len < 1) throw std::invalid_argument("sample_mask_set: completion length must be >= 1");
    MaskSample m;
    while (m.positions.empty()) {
        m.t = rng.uniform_pos();
        for (int i = 0; i < completion_len; ++i)
            if (rng.uniform() < m.t) m.positions.push_back(i);
    }
    return m;
}

double ElboEstimate::standard_error() const {
    if (per_mask.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : per_mask) mean += v;
    mean /= static_cast<double>(per_mask.size());
    double ss = 0.0;
    for (double v : per_mask) ss += (v - mean) * (v - mean);
    const double n = static_cast<double>(per_mask.size());
    return std::sqrt(ss / (n - 1.0) / n);
}

namespace {

void check_scoring_inputs(const DenoiserParams& params, std::span<const Token> completion,
                          std::span<const MaskSample> masks) {
    if (masks.empty()) throw std::invalid_argument("elbo_score: empty mask list");
    if (completion.empty()) throw std::invalid_argument("elbo_score: completion length must be >= 1");
    const Token mask = static_cast<Token>(params.shape.output_size());
    for (Token t : completion)
        if (t < 0 || t >= mask) throw std::invalid_argument("elbo_score: completion must be clean");
    const int L = static_cast<int>(completion.size());
    for (const MaskSample& m : masks) {
        if (m.positions.empty()) throw std::invalid_argument("elbo_score: empty mask set");
        for (std::size_t j = 0; j < m.positions.size(); ++j) {
            const int p = m.positions[j];
            if (p < 0 || p >= L) throw std::invalid_argument("elbo_score: mask position out of range");
            if (j > 0 && p <= m.positions[j - 1])
                throw std::invalid_argument("elbo_score: mask positions must be sorted and unique");
        }
    }
}

// Returns per-mask values; accumulates the gradient when grad is nonempty.
std::vector<double> score_masks(const DenoiserParams& params, std::span<const Token> prompt,
                                std::span<const Token> completion,
                                std::span<const MaskSample> masks, double scale,
                                std::span<double> grad) {
    check_scoring_inputs(params, completion, masks);
    const Token mask = static_cast<Token>(params.shape.output_size());
    const double L = static_cast<double>(completion.size());
    const double K = static_cast<double>(masks.size());
    std::vector<double> per_mask;
    per_mask.reserve(masks.size());
    std::vector<Token> state(completion.begin(), completion.end());
    for (const MaskSample& m : masks) {
        for (int p : m.positions) state[static_cast<std::size_t>(p)] = mask;
        const double weight = L / static_cast<double>(m.positions.size());
        double sum = 0.0;
        for (int p : m.positions) {
            const Token target = completion[static_cast<std::size_t>(p)];
            if (grad.empty())
                sum += denoiser_logprob(params, prompt, state, p, target);
            else
                sum += accumulate_logprob_grad(params, prompt, state, p, target,
                                               scale * weight / K, grad);
        }
        per_mask.push_back(weight * sum);
        for (int p : m.positions) state[static_cast<std::size_t>(p)] = completion[static_cast<std::size_t>(p)];
    }
    return per_mask;
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

ElboEstimate elbo_score(const DenoiserParams& params, std::span<const Token> prompt,
                        std::span<const Token> completion, std::span<const MaskSample> masks) {
    ElboEstimate est;
    est.per_mask = score_masks(params, prompt, completion, masks, 0.0, {});
    est.k = static_cast<int>(masks.size());
    est.masks.assign(masks.begin(), masks.end());
    est.value = mean_of(est.per_mask);
    return est;
}

double elbo_score_grad(const DenoiserParams& params, std::span<const Token> prompt,
                       std::span<const Token> completion, std::span<const MaskSample> masks,
                       double scale, std::span<double> grad) {
    if (grad.size() != params.shape.param_count())
        throw std::invalid_argument("elbo_score_grad: gradient buffer has wrong size");
    return mean_of(score_masks(params, prompt, completion, masks, scale, grad));
}

CompletionScore score_completion(const DenoiserParams& current, const DenoiserParams& reference,
                                 std::span<const Token> prompt, std::span<const Token> completion,
                                 const ScoreOptions& opts, Rng& rng) {
    if (opts.k_masks < 1) throw std::invalid_argument("score_completion: K must be >= 1");
    if (completion.empty()) throw std::invalid_argument("score_completion: L_c = 0");
    if (!(current.shape == reference.shape))
        throw std::invalid_argument("score_completion: current and reference shapes differ");
    const int L = static_cast<int>(completion.size());

    CompletionScore out;
    out.masks.reserve(static_cast<std::size_t>(opts.k_masks));
    for (int k = 0; k < opts.k_masks; ++k) out.masks.push_back(sample_mask_set(L, rng));

    const double inv_len = 1.0 / static_cast<double>(L);
    if (opts.want_grad) {
        out.grad.assign(current.shape.param_count(), 0.0);
        out.elbo_current = elbo_score_grad(current, prompt, completion, out.masks, inv_len, out.grad);
    } else {
        out.elbo_current = elbo_score(current, prompt, completion, out.masks).value;
    }
    if (opts.subtract_reference) {
        out.elbo_reference = elbo_score(reference, prompt, completion, out.masks).value;
        out.delta = (out.elbo_current - out.elbo_reference) * inv_len;
    } else {
        out.delta = out.elbo_current * inv_len;
    }
    return out;
}

double coupled_delta(const DenoiserParams& current, const DenoiserParams& reference,
                     std::span<const Token> prompt, std::span<const Token> completion, int k_masks,
                     Rng& rng) {
    ScoreOptions opts;
    opts.k_masks = k_masks;
    opts.want_grad = false;
    return score_completion(current, reference, prompt, completion, opts, rng).delta;
}

std::vector<CompletionScore> score_batch_serial(const DenoiserParams& current,
                                                const DenoiserParams& reference,
                                                std::span<const ScoreItem> items,
                                                const ScoreOptions& opts) {
    std::vector<CompletionScore> out(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        Rng rng = items[i].rng;
        out[i] = score_completion(current, reference, items[i].prompt, items[i].completion, opts, rng);
    }
    return out;
}

std::vector<CompletionScore> score_batch(const DenoiserParams& current,
                                         const DenoiserParams& reference,
                                         std::span<const ScoreItem> items, const ScoreOptions& opts) {
    std::vector<CompletionScore> out(items.size());
    parallel_for(static_cast<int>(items.size()), [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        Rng rng = items[idx].rng;
        out[idx] = score_completion(current, reference, items[idx].prompt, items[idx].completion, opts, rng);
    });
    return out;
}

RelativeScoreBatch center_scores(std::span<const double> deltas) {
    if (deltas.size() < 2) throw std::invalid_argument("center_scores: batch size must be >= 2");
    RelativeScoreBatch b;
    b.deltas.assign(deltas.begin(), deltas.end());
    b.center = mean_of(deltas);
    b.centered.resize(deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i) b.centered[i] = deltas[i] - b.center;
    b.centering = true;
    return b;
}

RelativeScoreBatch uncentered_scores(std::span<const double> deltas) {
    if (deltas.size() < 2) throw std::invalid_argument("uncentered_scores: batch size must be >= 2");
    RelativeScoreBatch b;
    b.deltas.assign(deltas.begin(), deltas.end());
    b.centered = b.deltas;
    b.center = 0.0;
    b.centering = false;
    return b;
}

double var_delta(const RelativeScoreBatch& batch) {
    if (batch.size() < 2) throw std::invalid_argument("var_delta: batch size must be >= 2");
    const double mean = mean_of(batch.deltas);
    double ss = 0.0;
    for (double d : batch.deltas) ss += (d - mean) * (d - mean);
    return ss / static_cast<double>(batch.size());
}

double batch_mean_offset(const RelativeScoreBatch& batch) {
    if (batch.size() == 0) return 0.0;
    return batch.centering ? mean_of(batch.centered) : mean_of(batch.deltas);
}

}  // namespace rspo
