#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "rspo/mdm.hpp"
#include "rspo/parallel.hpp"

namespace rspo {

namespace {

// Index of a draw from softmax(logp / temperature); temperature 0 is argmax
// with the lowest index winning ties.
Token sample_token(std::span<const double> logp, double temperature, Rng& rng) {
    if (temperature == 0.0) {
        std::size_t best = 0;
        for (std::size_t v = 1; v < logp.size(); ++v)
            if (logp[v] > logp[best]) best = v;
        return static_cast<Token>(best);
    }
    double top = -std::numeric_limits<double>::infinity();
    for (double lp : logp) top = std::max(top, lp);
    std::vector<double> weights(logp.size());
    for (std::size_t v = 0; v < logp.size(); ++v) weights[v] = std::exp((logp[v] - top) / temperature);
    return static_cast<Token>(rng.categorical(weights));
}

}  // namespace

std::vector<Token> reverse_step(const DenoiserModel& model, std::span<const Token> prompt,
                                std::span<const Token> state, double t, double s, Token mask_id,
                                Rng& rng) {
    if (!(s >= 0.0 && s < t && t <= 1.0))
        throw std::invalid_argument("reverse_step: need 0 <= s < t <= 1");
    const double stay = (1.0 - alpha_linear(s)) / (1.0 - alpha_linear(t));
    const LogProbTable table = model.log_probs(prompt, state);
    std::vector<Token> next(state.begin(), state.end());
    for (std::size_t i = 0; i < next.size(); ++i) {
        if (next[i] != mask_id) continue;
        if (rng.uniform() < stay) continue;
        next[i] = sample_token(table.row(static_cast<int>(i)), 1.0, rng);
    }
    return next;
}

void DecodeConfig::validate() const {
    if (gen_len < 1 || block_size < 1 || unmask_per_step < 1)
        throw std::invalid_argument("DecodeConfig: gen_len, block_size, unmask_per_step must be >= 1");
    if (gen_len % block_size != 0)
        throw std::invalid_argument("DecodeConfig: block_size " + std::to_string(block_size) +
                                    " must divide gen_len " + std::to_string(gen_len));
    if (!(temperature >= 0.0) || !std::isfinite(temperature))
        throw std::invalid_argument("DecodeConfig: temperature must be finite and >= 0");
}

DecodeResult decode_semi_ar(const DenoiserModel& model, std::span<const Token> prompt,
                            const DecodeConfig& cfg, Token mask_id, Rng& rng,
                            const DecodeObserver& observer) {
    cfg.validate();
    DecodeResult result;
    result.completion.assign(static_cast<std::size_t>(cfg.gen_len), mask_id);
    std::vector<Token>& state = result.completion;

    struct Candidate {
        int position;
        Token token;
        double confidence;
    };
    std::vector<Candidate> candidates;
    const int blocks = cfg.gen_len / cfg.block_size;
    for (int b = 0; b < blocks; ++b) {
        const int lo = b * cfg.block_size;
        const int hi = lo + cfg.block_size;
        int remaining = cfg.block_size;
        while (remaining > 0) {
            const LogProbTable table = model.log_probs(prompt, state);
            candidates.clear();
            for (int i = lo; i < hi; ++i) {
                if (state[static_cast<std::size_t>(i)] != mask_id) continue;
                const auto row = table.row(i);
                const Token tok = sample_token(row, cfg.temperature, rng);
                candidates.push_back({i, tok, std::exp(row[static_cast<std::size_t>(tok)])});
            }
            const int commit = std::min(cfg.unmask_per_step, static_cast<int>(candidates.size()));
            std::stable_sort(candidates.begin(), candidates.end(),
                             [](const Candidate& a, const Candidate& c) {
                                 return a.confidence > c.confidence;
                             });
            for (int k = 0; k < commit; ++k)
                state[static_cast<std::size_t>(candidates[static_cast<std::size_t>(k)].position)] =
                    candidates[static_cast<std::size_t>(k)].token;
            remaining -= commit;
            ++result.steps;
            if (observer) observer(b, state);
        }
    }
    return result;
}

std::vector<std::vector<Token>> sample_completion_group_serial(const DenoiserModel& model,
                                                               std::span<const Token> prompt,
                                                               int group, const DecodeConfig& cfg,
                                                               Token mask_id, const Rng& rng) {
    if (group < 2) throw std::invalid_argument("sample_completion_group: group size must be >= 2");
    std::vector<std::vector<Token>> out(static_cast<std::size_t>(group));
    for (int i = 0; i < group; ++i) {
        Rng stream = rng.fork(static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(i)] = decode_semi_ar(model, prompt, cfg, mask_id, stream).completion;
    }
    return out;
}

std::vector<std::vector<Token>> sample_completion_group(const DenoiserModel& model,
                                                        std::span<const Token> prompt, int group,
                                                        const DecodeConfig& cfg, Token mask_id,
                                                        const Rng& rng) {
    if (group < 2) throw std::invalid_argument("sample_completion_group: group size must be >= 2");
    cfg.validate();
    std::vector<std::vector<Token>> out(static_cast<std::size_t>(group));
    parallel_for(group, [&](int i) {
        Rng stream = rng.fork(static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(i)] = decode_semi_ar(model, prompt, cfg, mask_id, stream).completion;
    });
    return out;
}

}  // namespace rspo
