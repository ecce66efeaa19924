#pragma once

// Masked diffusion model core: vocabulary, linear noise schedule, forward
// masking, the reference feature denoiser with an analytic backward pass,
// the reverse transition and semi-autoregressive confidence decoding.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rspo/rng.hpp"

namespace rspo {

using Token = std::int32_t;

// Character-level vocabulary. Tokens 0..n-1 are alphabet symbols; the mask
// token is n. The denoiser only ever emits the n alphabet tokens.
class Vocab {
public:
    explicit Vocab(std::string alphabet);

    // Digits, arithmetic operators, parentheses and separators used by the tasks.
    static Vocab task_default();

    int size() const { return static_cast<int>(alphabet_.size()) + 1; }
    int output_size() const { return static_cast<int>(alphabet_.size()); }
    Token mask_id() const { return static_cast<Token>(alphabet_.size()); }
    const std::string& alphabet() const { return alphabet_; }

    std::optional<Token> lookup(char c) const;
    char symbol(Token t) const;  // mask renders as '_'

private:
    std::string alphabet_;
    std::vector<int> index_;  // byte -> token or -1
};

// Prompt plus completion. Masked completion positions hold the mask token.
struct Sequence {
    std::vector<Token> prompt;
    std::vector<Token> completion;
};

std::size_t count_masked(std::span<const Token> completion, Token mask_id);

// alpha_t = 1 - t.
double alpha_linear(double t);

struct DenoiserShape {
    int vocab_size = 0;  // including the mask token
    int window = 3;
    int hidden = 32;
    int embed = 8;
    int positions = 16;  // maximum completion length

    int output_size() const { return vocab_size - 1; }
    int slot_count() const { return 2 * window; }
    int input_dim() const { return positions + slot_count() * embed + 1; }
    std::size_t param_count() const;

    // Offsets of each block inside the flat parameter vector.
    std::size_t embedding_offset() const { return 0; }
    std::size_t w1_offset() const;
    std::size_t b1_offset() const;
    std::size_t w2_offset() const;
    std::size_t b2_offset() const;

    void validate() const;
    bool operator==(const DenoiserShape&) const = default;
};

struct DenoiserParams {
    DenoiserShape shape;
    std::vector<double> theta;

    static DenoiserParams zeros(const DenoiserShape& shape);
    // Entries uniform in [-scale, scale] from the given seed.
    static DenoiserParams random_uniform(const DenoiserShape& shape, std::uint64_t seed,
                                         double scale = 0.05);

    void validate() const;
};

// Row-major [completion position][output token] log-probabilities.
struct LogProbTable {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    double at(int position, Token token) const {
        return values[static_cast<std::size_t>(position) * cols + token];
    }
    std::span<const double> row(int position) const {
        return {values.data() + static_cast<std::size_t>(position) * cols,
                static_cast<std::size_t>(cols)};
    }
};

// Anything that maps a corrupted state to per-position categoricals. The
// feature denoiser is the trainable one; tests plug in oracle models.
class DenoiserModel {
public:
    virtual ~DenoiserModel() = default;
    virtual int output_size() const = 0;
    virtual LogProbTable log_probs(std::span<const Token> prompt,
                                   std::span<const Token> state) const = 0;
};

// Reference denoiser: features are a one-hot completion position, embeddings
// of the unmasked tokens at offsets -w..-1,+1..+w of the concatenated
// prompt+completion, and the masked fraction of the completion; one tanh
// hidden layer then a softmax readout.
class FeatureDenoiser final : public DenoiserModel {
public:
    explicit FeatureDenoiser(const DenoiserParams& params);

    int output_size() const override { return params_->shape.output_size(); }
    LogProbTable log_probs(std::span<const Token> prompt,
                           std::span<const Token> state) const override;

    const DenoiserParams& params() const { return *params_; }

private:
    const DenoiserParams* params_;
};

LogProbTable denoiser_logprobs(const DenoiserParams& params, std::span<const Token> prompt,
                               std::span<const Token> state);

// Gradient of log pi(token | state, prompt) at a masked position.
std::vector<double> denoiser_logprob_grad(const DenoiserParams& params,
                                          std::span<const Token> prompt,
                                          std::span<const Token> state, int position,
                                          Token token);

// Adds scale * grad log pi(token | state) into grad and returns the log-prob.
// Does not check that the position is masked.
double accumulate_logprob_grad(const DenoiserParams& params, std::span<const Token> prompt,
                               std::span<const Token> state, int position, Token token,
                               double scale, std::span<double> grad);

// Log-prob of one token at one position (forward only).
double denoiser_logprob(const DenoiserParams& params, std::span<const Token> prompt,
                        std::span<const Token> state, int position, Token token);

// Masks each completion token independently with probability 1 - alpha_t.
Sequence forward_mask(const Sequence& clean, double t, Token mask_id, Rng& rng);

// One reverse transition z_t -> z_s, 0 <= s < t <= 1.
std::vector<Token> reverse_step(const DenoiserModel& model, std::span<const Token> prompt,
                                std::span<const Token> state, double t, double s,
                                Token mask_id, Rng& rng);

struct DecodeConfig {
    int gen_len = 16;
    int block_size = 8;
    int unmask_per_step = 2;
    double temperature = 0.9;

    void validate() const;
    bool operator==(const DecodeConfig&) const = default;
};

struct DecodeResult {
    std::vector<Token> completion;
    int steps = 0;
};

using DecodeObserver = std::function<void(int block, std::span<const Token> state)>;

// Block-wise confidence decoding starting from an all-mask completion.
DecodeResult decode_semi_ar(const DenoiserModel& model, std::span<const Token> prompt,
                            const DecodeConfig& cfg, Token mask_id, Rng& rng,
                            const DecodeObserver& observer = {});

// G decodes, completion i drawn from rng.fork(i). The parallel and serial
// variants produce identical output.
std::vector<std::vector<Token>> sample_completion_group(const DenoiserModel& model,
                                                        std::span<const Token> prompt, int group,
                                                        const DecodeConfig& cfg, Token mask_id,
                                                        const Rng& rng);
std::vector<std::vector<Token>> sample_completion_group_serial(const DenoiserModel& model,
                                                               std::span<const Token> prompt,
                                                               int group, const DecodeConfig& cfg,
                                                               Token mask_id, const Rng& rng);

// Binary checkpoint: magic, version, shape, seed, count, then theta as
// little-endian float64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_params(std::ostream& out, const DenoiserParams& params, std::uint64_t seed);
DenoiserParams read_params(std::istream& in, std::uint64_t* seed = nullptr);
void save_params(const std::string& path, const DenoiserParams& params, std::uint64_t seed);
DenoiserParams load_params(const std::string& path, std::uint64_t* seed = nullptr);

std::uint64_t hash_params(const DenoiserParams& params);

}  // namespace rspo
