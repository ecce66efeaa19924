#include "rspo/mdm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rspo {

Vocab::Vocab(std::string alphabet) : alphabet_(std::move(alphabet)), index_(256, -1) {
    if (alphabet_.empty()) throw std::invalid_argument("Vocab: empty alphabet");
    for (std::size_t i = 0; i < alphabet_.size(); ++i) {
        const auto byte = static_cast<unsigned char>(alphabet_[i]);
        if (alphabet_[i] == '_') throw std::invalid_argument("Vocab: '_' is reserved for the mask");
        if (index_[byte] != -1)
            throw std::invalid_argument(std::string("Vocab: duplicate symbol '") + alphabet_[i] + "'");
        index_[byte] = static_cast<int>(i);
    }
}

Vocab Vocab::task_default() { return Vocab("0123456789+-*/()=?,| "); }

std::optional<Token> Vocab::lookup(char c) const {
    const int t = index_[static_cast<unsigned char>(c)];
    if (t < 0) return std::nullopt;
    return static_cast<Token>(t);
}

char Vocab::symbol(Token t) const {
    if (t == mask_id()) return '_';
    if (t < 0 || t > mask_id()) throw std::out_of_range("Vocab::symbol: token out of range");
    return alphabet_[static_cast<std::size_t>(t)];
}

std::size_t count_masked(std::span<const Token> completion, Token mask_id) {
    return static_cast<std::size_t>(std::count(completion.begin(), completion.end(), mask_id));
}

double alpha_linear(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("alpha_linear: t must lie in [0, 1]");
    return 1.0 - t;
}

// ---------------------------------------------------------------------------
// Shape

std::size_t DenoiserShape::w1_offset() const {
    return static_cast<std::size_t>(output_size()) * embed;
}
std::size_t DenoiserShape::b1_offset() const {
    return w1_offset() + static_cast<std::size_t>(hidden) * input_dim();
}
std::size_t DenoiserShape::w2_offset() const { return b1_offset() + hidden; }
std::size_t DenoiserShape::b2_offset() const {
    return w2_offset() + static_cast<std::size_t>(output_size()) * hidden;
}
std::size_t DenoiserShape::param_count() const { return b2_offset() + output_size(); }

void DenoiserShape::validate() const {
    if (vocab_size < 2) throw std::invalid_argument("DenoiserShape: vocab_size must be >= 2");
    if (window < 0 || hidden < 1 || embed < 1 || positions < 1)
        throw std::invalid_argument("DenoiserShape: window >= 0, hidden/embed/positions >= 1");
}

DenoiserParams DenoiserParams::zeros(const DenoiserShape& shape) {
    shape.validate();
    return {shape, std::vector<double>(shape.param_count(), 0.0)};
}

DenoiserParams DenoiserParams::random_uniform(const DenoiserShape& shape, std::uint64_t seed,
                                              double scale) {
    DenoiserParams p = zeros(shape);
    Rng rng(seed, /*stream=*/0x1417);
    for (double& v : p.theta) v = scale * (2.0 * rng.uniform() - 1.0);
    return p;
}

void DenoiserParams::validate() const {
    shape.validate();
    if (theta.size() != shape.param_count())
        throw std::invalid_argument("DenoiserParams: theta has " + std::to_string(theta.size()) +
                                    " entries, shape needs " + std::to_string(shape.param_count()));
    for (double v : theta)
        if (!std::isfinite(v)) throw std::invalid_argument("DenoiserParams: non-finite entry");
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

void check_inputs(const DenoiserShape& shape, std::span<const Token> prompt,
                  std::span<const Token> state) {
    const Token mask = static_cast<Token>(shape.output_size());
    if (state.empty()) throw std::invalid_argument("denoiser: empty completion");
    if (static_cast<int>(state.size()) > shape.positions)
        throw std::invalid_argument("denoiser: completion length " + std::to_string(state.size()) +
                                    " exceeds model positions " + std::to_string(shape.positions));
    for (Token t : prompt)
        if (t < 0 || t >= mask) throw std::invalid_argument("denoiser: invalid prompt token");
    for (Token t : state)
        if (t < 0 || t > mask) throw std::invalid_argument("denoiser: invalid completion token");
}

// Activations for one completion position.
struct Pass {
    std::vector<double> x;       // input features
    std::vector<int> active;     // indices of nonzero features
    std::vector<Token> slot_tok; // token per window slot, -1 when empty
    std::vector<double> h;       // tanh(hidden)
    std::vector<double> logp;    // log-softmax of the readout

    explicit Pass(const DenoiserShape& s)
        : x(static_cast<std::size_t>(s.input_dim()), 0.0),
          slot_tok(static_cast<std::size_t>(s.slot_count()), -1),
          h(static_cast<std::size_t>(s.hidden)),
          logp(static_cast<std::size_t>(s.output_size())) {}
};

void forward(const DenoiserParams& p, std::span<const Token> prompt, std::span<const Token> state,
             int position, double masked_fraction, Pass& pass) {
    const DenoiserShape& s = p.shape;
    const double* theta = p.theta.data();
    const Token mask = static_cast<Token>(s.output_size());
    const int D = s.input_dim();
    const int E = s.embed;
    const int V = s.output_size();

    for (int idx : pass.active) pass.x[static_cast<std::size_t>(idx)] = 0.0;
    pass.active.clear();

    pass.x[static_cast<std::size_t>(position)] = 1.0;
    pass.active.push_back(position);

    const int q_len = static_cast<int>(prompt.size());
    const int total = q_len + static_cast<int>(state.size());
    const int centre = q_len + position;
    for (int slot = 0; slot < s.slot_count(); ++slot) {
        const int offset = slot < s.window ? slot - s.window : slot - s.window + 1;
        const int j = centre + offset;
        Token tok = -1;
        if (j >= 0 && j < total) {
            const Token t = j < q_len ? prompt[static_cast<std::size_t>(j)]
                                      : state[static_cast<std::size_t>(j - q_len)];
            if (t != mask) tok = t;
        }
        pass.slot_tok[static_cast<std::size_t>(slot)] = tok;
        if (tok < 0) continue;
        const double* emb = theta + s.embedding_offset() + static_cast<std::size_t>(tok) * E;
        const int base = s.positions + slot * E;
        for (int c = 0; c < E; ++c) {
            pass.x[static_cast<std::size_t>(base + c)] = emb[c];
            pass.active.push_back(base + c);
        }
    }
    pass.x[static_cast<std::size_t>(D - 1)] = masked_fraction;
    pass.active.push_back(D - 1);

    const double* w1 = theta + s.w1_offset();
    const double* b1 = theta + s.b1_offset();
    for (int k = 0; k < s.hidden; ++k) {
        const double* row = w1 + static_cast<std::size_t>(k) * D;
        double a = b1[k];
        for (int idx : pass.active) a += row[idx] * pass.x[static_cast<std::size_t>(idx)];
        pass.h[static_cast<std::size_t>(k)] = std::tanh(a);
    }

    const double* w2 = theta + s.w2_offset();
    const double* b2 = theta + s.b2_offset();
    double max_logit = -INFINITY;
    for (int v = 0; v < V; ++v) {
        const double* row = w2 + static_cast<std::size_t>(v) * s.hidden;
        double z = b2[v];
        for (int k = 0; k < s.hidden; ++k) z += row[k] * pass.h[static_cast<std::size_t>(k)];
        pass.logp[static_cast<std::size_t>(v)] = z;
        max_logit = std::max(max_logit, z);
    }
    double sum = 0.0;
    for (int v = 0; v < V; ++v) sum += std::exp(pass.logp[static_cast<std::size_t>(v)] - max_logit);
    const double lse = max_logit + std::log(sum);
    for (int v = 0; v < V; ++v) pass.logp[static_cast<std::size_t>(v)] -= lse;
}

void backward(const DenoiserParams& p, const Pass& pass, Token token, double scale,
              std::span<double> grad) {
    const DenoiserShape& s = p.shape;
    const double* theta = p.theta.data();
    const int D = s.input_dim();
    const int E = s.embed;
    const int V = s.output_size();
    const int H = s.hidden;

    std::vector<double> dlogit(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v)
        dlogit[static_cast<std::size_t>(v)] =
            scale * ((v == token ? 1.0 : 0.0) - std::exp(pass.logp[static_cast<std::size_t>(v)]));

    double* g = grad.data();
    const double* w2 = theta + s.w2_offset();
    std::vector<double> da(static_cast<std::size_t>(H), 0.0);
    for (int v = 0; v < V; ++v) {
        const double dv = dlogit[static_cast<std::size_t>(v)];
        g[s.b2_offset() + v] += dv;
        double* gw2 = g + s.w2_offset() + static_cast<std::size_t>(v) * H;
        const double* row = w2 + static_cast<std::size_t>(v) * H;
        for (int k = 0; k < H; ++k) {
            gw2[k] += dv * pass.h[static_cast<std::size_t>(k)];
            da[static_cast<std::size_t>(k)] += row[k] * dv;
        }
    }
    for (int k = 0; k < H; ++k) {
        const double hk = pass.h[static_cast<std::size_t>(k)];
        da[static_cast<std::size_t>(k)] *= 1.0 - hk * hk;
    }

    const double* w1 = theta + s.w1_offset();
    for (int k = 0; k < H; ++k) {
        const double dk = da[static_cast<std::size_t>(k)];
        g[s.b1_offset() + k] += dk;
        double* gw1 = g + s.w1_offset() + static_cast<std::size_t>(k) * D;
        for (int idx : pass.active) gw1[idx] += dk * pass.x[static_cast<std::size_t>(idx)];
    }

    for (int slot = 0; slot < s.slot_count(); ++slot) {
        const Token tok = pass.slot_tok[static_cast<std::size_t>(slot)];
        if (tok < 0) continue;
        const int base = s.positions + slot * E;
        double* ge = g + s.embedding_offset() + static_cast<std::size_t>(tok) * E;
        for (int c = 0; c < E; ++c) {
            double dx = 0.0;
            for (int k = 0; k < H; ++k)
                dx += w1[static_cast<std::size_t>(k) * D + base + c] * da[static_cast<std::size_t>(k)];
            ge[c] += dx;
        }
    }
}

double masked_fraction(std::span<const Token> state, Token mask) {
    return static_cast<double>(count_masked(state, mask)) / static_cast<double>(state.size());
}

}  // namespace

FeatureDenoiser::FeatureDenoiser(const DenoiserParams& params) : params_(&params) {
    params.shape.validate();
    if (params.theta.size() != params.shape.param_count())
        throw std::invalid_argument("FeatureDenoiser: parameter count does not match shape");
}

LogProbTable FeatureDenoiser::log_probs(std::span<const Token> prompt,
                                        std::span<const Token> state) const {
    return denoiser_logprobs(*params_, prompt, state);
}

LogProbTable denoiser_logprobs(const DenoiserParams& params, std::span<const Token> prompt,
                               std::span<const Token> state) {
    const DenoiserShape& s = params.shape;
    if (params.theta.size() != s.param_count())
        throw std::invalid_argument("denoiser_logprobs: parameter count does not match shape");
    check_inputs(s, prompt, state);
    const double frac = masked_fraction(state, static_cast<Token>(s.output_size()));

    LogProbTable table;
    table.rows = static_cast<int>(state.size());
    table.cols = s.output_size();
    table.values.resize(static_cast<std::size_t>(table.rows) * table.cols);
    Pass pass(s);
    for (int i = 0; i < table.rows; ++i) {
        forward(params, prompt, state, i, frac, pass);
        std::copy(pass.logp.begin(), pass.logp.end(),
                  table.values.begin() + static_cast<std::ptrdiff_t>(i) * table.cols);
    }
    return table;
}

double accumulate_logprob_grad(const DenoiserParams& params, std::span<const Token> prompt,
                               std::span<const Token> state, int position, Token token,
                               double scale, std::span<double> grad) {
    const DenoiserShape& s = params.shape;
    if (grad.size() != s.param_count())
        throw std::invalid_argument("accumulate_logprob_grad: gradient buffer has wrong size");
    check_inputs(s, prompt, state);
    if (position < 0 || position >= static_cast<int>(state.size()))
        throw std::out_of_range("accumulate_logprob_grad: position out of range");
    if (token < 0 || token >= s.output_size())
        throw std::invalid_argument("accumulate_logprob_grad: token is not an output token");
    Pass pass(s);
    forward(params, prompt, state, position, masked_fraction(state, static_cast<Token>(s.output_size())),
            pass);
    backward(params, pass, token, scale, grad);
    return pass.logp[static_cast<std::size_t>(token)];
}

double denoiser_logprob(const DenoiserParams& params, std::span<const Token> prompt,
                        std::span<const Token> state, int position, Token token) {
    const DenoiserShape& s = params.shape;
    check_inputs(s, prompt, state);
    if (position < 0 || position >= static_cast<int>(state.size()))
        throw std::out_of_range("denoiser_logprob: position out of range");
    if (token < 0 || token >= s.output_size())
        throw std::invalid_argument("denoiser_logprob: token is not an output token");
    Pass pass(s);
    forward(params, prompt, state, position, masked_fraction(state, static_cast<Token>(s.output_size())),
            pass);
    return pass.logp[static_cast<std::size_t>(token)];
}

std::vector<double> denoiser_logprob_grad(const DenoiserParams& params,
                                          std::span<const Token> prompt,
                                          std::span<const Token> state, int position,
                                          Token token) {
    const Token mask = static_cast<Token>(params.shape.output_size());
    if (position < 0 || position >= static_cast<int>(state.size()))
        throw std::out_of_range("denoiser_logprob_grad: position out of range");
    if (state[static_cast<std::size_t>(position)] != mask)
        throw std::invalid_argument("denoiser_logprob_grad: position " + std::to_string(position) +
                                    " is not masked");
    std::vector<double> grad(params.shape.param_count(), 0.0);
    accumulate_logprob_grad(params, prompt, state, position, token, 1.0, grad);
    return grad;
}

Sequence forward_mask(const Sequence& clean, double t, Token mask_id, Rng& rng) {
    const double keep = alpha_linear(t);
    for (Token tok : clean.prompt)
        if (tok == mask_id) throw std::invalid_argument("forward_mask: prompt contains the mask token");
    for (Token tok : clean.completion)
        if (tok == mask_id) throw std::invalid_argument("forward_mask: completion is not clean");
    Sequence out = clean;
    for (Token& tok : out.completion)
        if (!(rng.uniform() < keep)) tok = mask_id;
    return out;
}

}  // namespace rspo
