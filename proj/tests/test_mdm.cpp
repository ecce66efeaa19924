#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rspo/mdm.hpp"

using namespace rspo;

namespace {

DenoiserShape small_shape() { return DenoiserShape{6, 2, 5, 3, 4}; }

// Smallest k with P(X <= k) >= q for X ~ Binomial(n, p).
int binomial_quantile(int n, double p, double q) {
    double cdf = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double logpmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                              k * std::log(p) + (n - k) * std::log1p(-p);
        cdf += std::exp(logpmf);
        if (cdf >= q) return k;
    }
    return n;
}

}  // namespace

TEST_CASE("vocab layout and rendering") {
    const Vocab v = Vocab::task_default();
    CHECK(v.output_size() == 21);
    CHECK(v.size() == 22);
    CHECK(v.mask_id() == 21);
    CHECK(v.symbol(v.mask_id()) == '_');
    CHECK(v.lookup('7').has_value());
    CHECK_FALSE(v.lookup('x').has_value());
    CHECK_THROWS_AS(Vocab("ab_"), std::invalid_argument);
    CHECK_THROWS_AS(Vocab("aa"), std::invalid_argument);
    CHECK_THROWS_AS(v.symbol(22), std::out_of_range);
}

TEST_CASE("linear schedule") {
    CHECK(alpha_linear(0.0) == 1.0);
    CHECK(alpha_linear(1.0) == 0.0);
    CHECK(alpha_linear(0.25) == doctest::Approx(0.75));
    CHECK_THROWS_AS(alpha_linear(-0.1), std::domain_error);
    CHECK_THROWS_AS(alpha_linear(1.5), std::domain_error);
}

TEST_CASE("forward masking") {
    Rng rng(3);
    Sequence clean{{0, 1}, std::vector<Token>(1000, 2)};
    const Token mask = 5;

    SUBCASE("t = 0 leaves everything clean") {
        CHECK(count_masked(forward_mask(clean, 0.0, mask, rng).completion, mask) == 0);
    }
    SUBCASE("t = 1 masks every completion token and no prompt token") {
        const Sequence z = forward_mask(clean, 1.0, mask, rng);
        CHECK(count_masked(z.completion, mask) == 1000);
        CHECK(z.prompt == clean.prompt);
    }
    SUBCASE("t = 0.5 count lies in the exact binomial 99% interval") {
        const int lo = binomial_quantile(1000, 0.5, 0.005);
        const int hi = binomial_quantile(1000, 0.5, 0.995);
        const auto c = static_cast<int>(count_masked(forward_mask(clean, 0.5, mask, rng).completion, mask));
        CHECK(c >= lo);
        CHECK(c <= hi);
    }
    SUBCASE("masked input is rejected") {
        clean.completion[3] = mask;
        CHECK_THROWS_AS(forward_mask(clean, 0.5, mask, rng), std::invalid_argument);
    }
}

TEST_CASE("denoiser rows are normalized and deterministic") {
    const DenoiserParams p = DenoiserParams::random_uniform(small_shape(), 11, 0.5);
    const std::vector<Token> prompt{0, 3, 1};
    const std::vector<Token> state{5, 2, 5, 4};
    const LogProbTable a = denoiser_logprobs(p, prompt, state);
    const LogProbTable b = denoiser_logprobs(p, prompt, state);
    CHECK(a.values == b.values);
    REQUIRE(a.rows == 4);
    REQUIRE(a.cols == 5);
    for (int i = 0; i < a.rows; ++i) {
        double s = 0.0;
        for (double l : a.row(i)) s += std::exp(l);
        CHECK(std::abs(s - 1.0) <= 1e-10);
    }
}

TEST_CASE("zero parameters give the uniform distribution over output tokens") {
    const DenoiserParams p = DenoiserParams::zeros(small_shape());
    const LogProbTable t = denoiser_logprobs(p, std::vector<Token>{1}, std::vector<Token>{5, 5, 0, 5});
    for (double v : t.values) CHECK(v == doctest::Approx(-std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("denoiser input validation") {
    const DenoiserParams p = DenoiserParams::zeros(small_shape());
    CHECK_THROWS_AS(denoiser_logprobs(p, std::vector<Token>{5}, std::vector<Token>{5, 5}), std::invalid_argument);
    CHECK_THROWS_AS(denoiser_logprobs(p, std::vector<Token>{0}, std::vector<Token>(5, 5)), std::invalid_argument);
    CHECK_THROWS_AS(denoiser_logprobs(p, std::vector<Token>{0}, std::vector<Token>{}), std::invalid_argument);
    CHECK_THROWS_AS(denoiser_logprob_grad(p, std::vector<Token>{0}, std::vector<Token>{1, 5}, 0, 1),
                    std::invalid_argument);
}

TEST_CASE("analytic log-prob gradient matches central differences") {
    DenoiserParams p = DenoiserParams::random_uniform(small_shape(), 21, 0.7);
    const std::vector<Token> prompt{2, 0};
    const std::vector<Token> state{5, 3, 5, 1};
    const double h = 1e-5;
    for (int position : {0, 2}) {
        for (Token token : {0, 4}) {
            const auto g = denoiser_logprob_grad(p, prompt, state, position, token);
            double worst = 0.0, scale = 0.0;
            for (double v : g) scale = std::max(scale, std::abs(v));
            for (std::size_t j = 0; j < p.theta.size(); ++j) {
                const double keep = p.theta[j];
                p.theta[j] = keep + h;
                const double up = denoiser_logprob(p, prompt, state, position, token);
                p.theta[j] = keep - h;
                const double down = denoiser_logprob(p, prompt, state, position, token);
                p.theta[j] = keep;
                worst = std::max(worst, std::abs((up - down) / (2 * h) - g[j]));
            }
            CHECK(worst / scale <= 1e-5);
        }
    }
}

TEST_CASE("reverse step") {
    const DenoiserParams p = DenoiserParams::random_uniform(small_shape(), 4, 0.3);
    const FeatureDenoiser model(p);
    Rng rng(9);
    const std::vector<Token> prompt{1};
    const std::vector<Token> state{5, 2, 5, 5};

    SUBCASE("s = 0 unmasks everything and keeps committed tokens") {
        const auto next = reverse_step(model, prompt, state, 0.5, 0.0, 5, rng);
        CHECK(count_masked(next, 5) == 0);
        CHECK(next[1] == 2);
    }
    SUBCASE("stay-masked frequency is s/t") {
        int stayed = 0;
        const int trials = 4000;
        for (int k = 0; k < trials; ++k) {
            const auto next = reverse_step(model, prompt, state, 0.8, 0.2, 5, rng);
            stayed += static_cast<int>(count_masked(next, 5));
        }
        const double rate = static_cast<double>(stayed) / (3.0 * trials);
        CHECK(rate == doctest::Approx(0.25).epsilon(0.1));
    }
    SUBCASE("bad times rejected") {
        CHECK_THROWS_AS(reverse_step(model, prompt, state, 0.3, 0.3, 5, rng), std::invalid_argument);
        CHECK_THROWS_AS(reverse_step(model, prompt, state, 1.2, 0.3, 5, rng), std::invalid_argument);
    }
}

TEST_CASE("semi-autoregressive decoding") {
    DenoiserShape shape = small_shape();
    shape.positions = 8;
    const DenoiserParams p = DenoiserParams::random_uniform(shape, 5, 0.8);
    const FeatureDenoiser model(p);
    const std::vector<Token> prompt{0, 1};
    const DecodeConfig cfg{8, 4, 2, 0.9};

    SUBCASE("block invariant and step count") {
        Rng rng(1);
        bool outside = false;
        const auto res = decode_semi_ar(model, prompt, cfg, 5, rng, [&](int block, std::span<const Token> s) {
            for (int i = (block + 1) * 4; i < 8; ++i)
                if (s[static_cast<std::size_t>(i)] != 5) outside = true;
        });
        CHECK_FALSE(outside);
        CHECK(res.steps == 4);
        CHECK(count_masked(res.completion, 5) == 0);
    }
    SUBCASE("temperature 0 gives identical group members") {
        DecodeConfig greedy = cfg;
        greedy.temperature = 0.0;
        const auto group = sample_completion_group(model, prompt, 4, greedy, 5, Rng(2));
        for (const auto& c : group) CHECK(c == group[0]);
    }
    SUBCASE("parallel group equals serial group") {
        const auto a = sample_completion_group(model, prompt, 6, cfg, 5, Rng(7));
        const auto b = sample_completion_group_serial(model, prompt, 6, cfg, 5, Rng(7));
        CHECK(a == b);
        CHECK_THROWS_AS(sample_completion_group(model, prompt, 1, cfg, 5, Rng(7)), std::invalid_argument);
    }
    SUBCASE("config validation") {
        CHECK_THROWS_AS((DecodeConfig{8, 3, 2, 0.9}.validate()), std::invalid_argument);
        CHECK_THROWS_AS((DecodeConfig{8, 4, 0, 0.9}.validate()), std::invalid_argument);
        CHECK_THROWS_AS((DecodeConfig{8, 4, 2, -1.0}.validate()), std::invalid_argument);
    }
}

TEST_CASE("checkpoint round trip") {
    const DenoiserParams p = DenoiserParams::random_uniform(small_shape(), 8, 0.2);
    std::stringstream buf;
    write_params(buf, p, 1234);
    std::uint64_t seed = 0;
    const DenoiserParams q = read_params(buf, &seed);
    CHECK(seed == 1234);
    CHECK(q.shape == p.shape);
    CHECK(q.theta == p.theta);
    CHECK(hash_params(q) == hash_params(p));

    DenoiserParams r = p;
    r.theta[0] = std::nextafter(r.theta[0], 1.0);
    CHECK(hash_params(r) != hash_params(p));

    std::stringstream again;
    write_params(again, p, 1);
    std::string bytes = again.str();
    bytes[0] = 'X';
    std::stringstream bad(bytes);
    CHECK_THROWS(read_params(bad));

    std::stringstream truncated(again.str().substr(0, again.str().size() - 4));
    CHECK_THROWS(read_params(truncated));
}
