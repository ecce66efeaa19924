#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rspo/oracle.hpp"
#include "rspo/score.hpp"

using namespace rspo;
using namespace rspo::oracle;

namespace {

// Per-position distributions that ignore the context entirely.
class FixedModel final : public DenoiserModel {
public:
    explicit FixedModel(std::vector<std::vector<double>> probs) : probs_(std::move(probs)) {}
    int output_size() const override { return static_cast<int>(probs_[0].size()); }
    LogProbTable log_probs(std::span<const Token>, std::span<const Token> state) const override {
        LogProbTable t{static_cast<int>(state.size()), output_size(), {}};
        for (std::size_t i = 0; i < state.size(); ++i)
            for (double p : probs_[i]) t.values.push_back(std::log(p));
        return t;
    }

private:
    std::vector<std::vector<double>> probs_;
};

}  // namespace

TEST_CASE("exact ELBO expectation of a context-free model is the sum of log-probs") {
    // Each masked position contributes its own log-prob; (L/|M|) |M| averages to L * mean.
    const FixedModel m({{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}, {0.25, 0.25, 0.5}});
    const std::vector<Token> prompt{0};
    const std::vector<Token> y{1, 0, 2};
    const double expected = std::log(0.5) + std::log(0.6) + std::log(0.5);
    CHECK(exact_elbo_expectation(m, prompt, y) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("exact sequence likelihood of a context-free model factorizes") {
    const FixedModel m({{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}});
    const std::vector<Token> y{2, 1};
    const double expected = std::log(0.3) + std::log(0.1);
    for (int steps = 1; steps <= 4; ++steps)
        CHECK(exact_sequence_loglik(m, std::vector<Token>{0}, y, steps, 3) ==
              doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("exact sequence likelihood sums to one over all completions") {
    const DenoiserParams p = DenoiserParams::random_uniform(DenoiserShape{4, 1, 4, 2, 3}, 5, 1.0);
    const FeatureDenoiser model(p);
    double total = 0.0;
    for (Token a = 0; a < 3; ++a)
        for (Token b = 0; b < 3; ++b)
            for (Token c = 0; c < 3; ++c)
                total += std::exp(exact_sequence_loglik(model, std::vector<Token>{1}, std::vector<Token>{a, b, c}, 3, 3));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Monte Carlo ELBO matches the enumerated expectation") {
    const DenoiserParams p = DenoiserParams::random_uniform(DenoiserShape{4, 1, 4, 2, 3}, 17, 1.0);
    const std::vector<Token> prompt{2, 0};
    const std::vector<Token> y{0, 2, 1};
    const double exact = exact_elbo_expectation(FeatureDenoiser(p), prompt, y);
    Rng rng(4);
    std::vector<MaskSample> masks;
    for (int k = 0; k < 40000; ++k) masks.push_back(sample_mask_set(3, rng));
    const ElboEstimate est = elbo_score(p, prompt, y, masks);
    CHECK(std::abs(est.value - exact) <= 3.0 * est.standard_error());
}

TEST_CASE("tiny-instance limits") {
    const DenoiserParams big = DenoiserParams::zeros(DenoiserShape{22, 1, 2, 2, 3});
    CHECK_THROWS_AS(exact_elbo_expectation(FeatureDenoiser(big), std::vector<Token>{0}, std::vector<Token>{0, 1, 2}),
                    std::invalid_argument);
    const DenoiserParams p = DenoiserParams::zeros(DenoiserShape{4, 1, 2, 2, 3});
    CHECK_THROWS_AS(exact_sequence_loglik(FeatureDenoiser(p), std::vector<Token>{0}, std::vector<Token>{0, 1, 2}, 5, 3),
                    std::invalid_argument);
}

TEST_CASE("KL-regularized optimum") {
    const std::vector<double> pi{0.5, 0.25, 0.25};
    const std::vector<double> r{1.0, 0.0, 0.5};
    const KlOptimum o = kl_regularized_optimum(pi, r, 0.5);
    const double z = 0.5 * std::exp(2.0) + 0.25 + 0.25 * std::exp(1.0);
    CHECK(o.log_z == doctest::Approx(std::log(z)).epsilon(1e-14));
    CHECK(o.pi_star[0] == doctest::Approx(0.5 * std::exp(2.0) / z).epsilon(1e-14));
    CHECK(o.centered_identity_gap <= 1e-12);
    CHECK_THROWS_AS(kl_regularized_optimum(pi, r, 0.0), std::invalid_argument);
}

TEST_CASE("KL variance proxy") {
    SUBCASE("closed form for a two-point perturbation") {
        const std::vector<double> p{0.5, 0.5}, q{0.51, 0.49};
        const KlProxy k = kl_proxy(p, q);
        CHECK(std::abs(k.kl_pq - (-0.5 * std::log(0.9996))) <= 1e-8);
        const double half_log = 0.5 * std::log(1.02 / 0.98);
        CHECK(std::abs(k.half_var - 0.5 * half_log * half_log) <= 1e-8);
    }
    SUBCASE("gap shrinks cubically") {
        const std::vector<double> p{0.5, 0.3, 0.2};
        std::vector<double> eps{0.04, 0.02, 0.01, 0.005}, gaps;
        for (double e : eps) {
            std::vector<double> q{p[0] * std::exp(e), p[1], p[2] * std::exp(-e)};
            const double s = q[0] + q[1] + q[2];
            for (double& v : q) v /= s;
            gaps.push_back(kl_proxy(p, q).gap_pq);
        }
        const double slope = loglog_slope(eps, gaps);
        CHECK(slope >= 2.7);
        CHECK(slope <= 3.3);
    }
    CHECK_THROWS_AS(kl_proxy(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("perturbation bound") {
    const std::vector<double> a{0.5, -0.5}, r{0.2, -0.2};
    const PerturbationCheck zero = perturbation_bound_check(a, r, std::vector<double>{0.0, 0.0}, 0.1);
    CHECK(zero.lhs_aw == 0.0);
    CHECK(zero.lhs_rspo == 0.0);
    CHECK(zero.holds());

    Rng rng(12);
    for (int n = 0; n < 2000; ++n) {
        std::vector<double> aa(5), rr(5), xi(5);
        for (int i = 0; i < 5; ++i) {
            aa[i] = rng.uniform() - 0.5;
            rr[i] = rng.uniform() - 0.5;
            xi[i] = 0.1 * (rng.uniform() - 0.5);
        }
        CHECK(perturbation_bound_check(aa, rr, xi, rng.uniform()).holds());
    }
}

TEST_CASE("log-log slope") {
    const std::vector<double> x{1, 2, 4, 8}, y{3, 24, 192, 1536};
    CHECK(loglog_slope(x, y) == doctest::Approx(3.0).epsilon(1e-12));
}
