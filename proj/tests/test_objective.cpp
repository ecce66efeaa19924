#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rspo/objective.hpp"

using namespace rspo;

namespace {

std::vector<std::vector<double>> random_grads(Rng& rng, std::size_t n, std::size_t dim) {
    std::vector<std::vector<double>> g(n, std::vector<double>(dim));
    for (auto& row : g)
        for (double& v : row) v = rng.uniform() * 2.0 - 1.0;
    return g;
}

double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

TEST_CASE("group advantages") {
    SUBCASE("mean centering") {
        const auto a = group_advantages(std::vector<double>{1, 1, 0, 0, 0, 0}, {});
        const std::vector<double> expected{2.0 / 3, 2.0 / 3, -1.0 / 3, -1.0 / 3, -1.0 / 3, -1.0 / 3};
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(expected[i]).epsilon(1e-15));
    }
    SUBCASE("normalized by population std plus epsilon") {
        const auto a = group_advantages(std::vector<double>{1, 0}, {true, 1e-4});
        CHECK(a[0] == doctest::Approx(0.5 / 0.5001).epsilon(1e-14));
        CHECK(a[1] == doctest::Approx(-0.5 / 0.5001).epsilon(1e-14));
    }
    SUBCASE("zero-variance group") {
        const std::vector<double> r{0.5, 0.5, 0.5};
        CHECK(is_zero_variance_group(r));
        for (double v : group_advantages(r, {true, 1e-4})) CHECK(v == 0.0);
        CHECK_FALSE(is_zero_variance_group(std::vector<double>{0.5, 0.4}));
    }
    CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}, {}), std::invalid_argument);
}

TEST_CASE("RSPO weights and loss") {
    const std::vector<double> adv{0.5, -0.5, 0.25, -0.25};
    const RelativeScoreBatch b = center_scores(std::vector<double>{0.2, -0.4, 0.1, 0.5});

    const auto w = rspo_weights(adv, b.centered, 0.1);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == adv[i] - 0.1 * b.centered[i]);
    CHECK(std::abs(sum(w)) <= 1e-15);
    CHECK_THROWS_AS(rspo_weights(adv, b.centered, 0.0), std::invalid_argument);

    const LossOutput l = rspo_loss(b, adv, 0.1);
    double expect = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) expect -= w[i] * b.centered[i];
    CHECK(l.loss == doctest::Approx(expect / 4.0).epsilon(1e-15));

    const LossOutput aw = rspo_loss(b, adv, 0.0);
    CHECK(aw.loss == aw_loss(b, adv).loss);
    CHECK(aw.weights == adv);
    CHECK_THROWS_AS(rspo_loss(b, adv, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(rspo_loss(b, std::vector<double>{1.0}, 0.1), std::invalid_argument);
}

TEST_CASE("gradient is the weighted sum of score gradients") {
    Rng rng(3);
    const std::vector<double> adv{0.4, -0.1, -0.3};
    const RelativeScoreBatch b = center_scores(std::vector<double>{0.3, 0.0, -0.2});
    const auto grads = random_grads(rng, 3, 5);
    const LossOutput l = rspo_loss(b, adv, 0.5, grads);
    for (std::size_t d = 0; d < 5; ++d) {
        double expect = 0.0;
        for (std::size_t i = 0; i < 3; ++i) expect -= (adv[i] - 0.5 * b.centered[i]) * grads[i][d];
        CHECK(l.gradient[d] == doctest::Approx(expect / 3.0).epsilon(1e-14));
    }
    CHECK(rspo_gradient(b, adv, 0.5, grads) == l.gradient);
}

TEST_CASE("matched quadratic: completed square and first-order agreement") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(10);
        std::vector<double> rewards(n), deltas(n);
        for (std::size_t i = 0; i < n; ++i) {
            rewards[i] = static_cast<double>(rng.below(2));
            deltas[i] = rng.uniform() - 0.5;
        }
        const auto adv = group_advantages(rewards, {});
        const RelativeScoreBatch b = center_scores(deltas);
        const double lambda = 0.01 + rng.uniform();
        const auto grads = random_grads(rng, n, 7);
        const QuadLossOutput q = quad_loss(b, adv, lambda, grads);
        CHECK(q.identity_gap <= 1e-12);
        const auto g = rspo_gradient(b, adv, lambda, grads);
        for (std::size_t d = 0; d < g.size(); ++d) CHECK(std::abs(g[d] - q.gradient[d]) <= 1e-12);
    }
}

TEST_CASE("fixed point: centered scores at A/lambda zero the gradient") {
    Rng rng(5);
    const std::vector<double> adv = group_advantages(std::vector<double>{1, 0, 0, 1, 1, 0}, {});
    const double lambda = 0.25;
    std::vector<double> deltas(adv.size());
    for (std::size_t i = 0; i < adv.size(); ++i) deltas[i] = adv[i] / lambda + 3.0;
    const RelativeScoreBatch b = center_scores(deltas);
    CHECK(fixed_point_residual(b, adv, lambda) <= 1e-14);
    const auto g = rspo_gradient(b, adv, lambda, random_grads(rng, adv.size(), 9));
    double norm = 0.0;
    for (double v : g) norm += v * v;
    CHECK(std::sqrt(norm) <= 1e-12);
}

TEST_CASE("reference point: AW and RSPO coincide when every delta is zero") {
    Rng rng(8);
    const std::vector<double> adv{0.5, -0.5, 1.0 / 3, -1.0 / 6, -1.0 / 6};
    const RelativeScoreBatch b = center_scores(std::vector<double>(5, 0.0));
    const auto grads = random_grads(rng, 5, 6);
    CHECK(rspo_gradient(b, adv, 0.01, grads) == aw_loss(b, adv, grads).gradient);
}

TEST_CASE("batch inner product") {
    CHECK(batch_inner(std::vector<double>{1, 2}, std::vector<double>{3, 4}) == 5.5);
    CHECK(batch_norm(std::vector<double>{3, 4}) == doctest::Approx(std::sqrt(12.5)));
    CHECK_THROWS_AS(batch_inner(std::vector<double>{1}, std::vector<double>{1, 2}), std::invalid_argument);
}
