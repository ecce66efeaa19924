#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "rspo/harness.hpp"
#include "rspo/oracle.hpp"
#include "rspo/score.hpp"

namespace rspo {

namespace {

struct TinyInstance {
    DenoiserParams params;
    std::vector<Token> prompt;
    std::vector<Token> completion;
};

TinyInstance tiny_instance(Rng& rng, int completion_len) {
    DenoiserShape shape{4, 1, 4, 2, completion_len};
    TinyInstance inst{DenoiserParams::random_uniform(shape, rng.next_u64(), 1.0), {}, {}};
    for (int i = 0; i < 2; ++i) inst.prompt.push_back(static_cast<Token>(rng.below(3)));
    for (int i = 0; i < completion_len; ++i) inst.completion.push_back(static_cast<Token>(rng.below(3)));
    return inst;
}

void report(std::ostream& out, int& failures, const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
    if (!ok) ++failures;
}

}  // namespace

int run_audit(std::ostream& out, std::uint64_t seed) {
    int failures = 0;
    Rng rng(seed, 0xA0D17);

    {
        int within = 0;
        const int instances = 5, draws = 20000;
        double worst = 0.0;
        for (int n = 0; n < instances; ++n) {
            TinyInstance inst = tiny_instance(rng, 3);
            const double exact = oracle::exact_elbo_expectation(FeatureDenoiser(inst.params), inst.prompt,
                                                                inst.completion);
            std::vector<MaskSample> masks;
            for (int k = 0; k < draws; ++k) masks.push_back(sample_mask_set(3, rng));
            const ElboEstimate est = elbo_score(inst.params, inst.prompt, inst.completion, masks);
            const double z = std::abs(est.value - exact) / est.standard_error();
            worst = std::max(worst, z);
            if (z <= 3.0) ++within;
        }
        report(out, failures, "elbo_estimator_unbiased", within == instances,
               std::to_string(within) + "/" + std::to_string(instances) + " within 3 SE, worst z " + std::to_string(worst));
    }

    {
        int holds = 0;
        const int instances = 20;
        for (int n = 0; n < instances; ++n) {
            TinyInstance inst = tiny_instance(rng, 3);
            const FeatureDenoiser model(inst.params);
            const double elbo = oracle::exact_elbo_expectation(model, inst.prompt, inst.completion);
            const double loglik = oracle::exact_sequence_loglik(model, inst.prompt, inst.completion, 4, 3);
            if (elbo <= loglik + 1e-9) ++holds;
        }
        out << "INFO elbo_below_loglik_T4  " << holds << "/" << instances << " instances\n";
    }

    {
        TinyInstance inst = tiny_instance(rng, 3);
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            Rng r = rng.fork(static_cast<std::uint64_t>(k));
            worst = std::max(worst, std::abs(coupled_delta(inst.params, inst.params, inst.prompt, inst.completion, 2, r)));
        }
        report(out, failures, "coupled_delta_identical_models", worst == 0.0, "max |delta| " + std::to_string(worst));
    }

    {
        const std::vector<double> p{0.5, 0.3, 0.2};
        std::vector<double> eps{0.04, 0.02, 0.01, 0.005}, gaps;
        for (double e : eps) {
            std::vector<double> q{p[0] * std::exp(e), p[1], p[2] * std::exp(-e)};
            const double z = q[0] + q[1] + q[2];
            for (double& v : q) v /= z;
            gaps.push_back(oracle::kl_proxy(p, q).gap_pq);
        }
        const double slope = oracle::loglog_slope(eps, gaps);
        report(out, failures, "kl_proxy_cubic_gap", slope >= 2.7 && slope <= 3.3, "slope " + std::to_string(slope));
    }

    {
        int violations = 0;
        const int trials = 1000;
        for (int n = 0; n < trials; ++n) {
            const int N = 2 + static_cast<int>(rng.below(15));
            std::vector<double> a(N), r(N), xi(N);
            double ma = 0.0, mr = 0.0;
            for (int i = 0; i < N; ++i) {
                a[i] = rng.uniform() * 2.0 - 1.0;
                r[i] = rng.uniform() * 2.0 - 1.0;
                ma += a[i];
                mr += r[i];
            }
            const double eps = std::pow(10.0, -3.0 * rng.uniform());
            for (int i = 0; i < N; ++i) {
                a[i] -= ma / N;
                r[i] -= mr / N;
                xi[i] = eps * (rng.uniform() * 2.0 - 1.0);
            }
            if (!oracle::perturbation_bound_check(a, r, xi, rng.uniform() * 2.0).holds()) ++violations;
        }
        report(out, failures, "perturbation_bound", violations == 0,
               std::to_string(violations) + " violations in " + std::to_string(trials) + " trials");
    }

    {
        double worst = 0.0;
        for (int n = 0; n < 100; ++n) {
            const int S = 2 + static_cast<int>(rng.below(8));
            std::vector<double> pi(S), r(S);
            for (int i = 0; i < S; ++i) {
                pi[i] = 0.05 + rng.uniform();
                r[i] = rng.uniform();
            }
            double z = 0.0;
            for (double v : pi) z += v;
            for (double& v : pi) v /= z;
            const double beta = 0.1 + rng.uniform() * 2.0;
            worst = std::max(worst, oracle::kl_regularized_optimum(pi, r, beta).centered_identity_gap);
        }
        report(out, failures, "kl_optimum_centered_target", worst <= 1e-12, "max gap " + std::to_string(worst));
    }

    return failures;
}

}  // namespace rspo
