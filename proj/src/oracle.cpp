#include "rspo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rspo::oracle {

namespace {

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

// int_0^1 t^k (1-t)^(n-k) dt = k! (n-k)! / (n+1)!
double beta_integral(int k, int n) { return factorial(k) * factorial(n - k) / factorial(n + 1); }

void check_tiny(const DenoiserModel& model, std::span<const Token> completion,
                const TinyLimits& limits) {
    if (model.output_size() > limits.max_outputs)
        throw std::invalid_argument("oracle: vocabulary exceeds the tiny-instance limit");
    if (completion.empty() || static_cast<int>(completion.size()) > limits.max_completion)
        throw std::invalid_argument("oracle: completion length must be in 1.." +
                                    std::to_string(limits.max_completion));
    for (Token t : completion)
        if (t < 0 || t >= model.output_size())
            throw std::invalid_argument("oracle: completion must consist of output tokens");
}

}  // namespace

double exact_elbo_expectation(const DenoiserModel& model, std::span<const Token> prompt,
                              std::span<const Token> completion, const TinyLimits& limits) {
    check_tiny(model, completion, limits);
    const int L = static_cast<int>(completion.size());
    const Token mask = static_cast<Token>(model.output_size());
    // Probability that a (t, M) draw is nonempty: 1 - int (1-t)^L dt.
    const double nonempty = 1.0 - beta_integral(0, L);

    double expectation = 0.0;
    std::vector<Token> state(completion.size());
    for (unsigned set = 1; set < (1u << L); ++set) {
        int size = 0;
        for (int i = 0; i < L; ++i) {
            const bool masked = (set >> i) & 1u;
            state[static_cast<std::size_t>(i)] = masked ? mask : completion[static_cast<std::size_t>(i)];
            size += masked ? 1 : 0;
        }
        const LogProbTable table = model.log_probs(prompt, state);
        double sum = 0.0;
        for (int i = 0; i < L; ++i)
            if ((set >> i) & 1u) sum += table.at(i, completion[static_cast<std::size_t>(i)]);
        const double prob = beta_integral(size, L) / nonempty;
        expectation += prob * (static_cast<double>(L) / size) * sum;
    }
    return expectation;
}

double exact_sequence_loglik(const DenoiserModel& model, std::span<const Token> prompt,
                             std::span<const Token> completion, int steps, Token mask_id,
                             const TinyLimits& limits) {
    check_tiny(model, completion, limits);
    if (steps < 1 || steps > limits.max_steps)
        throw std::invalid_argument("exact_sequence_loglik: steps must be in 1.." +
                                    std::to_string(limits.max_steps));
    const int L = static_cast<int>(completion.size());
    const unsigned full = (1u << L) - 1u;
    const std::uint64_t work = static_cast<std::uint64_t>(steps) << (2 * L);
    if (work > limits.max_enumeration)
        throw std::invalid_argument("exact_sequence_loglik: enumeration limit exceeded");

    // prob[S] = P(masked set is S and every unmasked token matches completion)
    std::vector<double> prob(full + 1, 0.0), next(full + 1, 0.0);
    prob[full] = 1.0;
    std::vector<Token> state(completion.size());
    for (int k = steps; k >= 1; --k) {
        const double t = static_cast<double>(k) / steps;
        const double s = static_cast<double>(k - 1) / steps;
        const double stay = s / t;  // (1 - alpha_s) / (1 - alpha_t), linear schedule
        std::fill(next.begin(), next.end(), 0.0);
        for (unsigned S = 0; S <= full; ++S) {
            if (prob[S] == 0.0) continue;
            if (S == 0) {
                next[0] += prob[0];
                continue;
            }
            for (int i = 0; i < L; ++i)
                state[static_cast<std::size_t>(i)] = ((S >> i) & 1u) ? mask_id : completion[static_cast<std::size_t>(i)];
            const LogProbTable table = model.log_probs(prompt, state);
            // Enumerate the subset of S that stays masked.
            for (unsigned keep = S;; keep = (keep - 1) & S) {
                double p = 1.0;
                for (int i = 0; i < L; ++i) {
                    if (!((S >> i) & 1u)) continue;
                    if ((keep >> i) & 1u)
                        p *= stay;
                    else
                        p *= (1.0 - stay) * std::exp(table.at(i, completion[static_cast<std::size_t>(i)]));
                }
                next[keep] += prob[S] * p;
                if (keep == 0) break;
            }
        }
        prob.swap(next);
    }
    return std::log(prob[0]);
}

KlOptimum kl_regularized_optimum(std::span<const double> pi_ref, std::span<const double> rewards,
                                 double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("kl_regularized_optimum: beta must be > 0");
    if (pi_ref.empty() || pi_ref.size() != rewards.size())
        throw std::invalid_argument("kl_regularized_optimum: pi_ref and rewards must match and be nonempty");
    const std::size_t n = pi_ref.size();
    std::vector<double> logits(n);
    double top = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(pi_ref[i] > 0.0)) throw std::invalid_argument("kl_regularized_optimum: pi_ref must be positive");
        logits[i] = std::log(pi_ref[i]) + rewards[i] / beta;
        top = std::max(top, logits[i]);
    }
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - top);
    KlOptimum out;
    out.log_z = top + std::log(sum);
    out.pi_star.resize(n);
    out.delta_star.resize(n);
    double mean_delta = 0.0, mean_r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.pi_star[i] = std::exp(logits[i] - out.log_z);
        out.delta_star[i] = rewards[i] / beta - out.log_z;
        mean_delta += out.delta_star[i];
        mean_r += rewards[i];
    }
    mean_delta /= static_cast<double>(n);
    mean_r /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double gap = std::abs((out.delta_star[i] - mean_delta) - (rewards[i] - mean_r) / beta);
        out.centered_identity_gap = std::max(out.centered_identity_gap, gap);
    }
    return out;
}

KlProxy kl_proxy(std::span<const double> p, std::span<const double> q) {
    if (p.empty() || p.size() != q.size()) throw std::invalid_argument("kl_proxy: size mismatch");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("kl_proxy: negative probability");
        if ((p[i] > 0.0) != (q[i] > 0.0)) throw std::invalid_argument("kl_proxy: supports differ");
        sp += p[i];
        sq += q[i];
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
        throw std::invalid_argument("kl_proxy: distributions must sum to 1");

    KlProxy out;
    double mean = 0.0, second = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        const double d = std::log(q[i] / p[i]);
        out.kl_pq -= p[i] * d;
        out.kl_qp += q[i] * d;
        mean += p[i] * d;
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        const double d = std::log(q[i] / p[i]) - mean;
        second += p[i] * d * d;
    }
    out.half_var = 0.5 * second;
    out.gap_pq = std::abs(out.kl_pq - out.half_var);
    out.gap_qp = std::abs(out.kl_qp - out.half_var);
    return out;
}

bool PerturbationCheck::holds() const {
    auto within = [](double lhs, double rhs) { return lhs <= rhs * (1.0 + 1e-12) + 1e-300; };
    return within(lhs_aw, rhs_aw) && within(lhs_rspo, rhs_rspo);
}

PerturbationCheck perturbation_bound_check(std::span<const double> advantages,
                                           std::span<const double> r_hat,
                                           std::span<const double> xi, double lambda) {
    const std::size_t n = advantages.size();
    if (n == 0 || r_hat.size() != n || xi.size() != n)
        throw std::invalid_argument("perturbation_bound_check: size mismatch");
    if (!(lambda >= 0.0)) throw std::invalid_argument("perturbation_bound_check: lambda must be >= 0");
    const double N = static_cast<double>(n);

    PerturbationCheck out;
    double xi_mean = 0.0;
    for (double x : xi) {
        out.eps = std::max(out.eps, std::abs(x));
        xi_mean += x;
    }
    xi_mean /= N;

    double aw_delta = 0.0, aw_r = 0.0, sq_delta = 0.0, sq_r = 0.0, sq_a = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = r_hat[i] + (xi[i] - xi_mean);
        aw_delta += advantages[i] * d;
        aw_r += advantages[i] * r_hat[i];
        sq_delta += d * d;
        sq_r += r_hat[i] * r_hat[i];
        sq_a += advantages[i] * advantages[i];
    }
    aw_delta /= N;
    aw_r /= N;
    sq_delta /= N;
    sq_r /= N;
    sq_a /= N;

    // Forward RSPO value: -<A - lambda x, x> = -<A, x> + lambda ||x||^2.
    const double loss_aw_delta = -aw_delta, loss_aw_r = -aw_r;
    const double loss_rspo_delta = -aw_delta + lambda * sq_delta;
    const double loss_rspo_r = -aw_r + lambda * sq_r;
    out.lhs_aw = std::abs(loss_aw_delta - loss_aw_r);
    out.lhs_rspo = std::abs(loss_rspo_delta - loss_rspo_r);
    out.rhs_aw = 2.0 * out.eps * std::sqrt(sq_a);
    out.rhs_rspo = out.rhs_aw + lambda * (4.0 * out.eps * std::sqrt(sq_r) + 4.0 * out.eps * out.eps);
    return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

}  // namespace rspo::oracle
