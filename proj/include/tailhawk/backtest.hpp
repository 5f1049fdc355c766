#pragma once

#include "tailhawk/data.hpp"
#include "tailhawk/distributions.hpp"
#include "tailhawk/error.hpp"
#include "tailhawk/estimation.hpp"
#include "tailhawk/hawkes.hpp"
#include "tailhawk/rng.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tailhawk {

/// Outcome of one test. `defined` is false when the test could not be run;
/// statistic and p are then NaN and `note` says why.
struct TestResult {
    double statistic = kNaN;
    double p_value = kNaN;
    int df = 0;
    bool defined = false;
    std::string note;
    std::size_t violations = 0;
    std::size_t observations = 0;

    static TestResult undefined(std::string why, std::size_t n = 0, std::size_t v = 0) {
        TestResult r;
        r.note = std::move(why);
        r.observations = n;
        r.violations = v;
        return r;
    }
};

inline double chi2_sf(double x, int df) {
    if (x <= 0.0) return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

namespace detail {

/// n ln(p), with 0 ln 0 = 0.
inline double xlogy(double n, double p) { return n == 0.0 ? 0.0 : n * std::log(p); }

}  // namespace detail

/// Unconditional coverage: Bernoulli LR of the violation rate against a_q.
inline TestResult uc_test(std::span<const int> violations, double a_q) {
    if (violations.empty()) return TestResult::undefined("no observations");
    if (!(a_q > 0.0 && a_q < 1.0)) throw ValidationError("uc_test: a_q must lie in (0, 1)");
    const auto T = static_cast<double>(violations.size());
    const double T1 = std::accumulate(violations.begin(), violations.end(), 0.0);
    const double T0 = T - T1;
    const double pi = T1 / T;
    const double ll_null = detail::xlogy(T1, a_q) + detail::xlogy(T0, 1.0 - a_q);
    const double ll_alt = detail::xlogy(T1, pi) + detail::xlogy(T0, 1.0 - pi);
    TestResult r;
    r.statistic = std::max(0.0, -2.0 * (ll_null - ll_alt));
    r.df = 1;
    r.p_value = chi2_sf(r.statistic, 1);
    r.defined = true;
    r.observations = violations.size();
    r.violations = static_cast<std::size_t>(T1);
    return r;
}

/// First-order Markov transition counts; n[i][j] counts I_t = i after I_{t-1} = j.
struct TransitionCounts {
    std::array<std::array<double, 2>, 2> n{};
};

inline TransitionCounts transition_counts(std::span<const int> v) {
    TransitionCounts c;
    for (std::size_t t = 1; t < v.size(); ++t) c.n[static_cast<std::size_t>(v[t] != 0)][static_cast<std::size_t>(v[t - 1] != 0)] += 1.0;
    return c;
}

/// Conditional coverage: the Markov-chain likelihood of the violation
/// sequence against independent Bernoulli(a_q), over the T - 1 transitions.
inline TestResult cc_test(std::span<const int> violations, double a_q) {
    if (violations.size() < 2) return TestResult::undefined("fewer than two observations", violations.size());
    if (!(a_q > 0.0 && a_q < 1.0)) throw ValidationError("cc_test: a_q must lie in (0, 1)");
    const auto c = transition_counts(violations);
    const double n00 = c.n[0][0];
    const double n10 = c.n[1][0];
    const double n01 = c.n[0][1];
    const double n11 = c.n[1][1];
    const double from0 = n00 + n10;
    const double from1 = n01 + n11;
    const double pi10 = from0 > 0.0 ? n10 / from0 : 0.0;   // violation after no violation
    const double pi11 = from1 > 0.0 ? n11 / from1 : 0.0;   // violation after violation
    const double T1 = n10 + n11;
    const double T0 = n00 + n01;
    const double ll_null = detail::xlogy(T1, a_q) + detail::xlogy(T0, 1.0 - a_q);
    const double ll_alt =
        detail::xlogy(n00, 1.0 - pi10) + detail::xlogy(n10, pi10) + detail::xlogy(n01, 1.0 - pi11) + detail::xlogy(n11, pi11);
    TestResult r;
    r.statistic = std::max(0.0, -2.0 * (ll_null - ll_alt));
    r.df = 2;
    r.p_value = chi2_sf(r.statistic, 2);
    r.defined = true;
    r.observations = violations.size();
    r.violations = static_cast<std::size_t>(std::accumulate(violations.begin(), violations.end(), 0));
    return r;
}

/// Dynamic quantile test with J hit lags and the contemporaneous VaR.
///
/// Rows t = J..T-1 (the first J steps have incomplete lags and are dropped).
/// A rank-deficient A'A is handled with a pseudo-inverse and noted.
inline TestResult dq_test(std::span<const int> violations, std::span<const double> var_forecasts, double a_q, int J = 4) {
    const std::size_t T = violations.size();
    if (var_forecasts.size() != T) throw ValidationError("dq_test: violation and VaR series differ in length");
    if (J < 0) throw ValidationError("dq_test: J must be non-negative");
    const auto uJ = static_cast<std::size_t>(J);
    if (T <= uJ + 2) return TestResult::undefined("too few observations", T);
    const auto rows = static_cast<Eigen::Index>(T - uJ);
    const Eigen::Index cols = 2 + J;
    Eigen::MatrixXd A(rows, cols);
    Eigen::VectorXd hit(rows);
    for (std::size_t t = uJ; t < T; ++t) {
        const auto i = static_cast<Eigen::Index>(t - uJ);
        hit[i] = violations[t] - a_q;
        A(i, 0) = 1.0;
        for (int j = 1; j <= J; ++j) A(i, j) = violations[t - static_cast<std::size_t>(j)] - a_q;
        A(i, J + 1) = var_forecasts[t];
    }
    const Eigen::MatrixXd AtA = A.transpose() * A;
    const Eigen::VectorXd Ath = A.transpose() * hit;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-10);  // relative to the largest pivot
    cod.compute(AtA);
    TestResult r;
    if (cod.rank() < cols) r.note = "rank-deficient regressors (pseudo-inverse)";
    const double quad = Ath.dot(cod.solve(Ath));
    r.statistic = std::max(0.0, quad / (a_q * (1.0 - a_q)));
    r.df = 2 + J;
    r.p_value = chi2_sf(r.statistic, r.df);
    r.defined = true;
    r.observations = T;
    r.violations = static_cast<std::size_t>(std::accumulate(violations.begin(), violations.end(), 0));
    return r;
}

struct BootstrapOptions {
    int replicates = 1000;
    std::size_t block_length = 5;
    std::uint64_t seed = 0;
};

/// Zero-mean-discrepancy test of ES forecasts at VaR violations.
///
/// D_t = (X_t - ES_t) / (VaR_t - median_t) over violation steps; the mean is
/// tested against 0 with a circular block bootstrap of the D sequence:
/// p = (1 + #{|m* - m| >= |m|}) / (B + 1).
inline TestResult zmd_test(std::span<const double> returns, std::span<const int> violations, std::span<const double> var_forecasts,
                           std::span<const double> es_forecasts, std::span<const double> median_forecasts, const BootstrapOptions& opt) {
    const std::size_t T = returns.size();
    if (violations.size() != T || var_forecasts.size() != T || es_forecasts.size() != T || median_forecasts.size() != T) {
        throw ValidationError("zmd_test: input series differ in length");
    }
    if (opt.block_length == 0 || opt.replicates < 1) throw ValidationError("zmd_test: bad bootstrap settings");
    std::vector<double> d;
    for (std::size_t t = 0; t < T; ++t) {
        if (!violations[t]) continue;
        const double denom = var_forecasts[t] - median_forecasts[t];
        if (!(std::abs(denom) > 0.0)) return TestResult::undefined("zero VaR-median spread at a violation", T);
        d.push_back((returns[t] - es_forecasts[t]) / denom);
    }
    const std::size_t n = d.size();
    if (n < 2 * opt.block_length) return TestResult::undefined("too few violations for the block bootstrap", T, n);
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    SplitMix64 rng(opt.seed);
    const std::size_t blocks = (n + opt.block_length - 1) / opt.block_length;
    int extreme = 0;
    for (int b = 0; b < opt.replicates; ++b) {
        double sum = 0.0;
        std::size_t drawn = 0;
        for (std::size_t k = 0; k < blocks && drawn < n; ++k) {
            const std::size_t s = rng.below(n);
            for (std::size_t j = 0; j < opt.block_length && drawn < n; ++j, ++drawn) sum += d[(s + j) % n];
        }
        const double m_star = sum / static_cast<double>(n);
        if (std::abs(m_star - mean) >= std::abs(mean)) ++extreme;
    }
    TestResult r;
    r.statistic = mean;
    r.p_value = (1.0 + extreme) / (opt.replicates + 1.0);
    r.df = 0;
    r.defined = true;
    r.observations = T;
    r.violations = n;
    return r;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

/// P(K > lambda) for the Kolmogorov distribution.
inline double kolmogorov_sf(double lambda) {
    if (!(lambda > 0.0)) return 1.0;
    if (lambda < 1.0) {
        // P(K <= l) = sqrt(2 pi) / l * sum exp(-(2k-1)^2 pi^2 / (8 l^2))
        const double pi2 = std::numbers::pi * std::numbers::pi;
        double s = 0.0;
        for (int k = 1; k <= 50; ++k) {
            const double term = std::exp(-(2.0 * k - 1.0) * (2.0 * k - 1.0) * pi2 / (8.0 * lambda * lambda));
            s += term;
            if (term < 1e-17 * s) break;
        }
        return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-17) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

/// One-sample KS test with the asymptotic Kolmogorov p-value (sqrt(n) D).
template <class Cdf>
TestResult ks_test(std::vector<double> sample, Cdf cdf, std::size_t min_n = 5) {
    const std::size_t n = sample.size();
    if (n < min_n) return TestResult::undefined("fewer than " + std::to_string(min_n) + " observations", n);
    std::sort(sample.begin(), sample.end());
    double D = 0.0;
    const auto nn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double F = cdf(sample[i]);
        D = std::max({D, (static_cast<double>(i) + 1.0) / nn - F, F - static_cast<double>(i) / nn});
    }
    TestResult r;
    r.statistic = D;
    r.p_value = kolmogorov_sf(std::sqrt(nn) * D);
    r.defined = true;
    r.observations = n;
    return r;
}

inline TestResult ks_exponential(std::vector<double> sample, double rate = 1.0) {
    return ks_test(std::move(sample), [rate](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-rate * x); });
}

/// Residual-time, residual-magnitude and calendar-time KS tests for one tail.
struct ResidualTests {
    TestResult time;
    TestResult magnitude;
    TestResult calendar;
    std::vector<double> residual_gaps;
    std::vector<double> residual_magnitudes;
};

/// Residual diagnostics of a fitted Hawkes model on the events in [begin, end).
///
/// Residual time of an event is the per-tail compensator accumulated from
/// `begin` to its arrival step (inclusive); gaps between consecutive
/// residual times should be Exp(1). Residual magnitudes
/// ln(1 + xi M / sigma_t) / xi should be Exp(1). The calendar variant tests
/// raw inter-arrival gaps against an exponential with the observed rate.
inline std::array<ResidualTests, 2> ks_residual_tests(const HawkesParams& params, const ExceedancePair& exceedances,
                                                       std::size_t begin, std::size_t end, std::size_t min_events = 5) {
    if (!(begin < end)) throw ValidationError("ks_residual_tests: empty slice");
    const IntensityPath path = evolve_path(params, exceedances, end);
    std::array<ResidualTests, 2> out;
    for (Tail o : {Tail::left, Tail::right}) {
        std::vector<std::size_t> times;
        std::vector<double> marks;
        std::vector<double> sigmas;
        for (const auto& e : exceedances.events(o)) {
            if (e.t < begin || e.t >= end) continue;
            times.push_back(e.t);
            marks.push_back(e.magnitude);
            sigmas.push_back(path.sigma[e.t][o]);
        }
        auto& res = out[o];
        if (times.size() < min_events) {
            res.time = res.magnitude = res.calendar = TestResult::undefined("fewer than " + std::to_string(min_events) + " events", times.size());
            continue;
        }
        double cum = 0.0;
        std::size_t k = 0;
        double last = 0.0;
        for (std::size_t t = begin; t < end && k < times.size(); ++t) {
            cum += path.compensator[t][o];
            if (t == times[k]) {
                if (k > 0) res.residual_gaps.push_back(cum - last);
                last = cum;
                ++k;
            }
        }
        const double xi = params.xi[o];
        for (std::size_t i = 0; i < marks.size(); ++i) {
            const double z = xi * marks[i] / sigmas[i];
            if (!(z > -1.0)) throw ParameterError("ks_residual_tests: excess beyond the GP support");
            res.residual_magnitudes.push_back(std::abs(xi) < kGpExponentialCutoff ? marks[i] / sigmas[i] : std::log1p(z) / xi);
        }
        std::vector<double> raw;
        for (std::size_t i = 1; i < times.size(); ++i) raw.push_back(static_cast<double>(times[i] - times[i - 1]));
        const double rate = static_cast<double>(raw.size()) / static_cast<double>(times.back() - times.front());
        res.time = ks_exponential(res.residual_gaps);
        res.magnitude = ks_exponential(res.residual_magnitudes);
        res.calendar = ks_exponential(raw, rate);
    }
    return out;
}

}  // namespace tailhawk
