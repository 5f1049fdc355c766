#pragma once

#include "tailhawk/data.hpp"
#include "tailhawk/distributions.hpp"
#include "tailhawk/error.hpp"
#include "tailhawk/estimation.hpp"
#include "tailhawk/forecast.hpp"
#include "tailhawk/optim.hpp"
#include "tailhawk/piecewise.hpp"
#include "tailhawk/rng.hpp"

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tailhawk {

/// GP tails grafted onto the standardized innovation distribution.
struct GarchEvt {
    double a_u = 0.0;
    TailPair xi{};
    TailPair varsigma{};
    TailPair u{};          ///< innovation thresholds F^-1(a_u), F^-1(1 - a_u)
    std::array<std::size_t, 2> exceedances{};
    TailPair loglik{};
    std::array<std::array<std::optional<double>, 2>, 2> standard_errors{};  ///< [tail][xi, varsigma]
};

/// GARCH(1, r, 1):  X_t = mu + sigma_t eps_t,
///   sigma_t^2 = omega + (alpha + gamma 1{eps_{t-1} < 0}) (X_{t-1} - mu)^2 + beta sigma_{t-1}^2.
struct GarchParams {
    double mu = 0.0;
    double omega = 1e-6;
    double alpha = 0.05;
    double beta = 0.9;
    double gamma = 0.0;
    int r = 0;                                  ///< 1 enables the leverage term
    BulkFamily family = BulkFamily::normal;
    double inverse_nu = 0.0;                    ///< Student-t only; 0 is the normal limit
    std::optional<GarchEvt> evt;

    [[nodiscard]] double persistence() const noexcept { return alpha + beta + 0.5 * gamma; }
    [[nodiscard]] double nu() const noexcept { return inverse_nu > 0.0 ? 1.0 / inverse_nu : kInf; }

    [[nodiscard]] const char* problem() const noexcept {
        if (!(omega > 0.0)) return "omega must be positive";
        if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) return "ARCH/GARCH/leverage coefficients must be non-negative";
        if (r == 0 && gamma != 0.0) return "leverage coefficient must be 0 when r = 0";
        if (!(persistence() < 1.0)) return "alpha + beta + gamma/2 must be < 1 (covariance stationarity)";
        if (family == BulkFamily::student_t && inverse_nu > 0.0 && !(1.0 / inverse_nu > 2.0)) return "nu must exceed 2";
        if (evt) {
            for (double s : evt->varsigma) {
                if (!(s > 0.0)) return "EVT tail scales must be positive";
            }
            for (double x : evt->xi) {
                if (!(x < 1.0)) return "EVT tail shapes must be < 1";
            }
        }
        return nullptr;
    }

    void validate() const {
        if (const char* why = problem()) throw ParameterError(std::string("GARCH parameters: ") + why);
    }

    /// Unit-variance innovation bulk.
    [[nodiscard]] BulkDist innovation_bulk() const {
        if (family == BulkFamily::normal || inverse_nu <= 0.0) return BulkDist::normal();
        return BulkDist::student_t(1.0 / inverse_nu, true);
    }

    /// Innovation distribution, with GP tails of mass a_u each when EVT is present.
    [[nodiscard]] PiecewiseDistribution innovation_distribution() const {
        if (!evt || evt->a_u <= 0.0) return {GpTail{}, GpTail{}, 0.0, 1.0, innovation_bulk()};
        return {GpTail{evt->a_u, evt->u[0], evt->xi[0], evt->varsigma[0]}, GpTail{evt->a_u, evt->u[1], evt->xi[1], evt->varsigma[1]},
                0.0, 1.0, innovation_bulk()};
    }
};

/// Conditional standard deviations for every index of `values`, sigma_0^2 = sigma0_sq.
inline std::vector<double> garch_sigma_path(const GarchParams& p, std::span<const double> values, double sigma0_sq) {
    std::vector<double> sigma(values.size());
    double var = sigma0_sq;
    for (std::size_t t = 0; t < values.size(); ++t) {
        if (t > 0) {
            const double e = values[t - 1] - p.mu;
            var = p.omega + (p.alpha + (e < 0.0 ? p.gamma : 0.0)) * e * e + p.beta * var;
        }
        sigma[t] = std::sqrt(var);
    }
    return sigma;
}

inline double sample_variance(std::span<const double> x) {
    if (x.size() < 2) throw ValidationError("sample variance needs at least two observations");
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(x.size());
}

/// Gaussian or Student-t log-likelihood of the in-sample values.
inline double garch_loglik(const GarchParams& p, std::span<const double> values, double sigma0_sq) {
    const BulkDist dist = p.innovation_bulk();
    const bool normal = dist.family() == BulkFamily::normal;
    constexpr double half_log_2pi = 0.91893853320467274178;
    double ll = 0.0;
    double var = sigma0_sq;
    for (std::size_t t = 0; t < values.size(); ++t) {
        if (t > 0) {
            const double e = values[t - 1] - p.mu;
            var = p.omega + (p.alpha + (e < 0.0 ? p.gamma : 0.0)) * e * e + p.beta * var;
        }
        const double z = (values[t] - p.mu) / std::sqrt(var);
        ll += (normal ? -half_log_2pi - 0.5 * z * z : dist.log_pdf(z)) - 0.5 * std::log(var);
    }
    return ll;
}

struct GarchFitOptions {
    int starts = 3;
    std::uint64_t seed = 0;
    std::size_t min_length = 250;
    OptimOptions optim{};
    std::vector<GarchParams> warm_starts;
};

struct FittedGarch {
    GarchParams params;
    std::size_t in_sample_length = 0;
    double sigma0_sq = 0.0;
    double loglik = 0.0;
    std::vector<std::string> names;
    std::vector<double> estimates;
    std::vector<std::optional<double>> standard_errors;
    OptimizerReport report;
    bool stationarity_boundary = false;   ///< persistence constraint active at the optimum
};

namespace detail {

/// Free vector [mu/sd, omega/var, alpha, beta, (gamma), (1/nu)]: location and
/// variance floor are scaled by the sample moments so every coordinate is O(1).
struct GarchLayout {
    int r;
    BulkFamily family;
    double sd;
    double var;
    std::vector<std::string> names;
    Problem problem;

    GarchLayout(int r_, BulkFamily family_, double var_) : r(r_), family(family_), sd(std::sqrt(var_)), var(var_) {
        std::vector<double> lo{-1.0, 1e-8, 0.0, 0.0};
        std::vector<double> hi{1.0, 1.0, 1.0, 1.0};
        names = {"mu", "omega", "alpha", "beta"};
        if (r == 1) {
            names.push_back("gamma");
            lo.push_back(0.0);
            hi.push_back(1.0);
        }
        if (family == BulkFamily::student_t) {
            names.push_back("inverse_nu");
            lo.push_back(0.0);
            hi.push_back(1.0 / kMinNu);
        }
        problem.lower = Eigen::Map<Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
        problem.upper = Eigen::Map<Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
        LinearConstraint c{Vector::Zero(static_cast<Eigen::Index>(names.size())), 1.0 - 1e-6};
        c.a[2] = 1.0;
        c.a[3] = 1.0;
        if (r == 1) c.a[4] = 0.5;
        problem.constraints.push_back(c);
    }

    [[nodiscard]] GarchParams unpack(const Vector& x) const {
        GarchParams p;
        p.r = r;
        p.family = family;
        p.mu = x[0] * sd;
        p.omega = x[1] * var;
        p.alpha = x[2];
        p.beta = x[3];
        Eigen::Index i = 4;
        p.gamma = r == 1 ? x[i++] : 0.0;
        p.inverse_nu = family == BulkFamily::student_t ? x[i] : 0.0;
        return p;
    }

    [[nodiscard]] Vector pack(const GarchParams& p) const {
        Vector x(static_cast<Eigen::Index>(names.size()));
        x[0] = p.mu / sd;
        x[1] = p.omega / var;
        x[2] = p.alpha;
        x[3] = p.beta;
        Eigen::Index i = 4;
        if (r == 1) x[i++] = p.gamma;
        if (family == BulkFamily::student_t) x[i] = p.inverse_nu;
        x = x.cwiseMax(problem.lower).cwiseMin(problem.upper);
        const double lhs = problem.constraints[0].a.dot(x);
        if (lhs > problem.constraints[0].b) {
            const double shrink = 0.999 * problem.constraints[0].b / lhs;
            x[2] *= shrink;
            x[3] *= shrink;
            if (r == 1) x[4] *= shrink;
        }
        return x;
    }

    /// Reported parameter units (mu and omega unscaled).
    [[nodiscard]] std::vector<double> unit_factors() const {
        std::vector<double> f(names.size(), 1.0);
        f[0] = sd;
        f[1] = var;
        return f;
    }
};

}  // namespace detail

/// Maximum-likelihood GARCH(1, r, 1) fit on the in-sample values.
inline FittedGarch fit_garch(std::span<const double> in_sample, int r, BulkFamily family, const GarchFitOptions& options = {}) {
    if (r != 0 && r != 1) throw ValidationError("fit_garch: r must be 0 or 1");
    if (in_sample.size() < options.min_length) {
        throw ValidationError("fit_garch: in-sample length " + std::to_string(in_sample.size()) + " < " +
                              std::to_string(options.min_length));
    }
    const double var0 = sample_variance(in_sample);
    const detail::GarchLayout layout(r, family, var0);
    const Objective objective = [&](const Vector& x) {
        const GarchParams p = layout.unpack(x);
        if (p.problem() != nullptr) return -kInf;
        const double ll = garch_loglik(p, in_sample, var0);
        return std::isfinite(ll) ? ll : -kInf;
    };

    GarchParams init;
    init.r = r;
    init.family = family;
    init.mu = std::accumulate(in_sample.begin(), in_sample.end(), 0.0) / static_cast<double>(in_sample.size());
    init.alpha = r == 1 ? 0.03 : 0.05;
    init.gamma = r == 1 ? 0.05 : 0.0;
    init.beta = 0.9;
    init.omega = var0 * (1.0 - init.persistence());
    init.inverse_nu = family == BulkFamily::student_t ? 1.0 / 8.0 : 0.0;

    std::vector<Vector> starts;
    for (GarchParams w : options.warm_starts) {
        w.r = r;
        w.family = family;
        if (r == 0) w.gamma = 0.0;
        if (family == BulkFamily::normal) w.inverse_nu = 0.0;
        starts.push_back(layout.pack(w));
    }
    const Vector base = layout.pack(init);
    starts.push_back(base);
    SplitMix64 rng(derive_seed(options.seed, "garch/" + std::to_string(r) + family_name(family)));
    for (int s = 1; s < options.starts; ++s) {
        Vector x = base;
        for (Eigen::Index i = 1; i < x.size(); ++i) x[i] *= std::exp(0.3 * rng.normal());
        starts.push_back(layout.pack(layout.unpack(x)));
    }

    OptimResult best;
    int best_index = -1;
    int evaluations = 0;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        if (!std::isfinite(objective(starts[s]))) continue;
        OptimResult res = maximize(objective, starts[s], layout.problem, options.optim);
        evaluations += res.evaluations;
        if (std::isfinite(res.f) && (best_index < 0 || res.f > best.f)) {
            best = std::move(res);
            best_index = static_cast<int>(s);
        }
    }
    if (best_index < 0) throw FitError("fit_garch: no admissible start", {}, -kInf);

    FittedGarch fit;
    fit.params = layout.unpack(best.x);
    fit.in_sample_length = in_sample.size();
    fit.sigma0_sq = var0;
    fit.loglik = best.f;
    fit.names = layout.names;
    const auto factors = layout.unit_factors();
    const auto se = standard_errors(objective, best.x, layout.problem);
    for (std::size_t i = 0; i < fit.names.size(); ++i) {
        fit.estimates.push_back(best.x[static_cast<Eigen::Index>(i)] * factors[i]);
        fit.standard_errors.push_back(se[i] ? std::optional<double>(*se[i] * factors[i]) : std::nullopt);
    }
    fit.report = {best.iterations, evaluations, best.converged, best.message, best.constraint_violation,
                  static_cast<int>(starts.size()), best_index, best.trace};
    fit.stationarity_boundary = layout.problem.constraints[0].b - layout.problem.constraints[0].a.dot(best.x) < 1e-5;
    return fit;
}

/// Standardized in-sample residuals (X_t - mu) / sigma_t.
inline std::vector<double> garch_residuals(const FittedGarch& fit, std::span<const double> in_sample) {
    const auto sigma = garch_sigma_path(fit.params, in_sample, fit.sigma0_sq);
    std::vector<double> eps(in_sample.size());
    for (std::size_t t = 0; t < eps.size(); ++t) eps[t] = (in_sample[t] - fit.params.mu) / sigma[t];
    return eps;
}

/// Unconditional GP maximum-likelihood fit to positive excesses.
struct GpFit {
    double xi = 0.0;
    double sigma = 1.0;
    double loglik = 0.0;
    std::array<std::optional<double>, 2> standard_errors{};
};

inline GpFit fit_gp(std::span<const double> excesses, std::size_t min_events = 10) {
    if (excesses.size() < min_events) {
        throw ValidationError("fit_gp: " + std::to_string(excesses.size()) + " excesses (< " + std::to_string(min_events) + ")");
    }
    double mean = 0.0;
    for (double m : excesses) {
        if (!(m > 0.0)) throw ValidationError("fit_gp: excesses must be positive");
        mean += m;
    }
    mean /= static_cast<double>(excesses.size());
    // [xi, sigma / mean]
    Problem pr;
    pr.lower = Vector(2);
    pr.upper = Vector(2);
    pr.lower << -0.5, 1e-6;
    pr.upper << 0.99, 100.0;
    const Objective f = [&](const Vector& x) {
        double ll = 0.0;
        for (double m : excesses) ll += gp_log_density(x[0], x[1] * mean, m);
        return std::isfinite(ll) ? ll : -kInf;
    };
    Vector x0(2);
    x0 << 0.1, 0.9;
    const auto res = maximize(f, x0, pr);
    if (!std::isfinite(res.f)) throw FitError("fit_gp: no finite likelihood", {}, -kInf);
    GpFit g{res.x[0], res.x[1] * mean, res.f, {}};
    const auto se = standard_errors(f, res.x, pr);
    g.standard_errors[0] = se[0];
    if (se[1]) g.standard_errors[1] = *se[1] * mean;
    return g;
}

/// Second step of GARCH-EVT: GP tails on the fitted model's innovations.
///
/// Thresholds are the parametric innovation quantiles at a_u and 1 - a_u;
/// each tail's excesses are fitted independently. a_u = 0 returns the
/// baseline unchanged.
inline FittedGarch fit_garch_evt(const FittedGarch& base, std::span<const double> in_sample, double a_u, std::size_t min_events = 10) {
    FittedGarch out = base;
    out.params.evt.reset();
    if (a_u == 0.0) return out;
    if (!(a_u > 0.0 && a_u < 0.5)) throw ValidationError("fit_garch_evt: a_u must lie in [0, 0.5)");
    const BulkDist bulk = base.params.innovation_bulk();
    GarchEvt evt;
    evt.a_u = a_u;
    evt.u = {bulk.quantile(a_u), bulk.upper_quantile(a_u)};
    const auto eps = garch_residuals(base, in_sample);
    std::array<std::vector<double>, 2> excess;
    for (double e : eps) {
        if (e < evt.u[0]) excess[0].push_back(evt.u[0] - e);
        if (e > evt.u[1]) excess[1].push_back(e - evt.u[1]);
    }
    for (Tail o : {Tail::left, Tail::right}) {
        if (excess[o].size() < min_events) {
            throw ValidationError(std::string("fit_garch_evt: ") + std::to_string(excess[o].size()) + " " + tail_name(o) +
                                  "-tail innovation excesses (< " + std::to_string(min_events) + ")");
        }
        const GpFit g = fit_gp(excess[o], min_events);
        evt.xi[o] = g.xi;
        evt.varsigma[o] = g.sigma;
        evt.loglik[o] = g.loglik;
        evt.exceedances[o] = excess[o].size();
        evt.standard_errors[o] = g.standard_errors;
    }
    out.params.evt = evt;
    return out;
}

/// One-step forecasts from the fitted GARCH over [first, values.size()).
inline ForecastTable garch_forecast(const FittedGarch& fit, std::span<const double> values, std::size_t first,
                                    std::vector<double> coverages, const std::string& model = "garch") {
    if (first >= values.size()) throw ValidationError("forecast: out-of-sample period is empty");
    fit.params.validate();
    ForecastTable table;
    table.model = model;
    table.reset(std::move(coverages), first, values.size() - first);
    const PiecewiseDistribution eps = fit.params.innovation_distribution();
    const auto sigma = garch_sigma_path(fit.params, values, fit.sigma0_sq);
    // innovation quantiles are the same every step; only location and scale move
    const std::size_t K = table.coverages.size();
    std::array<std::vector<double>, 2> qv;
    std::array<std::vector<double>, 2> qe;
    for (Tail o : {Tail::left, Tail::right}) {
        qv[o].resize(K);
        qe[o].resize(K);
    }
    for (std::size_t k = 0; k < K; ++k) {
        const double a = table.coverages[k];
        qv[0][k] = eps.var_left(a);
        qe[0][k] = eps.es_left(a);
        qv[1][k] = eps.var_right(a);
        qe[1][k] = eps.es_right(a);
    }
    const double med = eps.median();
    for (std::size_t i = 0; i < table.steps(); ++i) {
        const std::size_t t = first + i;
        const double mu = fit.params.mu;
        const double s = sigma[t];
        table.realized[i] = values[t];
        table.median[i] = mu + s * med;
        for (Tail o : {Tail::left, Tail::right}) {
            if (fit.params.evt) table.p[o][i] = fit.params.evt->a_u;
            for (std::size_t k = 0; k < K; ++k) {
                table.var[o][k][i] = mu + s * qv[o][k];
                table.es[o][k][i] = mu + s * qe[o][k];
            }
        }
    }
    return table;
}

}  // namespace tailhawk
