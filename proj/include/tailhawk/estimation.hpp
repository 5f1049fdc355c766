#pragma once

#include "tailhawk/data.hpp"
#include "tailhawk/distributions.hpp"
#include "tailhawk/error.hpp"
#include "tailhawk/hawkes.hpp"
#include "tailhawk/optim.hpp"
#include "tailhawk/piecewise.hpp"
#include "tailhawk/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tailhawk {

/// Raised when no start produced a usable optimum; carries the best attempt.
class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, std::vector<double> best, double best_loglik)
        : std::runtime_error(what), best_(std::move(best)), best_loglik_(best_loglik) {}
    [[nodiscard]] const std::vector<double>& best() const noexcept { return best_; }
    [[nodiscard]] double best_loglik() const noexcept { return best_loglik_; }

private:
    std::vector<double> best_;
    double best_loglik_;
};

// ---------------------------------------------------------------------------
// Log-likelihood
// ---------------------------------------------------------------------------

struct LoglikParts {
    TailPair intensity{};   ///< point-process terms per tail
    TailPair magnitude{};   ///< GP mark terms per tail

    [[nodiscard]] double total() const noexcept { return intensity[0] + intensity[1] + magnitude[0] + magnitude[1]; }
};

/// Merged, time-ordered events of both tails inside [0, horizon).
struct EventStream {
    struct Event {
        std::size_t t;
        Tail tail;
        double magnitude;
    };
    std::vector<Event> events;
    std::size_t horizon = 0;

    EventStream() = default;
    EventStream(const ExceedancePair& ex, std::size_t T) : horizon(T) {
        for (const auto& [t, e] : detail::merge_events(ex, T)) events.push_back({t, e.first, e.second});
    }
};

/// How the intensity enters the log term at an event step.
///
/// An event at step t is only known to have occurred somewhere in (t-1, t].
/// step_average uses the mean intensity over that step (the per-step
/// compensator), which is the rate the discrete model actually fires at, so
/// estimates are consistent for data generated by the step probabilities.
/// point uses lambda at the left limit of t, i.e. the event is treated as
/// happening exactly on the integer time; decay rates near one per step are
/// then biased downwards.
enum class IntensityEvaluation { step_average, point };

inline const char* intensity_evaluation_name(IntensityEvaluation e) {
    return e == IntensityEvaluation::point ? "point" : "step_average";
}

inline IntensityEvaluation parse_intensity_evaluation(const std::string& s) {
    if (s == "step_average") return IntensityEvaluation::step_average;
    if (s == "point") return IntensityEvaluation::point;
    throw ValidationError("unknown intensity evaluation '" + s + "' (expected step_average or point)");
}

/// Exceedance log-likelihood, event by event in closed form.
///
/// Intensity term per tail: minus the integral of lambda_O over [0, T-1] plus
/// the log intensity at each of its events (see IntensityEvaluation). Mark
/// term: GP log-density of each excess at the contemporaneous conditional
/// scale. Returns -inf components on support violations; does not validate
/// params.
inline LoglikParts hawkes_loglik(const HawkesParams& params, const EventStream& stream,
                                 IntensityEvaluation evaluation = IntensityEvaluation::step_average) {
    const IntensityStructure st(params);
    const double mu_total = st.mu[0] + st.mu[1];
    const TailPair beta = params.beta;
    LoglikParts out;
    TailPair chi{0.0, 0.0};   // chi just after the last processed event
    double now = 0.0;
    const double end = stream.horizon > 0 ? static_cast<double>(stream.horizon - 1) : 0.0;

    auto integrate_to = [&](double until, TailPair& chi_at) {
        const double dt = until - now;
        if (dt <= 0.0) {
            chi_at = chi;
            return;
        }
        TailPair area{};
        for (Tail o : {Tail::left, Tail::right}) {
            const double decay = std::exp(-beta[o] * dt);
            area[o] = chi[o] * (-std::expm1(-beta[o] * dt)) / beta[o];
            chi_at[o] = chi[o] * decay;
        }
        for (Tail o : {Tail::left, Tail::right}) {
            out.intensity[o] -= st.mu[o] * dt + st.g[o][0] * area[0] + st.g[o][1] * area[1];
        }
    };

    for (const auto& e : stream.events) {
        TailPair chi_minus{};
        integrate_to(static_cast<double>(e.t), chi_minus);
        const Tail o = e.tail;
        const double lam_total = st.lambda(Tail::left, chi_minus) + st.lambda(Tail::right, chi_minus);
        if (evaluation == IntensityEvaluation::point) {
            out.intensity[o] += std::log(st.lambda(o, chi_minus));
        } else {
            // chi just after step t-1 is chi_minus e^beta; its mean over the step is chi_minus (e^beta - 1) / beta
            TailPair chi_mean{};
            for (Tail q : {Tail::left, Tail::right}) chi_mean[q] = chi_minus[q] * std::expm1(beta[q]) / beta[q];
            out.intensity[o] += std::log(st.lambda(o, chi_mean));
        }
        const double sigma = params.varsigma[o] + params.eta[o] * (lam_total - mu_total) / 2.0;
        const double xi = params.xi[o];
        const double z = xi * e.magnitude / sigma;
        if (!(sigma > 0.0) || !(z > -1.0)) {
            out.magnitude[o] = -kInf;
            return out;
        }
        // ln(1 + xi M / sigma) / xi is both the GP log-survival (negated) and the impact driver
        const double log_term = std::abs(xi) < kGpExponentialCutoff ? e.magnitude / sigma : std::log1p(z) / xi;
        out.magnitude[o] += -std::log(sigma) - (xi + 1.0) * log_term;
        const double kappa = (1.0 + params.alpha[o] * log_term) / (1.0 + params.alpha[o]);
        chi = chi_minus;
        chi[o] += beta[o] * kappa;
        now = static_cast<double>(e.t);
    }
    TailPair chi_end{};
    integrate_to(std::max(end, now), chi_end);
    return out;
}

inline LoglikParts hawkes_loglik(const HawkesParams& params, const ExceedancePair& exceedances, std::size_t T,
                                 IntensityEvaluation evaluation = IntensityEvaluation::step_average) {
    params.validate();
    return hawkes_loglik(params, EventStream(exceedances, T), evaluation);
}

// ---------------------------------------------------------------------------
// Parameter layouts
// ---------------------------------------------------------------------------

/// Maps between HawkesParams and the free parameter vector of one variant.
class ParamLayout {
public:
    ParamLayout(HawkesVariant variant, bool constrained, double a_u, TailPair mean_excess)
        : variant_(variant), constrained_(variant != HawkesVariant::bivariate && constrained), a_u_(a_u) {
        const double ref = std::max(mean_excess[0], mean_excess[1]);
        auto add = [&](std::string name, double lo, double hi) {
            names_.push_back(std::move(name));
            lo_.push_back(lo);
            hi_.push_back(hi);
        };
        auto pair = [&](const std::string& base, double lo, double hi) {
            if (variant_ == HawkesVariant::symmetric) {
                add(base, lo, hi);
            } else {
                add(base + "_left", lo, hi);
                add(base + "_right", lo, hi);
            }
        };
        if (variant_ == HawkesVariant::bivariate) {
            add("a_lambda_left", 1e-5, 0.5);
            add("a_lambda_right", 1e-5, 0.5);
            add("branching_left_left", 0.0, 0.999);
            add("branching_left_right", 0.0, 0.999);
            add("branching_right_left", 0.0, 0.999);
            add("branching_right_right", 0.0, 0.999);
        } else {
            if (!constrained_) add("a_lambda", 1e-5, 0.999);
            pair("gamma", 0.0, variant_ == HawkesVariant::symmetric ? kCritical : 2.0);
        }
        pair("beta", 1e-4, 20.0);
        pair("xi", -0.5, 0.99);
        pair("varsigma", 1e-10, 100.0 * ref);
        pair("eta", 0.0, 1000.0 * ref);
        pair("alpha", 0.0, 100.0);
    }

    static constexpr double kCritical = 1.0 - 1e-6;

    [[nodiscard]] HawkesVariant variant() const noexcept { return variant_; }
    [[nodiscard]] bool constrained() const noexcept { return constrained_; }
    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }

    [[nodiscard]] Problem problem() const {
        Problem p;
        p.lower = Eigen::Map<const Vector>(lo_.data(), static_cast<Eigen::Index>(lo_.size()));
        p.upper = Eigen::Map<const Vector>(hi_.data(), static_cast<Eigen::Index>(hi_.size()));
        if (variant_ == HawkesVariant::common) {
            // (gamma_L + gamma_R) / 2 <= 1 - 1e-6
            LinearConstraint c{Vector::Zero(static_cast<Eigen::Index>(size())), kCritical};
            const Eigen::Index g0 = constrained_ ? 0 : 1;
            c.a[g0] = 0.5;
            c.a[g0 + 1] = 0.5;
            p.constraints.push_back(c);
        }
        return p;
    }

    [[nodiscard]] HawkesParams unpack(const Vector& x) const {
        HawkesParams p;
        p.variant = variant_;
        p.a_u = a_u_;
        p.constrained_a_lambda = constrained_;
        Eigen::Index i = 0;
        auto pair = [&](TailPair& v) {
            v[0] = x[i++];
            v[1] = variant_ == HawkesVariant::symmetric ? v[0] : x[i++];
        };
        if (variant_ == HawkesVariant::bivariate) {
            p.a_lambda_tail = {x[0], x[1]};
            p.branching[0] = {x[2], x[3]};
            p.branching[1] = {x[4], x[5]};
            p.a_lambda = x[0] + x[1];
            i = 6;
        } else {
            p.a_lambda = constrained_ ? 2.0 * a_u_ : x[i++];
            pair(p.gamma);
        }
        pair(p.beta);
        pair(p.xi);
        pair(p.varsigma);
        pair(p.eta);
        pair(p.alpha);
        return p;
    }

    /// Inverse of unpack; `p` is first converted to this layout's variant.
    [[nodiscard]] Vector pack(const HawkesParams& in) const {
        const HawkesParams p = convert_variant(in, variant_, constrained_);
        std::vector<double> v;
        auto pair = [&](const TailPair& t) {
            v.push_back(t[0]);
            if (variant_ != HawkesVariant::symmetric) v.push_back(t[1]);
        };
        if (variant_ == HawkesVariant::bivariate) {
            v = {p.a_lambda_tail[0], p.a_lambda_tail[1], p.branching[0][0], p.branching[0][1], p.branching[1][0], p.branching[1][1]};
        } else {
            if (!constrained_) v.push_back(p.a_lambda);
            pair(p.gamma);
        }
        pair(p.beta);
        pair(p.xi);
        pair(p.varsigma);
        pair(p.eta);
        pair(p.alpha);
        Vector x = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
        return x.cwiseMax(problem().lower).cwiseMin(problem().upper);
    }

    /// Same model expressed in another variant's parametrization.
    ///
    /// Widening (symmetric -> common -> bivariate) is exact; narrowing averages
    /// the tail components, which is only used to seed starting values.
    static HawkesParams convert_variant(HawkesParams p, HawkesVariant target, bool constrained) {
        if (p.variant == HawkesVariant::bivariate && target != HawkesVariant::bivariate) {
            p.a_lambda = p.a_lambda_tail[0] + p.a_lambda_tail[1];
            p.gamma = {p.branching[0][0] + p.branching[1][0], p.branching[0][1] + p.branching[1][1]};
        }
        if (target == HawkesVariant::symmetric) {
            for (TailPair* v : {&p.gamma, &p.beta, &p.xi, &p.varsigma, &p.eta, &p.alpha}) {
                const double avg = 0.5 * ((*v)[0] + (*v)[1]);
                *v = {avg, avg};
            }
        }
        if (target == HawkesVariant::bivariate && p.variant != HawkesVariant::bivariate) {
            p.a_lambda_tail = {p.a_lambda / 2.0, p.a_lambda / 2.0};
            p.branching[0] = {p.gamma[0] / 2.0, p.gamma[1] / 2.0};
            p.branching[1] = p.branching[0];
        }
        if (target != HawkesVariant::bivariate && constrained) p.a_lambda = 2.0 * p.a_u;
        p.variant = target;
        p.constrained_a_lambda = target != HawkesVariant::bivariate && constrained;
        return p;
    }

private:
    HawkesVariant variant_;
    bool constrained_;
    double a_u_;
    std::vector<std::string> names_;
    std::vector<double> lo_;
    std::vector<double> hi_;
};

// ---------------------------------------------------------------------------
// Standard errors
// ---------------------------------------------------------------------------

/// Inverse negative finite-difference Hessian over the unpinned coordinates.
///
/// Steps h_i = 1e-4 max(|x_i|, 1e-3). Parameters within 2 h_i of a bound or on
/// an active linear constraint are pinned: their rows and columns are NaN and
/// the Hessian is taken over the remaining coordinates. A Hessian that is not
/// negative definite leaves the whole matrix undefined.
struct Covariance {
    Matrix matrix;              ///< n x n; NaN rows/columns for pinned parameters
    std::vector<bool> pinned;
    bool defined = false;

    [[nodiscard]] std::vector<std::optional<double>> standard_errors() const {
        std::vector<std::optional<double>> se(pinned.size());
        if (!defined) return se;
        for (std::size_t i = 0; i < pinned.size(); ++i) {
            const double v = matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
            if (!pinned[i] && v > 0.0) se[i] = std::sqrt(v);
        }
        return se;
    }
};

inline Vector se_steps(const Vector& x) {
    Vector h(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) h[i] = 1e-4 * std::max(std::abs(x[i]), 1e-3);
    return h;
}

inline Covariance parameter_covariance(const Objective& f, const Vector& x, const Problem& problem) {
    const Eigen::Index n = x.size();
    const Vector h = se_steps(x);
    Covariance out;
    out.matrix = Matrix::Constant(n, n, kNaN);
    out.pinned.assign(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (x[i] - problem.lower[i] < 2.0 * h[i] || problem.upper[i] - x[i] < 2.0 * h[i]) out.pinned[static_cast<std::size_t>(i)] = true;
    }
    for (const auto& c : problem.constraints) {
        const double slack = c.b - c.a.dot(x);
        if (slack < 2.0 * c.a.cwiseAbs().dot(h)) {
            for (Eigen::Index i = 0; i < n; ++i) {
                if (c.a[i] != 0.0) out.pinned[static_cast<std::size_t>(i)] = true;
            }
        }
    }
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!out.pinned[static_cast<std::size_t>(i)]) free.push_back(i);
    }
    if (free.empty()) return out;
    const auto k = static_cast<Eigen::Index>(free.size());
    Vector xs(k);
    Vector hs(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        xs[j] = x[free[j]];
        hs[j] = h[free[j]];
    }
    auto sub = [&](const Vector& y) {
        Vector full = x;
        for (Eigen::Index j = 0; j < k; ++j) full[free[j]] = y[j];
        return f(full);
    };
    const Matrix H = numeric_hessian(sub, xs, hs);
    if (!H.allFinite()) return out;
    const Matrix info = -0.5 * (H + H.transpose());
    Eigen::LLT<Matrix> llt(info);
    if (llt.info() != Eigen::Success) return out;
    const Matrix cov = llt.solve(Matrix::Identity(k, k));
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) out.matrix(free[a], free[b]) = cov(a, b);
    }
    out.defined = true;
    return out;
}

inline std::vector<std::optional<double>> standard_errors(const Objective& f, const Vector& x, const Problem& problem) {
    return parameter_covariance(f, x, problem).standard_errors();
}

// ---------------------------------------------------------------------------
// Bulk (second step)
// ---------------------------------------------------------------------------

/// Bulk family plus its fitted tail index. inverse_nu = 0 is the normal limit
/// of the Student-t, which keeps normal-vs-t comparisons exactly nested.
struct BulkFit {
    BulkFamily family = BulkFamily::student_t;
    double inverse_nu = 0.0;
    std::optional<double> nu_se;               ///< two-step SE (accounts for the estimated exceedance parameters)
    std::optional<double> nu_se_conditional;   ///< SE holding the exceedance parameters fixed
    double nu_curvature = kNaN;                ///< d^2 loglik / d nu^2 at the estimate
    double loglik = 0.0;
    std::size_t observations = 0;

    [[nodiscard]] double nu() const noexcept { return inverse_nu > 0.0 ? 1.0 / inverse_nu : kInf; }

    /// Unit-scale standardized distribution used inside the Hawkes bulk.
    [[nodiscard]] BulkDist dist() const {
        if (family == BulkFamily::normal || inverse_nu <= 0.0) return BulkDist::normal();
        return BulkDist::student_t(1.0 / inverse_nu);
    }
};

inline constexpr double kMinNu = 2.1;

/// Bulk log-likelihood over the steps marked `use`, with per-step solved location and scale.
inline double bulk_loglik(const BulkDist& dist, std::span<const double> x, std::span<const TailPair> p, const TailPair& u,
                          std::span<const char> use) {
    double ll = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (!use[t]) continue;
        const auto b = solve_bulk(p[t][0], p[t][1], u[0], u[1], dist);
        ll += dist.log_pdf((x[t] - b.m) / b.s) - std::log(b.s);
    }
    return ll;
}

/// Second-step bulk fit over in-sample non-exceedance steps.
inline BulkFit fit_bulk(BulkFamily family, std::span<const double> x, std::span<const TailPair> p, const TailPair& u,
                        std::span<const char> use) {
    BulkFit fit;
    fit.family = family;
    fit.observations = static_cast<std::size_t>(std::count(use.begin(), use.end(), 1));
    if (family == BulkFamily::normal) {
        fit.loglik = bulk_loglik(BulkDist::normal(), x, p, u, use);
        return fit;
    }
    auto ll_at = [&](double inv_nu) {
        const BulkDist d = inv_nu <= 0.0 ? BulkDist::normal() : BulkDist::student_t(1.0 / inv_nu);
        return bulk_loglik(d, x, p, u, use);
    };
    const auto [inv_nu, ll] = maximize_scalar(ll_at, 0.0, 1.0 / kMinNu, 30);
    fit.inverse_nu = inv_nu;
    fit.loglik = ll;
    if (inv_nu > 0.0 && inv_nu < 1.0 / kMinNu) {
        const double nu = 1.0 / inv_nu;
        const double h = 1e-4 * std::max(nu, 1e-3);
        if (nu - h > kMinNu) {
            auto ll_nu = [&](double v) { return ll_at(1.0 / v); };
            const double d2 = (ll_nu(nu + h) - 2.0 * ll + ll_nu(nu - h)) / (h * h);
            fit.nu_curvature = d2;
            if (d2 < 0.0) fit.nu_se = fit.nu_se_conditional = std::sqrt(-1.0 / d2);
        }
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct FitOptions {
    bool constrain_a_lambda = true;
    BulkFamily bulk = BulkFamily::student_t;
    int starts = 3;                 ///< default start plus (starts - 1) jittered copies
    std::uint64_t seed = 0;
    std::size_t min_events = 10;
    OptimOptions optim{};
    std::vector<HawkesParams> warm_starts;  ///< extra starting points (any variant)
    bool fit_bulk = true;
    IntensityEvaluation intensity = IntensityEvaluation::step_average;
};

struct OptimizerReport {
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
    double constraint_violation = 0.0;
    int starts = 0;
    int best_start = -1;
    std::vector<double> trace;
};

struct FittedHawkes {
    HawkesParams params;
    std::size_t in_sample_length = 0;
    double u_left = 0.0;
    double u_right = 0.0;
    IntensityEvaluation intensity = IntensityEvaluation::step_average;
    LoglikParts parts;
    double loglik_exceedance = 0.0;
    BulkFamily bulk_family = BulkFamily::student_t;
    BulkFit bulk_normal;
    BulkFit bulk_student_t;
    std::vector<std::string> names;
    std::vector<double> estimates;
    std::vector<std::optional<double>> standard_errors;
    OptimizerReport report;

    [[nodiscard]] const BulkFit& bulk() const noexcept {
        return bulk_family == BulkFamily::normal ? bulk_normal : bulk_student_t;
    }
    [[nodiscard]] double loglik_bulk() const noexcept { return bulk().loglik; }
    [[nodiscard]] std::size_t free_parameters() const noexcept { return names.size(); }
};

/// Default starting values: a_lambda = 2 a_u, gamma = 0.5, beta = 0.1,
/// xi = 0.1, varsigma = per-tail mean excess, eta = 0, alpha = 1.
inline HawkesParams default_start(HawkesVariant variant, double a_u, const TailPair& mean_excess) {
    HawkesParams p;
    p.variant = HawkesVariant::common;
    p.a_u = a_u;
    p.a_lambda = 2.0 * a_u;
    p.gamma = {0.5, 0.5};
    p.beta = {0.1, 0.1};
    p.xi = {0.1, 0.1};
    p.varsigma = mean_excess;
    p.eta = {0.0, 0.0};
    p.alpha = {1.0, 1.0};
    return ParamLayout::convert_variant(p, variant, false);
}

inline TailPair mean_excess(const ExceedancePair& ex) {
    TailPair m{};
    for (Tail o : {Tail::left, Tail::right}) {
        const auto& ev = ex.events(o);
        double s = 0.0;
        for (const auto& e : ev) s += e.magnitude;
        m[o] = ev.empty() ? 1e-3 : s / static_cast<double>(ev.size());
    }
    return m;
}

namespace detail {

/// Multiplicative jitter for positive parameters, additive for shapes; result kept feasible.
inline Vector jitter_start(const Vector& x0, const ParamLayout& layout, SplitMix64& rng) {
    const Problem pr = layout.problem();
    Vector x = x0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const std::string& name = layout.names()[static_cast<std::size_t>(i)];
        const double z = rng.normal();
        if (name.rfind("xi", 0) == 0) {
            x[i] += 0.1 * z;
        } else if (x[i] > 0.0) {
            x[i] *= std::exp(0.3 * z);
        } else if (name.rfind("eta", 0) == 0) {
            x[i] = 0.05 * std::abs(z) * pr.upper[i] / 1000.0;
        }
        const double span = pr.upper[i] - pr.lower[i];
        x[i] = std::clamp(x[i], pr.lower[i] + 1e-3 * span, pr.upper[i] - 1e-3 * span);
    }
    for (const auto& c : pr.constraints) {
        const double lhs = c.a.dot(x);
        if (lhs > 0.9 * c.b) {
            const double shrink = 0.9 * c.b / lhs;
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                if (c.a[i] != 0.0) x[i] *= shrink;
            }
        }
    }
    return x;
}

}  // namespace detail

/// Bulk fits (both families) for fitted exceedance parameters.
inline void attach_bulk(FittedHawkes& fit, std::span<const double> in_sample, const ExceedancePair& ex) {
    const std::size_t T = in_sample.size();
    const IntensityPath path = evolve_path(fit.params, ex, T);
    std::vector<char> use(T, 1);
    for (Tail o : {Tail::left, Tail::right}) {
        for (const auto& e : ex.events(o)) {
            if (e.t < T) use[e.t] = 0;
        }
    }
    const TailPair u{ex.u_left, ex.u_right};
    fit.bulk_normal = fit_bulk(BulkFamily::normal, in_sample, path.p, u, use);
    fit.bulk_student_t = fit_bulk(BulkFamily::student_t, in_sample, path.p, u, use);
}

/// Two-step standard error of nu: the conditional variance plus the
/// propagated variance of the exceedance estimates,
/// Var = -1/H_nn + d' C d with d = -H_n,theta / H_nn.
/// The exceedance and bulk log-likelihoods are separate factors of one joint
/// likelihood, so their scores are uncorrelated and no cross term appears.
inline std::optional<double> two_step_nu_se(const BulkFit& bulk, const ParamLayout& layout, const Vector& x, const Covariance& cov,
                                            std::span<const double> in_sample, const ExceedancePair& ex) {
    if (!bulk.nu_se_conditional || !cov.defined || !(bulk.inverse_nu > 0.0)) return std::nullopt;
    const std::size_t T = in_sample.size();
    std::vector<char> use(T, 1);
    for (Tail o : {Tail::left, Tail::right}) {
        for (const auto& e : ex.events(o)) {
            if (e.t < T) use[e.t] = 0;
        }
    }
    const TailPair u{ex.u_left, ex.u_right};
    const double nu = bulk.nu();
    const double hn = 1e-4 * nu;
    // d loglik / d nu with the exceedance parameters at y
    auto score = [&](const Vector& y) {
        const HawkesParams p = layout.unpack(y);
        const IntensityPath path = evolve_path(p, ex, T);
        const double up = bulk_loglik(BulkDist::student_t(nu + hn), in_sample, path.p, u, use);
        const double down = bulk_loglik(BulkDist::student_t(nu - hn), in_sample, path.p, u, use);
        return (up - down) / (2.0 * hn);
    };
    const Vector h = se_steps(x);
    Vector d = Vector::Zero(x.size());
    try {
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            if (cov.pinned[static_cast<std::size_t>(j)]) continue;
            Vector yp = x;
            Vector ym = x;
            yp[j] += h[j];
            ym[j] -= h[j];
            d[j] = -((score(yp) - score(ym)) / (2.0 * h[j])) / bulk.nu_curvature;
        }
    } catch (const std::exception&) {
        return std::nullopt;
    }
    double var = *bulk.nu_se_conditional * *bulk.nu_se_conditional;
    for (Eigen::Index a = 0; a < x.size(); ++a) {
        for (Eigen::Index b = 0; b < x.size(); ++b) {
            if (d[a] != 0.0 && d[b] != 0.0) var += d[a] * cov.matrix(a, b) * d[b];
        }
    }
    if (!(var > 0.0) || !std::isfinite(var)) return std::nullopt;
    return std::sqrt(var);
}

/// Constrained maximum-likelihood fit of one Hawkes variant on [0, in_sample_length).
///
/// The exceedance parameters are estimated first; the bulk is fitted in a
/// second step. Deterministic given the options (including the seed).
inline FittedHawkes fit_hawkes(std::span<const double> values, const ExceedancePair& exceedances, std::size_t in_sample_length,
                               HawkesVariant variant, const FitOptions& options = {}) {
    if (in_sample_length == 0 || in_sample_length > values.size()) throw ValidationError("fit_hawkes: bad in-sample length");
    const ExceedancePair ex = exceedances.truncated(in_sample_length);
    for (Tail o : {Tail::left, Tail::right}) {
        if (ex.events(o).size() < options.min_events) {
            throw ValidationError(std::string("fit_hawkes: ") + std::to_string(ex.events(o).size()) + " in-sample " + tail_name(o) +
                                  "-tail events (< " + std::to_string(options.min_events) + ")");
        }
    }
    const TailPair excess = mean_excess(ex);
    const ParamLayout layout(variant, options.constrain_a_lambda, ex.a_u, excess);
    const Problem problem = layout.problem();
    const EventStream stream(ex, in_sample_length);
    const Objective objective = [&](const Vector& x) {
        const HawkesParams p = layout.unpack(x);
        if (p.problem() != nullptr) return -kInf;
        const double ll = hawkes_loglik(p, stream, options.intensity).total();
        return std::isfinite(ll) ? ll : -kInf;
    };

    std::vector<Vector> starts;
    for (const auto& w : options.warm_starts) {
        HawkesParams ws = w;
        ws.a_u = ex.a_u;
        starts.push_back(layout.pack(ws));
    }
    const Vector base = layout.pack(default_start(variant, ex.a_u, excess));
    starts.push_back(base);
    SplitMix64 rng(derive_seed(options.seed, std::string("fit/") + variant_name(variant)));
    for (int s = 1; s < options.starts; ++s) starts.push_back(detail::jitter_start(base, layout, rng));

    OptimResult best;
    int best_index = -1;
    int total_evals = 0;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        if (problem.violation(starts[s]) > 0.0 || !std::isfinite(objective(starts[s]))) continue;
        OptimResult r = maximize(objective, starts[s], problem, options.optim);
        total_evals += r.evaluations;
        if (std::isfinite(r.f) && (best_index < 0 || r.f > best.f)) {
            best = std::move(r);
            best_index = static_cast<int>(s);
        }
    }
    if (best_index < 0) throw FitError("fit_hawkes: no admissible start", {}, -kInf);

    FittedHawkes fit;
    fit.params = layout.unpack(best.x);
    fit.in_sample_length = in_sample_length;
    fit.u_left = ex.u_left;
    fit.u_right = ex.u_right;
    fit.intensity = options.intensity;
    fit.parts = hawkes_loglik(fit.params, stream, options.intensity);
    fit.loglik_exceedance = fit.parts.total();
    fit.bulk_family = options.bulk;
    fit.names = layout.names();
    fit.estimates.assign(best.x.data(), best.x.data() + best.x.size());
    const Covariance cov = parameter_covariance(objective, best.x, problem);
    fit.standard_errors = cov.standard_errors();
    fit.report = {best.iterations, total_evals,  best.converged,        best.message,
                  best.constraint_violation,     static_cast<int>(starts.size()), best_index, best.trace};
    if (options.fit_bulk) {
        const auto in_sample = values.first(in_sample_length);
        attach_bulk(fit, in_sample, ex);
        fit.bulk_student_t.nu_se = two_step_nu_se(fit.bulk_student_t, layout, best.x, cov, in_sample, ex);
    }
    return fit;
}

inline FittedHawkes fit_hawkes(const ReturnSeries& series, double a_u, HawkesVariant variant, const FitOptions& options = {}) {
    const ExceedancePair ex = extract_exceedances(series, a_u, options.min_events);
    return fit_hawkes(series.values, ex, series.split_index, variant, options);
}

/// Hawkes parameter standard errors at `params` (free parameters of its variant).
inline std::vector<std::optional<double>> hawkes_standard_errors(const HawkesParams& params, const ExceedancePair& exceedances,
                                                                  std::size_t T,
                                                                  IntensityEvaluation evaluation = IntensityEvaluation::step_average) {
    const ExceedancePair ex = exceedances.truncated(T);
    const ParamLayout layout(params.variant, params.constrained_a_lambda, params.a_u, mean_excess(ex));
    const EventStream stream(ex, T);
    const Objective objective = [&](const Vector& x) {
        const HawkesParams p = layout.unpack(x);
        if (p.problem() != nullptr) return -kInf;
        const double ll = hawkes_loglik(p, stream, evaluation).total();
        return std::isfinite(ll) ? ll : -kInf;
    };
    return standard_errors(objective, layout.pack(params), layout.problem());
}

// ---------------------------------------------------------------------------
// Model selection
// ---------------------------------------------------------------------------

/// p = 1 - Chi2_df(2 (ll_alt - ll_null)).
inline double likelihood_ratio_test(double ll_null, double ll_alt, int df) {
    if (df < 1) throw ValidationError("likelihood_ratio_test: df must be >= 1");
    if (!std::isfinite(ll_null) || !std::isfinite(ll_alt)) throw ValidationError("likelihood_ratio_test: non-finite log-likelihood");
    if (ll_alt < ll_null - 1e-6) {
        throw ValidationError("likelihood_ratio_test: alternative log-likelihood below null (broken nesting)");
    }
    const double stat = std::max(0.0, 2.0 * (ll_alt - ll_null));
    if (stat == 0.0) return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), stat));
}

}  // namespace tailhawk
