#pragma once

#include "tailhawk/data.hpp"
#include "tailhawk/distributions.hpp"
#include "tailhawk/error.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tailhawk {

/// H1 (all tail components equal), H2 (common intensity), H2bi (one intensity per tail).
enum class HawkesVariant { symmetric, common, bivariate };

inline const char* variant_name(HawkesVariant v) {
    switch (v) {
        case HawkesVariant::symmetric: return "symmetric";
        case HawkesVariant::common: return "common";
        case HawkesVariant::bivariate: return "bivariate";
    }
    return "?";
}

inline HawkesVariant parse_variant(const std::string& s) {
    if (s == "symmetric" || s == "H1") return HawkesVariant::symmetric;
    if (s == "common" || s == "H2") return HawkesVariant::common;
    if (s == "bivariate" || s == "H2bi") return HawkesVariant::bivariate;
    throw ValidationError("unknown Hawkes variant '" + s + "'");
}

using BranchingMatrix = std::array<TailPair, 2>;  ///< [target tail][source tail]

/// Parameters of the two-tailed exceedance model.
///
/// Common/symmetric variants: the common intensity is
///   lambda_A = mu_A + gamma_L chi_L + gamma_R chi_R
/// with each arrival assigned to either tail with probability 1/2. The
/// bivariate variant carries a per-tail average intensity and a full 2x2
/// branching matrix instead of (a_lambda, gamma).
struct HawkesParams {
    HawkesVariant variant = HawkesVariant::common;
    double a_lambda = 0.05;           ///< expected common intensity E[lambda_A], events per step
    TailPair gamma{0.5, 0.5};         ///< mean daughters (common process) per mother of each tail
    TailPair a_lambda_tail{0.025, 0.025};  ///< bivariate only: E[lambda_O]
    BranchingMatrix branching{};      ///< bivariate only
    TailPair beta{0.1, 0.1};          ///< decay rates, per step
    TailPair xi{0.1, 0.1};            ///< GP shapes
    TailPair varsigma{0.01, 0.01};    ///< GP base scales
    TailPair eta{0.0, 0.0};           ///< scale coupling to endogenous intensity
    TailPair alpha{1.0, 1.0};         ///< marks
    double a_u = 0.025;
    bool constrained_a_lambda = false;

    /// Spectral radius of the effective per-tail branching matrix.
    [[nodiscard]] double branching_ratio() const {
        if (variant != HawkesVariant::bivariate) return 0.5 * (gamma[0] + gamma[1]);
        const auto& g = branching;
        const double tr = g[0][0] + g[1][1];
        const double det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        const double disc = std::max(0.0, 0.25 * tr * tr - det);
        return 0.5 * tr + std::sqrt(disc);
    }

    /// First violated invariant, or nullptr when the parameters are admissible.
    [[nodiscard]] const char* problem() const noexcept {
        for (Tail o : {Tail::left, Tail::right}) {
            if (!(beta[o] > 0.0)) return "decay rates must be positive";
            if (!(varsigma[o] > 0.0)) return "GP base scales must be positive";
            if (!(eta[o] >= 0.0)) return "scale coupling must be non-negative";
            if (!(alpha[o] >= 0.0)) return "mark parameters must be non-negative";
            if (!(xi[o] < 1.0)) return "GP shapes must be < 1";
        }
        if (variant == HawkesVariant::bivariate) {
            for (const auto& row : branching) {
                for (double g : row) {
                    if (!(g >= 0.0)) return "branching entries must be non-negative";
                }
            }
            for (double a : a_lambda_tail) {
                if (!(a > 0.0)) return "average intensities must be positive";
            }
        } else {
            if (!(gamma[0] >= 0.0 && gamma[1] >= 0.0)) return "branching vector must be non-negative";
            if (!(a_lambda > 0.0)) return "average intensity must be positive";
            if (variant == HawkesVariant::symmetric) {
                for (const TailPair* v : {&gamma, &beta, &xi, &varsigma, &eta, &alpha}) {
                    if ((*v)[0] != (*v)[1]) return "symmetric variant requires equal tail components";
                }
            }
            if (constrained_a_lambda && std::abs(a_lambda - 2.0 * a_u) > 1e-12 * std::max(1.0, a_lambda)) {
                return "constrained average intensity must equal 2 a_u";
            }
        }
        if (!(branching_ratio() < 1.0)) return "branching ratio must be < 1 (explosive process)";
        if (variant == HawkesVariant::bivariate) {
            const auto& g = branching;
            for (Tail o : {Tail::left, Tail::right}) {
                const double mu = a_lambda_tail[o] - g[o][0] * a_lambda_tail[0] - g[o][1] * a_lambda_tail[1];
                if (!(mu > 0.0)) return "implied background intensity must be positive";
            }
        }
        return nullptr;
    }

    /// Throws ParameterError when an invariant does not hold.
    void validate() const {
        if (const char* why = problem()) throw ParameterError(std::string("Hawkes parameters: ") + why);
    }
};

/// Constant background intensity mu_A of the common process.
///
/// From the stationarity relation mu = (I - Gamma) a_lambda with equal tail
/// averages a_lambda / 2 and Gamma rows gamma / 2:
///   mu_A = a_lambda (2 - gamma_L - gamma_R) / 2.
/// For the bivariate variant this returns mu_L + mu_R. The critical boundary
/// (ratio exactly 1) gives mu_A = 0; beyond it the process is explosive.
inline double background_intensity(const HawkesParams& params) {
    if (!(params.branching_ratio() <= 1.0)) throw ParameterError("branching ratio must not exceed 1 (explosive process)");
    if (params.variant != HawkesVariant::bivariate) {
        return params.a_lambda * (2.0 - (params.gamma[0] + params.gamma[1])) / 2.0;
    }
    const auto& g = params.branching;
    const auto& a = params.a_lambda_tail;
    return (a[0] - g[0][0] * a[0] - g[0][1] * a[1]) + (a[1] - g[1][0] * a[0] - g[1][1] * a[1]);
}

/// Exponential decay kernel beta exp(-beta dt); unit integral over [0, inf).
inline double decay_kernel(double beta, double dt) noexcept { return beta * std::exp(-beta * dt); }

/// Mark impact (1 - alpha ln(1 - F)) / (1 + alpha); unit mean for F ~ U(0, 1).
inline double impact(double alpha, double f) {
    if (!(f >= 0.0 && f < 1.0)) throw ParameterError("impact: cdf value must lie in [0, 1)");
    return (1.0 - alpha * std::log1p(-f)) / (1.0 + alpha);
}

/// Conditional GP scales sigma_O = varsigma_O + eta_O (lambda_A - mu_A) / 2.
inline TailPair conditional_scale(const HawkesParams& params, double lambda_common) {
    const double excess = lambda_common - background_intensity(params);
    return {params.varsigma[0] + params.eta[0] * excess / 2.0, params.varsigma[1] + params.eta[1] * excess / 2.0};
}

/// Per-tail linear intensity structure lambda_O = mu_O + sum_O' G[O][O'] chi_O'.
///
/// Common and symmetric variants map to mu_O = mu_A / 2 and G[O][O'] =
/// gamma_O' / 2, which makes every variant a special case of the bivariate
/// form with identical likelihood.
struct IntensityStructure {
    TailPair mu{};
    BranchingMatrix g{};
    bool common = true;

    explicit IntensityStructure(const HawkesParams& p) : common(p.variant != HawkesVariant::bivariate) {
        if (common) {
            const double mu_a = p.a_lambda * (2.0 - (p.gamma[0] + p.gamma[1])) / 2.0;
            mu = {mu_a / 2.0, mu_a / 2.0};
            g[0] = {p.gamma[0] / 2.0, p.gamma[1] / 2.0};
            g[1] = g[0];
        } else {
            g = p.branching;
            const auto& a = p.a_lambda_tail;
            mu = {a[0] - g[0][0] * a[0] - g[0][1] * a[1], a[1] - g[1][0] * a[0] - g[1][1] * a[1]};
        }
    }

    [[nodiscard]] double lambda(Tail o, const TailPair& chi) const noexcept { return mu[o] + g[o][0] * chi[0] + g[o][1] * chi[1]; }
};

/// Excitement at the left limit of `step` (events at `step` not yet applied).
struct ExcitementState {
    TailPair chi{0.0, 0.0};
    std::int64_t step = 0;
};

/// Model quantities for one step, conditional on events strictly before it.
struct StepQuantities {
    double lambda_common = 0.0;     ///< lambda_A at the step's left limit (pre-event)
    TailPair lambda_tail{};         ///< per-tail intensities
    TailPair chi{};
    TailPair sigma{};               ///< conditional GP scales
    TailPair p{};                   ///< exceedance probabilities
    TailPair compensator{};         ///< per-tail integral of the intensity over (t-1, t]
};

/// Markov recursion of the excitement vector on integer steps.
///
/// An event at step t jumps chi_O by beta_O kappa immediately after t, so it
/// influences the intensity only on (t, inf). Between steps chi decays by
/// exp(-beta_O).
class HawkesEngine {
public:
    explicit HawkesEngine(const HawkesParams& params)
        : params_(params), structure_(params), decay_{std::exp(-params.beta[0]), std::exp(-params.beta[1])} {
        for (Tail o : {Tail::left, Tail::right}) step_integral_[o] = -std::expm1(-params.beta[o]) / params.beta[o];
    }

    [[nodiscard]] const HawkesParams& params() const noexcept { return params_; }
    [[nodiscard]] const IntensityStructure& structure() const noexcept { return structure_; }

    [[nodiscard]] ExcitementState state() const noexcept {
        return {{chi_after_prev_[0] * decay_[0], chi_after_prev_[1] * decay_[1]}, step_};
    }

    [[nodiscard]] StepQuantities current() const {
        StepQuantities q;
        q.chi = {chi_after_prev_[0] * decay_[0], chi_after_prev_[1] * decay_[1]};
        const TailPair chi_integral{chi_after_prev_[0] * step_integral_[0], chi_after_prev_[1] * step_integral_[1]};
        for (Tail o : {Tail::left, Tail::right}) {
            q.lambda_tail[o] = structure_.lambda(o, q.chi);
            q.compensator[o] = structure_.lambda(o, chi_integral);
        }
        q.lambda_common = q.lambda_tail[0] + q.lambda_tail[1];
        const double endogenous = q.lambda_common - structure_.mu[0] - structure_.mu[1];
        for (Tail o : {Tail::left, Tail::right}) q.sigma[o] = params_.varsigma[o] + params_.eta[o] * endogenous / 2.0;
        if (structure_.common) {
            const double p_any = -std::expm1(-(q.compensator[0] + q.compensator[1]));
            q.p = {0.5 * p_any, 0.5 * p_any};
        } else {
            q.p = {-std::expm1(-q.compensator[0]), -std::expm1(-q.compensator[1])};
        }
        return q;
    }

    /// Impact of an event of `tail` with excess `magnitude` at the current step.
    ///
    /// Uses -ln(1 - F) directly; an excess beyond a bounded (xi < 0) support,
    /// which only a mis-specified out-of-sample event can produce, is capped
    /// instead of yielding an infinite jump.
    [[nodiscard]] double event_impact(Tail tail, double magnitude, const StepQuantities& q) const {
        if (!(magnitude >= 0.0)) throw ParameterError("event excess must be non-negative");
        const double xi = params_.xi[tail];
        const double sigma = q.sigma[tail];
        double neg_log_surv = kMaxNegLogSurvival;
        if (std::abs(xi) < kGpExponentialCutoff) {
            neg_log_surv = magnitude / sigma;
        } else if (const double z = xi * magnitude / sigma; z > -1.0) {
            neg_log_surv = std::log1p(z) / xi;
        }
        neg_log_surv = std::min(neg_log_surv, kMaxNegLogSurvival);
        const double alpha = params_.alpha[tail];
        return (1.0 + alpha * neg_log_surv) / (1.0 + alpha);
    }

    static constexpr double kMaxNegLogSurvival = 700.0;

    /// Applies an optional event at the current step and moves to the next one.
    void advance(std::optional<std::pair<Tail, double>> event = std::nullopt) {
        TailPair chi{chi_after_prev_[0] * decay_[0], chi_after_prev_[1] * decay_[1]};
        if (event) {
            const auto q = current();
            chi[event->first] += params_.beta[event->first] * event_impact(event->first, event->second, q);
        }
        chi_after_prev_ = chi;
        ++step_;
    }

    /// Applies a precomputed impact kappa for `tail` and moves to the next step.
    void advance_with_impact(Tail tail, double kappa) {
        TailPair chi{chi_after_prev_[0] * decay_[0], chi_after_prev_[1] * decay_[1]};
        chi[tail] += params_.beta[tail] * kappa;
        chi_after_prev_ = chi;
        ++step_;
    }

private:
    HawkesParams params_;
    IntensityStructure structure_;
    TailPair decay_;
    TailPair step_integral_{};
    TailPair chi_after_prev_{0.0, 0.0};
    std::int64_t step_ = 0;
};

/// Per-step intensity path.
struct IntensityPath {
    std::vector<double> lambda_common;
    std::vector<TailPair> chi;
    std::vector<TailPair> sigma;
    std::vector<TailPair> p;
    std::vector<TailPair> compensator;
    ExcitementState terminal;   ///< state at the left limit of step `horizon`

    [[nodiscard]] std::size_t size() const noexcept { return lambda_common.size(); }
};

namespace detail {

/// Events of both tails merged by arrival; `horizon` bounds the indices.
inline std::vector<std::pair<std::size_t, std::pair<Tail, double>>> merge_events(const ExceedancePair& ex, std::size_t horizon) {
    std::vector<std::pair<std::size_t, std::pair<Tail, double>>> merged;
    merged.reserve(ex.left.size() + ex.right.size());
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < ex.left.size() || j < ex.right.size()) {
        const bool take_left = j >= ex.right.size() || (i < ex.left.size() && ex.left[i].t < ex.right[j].t);
        const auto& e = take_left ? ex.left[i++] : ex.right[j++];
        if (e.t >= horizon) continue;
        if (!merged.empty() && merged.back().first >= e.t) {
            throw ValidationError("exceedance events must be strictly increasing with no index in both tails");
        }
        merged.push_back({e.t, {take_left ? Tail::left : Tail::right, e.magnitude}});
    }
    return merged;
}

}  // namespace detail

/// Runs the state recursion over steps [0, horizon).
///
/// Events at or beyond `horizon` are ignored. Throws ParameterError on
/// non-finite intermediate values.
inline IntensityPath evolve_path(const HawkesParams& params, const ExceedancePair& exceedances, std::size_t horizon) {
    params.validate();
    const auto events = detail::merge_events(exceedances, horizon);
    HawkesEngine engine(params);
    IntensityPath path;
    path.lambda_common.reserve(horizon);
    path.chi.reserve(horizon);
    path.sigma.reserve(horizon);
    path.p.reserve(horizon);
    path.compensator.reserve(horizon);
    std::size_t next = 0;
    for (std::size_t t = 0; t < horizon; ++t) {
        const auto q = engine.current();
        if (!std::isfinite(q.lambda_common)) throw ParameterError("evolve_path: non-finite intensity");
        path.lambda_common.push_back(q.lambda_common);
        path.chi.push_back(q.chi);
        path.sigma.push_back(q.sigma);
        path.p.push_back(q.p);
        path.compensator.push_back(q.compensator);
        if (next < events.size() && events[next].first == t) {
            engine.advance(events[next].second);
            ++next;
        } else {
            engine.advance();
        }
    }
    path.terminal = engine.state();
    return path;
}

}  // namespace tailhawk
