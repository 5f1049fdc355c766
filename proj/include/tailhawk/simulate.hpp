#pragma once

#include "tailhawk/data.hpp"
#include "tailhawk/distributions.hpp"
#include "tailhawk/error.hpp"
#include "tailhawk/forecast.hpp"
#include "tailhawk/garch.hpp"
#include "tailhawk/hawkes.hpp"
#include "tailhawk/piecewise.hpp"
#include "tailhawk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace tailhawk {

inline constexpr double kExcitementOverflow = 1e8;
inline constexpr long kSimulationEpochDays = 10957;  // 2000-01-01

namespace detail {

inline ReturnSeries synthetic_series(std::vector<double> values, std::size_t in_sample) {
    ReturnSeries s;
    s.values = std::move(values);
    s.timestamps.reserve(s.values.size());
    for (std::size_t i = 0; i < s.values.size(); ++i) s.timestamps.push_back(iso_date_from_days(kSimulationEpochDays + static_cast<long>(i)));
    s.split_index = in_sample == 0 ? s.size() : std::min(in_sample, s.size());
    return s;
}

}  // namespace detail

struct HawkesSimConfig {
    HawkesParams params;
    BulkDist bulk = BulkDist::student_t(6.0);   ///< unit-scale standardized bulk
    double u_left = -0.02;
    double u_right = 0.02;
    std::size_t horizon = 10000;
    std::size_t burn_in = 1000;
    std::size_t in_sample = 0;                  ///< split index of the returned series (0 = all in-sample)
    std::uint64_t seed = 0;
};

struct HawkesSimulation {
    ReturnSeries series;
    ExceedancePair events;      ///< true events (thresholds of the config)
    IntensityPath path;         ///< true per-step quantities
};

/// Simulates the two-tailed exceedance model with its subordinate bulk.
///
/// Each step draws one uniform U and inverts the conditional distribution
/// of X: U < p_left gives a left-tail excess, U > 1 - p_right a right-tail
/// excess, anything else a bulk value. For the common-intensity variant this
/// is an event with probability 1 - exp(-compensator) whose tail is a fair
/// coin, with GP excesses at the conditional scale.
inline HawkesSimulation simulate_2tpot(const HawkesSimConfig& cfg) {
    cfg.params.validate();
    if (!(cfg.u_left < cfg.u_right)) throw ValidationError("simulate: thresholds out of order");
    if (cfg.horizon == 0) throw ValidationError("simulate: horizon must be positive");
    HawkesEngine engine(cfg.params);
    SplitMix64 rng(cfg.seed);
    HawkesSimulation out;
    out.events.a_u = cfg.params.a_u;
    out.events.u_left = cfg.u_left;
    out.events.u_right = cfg.u_right;
    std::vector<double> values;
    values.reserve(cfg.horizon);
    const std::size_t total = cfg.burn_in + cfg.horizon;
    const auto& p = cfg.params;
    for (std::size_t step = 0; step < total; ++step) {
        const StepQuantities q = engine.current();
        if (!(q.chi[0] < kExcitementOverflow && q.chi[1] < kExcitementOverflow)) {
            throw ParameterError("simulate: excitement overflow at step " + std::to_string(step) + " (chi = " + std::to_string(q.chi[0]) +
                                 ", " + std::to_string(q.chi[1]) + "); parameters are effectively explosive");
        }
        const double U = rng.uniform();
        double x = 0.0;
        std::optional<std::pair<Tail, double>> event;
        if (U < q.p[0]) {
            const double m = gp_excess_at_survival(p.xi[0], q.sigma[0], U / q.p[0]);
            x = cfg.u_left - m;
            // the mark is the excess as realized in the emitted return, so extraction on the series reproduces it exactly
            if (-(x - cfg.u_left) > 0.0) event = std::pair{Tail::left, -(x - cfg.u_left)};
        } else if (U > 1.0 - q.p[1]) {
            const double m = gp_excess_at_survival(p.xi[1], q.sigma[1], (1.0 - U) / q.p[1]);
            x = cfg.u_right + m;
            if (x - cfg.u_right > 0.0) event = std::pair{Tail::right, x - cfg.u_right};
        } else {
            const auto b = solve_bulk(q.p[0], q.p[1], cfg.u_left, cfg.u_right, cfg.bulk);
            x = std::clamp(b.m + b.s * cfg.bulk.quantile(U), cfg.u_left, cfg.u_right);
        }
        if (step >= cfg.burn_in) {
            const std::size_t t = step - cfg.burn_in;
            values.push_back(x);
            out.path.lambda_common.push_back(q.lambda_common);
            out.path.chi.push_back(q.chi);
            out.path.sigma.push_back(q.sigma);
            out.path.p.push_back(q.p);
            out.path.compensator.push_back(q.compensator);
            if (event) (event->first == Tail::left ? out.events.left : out.events.right).push_back({t, event->second});
        }
        engine.advance(event);
    }
    out.path.terminal = engine.state();
    out.series = detail::synthetic_series(std::move(values), cfg.in_sample);
    return out;
}

struct GarchSimConfig {
    GarchParams params;
    std::size_t horizon = 10000;
    std::size_t burn_in = 1000;
    std::size_t in_sample = 0;
    std::uint64_t seed = 0;
};

/// Simulates X_t = mu + sigma_t eps_t with innovations drawn by inverting the
/// (possibly GP-tailed) standardized innovation distribution. The recursion
/// starts at the unconditional variance.
inline ReturnSeries simulate_garch(const GarchSimConfig& cfg) {
    cfg.params.validate();
    if (cfg.horizon == 0) throw ValidationError("simulate: horizon must be positive");
    const auto& p = cfg.params;
    const PiecewiseDistribution eps = p.innovation_distribution();
    SplitMix64 rng(cfg.seed);
    double var = p.omega / (1.0 - p.persistence());
    std::vector<double> values;
    values.reserve(cfg.horizon);
    double prev = p.mu;
    for (std::size_t step = 0; step < cfg.burn_in + cfg.horizon; ++step) {
        if (step > 0) {
            const double e = prev - p.mu;
            var = p.omega + (p.alpha + (e < 0.0 ? p.gamma : 0.0)) * e * e + p.beta * var;
        }
        if (!(var < 1e300)) throw ParameterError("simulate: variance overflow at step " + std::to_string(step));
        const double x = p.mu + std::sqrt(var) * eps.var_left(rng.uniform());
        if (step >= cfg.burn_in) values.push_back(x);
        prev = x;
    }
    return detail::synthetic_series(std::move(values), cfg.in_sample);
}

}  // namespace tailhawk
