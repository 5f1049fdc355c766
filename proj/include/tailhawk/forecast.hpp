#pragma once

#include "tailhawk/data.hpp"
#include "tailhawk/estimation.hpp"
#include "tailhawk/hawkes.hpp"
#include "tailhawk/piecewise.hpp"

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace tailhawk {

/// Default coverage grid a_q = 0.0025 k, k = 1..60.
inline std::vector<double> default_coverages() {
    std::vector<double> g;
    for (int k = 1; k <= 60; ++k) g.push_back(0.0025 * k);
    return g;
}

/// Default threshold grid a_u = 0.0125 k, k = 1..20.
inline std::vector<double> default_thresholds() {
    std::vector<double> g;
    for (int k = 1; k <= 20; ++k) g.push_back(0.0125 * k);
    return g;
}

/// One-step-ahead VaR/ES per step, tail and coverage.
///
/// var[tail][k][i] is the forecast for coverage coverages[k] at series index
/// start + i. Left-tail VaR is the a_q-quantile and right-tail VaR the
/// (1 - a_q)-quantile.
struct ForecastTable {
    std::string model;
    std::vector<double> coverages;
    std::size_t start = 0;
    std::vector<double> realized;
    std::vector<double> median;
    std::array<std::vector<double>, 2> p;   ///< exceedance probability per step (NaN when the model has none)
    std::array<std::vector<std::vector<double>>, 2> var;
    std::array<std::vector<std::vector<double>>, 2> es;

    [[nodiscard]] std::size_t steps() const noexcept { return realized.size(); }

    void reset(std::vector<double> grid, std::size_t first, std::size_t n) {
        if (grid.empty()) throw ValidationError("forecast: coverage grid is empty");
        for (std::size_t k = 0; k < grid.size(); ++k) {
            if (!(grid[k] > 0.0 && grid[k] < 1.0)) throw ValidationError("forecast: coverage levels must lie in (0, 1)");
            if (k > 0 && !(grid[k] > grid[k - 1])) throw ValidationError("forecast: coverage grid must be strictly increasing");
        }
        coverages = std::move(grid);
        start = first;
        realized.assign(n, 0.0);
        median.assign(n, 0.0);
        for (Tail o : {Tail::left, Tail::right}) {
            p[o].assign(n, kNaN);
            var[o].assign(coverages.size(), std::vector<double>(n, 0.0));
            es[o].assign(coverages.size(), std::vector<double>(n, 0.0));
        }
    }

    [[nodiscard]] bool violation(Tail tail, std::size_t k, std::size_t i) const {
        return tail == Tail::left ? realized[i] < var[tail][k][i] : realized[i] > var[tail][k][i];
    }

    [[nodiscard]] std::vector<int> violations(Tail tail, std::size_t k) const {
        std::vector<int> v(steps());
        for (std::size_t i = 0; i < steps(); ++i) v[i] = violation(tail, k, i) ? 1 : 0;
        return v;
    }

    /// Fills row i from a full-support conditional distribution of X.
    void fill(std::size_t i, double x, const PiecewiseDistribution& d, double shift = 0.0, double scale = 1.0) {
        realized[i] = x;
        median[i] = shift + scale * d.median();
        for (std::size_t k = 0; k < coverages.size(); ++k) {
            const double a = coverages[k];
            const auto lo = d.risk_left(a);
            const auto hi = d.risk_right(a);
            var[Tail::left][k][i] = shift + scale * lo.var;
            es[Tail::left][k][i] = shift + scale * lo.es;
            var[Tail::right][k][i] = shift + scale * hi.var;
            es[Tail::right][k][i] = shift + scale * hi.es;
        }
    }
};

/// Conditional distribution of X at a step with the given model quantities.
inline PiecewiseDistribution hawkes_step_distribution(const HawkesParams& params, double u_left, double u_right,
                                                      const StepQuantities& q, const BulkDist& bulk) {
    const GpTail left{q.p[0], u_left, params.xi[0], q.sigma[0]};
    const GpTail right{q.p[1], u_right, params.xi[1], q.sigma[1]};
    return PiecewiseDistribution::solved(left, right, bulk);
}

/// Walks the fitted model through [0, values.size()) with frozen parameters
/// and thresholds, emitting forecasts for every step from `first` on.
///
/// Exceedances are those of the realized series relative to the fitted
/// thresholds, so the state at `first` carries the whole in-sample history.
inline ForecastTable forecast_hawkes(const FittedHawkes& fitted, std::span<const double> values, std::size_t first,
                                     std::vector<double> coverages, const std::string& model = "hawkes") {
    if (first >= values.size()) throw ValidationError("forecast: out-of-sample period is empty");
    fitted.params.validate();
    ForecastTable table;
    table.model = model;
    table.reset(std::move(coverages), first, values.size() - first);
    const BulkDist bulk = fitted.bulk().dist();
    HawkesEngine engine(fitted.params);
    for (std::size_t t = 0; t < values.size(); ++t) {
        const StepQuantities q = engine.current();
        if (t >= first) {
            const std::size_t i = t - first;
            const auto d = hawkes_step_distribution(fitted.params, fitted.u_left, fitted.u_right, q, bulk);
            table.fill(i, values[t], d);
            table.p[Tail::left][i] = q.p[0];
            table.p[Tail::right][i] = q.p[1];
        }
        const double x = values[t];
        if (x < fitted.u_left) {
            engine.advance(std::pair{Tail::left, fitted.u_left - x});
        } else if (x > fitted.u_right) {
            engine.advance(std::pair{Tail::right, x - fitted.u_right});
        } else {
            engine.advance();
        }
    }
    return table;
}

inline ForecastTable forecast_out_of_sample(const FittedHawkes& fitted, const ReturnSeries& series, std::vector<double> coverages,
                                            const std::string& model = "hawkes") {
    return forecast_hawkes(fitted, series.values, series.split_index, std::move(coverages), model);
}

}  // namespace tailhawk
