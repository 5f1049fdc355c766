#include "tailhawk/garch.hpp"
#include "tailhawk/simulate.hpp"

#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <vector>

using namespace tailhawk;

namespace {

GarchParams gjr() {
    GarchParams p;
    p.mu = 3e-4;
    p.omega = 2e-6;
    p.alpha = 0.04;
    p.beta = 0.88;
    p.gamma = 0.1;
    p.r = 1;
    p.family = BulkFamily::student_t;
    p.inverse_nu = 1.0 / 7.0;
    return p;
}

ReturnSeries simulated(const GarchParams& p, std::size_t T, std::uint64_t seed) {
    GarchSimConfig cfg;
    cfg.params = p;
    cfg.horizon = T;
    cfg.seed = seed;
    return simulate_garch(cfg);
}

double integrate(const std::function<double(double)>& f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-12);
}

}  // namespace

TEST(GarchLoglik, MatchesBruteForce) {
    const GarchParams p = gjr();
    const auto x = simulated(p, 300, 1).values;
    const double s0 = 1.5e-4;
    double ll = 0.0;
    double var = s0;
    const double nu = 7.0;
    const double scale = std::sqrt((nu - 2.0) / nu);
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (t > 0) {
            const double e = x[t - 1] - p.mu;
            var = p.omega + (p.alpha + (e < 0 ? p.gamma : 0.0)) * e * e + p.beta * var;
        }
        const double z = (x[t] - p.mu) / std::sqrt(var) / scale;
        const double log_t = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * std::numbers::pi) -
                             (nu + 1) / 2 * std::log(1 + z * z / nu);
        ll += log_t - std::log(scale) - 0.5 * std::log(var);
    }
    EXPECT_NEAR(garch_loglik(p, x, s0), ll, 1e-8);

    GarchParams n = p;
    n.family = BulkFamily::normal;
    n.inverse_nu = 0.0;
    double lln = 0.0;
    var = s0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (t > 0) {
            const double e = x[t - 1] - p.mu;
            var = p.omega + (p.alpha + (e < 0 ? p.gamma : 0.0)) * e * e + p.beta * var;
        }
        lln += -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * (x[t] - p.mu) * (x[t] - p.mu) / var;
    }
    EXPECT_NEAR(garch_loglik(n, x, s0), lln, 1e-8);
}

TEST(GarchSigma, VariancePositiveAboveOmega) {
    const GarchParams p = gjr();
    const auto x = simulated(p, 2000, 2).values;
    const auto s = garch_sigma_path(p, x, 1e-4);
    for (std::size_t t = 1; t < s.size(); ++t) EXPECT_GE(s[t] * s[t], p.omega);
}

TEST(FitGarch, IidGaussianHasNoArch) {
    SplitMix64 rng(5);
    std::vector<double> x(5000);
    for (auto& v : x) v = 0.01 * rng.normal();
    const auto fit = fit_garch(x, 1, BulkFamily::normal);
    EXPECT_LT(fit.params.alpha, 0.02);
    EXPECT_LT(fit.params.gamma, 0.03);
    const double uncond = fit.params.omega / (1.0 - fit.params.persistence());
    EXPECT_NEAR(uncond / sample_variance(x), 1.0, 0.05);
}

TEST(FitGarch, RecoversGjrWithinThreeSe) {
    const GarchParams p = gjr();
    const auto x = simulated(p, 40000, 3).values;
    const auto fit = fit_garch(x, 1, BulkFamily::student_t);
    const std::vector<double> truth{p.mu, p.omega, p.alpha, p.beta, p.gamma, p.inverse_nu};
    ASSERT_EQ(fit.names.size(), truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ASSERT_TRUE(fit.standard_errors[i].has_value()) << fit.names[i];
        EXPECT_LT(std::abs(fit.estimates[i] - truth[i]), 3.0 * *fit.standard_errors[i]) << fit.names[i];
    }
}

TEST(FitGarch, Nesting) {
    const auto x = simulated(gjr(), 3000, 4).values;
    const auto g0n = fit_garch(x, 0, BulkFamily::normal);
    GarchFitOptions o;
    o.warm_starts = {g0n.params};
    const auto g0t = fit_garch(x, 0, BulkFamily::student_t, o);
    o.warm_starts = {g0t.params};
    const auto g1t = fit_garch(x, 1, BulkFamily::student_t, o);
    EXPECT_GE(g0t.loglik, g0n.loglik - 1e-6);
    EXPECT_GE(g1t.loglik, g0t.loglik - 1e-6);
    o.warm_starts = {g0n.params};
    const auto g1n = fit_garch(x, 1, BulkFamily::normal, o);
    EXPECT_GE(g1n.loglik, g0n.loglik - 1e-6);
}

TEST(FitGarch, RejectsShortSample) {
    const std::vector<double> x(100, 0.01);
    EXPECT_THROW(fit_garch(x, 0, BulkFamily::normal), ValidationError);
}

TEST(GarchEvt, ZeroThresholdIsBaseline) {
    const auto x = simulated(gjr(), 2000, 6).values;
    const auto base = fit_garch(x, 0, BulkFamily::normal);
    const auto evt = fit_garch_evt(base, x, 0.0);
    EXPECT_FALSE(evt.params.evt.has_value());
}

TEST(GarchEvt, NormalInnovationsHaveLightTails) {
    GarchParams p = gjr();
    p.family = BulkFamily::normal;
    p.inverse_nu = 0.0;
    const auto x = simulated(p, 20000, 7).values;
    const auto base = fit_garch(x, 1, BulkFamily::normal);
    const auto fit = fit_garch_evt(base, x, 0.05);
    ASSERT_TRUE(fit.params.evt.has_value());
    for (Tail o : {Tail::left, Tail::right}) {
        const auto& se = fit.params.evt->standard_errors[o][0];
        ASSERT_TRUE(se.has_value());
        // normal excesses over a 5% threshold: GP shape slightly negative, close to 0
        EXPECT_LT(std::abs(fit.params.evt->xi[o]), 3.0 * *se + 0.1);
        EXPECT_NEAR(static_cast<double>(fit.params.evt->exceedances[o]), 1000.0, 150.0);
    }
}

TEST(GarchEvt, MirrorSwapsTails) {
    FittedGarch base;
    base.params.mu = 0.0;
    base.params.omega = 1e-6;
    base.params.alpha = 0.05;
    base.params.beta = 0.9;
    base.sigma0_sq = 1e-4;
    GarchParams sim = gjr();
    sim.mu = 0.0;
    const auto x = simulated(sim, 4000, 8).values;
    std::vector<double> neg(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
    const auto a = fit_garch_evt(base, x, 0.05);
    const auto b = fit_garch_evt(base, neg, 0.05);
    EXPECT_EQ(a.params.evt->u[0], -b.params.evt->u[1]);
    EXPECT_EQ(a.params.evt->xi[0], b.params.evt->xi[1]);
    EXPECT_EQ(a.params.evt->xi[1], b.params.evt->xi[0]);
    EXPECT_EQ(a.params.evt->varsigma[0], b.params.evt->varsigma[1]);
}

TEST(GarchForecast, NormalQuantile) {
    FittedGarch f;
    f.params.mu = 1e-4;
    f.params.omega = 1e-6;
    f.params.alpha = 0.05;
    f.params.beta = 0.9;
    f.sigma0_sq = 1e-4;
    const auto x = simulated(f.params, 300, 9).values;
    const auto table = garch_forecast(f, x, 200, {0.025, 0.5});
    const auto sigma = garch_sigma_path(f.params, x, f.sigma0_sq);
    for (std::size_t i = 0; i < table.steps(); ++i) {
        const double s = sigma[200 + i];
        EXPECT_NEAR(table.var[Tail::left][0][i], f.params.mu - 1.959963984540054 * s, 1e-5 * s);
        EXPECT_NEAR(table.var[Tail::left][0][i] + table.var[Tail::right][0][i], 2.0 * f.params.mu, 1e-15);
        EXPECT_NEAR(table.median[i], f.params.mu, 1e-15);
        EXPECT_NEAR(table.es[Tail::left][0][i], f.params.mu - s * std::exp(-0.5 * 1.959963984540054 * 1.959963984540054) /
                                                                    std::sqrt(2 * std::numbers::pi) / 0.025, 1e-9);
    }
}

TEST(GarchEvt, InnovationDistributionContinuousAndNormalized) {
    GarchParams p = gjr();
    const BulkDist bulk = p.innovation_bulk();
    GarchEvt evt;
    evt.a_u = 0.04;
    evt.u = {bulk.quantile(0.04), bulk.upper_quantile(0.04)};
    evt.xi = {0.15, -0.1};
    evt.varsigma = {0.6, 0.5};
    p.evt = evt;
    const auto d = p.innovation_distribution();
    for (double u : {evt.u[0], evt.u[1]}) {
        EXPECT_NEAR(d.cdf(u - 1e-12), d.cdf(u + 1e-12), 1e-9);
    }
    double prev = 0.0;
    for (double x = -8.0; x <= 8.0; x += 0.01) {
        const double c = d.cdf(x);
        EXPECT_GE(c, prev);
        prev = c;
    }
    const double end = evt.u[1] + 0.5 / 0.1;
    const double total = integrate([&](double x) { return d.pdf(x); }, -kInf, evt.u[0]) +
                         integrate([&](double x) { return d.pdf(x); }, evt.u[0], evt.u[1]) +
                         integrate([&](double x) { return d.pdf(x); }, evt.u[1], end);
    EXPECT_NEAR(total, 1.0, 1e-7);
}
