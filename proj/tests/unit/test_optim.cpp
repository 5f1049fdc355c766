#include "tailhawk/estimation.hpp"
#include "tailhawk/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tailhawk;

namespace {

Problem box(Eigen::Index n, double lo, double hi) {
    Problem p;
    p.lower = Vector::Constant(n, lo);
    p.upper = Vector::Constant(n, hi);
    return p;
}

}  // namespace

TEST(Optim, QuadraticStandardErrorsAreOne) {
    const Objective f = [](const Vector& x) { return -0.5 * x.squaredNorm(); };
    const Vector x = Vector::Zero(4);
    const auto se = standard_errors(f, x, box(4, -10.0, 10.0));
    for (const auto& s : se) {
        ASSERT_TRUE(s.has_value());
        EXPECT_NEAR(*s, 1.0, 1e-6);
    }
}

TEST(Optim, CorrelatedGaussianCovariance) {
    Matrix S(2, 2);
    S << 2.0, 0.6, 0.6, 0.5;
    const Matrix P = S.inverse();
    const Objective f = [&](const Vector& x) { return -0.5 * x.dot(P * x); };
    const Covariance c = parameter_covariance(f, Vector::Zero(2), box(2, -10.0, 10.0));
    ASSERT_TRUE(c.defined);
    EXPECT_NEAR((c.matrix - S).cwiseAbs().maxCoeff(), 0.0, 1e-6);
}

TEST(Optim, BoundaryPinnedParameterHasUndefinedSe) {
    const Objective f = [](const Vector& x) { return -0.5 * (x[0] + 1.0) * (x[0] + 1.0) - 0.5 * (x[1] - 1.0) * (x[1] - 1.0); };
    Problem p = box(2, -10.0, 10.0);
    p.lower[0] = 0.0;
    const auto r = maximize(f, Vector::Constant(2, 1.0), p);
    EXPECT_NEAR(r.x[0], 0.0, 1e-9);
    const auto se = standard_errors(f, r.x, p);
    EXPECT_FALSE(se[0].has_value());
    ASSERT_TRUE(se[1].has_value());
    EXPECT_NEAR(*se[1], 1.0, 1e-6);
}

TEST(Optim, NonConcaveGivesUndefinedSes) {
    const Objective f = [](const Vector& x) { return 0.5 * x[0] * x[0] - 0.5 * x[1] * x[1]; };
    const auto se = standard_errors(f, Vector::Zero(2), box(2, -10.0, 10.0));
    EXPECT_FALSE(se[0].has_value());
    EXPECT_FALSE(se[1].has_value());
}

TEST(Optim, RosenbrockUnconstrained) {
    const Objective f = [](const Vector& x) {
        return -(100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2));
    };
    Vector x0(2);
    x0 << -1.2, 1.0;
    const auto r = maximize(f, x0, box(2, -5.0, 5.0));
    EXPECT_TRUE(r.converged) << r.message;
    EXPECT_NEAR(r.x[0], 1.0, 1e-4);
    EXPECT_NEAR(r.x[1], 1.0, 1e-4);
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i], r.trace[i - 1]);
}

TEST(Optim, ActiveLinearConstraint) {
    // max -(x-2)^2 - (y-2)^2 subject to x + y <= 2: optimum (1, 1)
    const Objective f = [](const Vector& x) { return -std::pow(x[0] - 2.0, 2) - std::pow(x[1] - 2.0, 2); };
    Problem p = box(2, 0.0, 5.0);
    LinearConstraint c{Vector::Ones(2), 2.0};
    p.constraints.push_back(c);
    const auto r = maximize(f, Vector::Constant(2, 0.2), p);
    EXPECT_NEAR(r.x[0], 1.0, 1e-7);
    EXPECT_NEAR(r.x[1], 1.0, 1e-7);
    EXPECT_LE(r.constraint_violation, 1e-12);
    const auto se = standard_errors(f, r.x, p);
    EXPECT_FALSE(se[0].has_value());
    EXPECT_FALSE(se[1].has_value());
}

TEST(Optim, NonFiniteRegionIsAvoided) {
    // log barrier: finite only for x > 0.5
    const Objective f = [](const Vector& x) { return x[0] > 0.5 ? std::log(x[0] - 0.5) - x[0] : -kInf; };
    const auto r = maximize(f, Vector::Constant(1, 3.0), box(1, 0.0, 10.0));
    EXPECT_NEAR(r.x[0], 1.5, 1e-5);
}

TEST(Optim, NumericGradientMatchesAnalytic) {
    const Objective f = [](const Vector& x) { return std::sin(x[0]) * std::exp(0.3 * x[1]) - x[2] * x[2] * x[0]; };
    Vector x(3);
    x << 0.4, -1.1, 2.0;
    const Problem p = box(3, -10.0, 10.0);
    const Vector g = numeric_gradient(f, x, f(x), p.lower, p.upper);
    EXPECT_NEAR(g[0], std::cos(0.4) * std::exp(-0.33) - 4.0, 1e-6);
    EXPECT_NEAR(g[1], 0.3 * std::sin(0.4) * std::exp(-0.33), 1e-6);
    EXPECT_NEAR(g[2], -2.0 * 2.0 * 0.4, 1e-6);
}

TEST(Optim, ScalarMaximizerFindsInteriorAndBoundary) {
    const auto [x1, f1] = maximize_scalar([](double v) { return -(v - 0.3) * (v - 0.3); }, 0.0, 1.0);
    EXPECT_NEAR(x1, 0.3, 1e-6);
    EXPECT_NEAR(f1, 0.0, 1e-10);
    const auto [x2, f2] = maximize_scalar([](double v) { return v; }, 0.0, 1.0);
    EXPECT_EQ(x2, 1.0);
    EXPECT_EQ(f2, 1.0);
}
