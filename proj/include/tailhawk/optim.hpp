#pragma once

#include "tailhawk/error.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace tailhawk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Objective = std::function<double(const Vector&)>;

/// a . x <= b
struct LinearConstraint {
    Vector a;
    double b = 0.0;
};

struct Problem {
    Vector lower;
    Vector upper;
    std::vector<LinearConstraint> constraints;

    [[nodiscard]] Eigen::Index size() const noexcept { return lower.size(); }

    /// Largest violation of any bound or linear constraint at x (0 when feasible).
    [[nodiscard]] double violation(const Vector& x) const {
        double v = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            v = std::max({v, lower[i] - x[i], x[i] - upper[i]});
        }
        for (const auto& c : constraints) v = std::max(v, c.a.dot(x) - c.b);
        return v;
    }
};

struct OptimOptions {
    int max_iterations = 300;
    double ftol = 1e-10;          ///< relative predicted-ascent tolerance
    double armijo = 1e-4;
    int max_backtracks = 40;
    int hessian_refresh = 25;     ///< iterations between finite-difference curvature resets (0 = never)
};

struct OptimResult {
    Vector x;
    double f = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
    double constraint_violation = 0.0;
    std::vector<double> trace;    ///< objective at each accepted iterate
};

namespace detail {

inline double fd_step(double x) { return 1e-6 * std::max(std::abs(x), 1e-2); }

}  // namespace detail

/// Numeric gradient of f at x.
///
/// Central differences in the interior; a second-order one-sided stencil when
/// the central stencil would leave the box or hits a non-finite value. Step
/// h_i = 1e-6 max(|x_i|, 1e-2).
inline Vector numeric_gradient(const Objective& f, const Vector& x, double fx, const Vector& lower, const Vector& upper,
                               int* evaluations = nullptr) {
    const Eigen::Index n = x.size();
    Vector g(n);
    Vector xp = x;
    int evals = 0;
    auto eval = [&](Eigen::Index i, double v) {
        xp[i] = v;
        const double r = f(xp);
        xp[i] = x[i];
        ++evals;
        return r;
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = detail::fd_step(x[i]);
        const bool up_ok = x[i] + h <= upper[i];
        const bool down_ok = x[i] - h >= lower[i];
        double fp = up_ok ? eval(i, x[i] + h) : std::numeric_limits<double>::quiet_NaN();
        double fm = down_ok ? eval(i, x[i] - h) : std::numeric_limits<double>::quiet_NaN();
        if (std::isfinite(fp) && std::isfinite(fm)) {
            g[i] = (fp - fm) / (2.0 * h);
        } else if (std::isfinite(fm) && x[i] - 2.0 * h >= lower[i]) {
            const double fmm = eval(i, x[i] - 2.0 * h);
            g[i] = std::isfinite(fmm) ? (3.0 * fx - 4.0 * fm + fmm) / (2.0 * h) : (fx - fm) / h;
        } else if (std::isfinite(fp) && x[i] + 2.0 * h <= upper[i]) {
            const double fpp = eval(i, x[i] + 2.0 * h);
            g[i] = std::isfinite(fpp) ? (-3.0 * fx + 4.0 * fp - fpp) / (2.0 * h) : (fp - fx) / h;
        } else if (std::isfinite(fm)) {
            g[i] = (fx - fm) / h;
        } else if (std::isfinite(fp)) {
            g[i] = (fp - fx) / h;
        } else {
            g[i] = 0.0;
        }
    }
    if (evaluations) *evaluations += evals;
    return g;
}

/// Central-difference Hessian with per-coordinate steps h.
inline Matrix numeric_hessian(const Objective& f, const Vector& x, const Vector& h, int* evaluations = nullptr) {
    const Eigen::Index n = x.size();
    Matrix H(n, n);
    const double f0 = f(x);
    Vector xp = x;
    int evals = 1;
    for (Eigen::Index i = 0; i < n; ++i) {
        xp[i] = x[i] + h[i];
        const double fp = f(xp);
        xp[i] = x[i] - h[i];
        const double fm = f(xp);
        xp[i] = x[i];
        evals += 2;
        H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for (Eigen::Index j = 0; j < i; ++j) {
            double s = 0.0;
            for (int si : {1, -1}) {
                for (int sj : {1, -1}) {
                    xp[i] = x[i] + si * h[i];
                    xp[j] = x[j] + sj * h[j];
                    s += si * sj * f(xp);
                    ++evals;
                }
            }
            xp[i] = x[i];
            xp[j] = x[j];
            H(i, j) = H(j, i) = s / (4.0 * h[i] * h[j]);
        }
    }
    if (evaluations) *evaluations += evals;
    return H;
}

namespace detail {

/// Symmetric positive-definite repair: eigenvalues floored at a fraction of the largest.
inline Matrix make_positive_definite(const Matrix& B) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (B + B.transpose()));
    Vector ev = es.eigenvalues().cwiseAbs();
    const double top = std::max(ev.maxCoeff(), 1e-8);
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], 1e-10 * top);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Curvature model for -f: finite-difference Hessian made positive definite.
/// Steps stay inside the box where possible (one-sided shift near bounds).
inline Matrix initial_curvature(const Objective& f, const Vector& x, const Vector& lower, const Vector& upper, int* evals) {
    const Eigen::Index n = x.size();
    Vector h(n);
    Vector centre = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        h[i] = 1e-4 * std::max(std::abs(x[i]), 1e-2);
        if (centre[i] - h[i] < lower[i]) centre[i] = std::min(lower[i] + h[i], upper[i]);
        if (centre[i] + h[i] > upper[i]) centre[i] = std::max(upper[i] - h[i], lower[i]);
    }
    Matrix H = numeric_hessian(f, centre, h, evals);
    if (!H.allFinite()) {
        Matrix D = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) D(i, i) = std::isfinite(H(i, i)) ? std::max(-H(i, i), 1.0) : 1.0;
        return D;
    }
    return make_positive_definite(-H);
}

/// min 0.5 d'Bd - g'd  s.t.  C d <= r, starting from the feasible point d = 0 (r >= 0).
/// Primal active-set method with KKT solves; returns the step.
inline Vector solve_qp(const Matrix& B, const Vector& g, const Matrix& C, const Vector& r) {
    const Eigen::Index n = g.size();
    const Eigen::Index m = C.rows();
    Vector d = Vector::Zero(n);
    std::vector<Eigen::Index> working;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (r[i] <= 0.0) working.push_back(i);  // active at the current iterate
    }
    const int max_iter = static_cast<int>(10 * (n + m) + 20);
    for (int iter = 0; iter < max_iter; ++iter) {
        const auto w = static_cast<Eigen::Index>(working.size());
        Matrix K = Matrix::Zero(n + w, n + w);
        K.topLeftCorner(n, n) = B;
        for (Eigen::Index k = 0; k < w; ++k) {
            K.block(0, n + k, n, 1) = C.row(working[k]).transpose();
            K.block(n + k, 0, 1, n) = C.row(working[k]);
        }
        Vector rhs = Vector::Zero(n + w);
        rhs.head(n) = g - B * d;
        const Vector sol = K.completeOrthogonalDecomposition().solve(rhs);
        const Vector p = sol.head(n);
        const double scale = 1.0 + d.norm();
        if (p.norm() <= 1e-13 * scale) {
            // stationary on the working set: check multiplier signs
            Eigen::Index drop = -1;
            double most_negative = -1e-12;
            for (Eigen::Index k = 0; k < w; ++k) {
                if (sol[n + k] < most_negative) {
                    most_negative = sol[n + k];
                    drop = k;
                }
            }
            if (drop < 0) return d;
            working.erase(working.begin() + drop);
            continue;
        }
        double step = 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (std::find(working.begin(), working.end(), i) != working.end()) continue;
            const double cp = C.row(i).dot(p);
            if (cp > 1e-14) {
                const double room = std::max(r[i] - C.row(i).dot(d), 0.0);
                const double s = room / cp;
                if (s < step) {
                    step = s;
                    blocking = i;
                }
            }
        }
        d += step * p;
        if (blocking >= 0) working.push_back(blocking);
    }
    return d;
}

}  // namespace detail

/// Maximizes f over {lower <= x <= upper, a_k . x <= b_k}.
///
/// Sequential quadratic programming: each iteration solves a QP built from a
/// damped-BFGS model of -f, then an Armijo backtracking line search along the
/// QP step. Non-finite objective values are treated as infeasible and
/// backtracked away from, which lets callers encode nonlinear admissibility.
/// Accepted iterates never decrease the objective.
inline OptimResult maximize(const Objective& f, Vector x, const Problem& problem, const OptimOptions& options = {}) {
    const Eigen::Index n = x.size();
    if (problem.lower.size() != n || problem.upper.size() != n) throw ValidationError("maximize: dimension mismatch");
    x = x.cwiseMax(problem.lower).cwiseMin(problem.upper);
    if (problem.violation(x) > 1e-12) throw ValidationError("maximize: start point violates a linear constraint");

    OptimResult res;
    double fx = f(x);
    res.evaluations = 1;
    if (!std::isfinite(fx)) {
        res.x = x;
        res.f = fx;
        res.message = "objective not finite at the start point";
        return res;
    }
    res.trace.push_back(fx);

    const auto m_lin = static_cast<Eigen::Index>(problem.constraints.size());
    Matrix C(2 * n + m_lin, n);
    C.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
        C(2 * i, i) = 1.0;
        C(2 * i + 1, i) = -1.0;
    }
    for (Eigen::Index k = 0; k < m_lin; ++k) C.row(2 * n + k) = problem.constraints[k].a.transpose();

    auto residuals = [&](const Vector& at) -> Vector {
        Vector r(2 * n + m_lin);
        for (Eigen::Index i = 0; i < n; ++i) {
            r[2 * i] = problem.upper[i] - at[i];
            r[2 * i + 1] = at[i] - problem.lower[i];
        }
        for (Eigen::Index k = 0; k < m_lin; ++k) r[2 * n + k] = problem.constraints[k].b - problem.constraints[k].a.dot(at);
        return r.cwiseMax(0.0);
    };

    Matrix B = detail::initial_curvature(f, x, problem.lower, problem.upper, &res.evaluations);
    Vector g = numeric_gradient(f, x, fx, problem.lower, problem.upper, &res.evaluations);
    int since_refresh = 0;
    bool refreshed_after_failure = false;
    int small_steps = 0;

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        res.iterations = iter;
        const Vector d = detail::solve_qp(B, g, C, residuals(x));
        const double ascent = g.dot(d);
        if (!(ascent > options.ftol * (1.0 + std::abs(fx)))) {
            res.converged = true;
            res.message = "predicted ascent below tolerance";
            break;
        }
        double t = 1.0;
        double ft = -std::numeric_limits<double>::infinity();
        Vector xt;
        bool accepted = false;
        for (int k = 0; k < options.max_backtracks; ++k) {
            xt = (x + t * d).cwiseMax(problem.lower).cwiseMin(problem.upper);
            ft = f(xt);
            ++res.evaluations;
            if (std::isfinite(ft) && ft >= fx + options.armijo * t * ascent) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (!refreshed_after_failure) {
                B = detail::initial_curvature(f, x, problem.lower, problem.upper, &res.evaluations);
                refreshed_after_failure = true;
                since_refresh = 0;
                continue;
            }
            res.converged = ascent <= 1e-6 * (1.0 + std::abs(fx));
            res.message = "line search failed";
            break;
        }
        refreshed_after_failure = false;
        const Vector s = xt - x;
        const double gained = ft - fx;
        x = xt;
        fx = ft;
        res.trace.push_back(fx);
        const Vector g_new = numeric_gradient(f, x, fx, problem.lower, problem.upper, &res.evaluations);

        if (options.hessian_refresh > 0 && ++since_refresh >= options.hessian_refresh) {
            B = detail::initial_curvature(f, x, problem.lower, problem.upper, &res.evaluations);
            since_refresh = 0;
        } else {
            // damped BFGS on the curvature of -f (Powell's modification keeps B positive definite)
            const Vector y = g - g_new;
            const Vector Bs = B * s;
            const double sBs = s.dot(Bs);
            if (sBs > 1e-300) {
                const double sy = s.dot(y);
                const double theta = sy >= 0.2 * sBs ? 1.0 : 0.8 * sBs / (sBs - sy);
                const Vector r = theta * y + (1.0 - theta) * Bs;
                B += r * r.transpose() / s.dot(r) - Bs * Bs.transpose() / sBs;
            }
        }
        g = g_new;

        if (gained <= options.ftol * (1.0 + std::abs(fx))) {
            if (++small_steps >= 3) {
                res.converged = true;
                res.message = "objective change below tolerance";
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    if (res.message.empty()) res.message = "iteration limit reached";
    res.x = x;
    res.f = fx;
    res.constraint_violation = std::max(problem.violation(x), 0.0);
    return res;
}

/// Maximizes a scalar function on [lo, hi]: Brent's method, with both end
/// points also checked so boundary maxima are found exactly.
inline std::pair<double, double> maximize_scalar(const std::function<double(double)>& f, double lo, double hi, int bits = 40) {
    auto neg = [&](double v) {
        const double r = f(v);
        return std::isfinite(r) ? -r : std::numeric_limits<double>::max();
    };
    std::uintmax_t iters = 200;
    auto best = boost::math::tools::brent_find_minima(neg, lo, hi, bits, iters);
    for (double end : {lo, hi}) {
        const double v = neg(end);
        if (v <= best.second) best = {end, v};
    }
    return {best.first, -best.second};
}

}  // namespace tailhawk
