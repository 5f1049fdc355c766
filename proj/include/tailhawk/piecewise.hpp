#pragma once

#include "tailhawk/distributions.hpp"
#include "tailhawk/error.hpp"

#include <cmath>

namespace tailhawk {

/// Conditional location/scale of the bulk so that its threshold probabilities
/// match the tail probabilities.
struct BulkSolve {
    double m = 0.0;
    double s = 1.0;
    double z_left = -kInf;
    double z_right = kInf;
};

/// Solves F0((u_left - m)/s) = p_left and 1 - F0((u_right - m)/s) = p_right.
inline BulkSolve solve_bulk(double p_left, double p_right, double u_left, double u_right, const BulkDist& dist) {
    if (!(p_left > 0.0 && p_right > 0.0)) throw ParameterError("solve_bulk: tail probabilities must be positive");
    if (!(p_left + p_right < 1.0)) throw ParameterError("solve_bulk: tail probabilities must sum to less than 1");
    if (!(u_left < u_right)) throw ParameterError("solve_bulk: thresholds out of order");
    BulkSolve b;
    b.z_left = dist.quantile(p_left);
    b.z_right = p_right == p_left ? -b.z_left : dist.upper_quantile(p_right);
    if (!(b.z_right > b.z_left)) throw ParameterError("solve_bulk: degenerate standardized thresholds");
    b.s = (u_right - u_left) / (b.z_right - b.z_left);
    b.m = p_right == p_left ? 0.5 * (u_left + u_right) : u_left - b.s * b.z_left;
    return b;
}

/// One GP tail attached beyond a threshold with total mass `prob`.
struct GpTail {
    double prob = 0.0;
    double threshold = 0.0;
    double xi = 0.0;
    double sigma = 1.0;
};

/// Full-support distribution: GP tails below u_left and above u_right, a
/// location/scale bulk in between.
///
/// The bulk is used as-is on [u_left, u_right]; its mass there must equal
/// 1 - p_left - p_right (true by construction for solve_bulk and for
/// parametric-quantile thresholds). A tail with prob = 0 is absent and the
/// bulk extends to infinity on that side.
class PiecewiseDistribution {
public:
    PiecewiseDistribution(GpTail left, GpTail right, double location, double scale, BulkDist bulk)
        : left_(left), right_(right), m_(location), s_(scale), bulk_(std::move(bulk)) {
        if (!(s_ > 0.0)) throw ParameterError("piecewise distribution: bulk scale must be positive");
        for (const GpTail* t : {&left_, &right_}) {
            if (!(t->prob >= 0.0 && t->prob < 1.0)) throw ParameterError("piecewise distribution: tail mass must lie in [0, 1)");
            if (t->prob > 0.0 && !(t->sigma > 0.0)) throw ParameterError("piecewise distribution: GP scale must be positive");
            if (t->prob > 0.0 && !(t->xi < 1.0)) throw ParameterError("piecewise distribution: GP shape must be < 1");
        }
        if (!(left_.prob + right_.prob < 1.0)) throw ParameterError("piecewise distribution: tail masses sum to >= 1");
        z_left_ = left_.prob > 0.0 ? (left_.threshold - m_) / s_ : -kInf;
        z_right_ = right_.prob > 0.0 ? (right_.threshold - m_) / s_ : kInf;
    }

    /// Hawkes form: bulk location and scale solved from the tail probabilities.
    static PiecewiseDistribution solved(GpTail left, GpTail right, const BulkDist& bulk) {
        const auto b = solve_bulk(left.prob, right.prob, left.threshold, right.threshold, bulk);
        return {left, right, b.m, b.s, bulk};
    }

    [[nodiscard]] const GpTail& left() const noexcept { return left_; }
    [[nodiscard]] const GpTail& right() const noexcept { return right_; }
    [[nodiscard]] double location() const noexcept { return m_; }
    [[nodiscard]] double scale() const noexcept { return s_; }
    [[nodiscard]] const BulkDist& bulk() const noexcept { return bulk_; }

    [[nodiscard]] double cdf(double x) const {
        if (left_.prob > 0.0 && x < left_.threshold) return left_.prob * tail_survival(left_, left_.threshold - x);
        if (right_.prob > 0.0 && x > right_.threshold) return 1.0 - right_.prob * tail_survival(right_, x - right_.threshold);
        return bulk_.cdf((x - m_) / s_);
    }

    [[nodiscard]] double survival(double x) const {
        if (left_.prob > 0.0 && x < left_.threshold) return 1.0 - left_.prob * tail_survival(left_, left_.threshold - x);
        if (right_.prob > 0.0 && x > right_.threshold) return right_.prob * tail_survival(right_, x - right_.threshold);
        return bulk_.survival((x - m_) / s_);
    }

    [[nodiscard]] double pdf(double x) const {
        if (left_.prob > 0.0 && x < left_.threshold) return left_.prob * tail_density(left_, left_.threshold - x);
        if (right_.prob > 0.0 && x > right_.threshold) return right_.prob * tail_density(right_, x - right_.threshold);
        return bulk_.pdf((x - m_) / s_) / s_;
    }

    /// Quantile at level a (left-tail VaR at coverage a).
    [[nodiscard]] double var_left(double a) const {
        check_level(a);
        if (a <= left_.prob) return left_.threshold - gp_excess_at_survival(left_.xi, left_.sigma, a / left_.prob);
        if (a < 1.0 - right_.prob) return m_ + s_ * bulk_.quantile(a);
        return var_right(1.0 - a);
    }

    /// Quantile at level 1 - r (right-tail VaR at coverage r).
    [[nodiscard]] double var_right(double r) const {
        check_level(r);
        if (r <= right_.prob) return right_.threshold + gp_excess_at_survival(right_.xi, right_.sigma, r / right_.prob);
        if (r < 1.0 - left_.prob) return m_ + s_ * bulk_.upper_quantile(r);
        return var_left(1.0 - r);
    }

    [[nodiscard]] double median() const { return m_ + s_ * bulk_.quantile(0.5); }

    struct TailRisk {
        double var;
        double es;
    };

    /// Left-tail VaR and E[X | X <= VaR] at coverage a.
    [[nodiscard]] TailRisk risk_left(double a) const {
        check_level(a);
        const double v = var_left(a);
        if (a <= left_.prob) {
            const double y = left_.threshold - v;
            return {v, v - (left_.sigma + left_.xi * y) / (1.0 - left_.xi)};
        }
        if (a <= 1.0 - right_.prob) {
            // bulk mass below v is a - p_left by construction
            const double moment = m_ * (a - left_.prob) + s_ * bulk_.partial_first_moment(z_left_, (v - m_) / s_);
            return {v, (left_tail_moment() + moment) / a};
        }
        return {v, (mean() - (1.0 - a) * risk_right(1.0 - a).es) / a};
    }

    /// Right-tail VaR and E[X | X >= VaR] at coverage r.
    [[nodiscard]] TailRisk risk_right(double r) const {
        check_level(r);
        const double v = var_right(r);
        if (r <= right_.prob) {
            const double y = v - right_.threshold;
            return {v, v + (right_.sigma + right_.xi * y) / (1.0 - right_.xi)};
        }
        if (r <= 1.0 - left_.prob) {
            const double moment = m_ * (r - right_.prob) + s_ * bulk_.partial_first_moment((v - m_) / s_, z_right_);
            return {v, (right_tail_moment() + moment) / r};
        }
        return {v, (mean() - (1.0 - r) * risk_left(1.0 - r).es) / r};
    }

    /// E[X | X <= var_left(a)].
    [[nodiscard]] double es_left(double a) const { return risk_left(a).es; }

    /// E[X | X >= var_right(r)].
    [[nodiscard]] double es_right(double r) const { return risk_right(r).es; }

    [[nodiscard]] double mean() const {
        const double mass = 1.0 - left_.prob - right_.prob;
        return left_tail_moment() + m_ * mass + s_ * bulk_.partial_first_moment(z_left_, z_right_) + right_tail_moment();
    }

private:
    static void check_level(double a) {
        if (!(a > 0.0 && a < 1.0)) throw ParameterError("coverage level must lie in (0, 1)");
    }

    static double tail_survival(const GpTail& t, double y) {
        if (t.xi < 0.0 && y >= -t.sigma / t.xi) return 0.0;
        return gp_survival(t.xi, t.sigma, y);
    }

    static double tail_density(const GpTail& t, double y) {
        if (t.xi < 0.0 && y > -t.sigma / t.xi) return 0.0;
        return gp_pdf(t.xi, t.sigma, y);
    }

    // E[X 1{X in tail}]
    [[nodiscard]] double left_tail_moment() const {
        if (left_.prob <= 0.0) return 0.0;
        return left_.prob * (left_.threshold - left_.sigma / (1.0 - left_.xi));
    }
    [[nodiscard]] double right_tail_moment() const {
        if (right_.prob <= 0.0) return 0.0;
        return right_.prob * (right_.threshold + right_.sigma / (1.0 - right_.xi));
    }

    GpTail left_;
    GpTail right_;
    double m_;
    double s_;
    BulkDist bulk_;
    double z_left_;
    double z_right_;
};

}  // namespace tailhawk
