#pragma once

#include "tailhawk/error.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace tailhawk {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Generalized Pareto distribution of threshold excesses.
// ---------------------------------------------------------------------------

/// Below this |xi| the exponential limit is used.
inline constexpr double kGpExponentialCutoff = 1e-12;

namespace detail {

inline void check_gp_args(double xi, double sigma, double m) {
    if (!(sigma > 0.0)) throw ParameterError("GP scale must be positive");
    if (!(m >= 0.0)) throw ParameterError("GP excess must be non-negative");
    if (xi < 0.0 && m > -sigma / xi) throw ParameterError("GP excess beyond the upper end point for xi < 0");
}

/// ln(1 + xi m / sigma) / xi, continuous through xi = 0.
inline double gp_log_term(double xi, double sigma, double m) {
    if (std::abs(xi) < kGpExponentialCutoff) return m / sigma;
    return std::log1p(xi * m / sigma) / xi;
}

}  // namespace detail

/// Survival function 1 - F of the GP distribution.
inline double gp_survival(double xi, double sigma, double m) {
    detail::check_gp_args(xi, sigma, m);
    return std::exp(-detail::gp_log_term(xi, sigma, m));
}

inline double gp_cdf(double xi, double sigma, double m) {
    detail::check_gp_args(xi, sigma, m);
    return -std::expm1(-detail::gp_log_term(xi, sigma, m));
}

inline double gp_pdf(double xi, double sigma, double m) {
    detail::check_gp_args(xi, sigma, m);
    if (std::abs(xi) < kGpExponentialCutoff) return std::exp(-m / sigma) / sigma;
    return std::exp(-(1.0 / xi + 1.0) * std::log1p(xi * m / sigma)) / sigma;
}

/// Log-density; -inf outside the support instead of throwing (likelihood use).
inline double gp_log_density(double xi, double sigma, double m) noexcept {
    if (!(sigma > 0.0) || !(m >= 0.0)) return -kInf;
    if (std::abs(xi) < kGpExponentialCutoff) return -std::log(sigma) - m / sigma;
    const double z = xi * m / sigma;
    if (!(z > -1.0)) return -kInf;
    return -std::log(sigma) - (1.0 / xi + 1.0) * std::log1p(z);
}

/// Excess with cdf value f in [0, 1).
inline double gp_quantile(double xi, double sigma, double f) {
    if (!(sigma > 0.0)) throw ParameterError("GP scale must be positive");
    if (!(f >= 0.0 && f < 1.0)) throw ParameterError("GP quantile probability must lie in [0, 1)");
    const double log_surv = std::log1p(-f);
    if (std::abs(xi) < kGpExponentialCutoff) return -sigma * log_surv;
    return sigma * std::expm1(-xi * log_surv) / xi;
}

/// Excess exceeded with probability r in (0, 1], i.e. gp_quantile(1 - r) without cancellation.
inline double gp_excess_at_survival(double xi, double sigma, double r) {
    if (!(r > 0.0 && r <= 1.0)) throw ParameterError("GP survival probability must lie in (0, 1]");
    const double log_r = std::log(r);
    if (std::abs(xi) < kGpExponentialCutoff) return -sigma * log_r;
    return sigma * std::expm1(-xi * log_r) / xi;
}

/// E[M | M > y] for a GP excess M; requires xi < 1.
inline double gp_mean_excess_beyond(double xi, double sigma, double y) {
    if (!(xi < 1.0)) throw ParameterError("GP mean requires xi < 1");
    return y + (sigma + xi * y) / (1.0 - xi);
}

// ---------------------------------------------------------------------------
// Bulk base family: location zero, fixed scale `unit`.
// ---------------------------------------------------------------------------

enum class BulkFamily { normal, student_t };

inline const char* family_name(BulkFamily f) { return f == BulkFamily::normal ? "normal" : "student_t"; }

inline BulkFamily parse_family(const std::string& s) {
    if (s == "normal" || s == "N") return BulkFamily::normal;
    if (s == "student_t" || s == "t" || s == "T") return BulkFamily::student_t;
    throw ValidationError("unknown distribution family '" + s + "'");
}

/// Standard normal or Student-t, optionally rescaled to unit variance.
///
/// With unit_variance the Student-t is scaled by sqrt((nu - 2) / nu); that
/// form is used for GARCH innovations. The Hawkes bulk uses the plain
/// (unit-scale) form because its location and scale are solved per step.
class BulkDist {
public:
    BulkDist() = default;

    static BulkDist normal() { return BulkDist(BulkFamily::normal, kInf, false); }
    static BulkDist student_t(double nu, bool unit_variance = false) {
        if (!(nu > 0.0)) throw ParameterError("Student-t degrees of freedom must be positive");
        if (unit_variance && !(nu > 2.0)) throw ParameterError("unit-variance Student-t requires nu > 2");
        return BulkDist(BulkFamily::student_t, nu, unit_variance);
    }
    static BulkDist make(BulkFamily family, double nu, bool unit_variance = false) {
        return family == BulkFamily::normal ? normal() : student_t(nu, unit_variance);
    }

    [[nodiscard]] BulkFamily family() const noexcept { return family_; }
    [[nodiscard]] double nu() const noexcept { return nu_; }
    [[nodiscard]] bool unit_variance() const noexcept { return unit_variance_; }
    /// Multiplier applied to the textbook standard variable.
    [[nodiscard]] double unit() const noexcept { return unit_; }

    [[nodiscard]] double cdf(double x) const {
        if (x == -kInf) return 0.0;
        if (x == kInf) return 1.0;
        const double z = x / unit_;
        if (family_ == BulkFamily::normal) return boost::math::cdf(norm_, z);
        return boost::math::cdf(t_, z);
    }

    [[nodiscard]] double survival(double x) const {
        if (x == -kInf) return 1.0;
        if (x == kInf) return 0.0;
        const double z = x / unit_;
        if (family_ == BulkFamily::normal) return boost::math::cdf(boost::math::complement(norm_, z));
        return boost::math::cdf(boost::math::complement(t_, z));
    }

    [[nodiscard]] double pdf(double x) const { return std::exp(log_pdf(x)); }

    [[nodiscard]] double log_pdf(double x) const noexcept {
        const double z = x / unit_;
        if (family_ == BulkFamily::normal) return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(unit_);
        return log_norm_ - 0.5 * (nu_ + 1.0) * std::log1p(z * z / nu_) - std::log(unit_);
    }

    [[nodiscard]] double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) throw ParameterError("bulk quantile probability must lie in (0, 1)");
        if (family_ == BulkFamily::normal) return unit_ * boost::math::quantile(norm_, p);
        return unit_ * boost::math::quantile(t_, p);
    }

    /// Quantile at 1 - r, accurate for small r.
    [[nodiscard]] double upper_quantile(double r) const {
        if (!(r > 0.0 && r < 1.0)) throw ParameterError("bulk quantile probability must lie in (0, 1)");
        if (family_ == BulkFamily::normal) return unit_ * boost::math::quantile(boost::math::complement(norm_, r));
        return unit_ * boost::math::quantile(boost::math::complement(t_, r));
    }

    /// Integral of x f(x) over [a, b]; either end may be infinite.
    ///
    /// Closed form for the normal and for Student-t with nu > 1.5; adaptive
    /// quadrature below that (finite ends only when nu <= 1).
    [[nodiscard]] double partial_first_moment(double a, double b) const {
        if (!(a <= b)) return -partial_first_moment(b, a);
        if (family_ == BulkFamily::normal) return unit_ * (std_pdf(a / unit_) - std_pdf(b / unit_));
        if (nu_ > 1.5) return unit_ * (t_antiderivative(a / unit_) - t_antiderivative(b / unit_));
        if (nu_ <= 1.0 && (!std::isfinite(a) || !std::isfinite(b))) {
            throw ParameterError("Student-t with nu <= 1 has no first moment over an infinite range");
        }
        auto integrand = [this](double x) { return x * pdf(x); };
        return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, a, b, 15, 1e-13);
    }

private:
    BulkDist(BulkFamily family, double nu, bool unit_variance)
        : family_(family), nu_(nu), unit_variance_(unit_variance), t_(family == BulkFamily::student_t ? nu : 1.0) {
        if (family_ == BulkFamily::student_t) {
            unit_ = unit_variance ? std::sqrt((nu - 2.0) / nu) : 1.0;
            log_norm_ = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
        }
    }

    [[nodiscard]] double std_pdf(double z) const {
        if (!std::isfinite(z)) return 0.0;
        return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    }

    // (nu + z^2) / (nu - 1) f(z) has derivative -z f(z); vanishes at +-inf for nu > 1.
    [[nodiscard]] double t_antiderivative(double z) const {
        if (!std::isfinite(z)) return 0.0;
        return (nu_ + z * z) / (nu_ - 1.0) * std::exp(log_norm_ - 0.5 * (nu_ + 1.0) * std::log1p(z * z / nu_));
    }

    BulkFamily family_ = BulkFamily::normal;
    double nu_ = kInf;
    bool unit_variance_ = false;
    double unit_ = 1.0;
    double log_norm_ = 0.0;
    boost::math::normal_distribution<double> norm_{};
    boost::math::students_t_distribution<double> t_{1.0};
};

}  // namespace tailhawk
