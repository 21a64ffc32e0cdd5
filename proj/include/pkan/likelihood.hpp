#pragma once

// Gaussian and location-scale Student-t predictive distributions: log-densities
// (scalar and on the tape), CDF, quantile, and CRPS.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "pkan/autodiff.hpp"
#include "pkan/error.hpp"
#include "pkan/special.hpp"

namespace pkan {

enum class Likelihood { gaussian, student_t, none };

inline std::string to_string(Likelihood l) {
  switch (l) {
    case Likelihood::gaussian:
      return "gaussian";
    case Likelihood::student_t:
      return "student_t";
    case Likelihood::none:
      return "none";
  }
  return "none";
}

inline Likelihood parse_likelihood(std::string_view s) {
  if (s == "gaussian") return Likelihood::gaussian;
  if (s == "student_t" || s == "student-t" || s == "t") return Likelihood::student_t;
  if (s == "none") return Likelihood::none;
  throw InvalidArgument("unknown likelihood '" + std::string(s) + "'");
}

/// One predictive marginal. `sigma` is the scale (not the standard deviation for Student-t).
struct PredictiveDistribution {
  Likelihood family = Likelihood::gaussian;
  double mu = 0.0;
  double sigma = 1.0;
  double nu = 0.0;  // Student-t only

  static PredictiveDistribution gaussian(double mu, double sigma) {
    PredictiveDistribution d{Likelihood::gaussian, mu, sigma, 0.0};
    d.validate();
    return d;
  }

  static PredictiveDistribution student_t(double mu, double sigma, double nu) {
    PredictiveDistribution d{Likelihood::student_t, mu, sigma, nu};
    d.validate();
    return d;
  }

  void validate() const {
    if (family == Likelihood::none) throw InvalidArgument("PredictiveDistribution: family must not be none");
    if (!std::isfinite(mu)) throw InvalidArgument("PredictiveDistribution: mu must be finite");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("PredictiveDistribution: sigma must be > 0");
    if (family == Likelihood::student_t && (!(nu > 2.0) || !std::isfinite(nu))) {
      throw InvalidArgument("PredictiveDistribution: nu must be > 2");
    }
  }
};

/// Asymmetric quantile loss at level alpha.
inline double pinball(double q_pred, double y, double alpha) {
  return y >= q_pred ? alpha * (y - q_pred) : (1.0 - alpha) * (q_pred - y);
}

inline double log_pdf(const PredictiveDistribution& d, double y) {
  const double z = (y - d.mu) / d.sigma;
  if (d.family == Likelihood::gaussian) return -0.5 * special::kLog2Pi - std::log(d.sigma) - 0.5 * z * z;
  const double nu = d.nu;
  return special::lgamma(0.5 * (nu + 1.0)) - special::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
         std::log(d.sigma) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

inline double pdf(const PredictiveDistribution& d, double y) { return std::exp(log_pdf(d, y)); }

namespace detail {

// CDF of the standard Student-t with nu degrees of freedom.
inline double student_t_standard_cdf(double t, double nu) {
  if (t == 0.0) return 0.5;
  const double t2 = t * t;
  if (t2 < nu) {
    // central region: I_{t^2/(nu+t^2)}(1/2, nu/2) is accurate near zero
    const double central = special::incomplete_beta(0.5, 0.5 * nu, t2 / (nu + t2));
    return t > 0.0 ? 0.5 + 0.5 * central : 0.5 - 0.5 * central;
  }
  const double tail = 0.5 * special::incomplete_beta(0.5 * nu, 0.5, nu / (nu + t2));
  return t > 0.0 ? 1.0 - tail : tail;
}

inline double student_t_standard_log_pdf(double t, double nu) {
  return special::lgamma(0.5 * (nu + 1.0)) - special::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
         0.5 * (nu + 1.0) * std::log1p(t * t / nu);
}

// Bisection safeguarded Newton iteration on the standard Student-t CDF.
inline double student_t_standard_quantile(double p, double nu) {
  if (p == 0.5) return 0.0;
  const double bound = std::max(10.0, 10.0 * std::sqrt(nu));
  double lo = -bound;
  double hi = bound;
  while (student_t_standard_cdf(lo, nu) > p) lo *= 2.0;
  while (student_t_standard_cdf(hi, nu) < p) hi *= 2.0;
  double x = std::clamp(special::normal_quantile(p), lo, hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double f = student_t_standard_cdf(x, nu) - p;
    if (f == 0.0) break;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double density = std::exp(student_t_standard_log_pdf(x, nu));
    double next = density > 0.0 ? x - f / density : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * (1.0 + std::abs(x))) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

inline constexpr std::size_t kCrpsGridSize = 100;

// Midpoint levels (j + 0.5) / 100 for j = 0..99, i.e. 0.005, 0.015, ..., 0.995.
inline double crps_grid_level(std::size_t j) {
  return (static_cast<double>(j) + 0.5) / static_cast<double>(kCrpsGridSize);
}

}  // namespace detail

inline double cdf(const PredictiveDistribution& d, double y) {
  const double z = (y - d.mu) / d.sigma;
  if (d.family == Likelihood::gaussian) return special::normal_cdf(z);
  return detail::student_t_standard_cdf(z, d.nu);
}

inline double quantile(const PredictiveDistribution& d, double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("quantile: p must lie in (0, 1), got " + std::to_string(p));
  if (d.family == Likelihood::gaussian) return d.mu + d.sigma * special::normal_quantile(p);
  return d.mu + d.sigma * detail::student_t_standard_quantile(p, d.nu);
}

/// Standard Student-t quantiles on the CRPS midpoint grid.
inline std::array<double, detail::kCrpsGridSize> student_t_crps_grid(double nu) {
  std::array<double, detail::kCrpsGridSize> q{};
  for (std::size_t j = 0; j < q.size(); ++j) q[j] = detail::student_t_standard_quantile(detail::crps_grid_level(j), nu);
  return q;
}

/// CRPS from precomputed standard quantiles: (2 / |G|) * sum_alpha pinball_alpha(q_alpha, y).
inline double crps_from_grid(const std::array<double, detail::kCrpsGridSize>& standard_q, double mu, double sigma,
                             double y) {
  double total = 0.0;
  for (std::size_t j = 0; j < standard_q.size(); ++j) {
    total += pinball(mu + sigma * standard_q[j], y, detail::crps_grid_level(j));
  }
  return 2.0 * total / static_cast<double>(standard_q.size());
}

/// Gaussian: closed form. Student-t: 100-point quantile-grid approximation.
inline double crps(const PredictiveDistribution& d, double y) {
  if (d.family == Likelihood::gaussian) {
    const double z = (y - d.mu) / d.sigma;
    return d.sigma * (z * (2.0 * special::normal_cdf(z) - 1.0) + 2.0 * special::normal_pdf(z) -
                      1.0 / std::sqrt(std::numbers::pi));
  }
  return crps_from_grid(student_t_crps_grid(d.nu), d.mu, d.sigma, y);
}

/// Elementwise log-density on the tape. `nu` is ignored for the Gaussian family.
inline Var log_pdf(Likelihood family, const Var& mu, const Var& sigma, const Var& nu, const Var& y) {
  const Var z = (y - mu) / sigma;
  if (family == Likelihood::gaussian) return (-0.5 * special::kLog2Pi) - log(sigma) - 0.5 * square(z);
  if (family != Likelihood::student_t) throw InvalidArgument("log_pdf: likelihood must be gaussian or student_t");
  const Var half_nu = nu * 0.5;
  const Var half_nu1 = (nu + 1.0) * 0.5;
  return lgamma(half_nu1) - lgamma(half_nu) - 0.5 * log(nu * std::numbers::pi) - log(sigma) -
         half_nu1 * log1p(square(z) / nu);
}

}  // namespace pkan
