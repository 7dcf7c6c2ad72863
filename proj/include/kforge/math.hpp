#ifndef KFORGE_MATH_HPP
#define KFORGE_MATH_HPP

#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace kforge {

inline constexpr double kLogTwoPi = 1.8378770664093454836;
inline constexpr double kSqrtTwo = 1.4142135623730950488;

// Standard normal CDF via the complementary error function.
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / kSqrtTwo); }

// Standard normal log density.
inline double norm_log_pdf(double z) { return -0.5 * (z * z + kLogTwoPi); }

inline double norm_pdf(double z) { return std::exp(norm_log_pdf(z)); }

// Inverse standard normal CDF. Rational initial guess (Acklam) polished
// with one Halley step against erfc, giving ~1e-15 absolute accuracy.
double norm_cdf_inv(double p);

// log(sum_i exp(v[i])) without overflow. Returns -inf for empty input.
inline double log_sum_exp(const Eigen::VectorXd& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline double logistic(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace kforge

#endif
