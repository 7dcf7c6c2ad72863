#ifndef KFORGE_GMM_HPP
#define KFORGE_GMM_HPP

#include <Eigen/Dense>

#include "kforge/rng.hpp"

namespace kforge {

inline constexpr double kSigmaFloor = 1e-3;
inline constexpr double kDensityFloor = 1e-30;
// Ceiling applied by the density networks' stddev heads. Without it one
// wide-variance sample feeding the next conditional in the autoregressive
// chain can amplify through the exponential head and overflow.
inline constexpr double kSigmaCap = 100.0;

// Univariate Gaussian mixture: weights on the simplex, per-component mean
// and standard deviation. Stddevs are expected to respect kSigmaFloor.
struct GaussianMixture1D {
  Eigen::VectorXd weights;
  Eigen::VectorXd means;
  Eigen::VectorXd stddevs;

  int components() const { return static_cast<int>(weights.size()); }
};

// Throws std::invalid_argument when the invariants are violated:
// weights nonnegative summing to 1 within 1e-9, stddevs >= kSigmaFloor,
// at least one component.
void validate(const GaussianMixture1D& gmm);

// Pathwise derivatives of a mixture sample z with respect to the mixture
// parameters, obtained by implicit differentiation of the CDF.
struct SamplePathGradients {
  Eigen::VectorXd d_weights;
  Eigen::VectorXd d_means;
  Eigen::VectorXd d_stddevs;
  // Set when the density at the sample fell below kDensityFloor and the
  // gradients were clamped to zero.
  bool underflow = false;
};

struct MixtureSample {
  double z = 0.0;
  SamplePathGradients grads;
};

// log sum_k pi_k N(z; mu_k, sigma_k^2), accumulated in the log domain.
double mixture_log_prob(const GaussianMixture1D& gmm, double z);

// Mixture CDF sum_k pi_k Phi((z - mu_k) / sigma_k).
double mixture_cdf(const GaussianMixture1D& gmm, double z);

// Draws z (component index by inverse CDF on the weights, then a Gaussian)
// and evaluates the closed-form pathwise gradients at z:
//   d_weights[k] = -Phi((z - mu_k)/sigma_k) / q(z)
//   d_means[k]   = pi_k N(z; mu_k, sigma_k^2) / q(z)
//   d_stddevs[k] = pi_k ((z - mu_k)/sigma_k) N(z; mu_k, sigma_k^2) / q(z)
MixtureSample mixture_sample(const GaussianMixture1D& gmm, Rng& rng);

// Deterministic kernel behind mixture_sample: u1 picks the component, u2
// the Gaussian variate. Exposed so batched callers can pre-draw uniforms
// and keep the stream layout identical to the sequential path.
double mixture_sample_value(const GaussianMixture1D& gmm, double u1, double u2);

// Gradients at a given point z (the deterministic part of mixture_sample,
// reused when z was produced elsewhere in the same stream).
SamplePathGradients mixture_path_gradients(const GaussianMixture1D& gmm, double z);

}  // namespace kforge

#endif
