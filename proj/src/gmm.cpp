#include "kforge/gmm.hpp"

#include <cmath>
#include <stdexcept>

#include "kforge/math.hpp"

namespace kforge {

void validate(const GaussianMixture1D& gmm) {
  const auto k = gmm.weights.size();
  if (k < 1) throw std::invalid_argument("mixture needs at least one component");
  if (gmm.means.size() != k || gmm.stddevs.size() != k)
    throw std::invalid_argument("mixture parameter lengths disagree");
  if ((gmm.weights.array() < 0.0).any())
    throw std::invalid_argument("mixture weights must be nonnegative");
  if (std::abs(gmm.weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("mixture weights must sum to 1");
  if ((gmm.stddevs.array() < kSigmaFloor).any())
    throw std::invalid_argument("mixture stddev below floor");
  if (!gmm.means.allFinite() || !gmm.stddevs.allFinite())
    throw std::invalid_argument("mixture parameters must be finite");
}

double mixture_log_prob(const GaussianMixture1D& gmm, double z) {
  if (!std::isfinite(z)) throw std::invalid_argument("invalid input");
  const int k = gmm.components();
  Eigen::VectorXd terms(k);
  for (int i = 0; i < k; ++i) {
    const double t = (z - gmm.means[i]) / gmm.stddevs[i];
    const double logw = gmm.weights[i] > 0.0
                            ? std::log(gmm.weights[i])
                            : -std::numeric_limits<double>::infinity();
    terms[i] = logw + norm_log_pdf(t) - std::log(gmm.stddevs[i]);
  }
  return log_sum_exp(terms);
}

double mixture_cdf(const GaussianMixture1D& gmm, double z) {
  if (!std::isfinite(z)) throw std::invalid_argument("invalid input");
  double acc = 0.0;
  for (int i = 0; i < gmm.components(); ++i)
    acc += gmm.weights[i] * norm_cdf((z - gmm.means[i]) / gmm.stddevs[i]);
  return acc;
}

SamplePathGradients mixture_path_gradients(const GaussianMixture1D& gmm, double z) {
  const int k = gmm.components();
  SamplePathGradients g;
  g.d_weights.resize(k);
  g.d_means.resize(k);
  g.d_stddevs.resize(k);

  const double logq = mixture_log_prob(gmm, z);
  const double q = std::exp(logq);
  if (!(q >= kDensityFloor)) {
    g.d_weights.setZero();
    g.d_means.setZero();
    g.d_stddevs.setZero();
    g.underflow = true;
    return g;
  }
  for (int i = 0; i < k; ++i) {
    const double t = (z - gmm.means[i]) / gmm.stddevs[i];
    // pi_k N_k / q in the log domain; exact when pi_k = 0 (limit 0 unless
    // the component still dominates, which it cannot).
    const double logw = gmm.weights[i] > 0.0
                            ? std::log(gmm.weights[i])
                            : -std::numeric_limits<double>::infinity();
    const double resp =
        std::exp(logw + norm_log_pdf(t) - std::log(gmm.stddevs[i]) - logq);
    g.d_means[i] = resp;
    g.d_stddevs[i] = resp * t;
    g.d_weights[i] = -norm_cdf(t) / q;
  }
  return g;
}

double mixture_sample_value(const GaussianMixture1D& gmm, double u1, double u2) {
  // Component pick by inverse CDF over the categorical weights: one
  // uniform draw keeps the stream layout fixed.
  int comp = gmm.components() - 1;
  double cum = 0.0;
  for (int i = 0; i < gmm.components(); ++i) {
    cum += gmm.weights[i];
    if (u1 <= cum) {
      comp = i;
      break;
    }
  }
  return gmm.means[comp] + gmm.stddevs[comp] * norm_cdf_inv(u2);
}

MixtureSample mixture_sample(const GaussianMixture1D& gmm, Rng& rng) {
  validate(gmm);
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  MixtureSample out;
  out.z = mixture_sample_value(gmm, u1, u2);
  out.grads = mixture_path_gradients(gmm, out.z);
  return out;
}

}  // namespace kforge
