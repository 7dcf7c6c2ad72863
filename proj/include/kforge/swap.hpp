#ifndef KFORGE_SWAP_HPP
#define KFORGE_SWAP_HPP

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kforge/rng.hpp"

namespace kforge {

// Binary swap indicator over d coordinates. The hard bits drive every
// forward computation; the relaxed soft values exist only for gradient
// accumulation (straight-through).
struct SwapIndicator {
  std::vector<int> bits;
  Eigen::VectorXd soft;

  int size() const { return static_cast<int>(bits.size()); }

  static SwapIndicator from_set(int d, const std::vector<int>& idx);
  static SwapIndicator none(int d);
};

// Relaxed-Bernoulli swap distribution: per-coordinate logits and a shared
// Gumbel-Softmax temperature.
struct SwapSampler {
  Eigen::VectorXd logits;
  double temperature = 0.5;

  SwapSampler() : logits(0) {}
  explicit SwapSampler(int d, double temp = 0.5)
      : logits(Eigen::VectorXd::Zero(d)), temperature(temp) {}

  // Per-coordinate swap probability implied by the logits, P(bit = 1).
  Eigen::VectorXd swap_probabilities() const;
};

struct SwapDraw {
  SwapIndicator indicator;
  // d soft_j / d beta_j = soft (1 - soft) / temperature.
  Eigen::VectorXd pathgrad_logits;
};

// Exchanges x_j and xt_j on the coordinates flagged in H.
std::pair<Eigen::VectorXd, Eigen::VectorXd> apply_swap(const Eigen::VectorXd& x,
                                                       const Eigen::VectorXd& xt,
                                                       const SwapIndicator& h);

using PairLogProbFn = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// Log density of the swapped distribution at (x, xt): the unswapped scorer
// evaluated at the swapped point.
double swap_log_prob(const PairLogProbFn& joint_logprob_fn, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& xt, const SwapIndicator& h);

// One relaxed-Bernoulli draw per coordinate: two standard Gumbel variates,
// a logistic squashing at the given temperature, and a hard rounding.
SwapDraw sample_swap(const SwapSampler& sampler, Rng& rng);

}  // namespace kforge

#endif
