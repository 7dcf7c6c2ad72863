#include "kforge/swap.hpp"

#include <stdexcept>

#include "kforge/math.hpp"

namespace kforge {

SwapIndicator SwapIndicator::from_set(int d, const std::vector<int>& idx) {
  SwapIndicator h;
  h.bits.assign(d, 0);
  h.soft = Eigen::VectorXd::Zero(d);
  for (int j : idx) {
    if (j < 0 || j >= d) throw std::invalid_argument("swap index out of range");
    h.bits[j] = 1;
    h.soft[j] = 1.0;
  }
  return h;
}

SwapIndicator SwapIndicator::none(int d) { return from_set(d, {}); }

Eigen::VectorXd SwapSampler::swap_probabilities() const {
  Eigen::VectorXd p(logits.size());
  for (Eigen::Index j = 0; j < logits.size(); ++j) p[j] = logistic(logits[j]);
  return p;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> apply_swap(const Eigen::VectorXd& x,
                                                       const Eigen::VectorXd& xt,
                                                       const SwapIndicator& h) {
  if (x.size() != xt.size() || h.size() != x.size())
    throw std::invalid_argument("swap length mismatch");
  Eigen::VectorXd u = x;
  Eigen::VectorXd ut = xt;
  for (int j = 0; j < h.size(); ++j) {
    if (h.bits[j]) {
      u[j] = xt[j];
      ut[j] = x[j];
    }
  }
  return {std::move(u), std::move(ut)};
}

double swap_log_prob(const PairLogProbFn& joint_logprob_fn, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& xt, const SwapIndicator& h) {
  const auto [u, ut] = apply_swap(x, xt, h);
  return joint_logprob_fn(u, ut);
}

SwapDraw sample_swap(const SwapSampler& sampler, Rng& rng) {
  if (!(sampler.temperature > 0.0))
    throw std::invalid_argument("temperature must be positive");
  const int d = static_cast<int>(sampler.logits.size());
  SwapDraw draw;
  draw.indicator.bits.assign(d, 0);
  draw.indicator.soft.resize(d);
  draw.pathgrad_logits.resize(d);
  for (int j = 0; j < d; ++j) {
    const double g1 = rng.gumbel();
    const double g2 = rng.gumbel();
    const double soft =
        logistic((sampler.logits[j] + g1 - g2) / sampler.temperature);
    draw.indicator.soft[j] = soft;
    draw.indicator.bits[j] = soft >= 0.5 ? 1 : 0;
    draw.pathgrad_logits[j] = soft * (1.0 - soft) / sampler.temperature;
  }
  return draw;
}

}  // namespace kforge
