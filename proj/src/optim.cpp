#include "kforge/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace kforge {

void TrainConfig::validate() const {
  if (!(lr_phi > 0.0 && lr_beta > 0.0 && lr_joint > 0.0))
    throw std::invalid_argument("learning rates must be positive");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs_joint < 1 || max_epochs_knockoff < 1)
    throw std::invalid_argument("epoch limits must be positive");
  if (patience < 0) throw std::invalid_argument("patience must be nonnegative");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (mixture_components < 1)
    throw std::invalid_argument("mixture_components must be positive");
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
               double lr) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step shape mismatch");
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  state.t += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v.array() + (1.0 - beta2) * grad.array().square();
  const double c1 = 1.0 - std::pow(beta1, double(state.t));
  const double c2 = 1.0 - std::pow(beta2, double(state.t));
  params.array() -=
      lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

}  // namespace kforge
