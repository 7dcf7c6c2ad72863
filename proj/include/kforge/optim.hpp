#ifndef KFORGE_OPTIM_HPP
#define KFORGE_OPTIM_HPP

#include <cstdint>

#include <Eigen/Dense>

namespace kforge {

// Hyperparameters for both training stages. Defaults follow the reference
// settings: joint model at 5e-4 for up to 50 epochs, knockoff model at
// 1e-3 (phi) / 1e-2 (beta) for up to 250 epochs.
struct TrainConfig {
  double lambda = 0.1;          // entropy-regularization weight
  double lr_phi = 1e-3;
  double lr_beta = 1e-2;
  double lr_joint = 5e-4;
  int max_epochs_joint = 50;
  int max_epochs_knockoff = 250;
  int batch_size = 64;
  int patience = 25;            // early-stopping epochs
  double temperature = 0.5;     // Gumbel-Softmax temperature, fixed
  std::uint64_t seed = 0;
  int mixture_components = 5;   // K for every conditional density network

  // Throws std::invalid_argument on non-positive rates or negative lambda.
  void validate() const;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;

  explicit AdamState(Eigen::Index n)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

// Standard Adam update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8, bias
// correction), descending along grad.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
               double lr);

}  // namespace kforge

#endif
