#ifndef KFORGE_TRAINER_HPP
#define KFORGE_TRAINER_HPP

#include <vector>

#include <Eigen/Dense>

#include "kforge/autoregressive.hpp"
#include "kforge/errors.hpp"
#include "kforge/optim.hpp"
#include "kforge/swap.hpp"

namespace kforge {

// Batch value of the two halves of the minimax objective:
//   A = mean[ log q_joint(x) + (1 + lambda) log q_knockoff(xt | x) ]
//   B = mean[ log q_joint(u) + log q_knockoff(ut | u) ]
// with (u, ut) the swap of (x, xt) under H.
struct ObjectiveReport {
  double a = 0.0;
  double b = 0.0;
  double objective = 0.0;  // a - b
  int epoch = 0;
};

struct ObjectiveBatchResult {
  ObjectiveReport report;
  std::vector<Eigen::VectorXd> grads_phi;  // per knockoff conditional
  Eigen::VectorXd grad_beta;               // straight-through d(A-B)/d beta
  Eigen::MatrixXd knockoffs;               // the sampled xt rows (n x d)
};

// Samples one knockoff row per batch row, applies the swap, and evaluates
// the objective with full reverse-mode gradients: the pathwise terms flow
// through the sampled knockoffs into both A and B, including the chain
// through earlier sampled coordinates feeding later conditionals; the beta
// gradient uses the relaxed soft indicator values.
//
// cached_joint_logp, when given, supplies log q_joint(x) per batch row
// (it does not depend on phi, so callers cache it across epochs).
ObjectiveBatchResult ddlk_objective_batch(const AutoregressiveModel& theta_model,
                                          const AutoregressiveModel& phi_model,
                                          const Eigen::MatrixXd& batch,
                                          const SwapDraw& swap, double lambda, Rng& rng,
                                          const Eigen::VectorXd* cached_joint_logp = nullptr);

// Value-only variant (no gradient work) used for validation scoring.
ObjectiveReport ddlk_objective_value(const AutoregressiveModel& theta_model,
                                     const AutoregressiveModel& phi_model,
                                     const Eigen::MatrixXd& batch, const SwapIndicator& h,
                                     double lambda, Rng& rng,
                                     const Eigen::VectorXd* cached_joint_logp = nullptr);

struct EpochReport {
  int epoch = 0;
  double a = 0.0;
  double b = 0.0;
  double objective = 0.0;      // train A - B, lambda included
  double val_objective = 0.0;  // validation A - B with the lambda term removed
};

struct KnockoffFitResult {
  AutoregressiveModel model;  // best-validation phi
  SwapSampler sampler;        // final beta
  std::vector<EpochReport> history;
};

class TrainingDivergenceError : public NumericError {
 public:
  TrainingDivergenceError(const std::string& what, std::vector<EpochReport> hist)
      : NumericError(what), history(std::move(hist)) {}
  std::vector<EpochReport> history;
};

// Stage 2: per mini-batch, one swap draw, one phi descent step, one beta
// ascent step. Early stopping monitors the validation objective with the
// entropy bonus removed; theta is never updated.
KnockoffFitResult fit_knockoff(const AutoregressiveModel& theta_model,
                               const Eigen::MatrixXd& data_train,
                               const Eigen::MatrixXd& data_val, const TrainConfig& config,
                               Rng& rng);

// Held-out conditional entropy estimate -mean log q_knockoff(xt | x) with
// xt freshly sampled (the regularizer's target quantity).
double conditional_entropy_estimate(const AutoregressiveModel& phi_model,
                                    const Eigen::MatrixXd& data, Rng& rng);

}  // namespace kforge

#endif
