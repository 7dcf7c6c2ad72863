#ifndef KFORGE_AUTOREGRESSIVE_HPP
#define KFORGE_AUTOREGRESSIVE_HPP

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kforge/mdn.hpp"
#include "kforge/optim.hpp"
#include "kforge/rng.hpp"

namespace kforge {

// Chain-rule factorized density over d coordinates. Conditional j receives
// (base vector ++ first j modeled coordinates) in natural column order.
// base_dim = 0 gives the covariate joint model; base_dim = d gives the
// knockoff conditional model.
struct AutoregressiveModel {
  int d = 0;
  int base_dim = 0;
  std::vector<ConditionalDensityNetwork> conditionals;
  std::vector<std::pair<double, double>> support;  // per modeled feature

  int conditional_input_dim(int j) const { return base_dim + j; }

  int total_params() const;
  Eigen::VectorXd pack_params() const;
  void unpack_params(const Eigen::VectorXd& flat);
};

// Fresh model with evenly spaced initial modes over each feature's support.
AutoregressiveModel make_autoregressive(int d, int base_dim, int components,
                                        const std::vector<std::pair<double, double>>& support,
                                        Rng& rng);

// Sum of the d conditional log densities of v given base.
double model_log_prob(const AutoregressiveModel& model, const Eigen::VectorXd& base,
                      const Eigen::VectorXd& v);

// Batched log_prob: rows of `base` (n x base_dim) pair with rows of `v`
// (n x d). Returns one log density per row.
Eigen::VectorXd model_log_prob_batch(const AutoregressiveModel& model,
                                     const Eigen::MatrixXd& base, const Eigen::MatrixXd& v);

// Total derivative of log q(v | base) with respect to every coordinate of
// base and v, per row (evaluation-point and conditioning paths combined).
struct ModelInputGrads {
  Eigen::VectorXd logp;     // per row
  Eigen::MatrixXd d_base;   // n x base_dim
  Eigen::MatrixXd d_v;      // n x d
};
ModelInputGrads model_log_prob_input_grads(const AutoregressiveModel& model,
                                           const Eigen::MatrixXd& base,
                                           const Eigen::MatrixXd& v);

struct ConditionalFitHistory {
  int feature = 0;
  std::vector<double> train_nll;
  std::vector<double> val_nll;
  int best_epoch = 0;
  double best_val_nll = 0.0;
};

struct JointFitResult {
  AutoregressiveModel model;
  std::vector<ConditionalFitHistory> history;
};

// Stage 1: maximum-likelihood fit of the covariate joint model, one Adam
// run per conditional with early stopping on the provided validation set.
// The caller supplies the train/validation split.
JointFitResult fit_joint(const Eigen::MatrixXd& train, const Eigen::MatrixXd& val,
                         const TrainConfig& config, Rng& rng);

// Pathwise sampling records for one knockoff vector. The per-coordinate
// pieces are the direct derivatives of each sampled coordinate; chaining
// across the autoregressive order is handled by chain_adjoint and the
// precomputed dxt_dbase Jacobian.
struct KnockoffPathGrads {
  std::vector<Eigen::VectorXd> d_params;  // j: dz_j / d(params of conditional j)
  std::vector<Eigen::VectorXd> d_cond;    // j: dz_j / d(cond_j)
  std::vector<bool> underflow;
  Eigen::MatrixXd dxt_dbase;              // chained d x base_dim Jacobian
};

struct KnockoffSample {
  Eigen::VectorXd xt;
  KnockoffPathGrads grads;
};

KnockoffSample sample_knockoffs(const AutoregressiveModel& kmodel, const Eigen::VectorXd& x,
                                Rng& rng);

// Sampling without gradient records (CLI path).
Eigen::VectorXd sample_knockoffs_value(const AutoregressiveModel& kmodel,
                                       const Eigen::VectorXd& x, Rng& rng);

// Batched equivalent of repeated sample_knockoffs_value calls: consumes the
// stream in row-major order, so results match the sequential path exactly.
Eigen::MatrixXd sample_knockoffs_batch(const AutoregressiveModel& kmodel,
                                       const Eigen::MatrixXd& x, Rng& rng);

// Distributes an adjoint dL/dxt backward through the sampling chain.
struct ChainedAdjoint {
  std::vector<Eigen::VectorXd> d_params;  // per conditional
  Eigen::VectorXd d_base;
};
ChainedAdjoint chain_adjoint(const AutoregressiveModel& kmodel,
                             const KnockoffPathGrads& grads,
                             const Eigen::VectorXd& dl_dxt);

}  // namespace kforge

#endif
