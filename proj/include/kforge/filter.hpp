#ifndef KFORGE_FILTER_HPP
#define KFORGE_FILTER_HPP

#include <vector>

#include <Eigen/Dense>

#include "kforge/rng.hpp"

namespace kforge {

struct KnockoffStatistics {
  Eigen::VectorXd w;
};

struct SelectionResult {
  std::vector<int> selected;  // j with w_j >= threshold
  double threshold = std::numeric_limits<double>::infinity();  // tau_p
  double nominal_level = 0.0;
};

// Knockoff+ threshold: the smallest t among the nonzero |w_j| with
// (1 + #{j : w_j <= -t}) / #{j : w_j >= t} <= p. No qualifying t leaves
// the selection empty with an infinite threshold.
SelectionResult knockoff_threshold(const KnockoffStatistics& stats, double p);

// Predictive model for the response, used to score feature importance.
// Either a 1-hidden-layer network (200 rectifier units, Adam, early
// stopping) or a closed-form ridge regression.
class ResponseModel {
 public:
  enum class Kind { neural, ridge };

  struct Options {
    Kind kind = Kind::neural;
    int hidden_units = 200;
    double lr = 1e-3;
    int max_epochs = 100;
    int patience = 10;
    int batch_size = 64;
    double val_fraction = 0.15;   // internal early-stopping split
    double ridge_penalty = 1e-3;  // scaled by the training row count
  };

  static ResponseModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Options& options, Rng& rng);

  // A fixed linear scorer; mostly a test fixture.
  static ResponseModel linear(const Eigen::VectorXd& coef, double intercept,
                              bool binary = false);

  // Raw predictions: conditional mean for real responses, logit for binary.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  // Performance measure W, oriented so larger is better: negated mean
  // squared error for real responses, mean log-likelihood for binary ones.
  double performance(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const;

  bool binary() const { return binary_; }

 private:
  bool binary_ = false;
  bool linear_ = false;
  Eigen::VectorXd x_mean_, x_scale_;
  double y_mean_ = 0.0;
  // neural parameters
  Eigen::MatrixXd w1_;
  Eigen::VectorXd b1_;
  Eigen::VectorXd w2_;
  double b2_ = 0.0;
  // linear parameters
  Eigen::VectorXd coef_;
  double intercept_ = 0.0;
};

// Holdout-randomization performance gap: w_j is the drop in test
// performance when column j is replaced by its knockoff column.
KnockoffStatistics hrt_statistics(const ResponseModel& model, const Eigen::MatrixXd& x_test,
                                  const Eigen::VectorXd& y_test,
                                  const Eigen::MatrixXd& knockoffs_test);

struct MixtureStatisticsResult {
  KnockoffStatistics stats;
  int model_fits = 0;
};

// Per-feature variant: refits the response model on an equal mixture of the
// training rows and the rows with feature j knockoffed, then scores the
// same performance gap. Trades power for tighter null calibration.
MixtureStatisticsResult mixture_statistics(
    const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
    const Eigen::MatrixXd& knockoffs_train, const Eigen::MatrixXd& x_test,
    const Eigen::VectorXd& y_test, const Eigen::MatrixXd& knockoffs_test,
    const ResponseModel::Options& options, Rng& rng);

struct FdpPower {
  double fdp = 0.0;
  double power = 0.0;
  bool empty_truth = false;  // power reported as 0 by convention
};

FdpPower fdp_and_power(const std::vector<int>& selected, const std::vector<int>& truth);

}  // namespace kforge

#endif
