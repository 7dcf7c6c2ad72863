#ifndef KFORGE_BENCHMARKS_HPP
#define KFORGE_BENCHMARKS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kforge/data.hpp"
#include "kforge/filter.hpp"
#include "kforge/optim.hpp"
#include "kforge/rng.hpp"

namespace kforge {

struct BenchmarkSpec {
  enum class Kind { gaussian, mixture, gene_response };
  Kind kind = Kind::gaussian;
  int n = 2000;
  int d = 30;   // desk-scale default; the full-scale runs use d = 100
  int m = 10;   // important features, placed first
  std::vector<double> rho = {0.6};  // one entry per mixture component
  std::vector<double> mixture_centers = {0.0, 20.0, 40.0};
  std::vector<double> mixture_weights = {0.4, 0.2, 0.4};
  double lambda = 0.1;
  double split_train = 0.70;
  double split_val = 0.15;
  double split_test = 0.15;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  void validate() const;
};

// Synthetic generators. The response is N(<x, alpha>, 1) with
// alpha_j = +-100/sqrt(N) on the first m coordinates (Rademacher signs
// drawn once per replication); the gene kind swaps in the nonlinear
// response below.
Dataset gen_gaussian(const BenchmarkSpec& spec, Rng& rng);
Dataset gen_mixture(const BenchmarkSpec& spec, Rng& rng);
Dataset gen_dataset(const BenchmarkSpec& spec, Rng& rng);

struct GeneCoefficients {
  Eigen::VectorXd phi1, phi2, phi3, phi4, phi5, phi6;  // each of length m/4
  static GeneCoefficients draw(int m, Rng& rng);
};

// Nonlinear response: two first-order terms, one interaction, and a tanh
// term per block of four important features.
double gene_response(const Eigen::VectorXd& x, const GeneCoefficients& phis, double noise);

// AR(1)-correlated covariance with entries rho^|i-j|.
Eigen::MatrixXd ar_covariance(int d, double rho);

// Exact model-X Gaussian knockoffs for x ~ N(0, sigma), equicorrelated
// construction with s_j = min(1, 2 lambda_min(sigma)). A test fixture that
// isolates filter correctness from generative model quality.
class GaussianKnockoffOracle {
 public:
  explicit GaussianKnockoffOracle(const Eigen::MatrixXd& sigma);
  Eigen::MatrixXd sample(const Eigen::MatrixXd& x, Rng& rng) const;
  double s_value() const { return s_; }

 private:
  double s_ = 0.0;
  Eigen::MatrixXd mean_map_;  // I - D sigma^{-1}
  Eigen::MatrixXd cov_sqrt_;
};

struct MethodConfig {
  enum class KnockoffSource { ddlk, oracle };
  enum class Statistic { hrt, mixture };
  KnockoffSource source = KnockoffSource::ddlk;
  Statistic statistic = Statistic::hrt;
  ResponseModel::Options response;
  TrainConfig train;
  std::vector<double> p_grid = {0.05, 0.10, 0.15, 0.20, 0.25,
                                0.30, 0.35, 0.40, 0.45, 0.50};
};

struct LevelResult {
  double p = 0.0;
  double fdp = 0.0;
  double power = 0.0;
  double tau = 0.0;
  int n_selected = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  Eigen::VectorXd w;
  std::vector<LevelResult> levels;
  double conditional_entropy = 0.0;  // ddlk runs only
  std::vector<int> truth;  // the generator's important set, recorded for audit
  Eigen::MatrixXd x_test;
  Eigen::MatrixXd knockoffs_test;
};

struct CurvePoint {
  double p = 0.0;
  double mean_fdp = 0.0, se_fdp = 0.0;
  double mean_power = 0.0, se_power = 0.0;
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  std::vector<CurvePoint> curve;  // over non-failed seeds
  int failed_seeds = 0;
};

// Full per-seed pipeline: generate, split 70/15/15, stage 1, stage 2,
// sample knockoffs, statistics, threshold sweep, FDP/power accounting.
// Seeds run independently; KNOCKOFF_FORGE_THREADS caps the worker count.
// The truth set never reaches the fitting stages (only fdp_and_power
// receives it).
ExperimentResult run_experiment(const BenchmarkSpec& spec, const MethodConfig& method,
                                Rng& rng);

// Aggregation used by run_experiment, exposed for cross-checks.
std::vector<CurvePoint> aggregate_curve(const std::vector<SeedResult>& seeds,
                                        const std::vector<double>& p_grid);

// Worker cap: KNOCKOFF_FORGE_THREADS, else hardware concurrency.
int thread_cap();

}  // namespace kforge

#endif
