#ifndef KFORGE_MDN_HPP
#define KFORGE_MDN_HPP

#include <vector>

#include <Eigen/Dense>

#include "kforge/gmm.hpp"
#include "kforge/rng.hpp"

namespace kforge {

// Conditional density network: maps a conditioning vector to the parameters
// of a univariate Gaussian mixture. Three rectifier layers of width 50, a
// skip connection from the input added to the last hidden layer before its
// nonlinearity, and three affine heads (softmax weights, means, raw stddevs
// exponentiated then floored).
//
// Parameters live in one flat vector so gradients align coordinate-by-
// coordinate with the trainable parameters. With input_dim = 0 the network
// is a learned unconditional mixture.
class ConditionalDensityNetwork {
 public:
  static constexpr int kHidden = 50;

  ConditionalDensityNetwork(int input_dim, int components);

  // Evenly spaced initial means on [lo, hi], raw-stddev biases giving an
  // initial sigma of (hi - lo) / (2K), uniform fan-in weight scaling.
  static ConditionalDensityNetwork initialized(int input_dim, int components,
                                               double lo, double hi, Rng& rng);

  int input_dim() const { return input_dim_; }
  int components() const { return components_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  // Flat-vector offsets of selected blocks; fixtures use these to craft
  // networks with exact behavior.
  int offset_weights_bias() const { return layout_.bpi; }
  int offset_means_bias() const { return layout_.bmu; }
  int offset_stddevs_bias() const { return layout_.bsg; }
  int offset_means_weights() const { return layout_.wmu; }
  int offset_skip_weights() const { return layout_.ws; }
  int offset_hidden3_bias() const { return layout_.b3; }

  GaussianMixture1D forward(const Eigen::VectorXd& cond) const;

  struct LogProbResult {
    double logp = 0.0;
    Eigen::VectorXd d_params;
    Eigen::VectorXd d_cond;
    double d_z = 0.0;
  };
  // Exact log density and its gradients with respect to the parameters,
  // the conditioning vector, and the evaluation point.
  LogProbResult logprob_backward(const Eigen::VectorXd& cond, double z) const;

  struct SampleResult {
    double z = 0.0;
    Eigen::VectorXd d_params;  // pathwise dz/dparams
    Eigen::VectorXd d_cond;    // pathwise dz/dcond
    bool underflow = false;
  };
  SampleResult sample_backward(const Eigen::VectorXd& cond, Rng& rng) const;

  // ---- Batched interface (columns are instances) ----

  struct BatchCache {
    Eigen::MatrixXd cond;            // input_dim x n
    Eigen::MatrixXd a1, a2, a3;      // pre-activations, kHidden x n
    Eigen::MatrixXd h1, h2, h3;      // rectified activations
    Eigen::MatrixXd pi, mu, sigma;   // K x n mixture parameters
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> sigma_free;  // exp not floored
    int n() const { return static_cast<int>(cond.cols()); }
  };

  BatchCache forward_batch(const Eigen::MatrixXd& cond) const;

  GaussianMixture1D mixture_at(const BatchCache& cache, int i) const;

  // Adjoints at the raw head outputs (pre softmax / exp), K x n each.
  struct HeadSeeds {
    Eigen::MatrixXd pi, mu, sg;
  };

  struct BatchLogProb {
    Eigen::VectorXd logp;  // per row
    HeadSeeds seeds;       // d logp / d raw heads, per row
    Eigen::VectorXd d_z;   // d logp / d z, per row
  };
  BatchLogProb logprob_seeds(const BatchCache& cache, const Eigen::VectorXd& zs) const;

  // Pathwise dz/d(raw heads) for samples zs drawn from the per-row
  // mixtures. Rows whose density underflowed get zero seeds and a flag.
  HeadSeeds sample_seeds(const BatchCache& cache, const Eigen::VectorXd& zs,
                         std::vector<bool>* underflow = nullptr) const;

  // One reverse pass shared by input and parameter gradients.
  //   d_cond   — per-row input gradients (input_dim x n), if non-null.
  //   grad     — accumulates sum_i weights[i] * dparams_i, if non-null.
  void backward(const BatchCache& cache, const HeadSeeds& seeds,
                Eigen::MatrixXd* d_cond, const Eigen::VectorXd* weights,
                Eigen::VectorXd* grad) const;

 private:
  struct Layout {
    int w1, b1, w2, b2, w3, b3, ws;
    int wpi, bpi, wmu, bmu, wsg, bsg;
    int total;
  };
  static Layout make_layout(int input_dim, int components);

  template <typename Derived>
  auto mat(Derived& v, int off, int rows, int cols) const {
    return Eigen::Map<std::conditional_t<std::is_const_v<Derived>,
                                         const Eigen::MatrixXd, Eigen::MatrixXd>>(
        v.data() + off, rows, cols);
  }

  int input_dim_;
  int components_;
  Layout layout_;
  Eigen::VectorXd params_;
};

// Test and fixture helper: a network with uniformly random parameters whose
// output mixtures stay numerically tame.
ConditionalDensityNetwork random_network(int input_dim, int components, Rng& rng,
                                         double scale = 0.5);

// A network that ignores its input and always emits the given mixture.
ConditionalDensityNetwork constant_network(int input_dim, const GaussianMixture1D& gmm);

}  // namespace kforge

#endif
