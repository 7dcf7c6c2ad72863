#include "kforge/mdn.hpp"

#include <cmath>
#include <stdexcept>

#include "kforge/math.hpp"

namespace kforge {

ConditionalDensityNetwork::Layout ConditionalDensityNetwork::make_layout(int input_dim,
                                                                         int components) {
  const int h = kHidden;
  const int k = components;
  Layout l{};
  int off = 0;
  l.w1 = off;
  off += h * input_dim;
  l.b1 = off;
  off += h;
  l.w2 = off;
  off += h * h;
  l.b2 = off;
  off += h;
  l.w3 = off;
  off += h * h;
  l.b3 = off;
  off += h;
  l.ws = off;
  off += h * input_dim;
  l.wpi = off;
  off += k * h;
  l.bpi = off;
  off += k;
  l.wmu = off;
  off += k * h;
  l.bmu = off;
  off += k;
  l.wsg = off;
  off += k * h;
  l.bsg = off;
  off += k;
  l.total = off;
  return l;
}

ConditionalDensityNetwork::ConditionalDensityNetwork(int input_dim, int components)
    : input_dim_(input_dim), components_(components) {
  if (components < 1) throw std::invalid_argument("component count must be positive");
  if (input_dim < 0) throw std::invalid_argument("input_dim must be nonnegative");
  layout_ = make_layout(input_dim, components);
  params_ = Eigen::VectorXd::Zero(layout_.total);
}

ConditionalDensityNetwork ConditionalDensityNetwork::initialized(int input_dim,
                                                                 int components, double lo,
                                                                 double hi, Rng& rng) {
  if (!(lo < hi)) throw std::invalid_argument("data support requires lo < hi");
  ConditionalDensityNetwork net(input_dim, components);
  const int h = kHidden;
  const int k = components;
  auto fill_uniform = [&rng, &net](int off, int count, double bound) {
    for (int i = 0; i < count; ++i) net.params_[off + i] = rng.uniform(-bound, bound);
  };
  const double in_bound = input_dim > 0 ? 1.0 / std::sqrt(double(input_dim)) : 0.0;
  const double hid_bound = 1.0 / std::sqrt(double(h));
  fill_uniform(net.layout_.w1, h * input_dim, in_bound);
  fill_uniform(net.layout_.w2, h * h, hid_bound);
  fill_uniform(net.layout_.w3, h * h, hid_bound);
  fill_uniform(net.layout_.ws, h * input_dim, in_bound);
  fill_uniform(net.layout_.wpi, k * h, hid_bound);
  fill_uniform(net.layout_.wmu, k * h, hid_bound);
  fill_uniform(net.layout_.wsg, k * h, hid_bound);
  // Hidden and weight-head biases stay zero, so at zero input the heads
  // emit exactly their biases: evenly spaced means over the support and a
  // stddev wide enough to cover the gaps between adjacent modes.
  for (int i = 0; i < k; ++i) {
    net.params_[net.layout_.bmu + i] =
        (k == 1) ? 0.5 * (lo + hi) : lo + double(i) * (hi - lo) / double(k - 1);
  }
  const double sigma0 = std::max((hi - lo) / (2.0 * double(k)), kSigmaFloor);
  for (int i = 0; i < k; ++i) net.params_[net.layout_.bsg + i] = std::log(sigma0);
  return net;
}

ConditionalDensityNetwork::BatchCache ConditionalDensityNetwork::forward_batch(
    const Eigen::MatrixXd& cond) const {
  if (cond.rows() != input_dim_) throw std::invalid_argument("conditioning length mismatch");
  const int n = static_cast<int>(cond.cols());
  const int h = kHidden;
  const int k = components_;
  const auto w1 = mat(params_, layout_.w1, h, input_dim_);
  const auto w2 = mat(params_, layout_.w2, h, h);
  const auto w3 = mat(params_, layout_.w3, h, h);
  const auto ws = mat(params_, layout_.ws, h, input_dim_);
  const auto wpi = mat(params_, layout_.wpi, k, h);
  const auto wmu = mat(params_, layout_.wmu, k, h);
  const auto wsg = mat(params_, layout_.wsg, k, h);
  const auto b1 = params_.segment(layout_.b1, h);
  const auto b2 = params_.segment(layout_.b2, h);
  const auto b3 = params_.segment(layout_.b3, h);
  const auto bpi = params_.segment(layout_.bpi, k);
  const auto bmu = params_.segment(layout_.bmu, k);
  const auto bsg = params_.segment(layout_.bsg, k);

  BatchCache c;
  c.cond = cond;
  c.a1.noalias() = w1 * cond;
  c.a1.colwise() += b1;
  c.h1 = c.a1.cwiseMax(0.0);
  c.a2.noalias() = w2 * c.h1;
  c.a2.colwise() += b2;
  c.h2 = c.a2.cwiseMax(0.0);
  c.a3.noalias() = w3 * c.h2;
  if (input_dim_ > 0) c.a3.noalias() += ws * cond;
  c.a3.colwise() += b3;
  c.h3 = c.a3.cwiseMax(0.0);

  Eigen::MatrixXd raw_pi = (wpi * c.h3).colwise() + bpi;
  c.mu = (wmu * c.h3).colwise() + bmu;
  Eigen::MatrixXd raw_sg = (wsg * c.h3).colwise() + bsg;

  c.pi.resize(k, n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd shifted = raw_pi.col(i).array() - raw_pi.col(i).maxCoeff();
    const Eigen::VectorXd e = shifted.array().exp();
    c.pi.col(i) = e / e.sum();
  }
  Eigen::MatrixXd sig_exp = raw_sg.array().min(710.0).exp();
  c.sigma_free = sig_exp.array() >= kSigmaFloor && sig_exp.array() <= kSigmaCap;
  c.sigma = sig_exp.cwiseMax(kSigmaFloor).cwiseMin(kSigmaCap);
  return c;
}

GaussianMixture1D ConditionalDensityNetwork::mixture_at(const BatchCache& cache,
                                                        int i) const {
  GaussianMixture1D gmm;
  gmm.weights = cache.pi.col(i);
  gmm.means = cache.mu.col(i);
  gmm.stddevs = cache.sigma.col(i);
  return gmm;
}

GaussianMixture1D ConditionalDensityNetwork::forward(const Eigen::VectorXd& cond) const {
  return mixture_at(forward_batch(cond), 0);
}

ConditionalDensityNetwork::BatchLogProb ConditionalDensityNetwork::logprob_seeds(
    const BatchCache& cache, const Eigen::VectorXd& zs) const {
  const int n = cache.n();
  const int k = components_;
  if (zs.size() != n) throw std::invalid_argument("evaluation point count mismatch");
  BatchLogProb out;
  out.logp.resize(n);
  out.d_z.resize(n);
  out.seeds.pi.resize(k, n);
  out.seeds.mu.resize(k, n);
  out.seeds.sg.resize(k, n);
  for (int i = 0; i < n; ++i) {
    const auto pi = cache.pi.col(i);
    const auto mu = cache.mu.col(i);
    const auto sg = cache.sigma.col(i);
    const Eigen::ArrayXd t = (zs[i] - mu.array()) / sg.array();
    const Eigen::ArrayXd log_terms =
        pi.array().log() - 0.5 * (t * t + kLogTwoPi) - sg.array().log();
    const double logp = log_sum_exp(log_terms.matrix());
    const Eigen::ArrayXd resp = (log_terms - logp).exp();
    out.logp[i] = logp;
    out.seeds.mu.col(i) = (resp * t / sg.array()).matrix();
    out.seeds.sg.col(i) =
        (resp * (t * t - 1.0) *
         cache.sigma_free.col(i).cast<double>().array())
            .matrix();
    out.seeds.pi.col(i) = (resp - pi.array()).matrix();
    out.d_z[i] = -out.seeds.mu.col(i).sum();
  }
  return out;
}

ConditionalDensityNetwork::HeadSeeds ConditionalDensityNetwork::sample_seeds(
    const BatchCache& cache, const Eigen::VectorXd& zs,
    std::vector<bool>* underflow) const {
  const int n = cache.n();
  const int k = components_;
  if (zs.size() != n) throw std::invalid_argument("sample count mismatch");
  HeadSeeds seeds;
  seeds.pi.resize(k, n);
  seeds.mu.resize(k, n);
  seeds.sg.resize(k, n);
  if (underflow) underflow->assign(n, false);
  for (int i = 0; i < n; ++i) {
    GaussianMixture1D gmm = mixture_at(cache, i);
    const SamplePathGradients g = mixture_path_gradients(gmm, zs[i]);
    if (g.underflow) {
      seeds.pi.col(i).setZero();
      seeds.mu.col(i).setZero();
      seeds.sg.col(i).setZero();
      if (underflow) (*underflow)[i] = true;
      continue;
    }
    seeds.mu.col(i) = g.d_means;
    seeds.sg.col(i) = (g.d_stddevs.array() * gmm.stddevs.array() *
                       cache.sigma_free.col(i).cast<double>().array())
                          .matrix();
    // Softmax Jacobian applied to the unconstrained weight partials.
    const double inner = gmm.weights.dot(g.d_weights);
    seeds.pi.col(i) =
        (gmm.weights.array() * (g.d_weights.array() - inner)).matrix();
  }
  return seeds;
}

void ConditionalDensityNetwork::backward(const BatchCache& cache, const HeadSeeds& seeds,
                                         Eigen::MatrixXd* d_cond,
                                         const Eigen::VectorXd* weights,
                                         Eigen::VectorXd* grad) const {
  const int h = kHidden;
  const int k = components_;
  const auto w1 = mat(params_, layout_.w1, h, input_dim_);
  const auto w2 = mat(params_, layout_.w2, h, h);
  const auto w3 = mat(params_, layout_.w3, h, h);
  const auto ws = mat(params_, layout_.ws, h, input_dim_);
  const auto wpi = mat(params_, layout_.wpi, k, h);
  const auto wmu = mat(params_, layout_.wmu, k, h);
  const auto wsg = mat(params_, layout_.wsg, k, h);

  Eigen::MatrixXd d3 = wpi.transpose() * seeds.pi;
  d3.noalias() += wmu.transpose() * seeds.mu;
  d3.noalias() += wsg.transpose() * seeds.sg;
  d3.array() *= (cache.a3.array() > 0.0).cast<double>();
  Eigen::MatrixXd d2 = w3.transpose() * d3;
  d2.array() *= (cache.a2.array() > 0.0).cast<double>();
  Eigen::MatrixXd d1 = w2.transpose() * d2;
  d1.array() *= (cache.a1.array() > 0.0).cast<double>();

  if (d_cond) {
    if (input_dim_ == 0) {
      d_cond->resize(0, cache.n());
    } else {
      d_cond->noalias() = w1.transpose() * d1;
      d_cond->noalias() += ws.transpose() * d3;
    }
  }

  if (weights && grad) {
    if (grad->size() != layout_.total)
      throw std::invalid_argument("gradient accumulator size mismatch");
    const auto wd = weights->asDiagonal();
    const Eigen::MatrixXd d1w = d1 * wd;
    const Eigen::MatrixXd d2w = d2 * wd;
    const Eigen::MatrixXd d3w = d3 * wd;
    auto g = [this, grad](int off, int rows, int cols) {
      return Eigen::Map<Eigen::MatrixXd>(grad->data() + off, rows, cols);
    };
    if (input_dim_ > 0) {
      g(layout_.w1, h, input_dim_).noalias() += d1w * cache.cond.transpose();
      g(layout_.ws, h, input_dim_).noalias() += d3w * cache.cond.transpose();
    }
    grad->segment(layout_.b1, h).noalias() += d1 * (*weights);
    g(layout_.w2, h, h).noalias() += d2w * cache.h1.transpose();
    grad->segment(layout_.b2, h).noalias() += d2 * (*weights);
    g(layout_.w3, h, h).noalias() += d3w * cache.h2.transpose();
    grad->segment(layout_.b3, h).noalias() += d3 * (*weights);
    g(layout_.wpi, k, h).noalias() += (seeds.pi * wd) * cache.h3.transpose();
    grad->segment(layout_.bpi, k).noalias() += seeds.pi * (*weights);
    g(layout_.wmu, k, h).noalias() += (seeds.mu * wd) * cache.h3.transpose();
    grad->segment(layout_.bmu, k).noalias() += seeds.mu * (*weights);
    g(layout_.wsg, k, h).noalias() += (seeds.sg * wd) * cache.h3.transpose();
    grad->segment(layout_.bsg, k).noalias() += seeds.sg * (*weights);
  }
}

ConditionalDensityNetwork::LogProbResult ConditionalDensityNetwork::logprob_backward(
    const Eigen::VectorXd& cond, double z) const {
  if (!std::isfinite(z)) throw std::invalid_argument("invalid input");
  const BatchCache cache = forward_batch(cond);
  Eigen::VectorXd zs(1);
  zs[0] = z;
  const BatchLogProb blp = logprob_seeds(cache, zs);
  LogProbResult out;
  out.logp = blp.logp[0];
  out.d_z = blp.d_z[0];
  out.d_params = Eigen::VectorXd::Zero(layout_.total);
  Eigen::MatrixXd d_cond;
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  backward(cache, blp.seeds, &d_cond, &one, &out.d_params);
  out.d_cond = d_cond.col(0);
  return out;
}

ConditionalDensityNetwork::SampleResult ConditionalDensityNetwork::sample_backward(
    const Eigen::VectorXd& cond, Rng& rng) const {
  const BatchCache cache = forward_batch(cond);
  const MixtureSample s = mixture_sample(mixture_at(cache, 0), rng);
  Eigen::VectorXd zs(1);
  zs[0] = s.z;
  std::vector<bool> under;
  const HeadSeeds seeds = sample_seeds(cache, zs, &under);
  SampleResult out;
  out.z = s.z;
  out.underflow = under[0];
  out.d_params = Eigen::VectorXd::Zero(layout_.total);
  Eigen::MatrixXd d_cond;
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  backward(cache, seeds, &d_cond, &one, &out.d_params);
  out.d_cond = d_cond.col(0);
  return out;
}

ConditionalDensityNetwork random_network(int input_dim, int components, Rng& rng,
                                         double scale) {
  ConditionalDensityNetwork net(input_dim, components);
  for (int i = 0; i < net.param_count(); ++i)
    net.params()[i] = rng.uniform(-scale, scale);
  // Re-seat the mean and stddev head biases so output mixtures stay tame.
  for (int i = 0; i < components; ++i) {
    net.params()[net.offset_means_bias() + i] = rng.uniform(-2.0, 2.0);
    net.params()[net.offset_stddevs_bias() + i] = std::log(rng.uniform(0.3, 1.2));
  }
  return net;
}

ConditionalDensityNetwork constant_network(int input_dim, const GaussianMixture1D& gmm) {
  validate(gmm);
  ConditionalDensityNetwork net(input_dim, gmm.components());
  const int k = gmm.components();
  for (int i = 0; i < k; ++i) {
    net.params()[net.offset_weights_bias() + i] = std::log(std::max(gmm.weights[i], 1e-300));
    net.params()[net.offset_means_bias() + i] = gmm.means[i];
    net.params()[net.offset_stddevs_bias() + i] = std::log(gmm.stddevs[i]);
  }
  return net;
}

}  // namespace kforge
