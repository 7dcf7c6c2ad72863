#include "kforge/autoregressive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kforge/errors.hpp"

namespace kforge {

namespace {

// Conditioning block for conditional j: base columns then the first j
// modeled columns, transposed to (input_dim x n).
Eigen::MatrixXd build_cond(const Eigen::MatrixXd& base, const Eigen::MatrixXd& v, int j) {
  const int n = static_cast<int>(v.rows());
  const int bd = static_cast<int>(base.cols());
  Eigen::MatrixXd cond(bd + j, n);
  if (bd > 0) cond.topRows(bd) = base.transpose();
  if (j > 0) cond.bottomRows(j) = v.leftCols(j).transpose();
  return cond;
}

double mean_nll(const ConditionalDensityNetwork& net, const Eigen::MatrixXd& cond,
                const Eigen::VectorXd& z) {
  const int n = static_cast<int>(cond.cols());
  double acc = 0.0;
  constexpr int chunk = 2048;
  for (int s = 0; s < n; s += chunk) {
    const int m = std::min(chunk, n - s);
    const auto cache = net.forward_batch(cond.middleCols(s, m));
    const auto blp = net.logprob_seeds(cache, z.segment(s, m));
    acc += -blp.logp.sum();
  }
  return acc / double(n);
}

struct MleResult {
  ConditionalFitHistory history;
};

MleResult fit_conditional_mle(ConditionalDensityNetwork& net, const Eigen::MatrixXd& cond_tr,
                              const Eigen::VectorXd& z_tr, const Eigen::MatrixXd& cond_val,
                              const Eigen::VectorXd& z_val, double lr, int max_epochs,
                              int batch_size, int patience, Rng& rng, int feature) {
  const int n = static_cast<int>(cond_tr.cols());
  const int in = net.input_dim();
  MleResult out;
  out.history.feature = feature;

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  AdamState adam(net.param_count());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.param_count());
  Eigen::VectorXd best_params = net.params();
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[size_t(rng.below(std::uint64_t(i + 1)))]);

    double epoch_nll = 0.0;
    for (int s = 0; s < n; s += batch_size) {
      const int m = std::min(batch_size, n - s);
      Eigen::MatrixXd cb(in, m);
      Eigen::VectorXd zb(m);
      for (int i = 0; i < m; ++i) {
        cb.col(i) = cond_tr.col(perm[s + i]);
        zb[i] = z_tr[perm[s + i]];
      }
      const auto cache = net.forward_batch(cb);
      const auto blp = net.logprob_seeds(cache, zb);
      const double loss = -blp.logp.mean();
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "stage-1 training aborted: non-finite loss (feature " << feature
            << ", epoch " << epoch << ")";
        throw NumericError(msg.str());
      }
      epoch_nll += loss * double(m);
      grad.setZero();
      const Eigen::VectorXd w = Eigen::VectorXd::Constant(m, -1.0 / double(m));
      net.backward(cache, blp.seeds, nullptr, &w, &grad);
      adam_step(net.params(), grad, adam, lr);
    }
    out.history.train_nll.push_back(epoch_nll / double(n));

    const double val = mean_nll(net, cond_val, z_val);
    if (!std::isfinite(val)) {
      std::ostringstream msg;
      msg << "stage-1 training aborted: non-finite validation loss (feature " << feature
          << ", epoch " << epoch << ")";
      throw NumericError(msg.str());
    }
    out.history.val_nll.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best_params = net.params();
    } else if (epoch - best_epoch > patience) {
      break;
    }
  }
  net.params() = best_params;
  out.history.best_epoch = best_epoch;
  out.history.best_val_nll = best_val;
  return out;
}

}  // namespace

int AutoregressiveModel::total_params() const {
  int t = 0;
  for (const auto& c : conditionals) t += c.param_count();
  return t;
}

Eigen::VectorXd AutoregressiveModel::pack_params() const {
  Eigen::VectorXd flat(total_params());
  int off = 0;
  for (const auto& c : conditionals) {
    flat.segment(off, c.param_count()) = c.params();
    off += c.param_count();
  }
  return flat;
}

void AutoregressiveModel::unpack_params(const Eigen::VectorXd& flat) {
  if (flat.size() != total_params())
    throw std::invalid_argument("parameter pack size mismatch");
  int off = 0;
  for (auto& c : conditionals) {
    c.params() = flat.segment(off, c.param_count());
    off += c.param_count();
  }
}

AutoregressiveModel make_autoregressive(int d, int base_dim, int components,
                                        const std::vector<std::pair<double, double>>& support,
                                        Rng& rng) {
  if (static_cast<int>(support.size()) != d)
    throw std::invalid_argument("support entries must match feature count");
  AutoregressiveModel model;
  model.d = d;
  model.base_dim = base_dim;
  model.support = support;
  model.conditionals.reserve(d);
  for (int j = 0; j < d; ++j) {
    Rng sub = rng.substream(std::uint64_t(j));
    model.conditionals.push_back(ConditionalDensityNetwork::initialized(
        base_dim + j, components, support[j].first, support[j].second, sub));
  }
  return model;
}

double model_log_prob(const AutoregressiveModel& model, const Eigen::VectorXd& base,
                      const Eigen::VectorXd& v) {
  return model_log_prob_batch(model, base.transpose(), v.transpose())[0];
}

Eigen::VectorXd model_log_prob_batch(const AutoregressiveModel& model,
                                     const Eigen::MatrixXd& base, const Eigen::MatrixXd& v) {
  if (v.cols() != model.d || base.cols() != model.base_dim || base.rows() != v.rows())
    throw std::invalid_argument("model_log_prob dimension mismatch");
  const int n = static_cast<int>(v.rows());
  Eigen::VectorXd logp = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < model.d; ++j) {
    const Eigen::MatrixXd cond = build_cond(base, v, j);
    const auto cache = model.conditionals[j].forward_batch(cond);
    const auto blp = model.conditionals[j].logprob_seeds(cache, v.col(j));
    logp += blp.logp;
  }
  return logp;
}

ModelInputGrads model_log_prob_input_grads(const AutoregressiveModel& model,
                                           const Eigen::MatrixXd& base,
                                           const Eigen::MatrixXd& v) {
  if (v.cols() != model.d || base.cols() != model.base_dim || base.rows() != v.rows())
    throw std::invalid_argument("model_log_prob dimension mismatch");
  const int n = static_cast<int>(v.rows());
  const int bd = model.base_dim;
  ModelInputGrads out;
  out.logp = Eigen::VectorXd::Zero(n);
  out.d_base = Eigen::MatrixXd::Zero(n, bd);
  out.d_v = Eigen::MatrixXd::Zero(n, model.d);
  for (int j = 0; j < model.d; ++j) {
    const Eigen::MatrixXd cond = build_cond(base, v, j);
    const auto cache = model.conditionals[j].forward_batch(cond);
    const auto blp = model.conditionals[j].logprob_seeds(cache, v.col(j));
    out.logp += blp.logp;
    Eigen::MatrixXd d_cond;
    model.conditionals[j].backward(cache, blp.seeds, &d_cond, nullptr, nullptr);
    if (bd > 0) out.d_base += d_cond.topRows(bd).transpose();
    if (j > 0) out.d_v.leftCols(j) += d_cond.bottomRows(j).transpose();
    out.d_v.col(j) += blp.d_z;
  }
  return out;
}

JointFitResult fit_joint(const Eigen::MatrixXd& train, const Eigen::MatrixXd& val,
                         const TrainConfig& config, Rng& rng) {
  config.validate();
  if (train.rows() < 2) throw InputError("fit_joint needs at least two training rows");
  if (val.rows() < 1) throw InputError("fit_joint needs a nonempty validation set");
  if (train.cols() != val.cols()) throw InputError("train/validation column mismatch");
  if (!train.allFinite() || !val.allFinite())
    throw InputError("fit_joint requires finite data");
  const int d = static_cast<int>(train.cols());

  std::vector<std::pair<double, double>> support(d);
  for (int j = 0; j < d; ++j) {
    double lo = train.col(j).minCoeff();
    double hi = train.col(j).maxCoeff();
    if (!(lo < hi)) hi = lo + 1.0;  // constant feature: give the init a span
    support[j] = {lo, hi};
  }

  Rng init_rng = rng.substream(0x10117);
  JointFitResult out;
  out.model = make_autoregressive(d, 0, config.mixture_components, support, init_rng);
  const Eigen::MatrixXd empty_base(train.rows(), 0);
  const Eigen::MatrixXd empty_base_val(val.rows(), 0);
  for (int j = 0; j < d; ++j) {
    const Eigen::MatrixXd cond_tr = build_cond(empty_base, train, j);
    const Eigen::MatrixXd cond_val = build_cond(empty_base_val, val, j);
    Rng fit_rng = rng.substream(0x20000 + std::uint64_t(j));
    auto res =
        fit_conditional_mle(out.model.conditionals[j], cond_tr, train.col(j), cond_val,
                            val.col(j), config.lr_joint, config.max_epochs_joint,
                            config.batch_size, config.patience, fit_rng, j);
    out.history.push_back(std::move(res.history));
  }
  return out;
}

KnockoffSample sample_knockoffs(const AutoregressiveModel& kmodel, const Eigen::VectorXd& x,
                                Rng& rng) {
  if (kmodel.base_dim != kmodel.d || x.size() != kmodel.d)
    throw std::invalid_argument("knockoff model must condition on all of x");
  const int d = kmodel.d;
  KnockoffSample out;
  out.xt.resize(d);
  out.grads.d_params.resize(d);
  out.grads.d_cond.resize(d);
  out.grads.underflow.assign(d, false);
  out.grads.dxt_dbase = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd cond(2 * d);
  cond.head(d) = x;
  for (int j = 0; j < d; ++j) {
    const auto res = kmodel.conditionals[j].sample_backward(cond.head(d + j), rng);
    out.xt[j] = res.z;
    cond[d + j] = res.z;
    out.grads.d_params[j] = res.d_params;
    out.grads.d_cond[j] = res.d_cond;
    out.grads.underflow[j] = res.underflow;
    // Chain through earlier sampled coordinates.
    out.grads.dxt_dbase.row(j) = res.d_cond.head(d).transpose();
    for (int i = 0; i < j; ++i)
      out.grads.dxt_dbase.row(j) += res.d_cond[d + i] * out.grads.dxt_dbase.row(i);
  }
  return out;
}

Eigen::VectorXd sample_knockoffs_value(const AutoregressiveModel& kmodel,
                                       const Eigen::VectorXd& x, Rng& rng) {
  if (kmodel.base_dim != kmodel.d || x.size() != kmodel.d)
    throw std::invalid_argument("knockoff model must condition on all of x");
  const int d = kmodel.d;
  Eigen::VectorXd cond(2 * d);
  cond.head(d) = x;
  for (int j = 0; j < d; ++j) {
    const GaussianMixture1D gmm = kmodel.conditionals[j].forward(cond.head(d + j));
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    cond[d + j] = mixture_sample_value(gmm, u1, u2);
  }
  return cond.tail(d);
}

Eigen::MatrixXd sample_knockoffs_batch(const AutoregressiveModel& kmodel,
                                       const Eigen::MatrixXd& x, Rng& rng) {
  if (kmodel.base_dim != kmodel.d || x.cols() != kmodel.d)
    throw std::invalid_argument("knockoff model must condition on all of x");
  const int d = kmodel.d;
  const int n = static_cast<int>(x.rows());
  // Uniforms drawn row-major so batched output matches the sequential path.
  Eigen::MatrixXd u1(n, d), u2(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      u1(i, j) = rng.uniform();
      u2(i, j) = rng.uniform();
    }
  Eigen::MatrixXd full(2 * d, n);
  full.topRows(d) = x.transpose();
  for (int j = 0; j < d; ++j) {
    const auto cache = kmodel.conditionals[j].forward_batch(full.topRows(d + j));
    for (int i = 0; i < n; ++i)
      full(d + j, i) =
          mixture_sample_value(kmodel.conditionals[j].mixture_at(cache, i), u1(i, j),
                               u2(i, j));
  }
  return full.bottomRows(d).transpose();
}

ChainedAdjoint chain_adjoint(const AutoregressiveModel& kmodel,
                             const KnockoffPathGrads& grads,
                             const Eigen::VectorXd& dl_dxt) {
  const int d = kmodel.d;
  if (dl_dxt.size() != d) throw std::invalid_argument("adjoint length mismatch");
  Eigen::VectorXd chained = dl_dxt;
  for (int j = d - 1; j >= 0; --j)
    for (int i = j + 1; i < d; ++i) chained[j] += chained[i] * grads.d_cond[i][d + j];
  ChainedAdjoint out;
  out.d_params.resize(d);
  out.d_base = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < d; ++j) {
    out.d_params[j] = chained[j] * grads.d_params[j];
    out.d_base += chained[j] * grads.d_cond[j].head(d);
  }
  return out;
}

}  // namespace kforge
