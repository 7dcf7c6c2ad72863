#include "kforge/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "kforge/errors.hpp"
#include "kforge/math.hpp"
#include "kforge/optim.hpp"

namespace kforge {

SelectionResult knockoff_threshold(const KnockoffStatistics& stats, double p) {
  if (stats.w.size() == 0) throw InputError("knockoff_threshold: empty statistics");
  if (!(p > 0.0 && p < 1.0)) throw InputError("knockoff_threshold: p outside (0, 1)");
  if (!stats.w.allFinite()) throw InputError("knockoff_threshold: non-finite statistic");

  std::set<double> candidates;
  for (Eigen::Index j = 0; j < stats.w.size(); ++j)
    if (stats.w[j] != 0.0) candidates.insert(std::abs(stats.w[j]));

  SelectionResult out;
  out.nominal_level = p;
  for (double t : candidates) {
    int neg = 0, pos = 0;
    for (Eigen::Index j = 0; j < stats.w.size(); ++j) {
      if (stats.w[j] <= -t) ++neg;
      if (stats.w[j] >= t) ++pos;
    }
    if (pos > 0 && double(1 + neg) / double(pos) <= p) {
      out.threshold = t;
      break;
    }
  }
  if (std::isfinite(out.threshold)) {
    for (Eigen::Index j = 0; j < stats.w.size(); ++j)
      if (stats.w[j] >= out.threshold) out.selected.push_back(int(j));
  }
  return out;
}

ResponseModel ResponseModel::linear(const Eigen::VectorXd& coef, double intercept,
                                    bool binary) {
  ResponseModel m;
  m.linear_ = true;
  m.binary_ = binary;
  m.coef_ = coef;
  m.intercept_ = intercept;
  m.x_mean_ = Eigen::VectorXd::Zero(coef.size());
  m.x_scale_ = Eigen::VectorXd::Ones(coef.size());
  return m;
}

namespace {

bool looks_binary(const Eigen::VectorXd& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0) return false;
  return y.size() > 0;
}

double bernoulli_nll(double logit, double y) {
  // -log p(y | logit), numerically stable for either sign.
  return std::log1p(std::exp(-std::abs(logit))) +
         (logit > 0 ? (1.0 - y) * logit : -y * logit);
}

}  // namespace

ResponseModel ResponseModel::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 const Options& options, Rng& rng) {
  if (x.rows() != y.size() || x.rows() < 4)
    throw InputError("response model needs aligned rows (at least 4)");
  const int n = int(x.rows());
  const int d = int(x.cols());

  ResponseModel m;
  m.binary_ = looks_binary(y);
  m.x_mean_ = x.colwise().mean();
  const Eigen::VectorXd var =
      ((x.rowwise() - m.x_mean_.transpose()).array().square().colwise().sum() /
       double(n))
          .transpose();
  m.x_scale_ = var.array().sqrt().max(1e-9);
  const Eigen::MatrixXd xs = (x.rowwise() - m.x_mean_.transpose()).array().rowwise() /
                             m.x_scale_.transpose().array();
  m.y_mean_ = m.binary_ ? 0.0 : y.mean();
  const Eigen::VectorXd yc = m.binary_ ? y : Eigen::VectorXd(y.array() - m.y_mean_);

  if (options.kind == Kind::ridge) {
    if (m.binary_) throw InputError("ridge response model supports real responses only");
    m.linear_ = true;
    const double alpha = options.ridge_penalty * double(n);
    Eigen::MatrixXd gram = xs.transpose() * xs;
    gram.diagonal().array() += alpha;
    m.coef_ = gram.ldlt().solve(xs.transpose() * yc);
    m.intercept_ = 0.0;
    return m;
  }

  // One hidden rectifier layer trained by Adam with an internal validation
  // split for early stopping.
  const int h = options.hidden_units;
  const int n_val = std::max(1, int(std::lround(options.val_fraction * n)));
  const int n_tr = n - n_val;
  if (n_tr < 2) throw InputError("response model training split too small");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[size_t(rng.below(std::uint64_t(i + 1)))]);

  Eigen::MatrixXd xtr(n_tr, d), xval(n_val, d);
  Eigen::VectorXd ytr(n_tr), yval(n_val);
  for (int i = 0; i < n_tr; ++i) {
    xtr.row(i) = xs.row(order[i]);
    ytr[i] = yc[order[i]];
  }
  for (int i = 0; i < n_val; ++i) {
    xval.row(i) = xs.row(order[n_tr + i]);
    yval[i] = yc[order[n_tr + i]];
  }

  const int pcount = h * d + h + h + 1;
  Eigen::VectorXd params(pcount);
  {
    const double a = d > 0 ? 1.0 / std::sqrt(double(d)) : 0.0;
    const double b = 1.0 / std::sqrt(double(h));
    int off = 0;
    for (int i = 0; i < h * d; ++i) params[off++] = rng.uniform(-a, a);
    for (int i = 0; i < h; ++i) params[off++] = 0.0;
    for (int i = 0; i < h; ++i) params[off++] = rng.uniform(-b, b);
    params[off++] = 0.0;
  }
  auto w1 = [&](Eigen::VectorXd& v) { return Eigen::Map<Eigen::MatrixXd>(v.data(), h, d); };
  auto b1 = [&](Eigen::VectorXd& v) {
    return Eigen::Map<Eigen::VectorXd>(v.data() + h * d, h);
  };
  auto w2 = [&](Eigen::VectorXd& v) {
    return Eigen::Map<Eigen::VectorXd>(v.data() + h * d + h, h);
  };

  auto loss_of = [&](Eigen::VectorXd& v, const Eigen::MatrixXd& bx,
                     const Eigen::VectorXd& by) {
    const Eigen::MatrixXd a1 = (w1(v) * bx.transpose()).colwise() + b1(v);
    const Eigen::VectorXd f =
        (a1.cwiseMax(0.0).transpose() * w2(v)).array() + v[pcount - 1];
    if (m.binary_) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < by.size(); ++i) acc += bernoulli_nll(f[i], by[i]);
      return acc / double(by.size());
    }
    return (f - by).squaredNorm() / double(by.size());
  };

  AdamState adam(pcount);
  Eigen::VectorXd grad(pcount);
  Eigen::VectorXd best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::vector<int> perm(n_tr);
  std::iota(perm.begin(), perm.end(), 0);

  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    for (int i = n_tr - 1; i > 0; --i)
      std::swap(perm[i], perm[size_t(rng.below(std::uint64_t(i + 1)))]);
    for (int s = 0; s < n_tr; s += options.batch_size) {
      const int mb = std::min(options.batch_size, n_tr - s);
      Eigen::MatrixXd bx(mb, d);
      Eigen::VectorXd by(mb);
      for (int i = 0; i < mb; ++i) {
        bx.row(i) = xtr.row(perm[s + i]);
        by[i] = ytr[perm[s + i]];
      }
      const Eigen::MatrixXd a1 = (w1(params) * bx.transpose()).colwise() + b1(params);
      const Eigen::MatrixXd h1 = a1.cwiseMax(0.0);
      const Eigen::VectorXd f = (h1.transpose() * w2(params)).array() + params[pcount - 1];
      Eigen::VectorXd df(mb);
      if (m.binary_) {
        for (int i = 0; i < mb; ++i) df[i] = (logistic(f[i]) - by[i]) / double(mb);
      } else {
        df = 2.0 * (f - by) / double(mb);
      }
      grad.setZero();
      Eigen::Map<Eigen::MatrixXd> gw1(grad.data(), h, d);
      Eigen::Map<Eigen::VectorXd> gb1(grad.data() + h * d, h);
      Eigen::Map<Eigen::VectorXd> gw2(grad.data() + h * d + h, h);
      gw2 = h1 * df;
      grad[pcount - 1] = df.sum();
      Eigen::MatrixXd dh1 = w2(params) * df.transpose();  // h x mb
      dh1.array() *= (a1.array() > 0.0).cast<double>();
      gw1 = dh1 * bx;
      gb1 = dh1.rowwise().sum();
      adam_step(params, grad, adam, options.lr);
    }
    const double val = loss_of(params, xval, yval);
    if (!std::isfinite(val)) throw NumericError("response model: non-finite loss");
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best = params;
    } else if (epoch - best_epoch > options.patience) {
      break;
    }
  }
  params = best;
  m.w1_ = w1(params);
  m.b1_ = b1(params);
  m.w2_ = w2(params);
  m.b2_ = params[pcount - 1];
  return m;
}

Eigen::VectorXd ResponseModel::predict(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd xs = (x.rowwise() - x_mean_.transpose()).array().rowwise() /
                             x_scale_.transpose().array();
  if (linear_) return (xs * coef_).array() + intercept_ + y_mean_;
  const Eigen::MatrixXd a1 = (w1_ * xs.transpose()).colwise() + b1_;
  return (a1.cwiseMax(0.0).transpose() * w2_).array() + b2_ + y_mean_;
}

double ResponseModel::performance(const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& y) const {
  if (x.rows() != y.size()) throw InputError("performance: misaligned rows");
  const Eigen::VectorXd f = predict(x);
  if (binary_) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) acc -= bernoulli_nll(f[i], y[i]);
    return acc / double(y.size());
  }
  return -(f - y).squaredNorm() / double(y.size());
}

KnockoffStatistics hrt_statistics(const ResponseModel& model, const Eigen::MatrixXd& x_test,
                                  const Eigen::VectorXd& y_test,
                                  const Eigen::MatrixXd& knockoffs_test) {
  if (x_test.rows() != knockoffs_test.rows() || x_test.cols() != knockoffs_test.cols())
    throw InputError("hrt_statistics: knockoff test set misaligned");
  if (x_test.rows() != y_test.size())
    throw InputError("hrt_statistics: response misaligned");
  const double base = model.performance(x_test, y_test);
  KnockoffStatistics stats;
  stats.w.resize(x_test.cols());
  Eigen::MatrixXd swapped = x_test;
  for (Eigen::Index j = 0; j < x_test.cols(); ++j) {
    swapped.col(j) = knockoffs_test.col(j);
    stats.w[j] = base - model.performance(swapped, y_test);
    swapped.col(j) = x_test.col(j);
  }
  return stats;
}

MixtureStatisticsResult mixture_statistics(
    const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
    const Eigen::MatrixXd& knockoffs_train, const Eigen::MatrixXd& x_test,
    const Eigen::VectorXd& y_test, const Eigen::MatrixXd& knockoffs_test,
    const ResponseModel::Options& options, Rng& rng) {
  if (x_train.rows() != knockoffs_train.rows() || x_train.cols() != knockoffs_train.cols())
    throw InputError("mixture_statistics: knockoff train set misaligned");
  if (x_test.rows() != knockoffs_test.rows() || x_test.cols() != knockoffs_test.cols())
    throw InputError("mixture_statistics: knockoff test set misaligned");
  const int n = int(x_train.rows());
  const int d = int(x_train.cols());
  MixtureStatisticsResult out;
  out.stats.w.resize(d);
  Eigen::MatrixXd augmented(2 * n, d);
  Eigen::VectorXd y2(2 * n);
  y2.head(n) = y_train;
  y2.tail(n) = y_train;
  for (int j = 0; j < d; ++j) {
    augmented.topRows(n) = x_train;
    augmented.bottomRows(n) = x_train;
    augmented.col(j).tail(n) = knockoffs_train.col(j);
    Rng fit_rng = rng.substream(std::uint64_t(j));
    const ResponseModel model = ResponseModel::fit(augmented, y2, options, fit_rng);
    ++out.model_fits;
    const double base = model.performance(x_test, y_test);
    Eigen::MatrixXd swapped = x_test;
    swapped.col(j) = knockoffs_test.col(j);
    out.stats.w[j] = base - model.performance(swapped, y_test);
  }
  return out;
}

FdpPower fdp_and_power(const std::vector<int>& selected, const std::vector<int>& truth) {
  FdpPower out;
  const std::set<int> s(truth.begin(), truth.end());
  int false_pos = 0, true_pos = 0;
  for (int j : selected) {
    if (s.count(j))
      ++true_pos;
    else
      ++false_pos;
  }
  out.fdp = double(false_pos) / double(std::max<size_t>(selected.size(), 1));
  if (s.empty()) {
    out.power = 0.0;
    out.empty_truth = true;
  } else {
    out.power = double(true_pos) / double(s.size());
  }
  return out;
}

}  // namespace kforge
