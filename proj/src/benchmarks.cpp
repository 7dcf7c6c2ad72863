#include "kforge/benchmarks.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "kforge/autoregressive.hpp"
#include "kforge/errors.hpp"
#include "kforge/trainer.hpp"

namespace kforge {

void BenchmarkSpec::validate() const {
  if (n < 10) throw InputError("benchmark spec: n too small");
  if (d < 1) throw InputError("benchmark spec: d must be positive");
  if (m < 0 || m > d) throw InputError("benchmark spec: need 0 <= m <= d");
  if (std::abs(split_train + split_val + split_test - 1.0) > 1e-9)
    throw InputError("benchmark spec: splits must sum to 1");
  if (seeds.empty()) throw InputError("benchmark spec: no seeds");
  if (kind == Kind::mixture) {
    if (mixture_weights.size() != mixture_centers.size() ||
        mixture_weights.size() != rho.size() || mixture_weights.empty())
      throw InputError("benchmark spec: mixture component lists disagree");
    double sum = 0.0;
    for (double w : mixture_weights) {
      if (w < 0.0) throw InputError("benchmark spec: negative mixture weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw InputError("benchmark spec: mixture weights must sum to 1");
  } else {
    if (rho.size() != 1) throw InputError("benchmark spec: expected a single rho");
  }
  if (kind == Kind::gene_response && m % 4 != 0)
    throw InputError("benchmark spec: gene response needs m divisible by 4");
  for (double r : rho)
    if (!(std::abs(r) < 1.0)) throw InputError("benchmark spec: |rho| must be < 1");
}

namespace {

// AR(1) row with unit marginal variance: cov(x_i, x_j) = rho^|i-j|.
Eigen::RowVectorXd ar_row(int d, double rho, Rng& rng) {
  Eigen::RowVectorXd row(d);
  const double noise = std::sqrt(1.0 - rho * rho);
  row[0] = rng.normal();
  for (int j = 1; j < d; ++j) row[j] = rho * row[j - 1] + noise * rng.normal();
  return row;
}

std::vector<std::string> feature_names(int d) {
  std::vector<std::string> names;
  names.reserve(d);
  for (int j = 1; j <= d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

Eigen::VectorXd draw_alpha(const BenchmarkSpec& spec, Rng& rng) {
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(spec.d);
  const double mag = 100.0 / std::sqrt(double(spec.n));
  for (int j = 0; j < spec.m; ++j)
    alpha[j] = rng.uniform() < 0.5 ? mag : -mag;
  return alpha;
}

void attach_linear_response(Dataset& data, const Eigen::VectorXd& alpha, Rng& rng) {
  const int n = data.x.rows();
  data.y.resize(n);
  for (int i = 0; i < n; ++i)
    data.y[i] = data.x.values.row(i).dot(alpha) + rng.normal();
  data.has_y = true;
}

}  // namespace

Dataset gen_gaussian(const BenchmarkSpec& spec, Rng& rng) {
  if (spec.kind != BenchmarkSpec::Kind::gaussian)
    throw InputError("gen_gaussian: spec kind mismatch");
  spec.validate();
  Dataset data;
  data.x.columns = feature_names(spec.d);
  data.x.values.resize(spec.n, spec.d);
  const Eigen::VectorXd alpha = draw_alpha(spec, rng);
  for (int i = 0; i < spec.n; ++i) data.x.values.row(i) = ar_row(spec.d, spec.rho[0], rng);
  attach_linear_response(data, alpha, rng);
  data.alpha = alpha;
  for (int j = 0; j < spec.m; ++j) data.truth.push_back(j);
  return data;
}

Dataset gen_mixture(const BenchmarkSpec& spec, Rng& rng) {
  if (spec.kind != BenchmarkSpec::Kind::mixture)
    throw InputError("gen_mixture: spec kind mismatch");
  spec.validate();
  Dataset data;
  data.x.columns = feature_names(spec.d);
  data.x.values.resize(spec.n, spec.d);
  const Eigen::VectorXd alpha = draw_alpha(spec, rng);
  const int k = int(spec.mixture_weights.size());
  for (int i = 0; i < spec.n; ++i) {
    const double u = rng.uniform();
    int comp = k - 1;
    double cum = 0.0;
    for (int c = 0; c < k; ++c) {
      cum += spec.mixture_weights[c];
      if (u <= cum) {
        comp = c;
        break;
      }
    }
    data.x.values.row(i) = ar_row(spec.d, spec.rho[comp], rng);
    data.x.values.row(i).array() += spec.mixture_centers[comp];
    data.mixture_component.push_back(comp);
  }
  attach_linear_response(data, alpha, rng);
  data.alpha = alpha;
  for (int j = 0; j < spec.m; ++j) data.truth.push_back(j);
  return data;
}

GeneCoefficients GeneCoefficients::draw(int m, Rng& rng) {
  if (m % 4 != 0 || m < 4) throw InputError("gene coefficients need m divisible by 4");
  const int blocks = m / 4;
  GeneCoefficients c;
  auto fill = [&](Eigen::VectorXd& v, double mean) {
    v.resize(blocks);
    for (int i = 0; i < blocks; ++i) v[i] = rng.normal(mean, 1.0);
  };
  fill(c.phi1, 1.0);
  fill(c.phi2, 1.0);
  fill(c.phi3, 2.0);
  fill(c.phi4, 2.0);
  fill(c.phi5, 2.0);
  fill(c.phi6, 2.0);
  return c;
}

double gene_response(const Eigen::VectorXd& x, const GeneCoefficients& phis,
                     double noise) {
  const int blocks = int(phis.phi1.size());
  if (x.size() < 4 * blocks) throw InputError("gene_response: x shorter than 4 blocks");
  double y = noise;
  for (int k = 0; k < blocks; ++k) {
    const double x1 = x[4 * k], x2 = x[4 * k + 1], x3 = x[4 * k + 2], x4 = x[4 * k + 3];
    y += phis.phi1[k] * x1 + phis.phi3[k] * x2 + phis.phi4[k] * x1 * x2 +
         phis.phi5[k] * std::tanh(phis.phi2[k] * x3 + phis.phi6[k] * x4);
  }
  return y;
}

Dataset gen_dataset(const BenchmarkSpec& spec, Rng& rng) {
  if (spec.kind == BenchmarkSpec::Kind::gaussian) return gen_gaussian(spec, rng);
  if (spec.kind == BenchmarkSpec::Kind::mixture) return gen_mixture(spec, rng);
  spec.validate();
  // gene_response kind: AR Gaussian covariates, nonlinear response.
  Dataset data;
  data.x.columns = feature_names(spec.d);
  data.x.values.resize(spec.n, spec.d);
  const GeneCoefficients phis = GeneCoefficients::draw(spec.m, rng);
  for (int i = 0; i < spec.n; ++i) data.x.values.row(i) = ar_row(spec.d, spec.rho[0], rng);
  data.y.resize(spec.n);
  for (int i = 0; i < spec.n; ++i)
    data.y[i] = gene_response(data.x.values.row(i).transpose(), phis, rng.normal());
  data.has_y = true;
  for (int j = 0; j < spec.m; ++j) data.truth.push_back(j);
  return data;
}

Eigen::MatrixXd ar_covariance(int d, double rho) {
  Eigen::MatrixXd sigma(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) sigma(i, j) = std::pow(rho, std::abs(i - j));
  return sigma;
}

GaussianKnockoffOracle::GaussianKnockoffOracle(const Eigen::MatrixXd& sigma) {
  const int d = int(sigma.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const double lambda_min = eig.eigenvalues().minCoeff();
  if (lambda_min <= 0.0) throw InputError("knockoff oracle: covariance not positive definite");
  s_ = std::min(1.0, 2.0 * lambda_min);
  const Eigen::MatrixXd sigma_inv = sigma.llt().solve(Eigen::MatrixXd::Identity(d, d));
  mean_map_ = Eigen::MatrixXd::Identity(d, d) - s_ * sigma_inv;
  Eigen::MatrixXd cond_cov = 2.0 * s_ * Eigen::MatrixXd::Identity(d, d) -
                             (s_ * s_) * sigma_inv;
  // The equicorrelated choice can make the conditional covariance exactly
  // singular; clamp the spectrum at zero before the square root.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ceig(cond_cov);
  const Eigen::VectorXd clamped = ceig.eigenvalues().cwiseMax(0.0);
  cov_sqrt_ = ceig.eigenvectors() * clamped.cwiseSqrt().asDiagonal() *
              ceig.eigenvectors().transpose();
}

Eigen::MatrixXd GaussianKnockoffOracle::sample(const Eigen::MatrixXd& x, Rng& rng) const {
  const int d = int(mean_map_.rows());
  if (x.cols() != d) throw InputError("knockoff oracle: dimension mismatch");
  Eigen::MatrixXd xt(x.rows(), d);
  Eigen::VectorXd z(d);
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < d; ++j) z[j] = rng.normal();
    xt.row(i) = (mean_map_ * x.row(i).transpose() + cov_sqrt_ * z).transpose();
  }
  return xt;
}

int thread_cap() {
  if (const char* env = std::getenv("KNOCKOFF_FORGE_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}

namespace {

SeedResult run_seed(const BenchmarkSpec& spec, const MethodConfig& method,
                    std::uint64_t seed_value, Rng stream) {
  SeedResult out;
  out.seed = seed_value;

  Rng gen_rng = stream.substream(1);
  Rng fit_rng = stream.substream(2);
  Rng knock_rng = stream.substream(3);
  Rng sample_rng = stream.substream(4);
  Rng resp_rng = stream.substream(5);
  Rng entropy_rng = stream.substream(6);

  const Dataset data = gen_dataset(spec, gen_rng);
  const int n = spec.n;
  const int n_train = int(std::lround(spec.split_train * n));
  const int n_val = int(std::lround(spec.split_val * n));
  const int n_test = n - n_train - n_val;
  if (n_train < 2 || n_val < 1 || n_test < 2)
    throw InputError("benchmark split leaves an empty part");

  const Eigen::MatrixXd x_train = data.x.values.topRows(n_train);
  const Eigen::MatrixXd x_val = data.x.values.middleRows(n_train, n_val);
  const Eigen::MatrixXd x_test = data.x.values.bottomRows(n_test);
  const Eigen::VectorXd y_train = data.y.head(n_train);
  const Eigen::VectorXd y_test = data.y.tail(n_test);

  Eigen::MatrixXd kn_train, kn_test;
  if (method.source == MethodConfig::KnockoffSource::oracle) {
    if (spec.kind != BenchmarkSpec::Kind::gaussian &&
        spec.kind != BenchmarkSpec::Kind::gene_response)
      throw InputError("oracle knockoffs require AR Gaussian covariates");
    const GaussianKnockoffOracle oracle(ar_covariance(spec.d, spec.rho[0]));
    kn_train = oracle.sample(x_train, sample_rng);
    kn_test = oracle.sample(x_test, sample_rng);
  } else {
    TrainConfig tc = method.train;
    tc.lambda = spec.lambda;
    const Standardizer std = Standardizer::fit(x_train);
    const Eigen::MatrixXd tr = std.transform(x_train);
    const Eigen::MatrixXd va = std.transform(x_val);
    const auto joint = fit_joint(tr, va, tc, fit_rng);
    const auto knockoff = fit_knockoff(joint.model, tr, va, tc, knock_rng);
    kn_train = std.inverse(sample_knockoffs_batch(knockoff.model, tr, sample_rng));
    kn_test = std.inverse(
        sample_knockoffs_batch(knockoff.model, std.transform(x_test), sample_rng));
    out.conditional_entropy =
        conditional_entropy_estimate(knockoff.model, std.transform(x_test), entropy_rng);
  }

  if (method.statistic == MethodConfig::Statistic::hrt) {
    const ResponseModel model = ResponseModel::fit(x_train, y_train, method.response, resp_rng);
    out.w = hrt_statistics(model, x_test, y_test, kn_test).w;
  } else {
    out.w = mixture_statistics(x_train, y_train, kn_train, x_test, y_test, kn_test,
                               method.response, resp_rng)
                .stats.w;
  }

  for (double p : method.p_grid) {
    KnockoffStatistics stats;
    stats.w = out.w;
    const SelectionResult sel = knockoff_threshold(stats, p);
    const FdpPower fp = fdp_and_power(sel.selected, data.truth);
    LevelResult lr;
    lr.p = p;
    lr.fdp = fp.fdp;
    lr.power = fp.power;
    lr.tau = sel.threshold;
    lr.n_selected = int(sel.selected.size());
    out.levels.push_back(lr);
  }
  out.truth = data.truth;
  out.x_test = x_test;
  out.knockoffs_test = kn_test;
  return out;
}

}  // namespace

std::vector<CurvePoint> aggregate_curve(const std::vector<SeedResult>& seeds,
                                        const std::vector<double>& p_grid) {
  std::vector<CurvePoint> curve;
  for (size_t pi = 0; pi < p_grid.size(); ++pi) {
    CurvePoint pt;
    pt.p = p_grid[pi];
    std::vector<double> fdps, powers;
    for (const auto& s : seeds) {
      if (s.failed) continue;
      fdps.push_back(s.levels[pi].fdp);
      powers.push_back(s.levels[pi].power);
    }
    const int k = int(fdps.size());
    if (k > 0) {
      double mf = 0.0, mp = 0.0;
      for (int i = 0; i < k; ++i) {
        mf += fdps[i];
        mp += powers[i];
      }
      mf /= k;
      mp /= k;
      double vf = 0.0, vp = 0.0;
      for (int i = 0; i < k; ++i) {
        vf += (fdps[i] - mf) * (fdps[i] - mf);
        vp += (powers[i] - mp) * (powers[i] - mp);
      }
      pt.mean_fdp = mf;
      pt.mean_power = mp;
      if (k > 1) {
        pt.se_fdp = std::sqrt(vf / double(k - 1) / double(k));
        pt.se_power = std::sqrt(vp / double(k - 1) / double(k));
      }
    }
    curve.push_back(pt);
  }
  return curve;
}

ExperimentResult run_experiment(const BenchmarkSpec& spec, const MethodConfig& method,
                                Rng& rng) {
  spec.validate();
  method.train.validate();
  const int n_seeds = int(spec.seeds.size());
  ExperimentResult out;
  out.seeds.resize(n_seeds);

  // Per-seed streams are derived up front; workers only fill their slots,
  // so the result is identical for any worker count.
  std::vector<Rng> streams;
  streams.reserve(n_seeds);
  for (int i = 0; i < n_seeds; ++i) streams.push_back(rng.substream(spec.seeds[i]));

  const int workers = std::min(thread_cap(), n_seeds);
  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_seeds) return;
      try {
        out.seeds[i] = run_seed(spec, method, spec.seeds[i], streams[i]);
      } catch (const std::exception& e) {
        out.seeds[i] = SeedResult{};
        out.seeds[i].seed = spec.seeds[i];
        out.seeds[i].failed = true;
        out.seeds[i].error = e.what();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const auto& s : out.seeds)
    if (s.failed) ++out.failed_seeds;
  out.curve = aggregate_curve(out.seeds, method.p_grid);
  return out;
}

}  // namespace kforge
