// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Returns the failure count.
//
// Usage: acceptance [criterion numbers...]   (default: all)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kforge/autoregressive.hpp"
#include "kforge/benchmarks.hpp"
#include "kforge/data.hpp"
#include "kforge/filter.hpp"
#include "kforge/math.hpp"
#include "kforge/trainer.hpp"
#include "gradient_checks.hpp"
#include "oracles.hpp"

using namespace kforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const auto start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion1_gradient_fidelity() {
  Rng rng(101);
  double worst_mixture = 0.0, worst_logprob = 0.0, worst_path = 0.0;
  int n_mix = 0, n_logp = 0, n_path = 0;

  for (int rep = 0; rep < 130 && n_mix < 100; ++rep) {
    const int k = 1 + int(rng.below(4));
    GaussianMixture1D g;
    g.weights.resize(k);
    g.means.resize(k);
    g.stddevs.resize(k);
    for (int i = 0; i < k; ++i) {
      g.weights[i] = rng.uniform(0.05, 1.0);
      g.means[i] = rng.uniform(-3.0, 3.0);
      g.stddevs[i] = rng.uniform(0.2, 2.0);
    }
    g.weights /= g.weights.sum();
    const auto w = gradcheck::mixture_partials_fd(g, rng.uniform(0.02, 0.98));
    if (w.count == 0) continue;
    worst_mixture = std::max(worst_mixture, w.rel);
    ++n_mix;
  }

  for (int rep = 0; rep < 100; ++rep) {
    const int in = int(rng.below(4));
    auto net = random_network(in, 1 + int(rng.below(4)), rng);
    Eigen::VectorXd cond(in);
    for (int i = 0; i < in; ++i) cond[i] = rng.normal();
    const auto w = gradcheck::logprob_fd(net, cond, rng.uniform(-3.0, 3.0));
    worst_logprob = std::max(worst_logprob, w.rel);
    ++n_logp;
  }

  for (int rep = 0; rep < 140 && n_path < 100; ++rep) {
    const int in = int(rng.below(3));
    auto net = random_network(in, 1 + int(rng.below(3)), rng);
    Eigen::VectorXd cond(in);
    for (int i = 0; i < in; ++i) cond[i] = rng.normal();
    Rng srng = rng.substream(900 + rep);
    const auto w = gradcheck::pathwise_fd(net, cond, srng);
    if (w.count == 0) continue;
    worst_path = std::max(worst_path, w.rel);
    ++n_path;
  }

  Outcome out;
  std::ostringstream ss;
  ss << "mixture partials worst rel " << worst_mixture << " (" << n_mix
     << " instances); log-prob worst rel " << worst_logprob << " (" << n_logp
     << "); pathwise worst rel " << worst_path << " (" << n_path << ")";
  out.detail = ss.str();
  out.pass = n_mix >= 100 && n_logp >= 100 && n_path >= 100 && worst_mixture <= 1e-4 &&
             worst_logprob <= 1e-4 && worst_path <= 1e-3;
  return out;
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion2_swap_identity() {
  Rng rng(202);
  int checked = 0, exact = 0;
  for (int model_rep = 0; model_rep < 250; ++model_rep) {
    const int d = 2 + int(rng.below(3));
    std::vector<std::pair<double, double>> support(d, {-2.0, 2.0});
    AutoregressiveModel theta, phi;
    theta.d = d;
    theta.base_dim = 0;
    theta.support = support;
    phi.d = d;
    phi.base_dim = d;
    phi.support = support;
    for (int j = 0; j < d; ++j) {
      theta.conditionals.push_back(random_network(j, 1 + int(rng.below(2)), rng));
      phi.conditionals.push_back(random_network(d + j, 1 + int(rng.below(2)), rng));
    }
    const PairLogProbFn scorer = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      return model_log_prob(theta, Eigen::VectorXd(0), a) + model_log_prob(phi, a, b);
    };
    for (int rep = 0; rep < 40; ++rep) {
      Eigen::VectorXd x(d), xt(d);
      std::vector<int> idx;
      for (int j = 0; j < d; ++j) {
        x[j] = rng.normal();
        xt[j] = rng.normal();
        if (rng.uniform() < 0.5) idx.push_back(j);
      }
      const auto h = SwapIndicator::from_set(d, idx);
      const auto [u, ut] = apply_swap(x, xt, h);
      const double direct =
          model_log_prob(theta, Eigen::VectorXd(0), u) + model_log_prob(phi, u, ut);
      if (swap_log_prob(scorer, x, xt, h) == direct) ++exact;
      ++checked;
    }
  }
  Outcome out;
  out.detail = std::to_string(exact) + "/" + std::to_string(checked) + " bit-exact";
  out.pass = checked == 10000 && exact == checked;
  return out;
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion3_threshold_oracle() {
  Rng rng(303);
  int agree = 0, total = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int d = 1 + int(rng.below(50));
    Eigen::VectorXd w(d);
    for (int j = 0; j < d; ++j) {
      double v = rng.normal();
      if (rep % 3 == 0) v = std::round(v * 2.0) / 2.0;  // ties and zeros
      if (rep % 10 == 9) v = -std::abs(v);              // all-negative
      w[j] = v;
    }
    const double p = rng.uniform(0.02, 0.98);
    KnockoffStatistics stats;
    stats.w = w;
    const auto got = knockoff_threshold(stats, p);
    const auto [tau, sel] = oracle::brute_force_threshold(w, p);
    const bool tau_same =
        got.threshold == tau || (std::isinf(got.threshold) && std::isinf(tau));
    if (tau_same && got.selected == sel) ++agree;
    ++total;
  }
  Outcome out;
  out.detail = std::to_string(agree) + "/" + std::to_string(total) + " exact matches";
  out.pass = agree == total;
  return out;
}

// ------------------------------------------------------- shared run helpers

ExperimentResult run_gaussian_experiment(MethodConfig::KnockoffSource source,
                                         double lambda,
                                         const std::vector<double>& p_grid) {
  BenchmarkSpec spec;
  spec.kind = BenchmarkSpec::Kind::gaussian;
  spec.n = 2000;
  spec.d = 30;
  spec.m = 10;
  spec.rho = {0.6};
  spec.lambda = lambda;
  spec.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  MethodConfig method;
  method.source = source;
  method.statistic = MethodConfig::Statistic::hrt;
  method.p_grid = p_grid;
  Rng rng(404);
  return run_experiment(spec, method, rng);
}

std::string curve_string(const ExperimentResult& res) {
  std::ostringstream ss;
  for (const auto& pt : res.curve) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), " p=%.2f fdp=%.3f pow=%.2f;", pt.p, pt.mean_fdp,
                  pt.mean_power);
    ss << buf;
  }
  return ss.str();
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion4_oracle_filter() {
  const std::vector<double> grid = {0.05, 0.10, 0.15, 0.20, 0.25,
                                    0.30, 0.35, 0.40, 0.45, 0.50};
  const auto res = run_gaussian_experiment(MethodConfig::KnockoffSource::oracle, 0.1, grid);
  Outcome out;
  bool ok = res.failed_seeds == 0;
  for (const auto& pt : res.curve)
    if (pt.mean_fdp > pt.p + 0.03) ok = false;
  out.pass = ok;
  out.detail = "failed_seeds=" + std::to_string(res.failed_seeds) + curve_string(res);
  return out;
}

// ----------------------------------------------------- criteria 5 and 8 data

const ExperimentResult& gaussian_ddlk_result() {
  static const ExperimentResult res =
      run_gaussian_experiment(MethodConfig::KnockoffSource::ddlk, 0.1, {0.1, 0.2, 0.3});
  return res;
}

Outcome criterion5_gaussian_pipeline() {
  const auto& res = gaussian_ddlk_result();
  Outcome out;
  bool ok = res.failed_seeds == 0;
  double power_02 = 0.0;
  for (const auto& pt : res.curve) {
    if (pt.mean_fdp > pt.p + 0.05) ok = false;
    if (pt.p == 0.2) power_02 = pt.mean_power;
  }
  if (power_02 < 0.9) ok = false;
  out.pass = ok;
  out.detail = "failed_seeds=" + std::to_string(res.failed_seeds) + curve_string(res);
  return out;
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion6_mixture_pipeline() {
  BenchmarkSpec spec;
  spec.kind = BenchmarkSpec::Kind::mixture;
  spec.n = 2000;
  spec.d = 10;
  spec.m = 4;
  spec.rho = {0.6, 0.4, 0.2};
  spec.mixture_centers = {0.0, 20.0, 40.0};
  spec.mixture_weights = {0.4, 0.2, 0.4};
  spec.lambda = 0.001;
  spec.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  MethodConfig method;
  method.statistic = MethodConfig::Statistic::hrt;
  method.p_grid = {0.2, 0.3};
  Rng rng(606);
  const auto res = run_experiment(spec, method, rng);

  Outcome out;
  bool ok = res.failed_seeds == 0;
  std::ostringstream ss;
  ss << "failed_seeds=" << res.failed_seeds << curve_string(res);
  double power_03 = 0.0;
  for (const auto& pt : res.curve) {
    if (pt.mean_fdp > pt.p + 0.05) ok = false;
    if (pt.p == 0.3) power_03 = pt.mean_power;
  }
  if (power_03 < 0.6) ok = false;

  // Knockoff marginals carry the three cluster modes within +-2 of the
  // centers, for every feature (pooled across seeds).
  long total = 0;
  for (const auto& s : res.seeds)
    if (!s.failed) total += s.knockoffs_test.rows();
  int features_with_modes = 0;
  if (total > 0) {
    for (int j = 0; j < spec.d; ++j) {
      Eigen::VectorXd pooled(total);
      long off = 0;
      for (const auto& s : res.seeds) {
        if (s.failed) continue;
        pooled.segment(off, s.knockoffs_test.rows()) = s.knockoffs_test.col(j);
        off += s.knockoffs_test.rows();
      }
      const auto modes = oracle::kde_modes(pooled, 1.5);
      const bool three = modes.size() == 3 && std::abs(modes[0] - 0.0) <= 2.0 &&
                         std::abs(modes[1] - 20.0) <= 2.0 &&
                         std::abs(modes[2] - 40.0) <= 2.0;
      if (three) ++features_with_modes;
    }
  }
  ss << " modes_ok=" << features_with_modes << "/" << spec.d;
  if (features_with_modes != spec.d) ok = false;
  out.pass = ok;
  out.detail = ss.str();
  return out;
}

// ---------------------------------------------------------------- criterion 7

double logistic_probe_auc(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xt) {
  const int n = int(x.rows());
  const int d2 = 2 * int(x.cols());
  // Row-level split keeps a pair and its mirror in the same fold.
  const int n_tr = int(std::lround(0.7 * n));
  Eigen::MatrixXd feats(2 * n, d2);
  Eigen::VectorXi labels(2 * n);
  for (int i = 0; i < n; ++i) {
    feats.row(2 * i) << x.row(i), xt.row(i);
    feats.row(2 * i + 1) << xt.row(i), x.row(i);
    labels[2 * i] = 0;
    labels[2 * i + 1] = 1;
  }
  const Eigen::MatrixXd ftr = feats.topRows(2 * n_tr);
  const Eigen::RowVectorXd mean = ftr.colwise().mean();
  Eigen::RowVectorXd scale =
      (ftr.rowwise() - mean).array().square().colwise().mean().sqrt();
  for (int j = 0; j < d2; ++j)
    if (!(scale[j] > 1e-9)) scale[j] = 1.0;
  const Eigen::MatrixXd fs = (feats.rowwise() - mean).array().rowwise() / scale.array();

  Eigen::VectorXd packed = Eigen::VectorXd::Zero(d2 + 1);
  AdamState state(d2 + 1);
  Eigen::VectorXd grad(d2 + 1);
  for (int epoch = 0; epoch < 300; ++epoch) {
    const Eigen::VectorXd f = (fs.topRows(2 * n_tr) * packed.head(d2)).array() + packed[d2];
    Eigen::VectorXd df(2 * n_tr);
    for (int i = 0; i < 2 * n_tr; ++i)
      df[i] = (logistic(f[i]) - double(labels[i])) / double(2 * n_tr);
    grad.head(d2) = fs.topRows(2 * n_tr).transpose() * df;
    grad[d2] = df.sum();
    adam_step(packed, grad, state, 0.05);
  }

  std::vector<double> scores;
  std::vector<int> lab;
  for (int i = 2 * n_tr; i < 2 * n; ++i) {
    scores.push_back(fs.row(i).dot(packed.head(d2)) + packed[d2]);
    lab.push_back(labels[i]);
  }
  return oracle::auc_score(scores, lab);
}

Outcome criterion7_swap_diagnostic() {
  double auc_sum = 0.0;
  std::ostringstream ss;
  int seeds_done = 0;
  for (std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
    Rng rng(seed);
    const int d = 5, n = 2000;
    Eigen::MatrixXd data(n, d);
    const double rho = 0.6;
    const double noise = std::sqrt(1.0 - rho * rho);
    for (int i = 0; i < n; ++i) {
      data(i, 0) = rng.normal();
      for (int j = 1; j < d; ++j) data(i, j) = rho * data(i, j - 1) + noise * rng.normal();
    }
    const int n_tr = 1400, n_va = 300;
    TrainConfig config;
    config.lambda = 0.1;
    config.seed = seed;
    const Standardizer std_ = Standardizer::fit(data.topRows(n_tr));
    Rng fit_rng(seed * 7 + 1);
    const auto joint = fit_joint(std_.transform(data.topRows(n_tr)),
                                 std_.transform(data.middleRows(n_tr, n_va)), config,
                                 fit_rng);
    Rng k_rng(seed * 7 + 2);
    const auto knockoff =
        fit_knockoff(joint.model, std_.transform(data.topRows(n_tr)),
                     std_.transform(data.middleRows(n_tr, n_va)), config, k_rng);
    Rng s_rng(seed * 7 + 3);
    const Eigen::MatrixXd kn =
        std_.inverse(sample_knockoffs_batch(knockoff.model, std_.transform(data), s_rng));
    const double auc = logistic_probe_auc(data, kn);
    auc_sum += auc;
    ++seeds_done;
    char buf[64];
    std::snprintf(buf, sizeof(buf), " seed=%llu auc=%.3f;", (unsigned long long)seed, auc);
    ss << buf;
  }
  Outcome out;
  const double mean_auc = auc_sum / double(seeds_done);
  char buf[64];
  std::snprintf(buf, sizeof(buf), " mean=%.3f", mean_auc);
  out.detail = ss.str() + buf;
  out.pass = mean_auc <= 0.60;
  return out;
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion8_entropy_monotonicity() {
  // Same data and seed, two regularization strengths.
  Rng rng(808);
  const int d = 30, n = 2000;
  Eigen::MatrixXd data(n, d);
  const double rho = 0.6;
  const double noise = std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i) {
    data(i, 0) = rng.normal();
    for (int j = 1; j < d; ++j) data(i, j) = rho * data(i, j - 1) + noise * rng.normal();
  }
  const int n_tr = 1400, n_va = 300;
  const Standardizer std_ = Standardizer::fit(data.topRows(n_tr));
  const Eigen::MatrixXd tr = std_.transform(data.topRows(n_tr));
  const Eigen::MatrixXd va = std_.transform(data.middleRows(n_tr, n_va));
  const Eigen::MatrixXd te = std_.transform(data.bottomRows(n - n_tr - n_va));
  TrainConfig config;
  Rng fit_rng(809);
  const auto joint = fit_joint(tr, va, config, fit_rng);

  auto entropy_for = [&](double lambda) {
    TrainConfig c = config;
    c.lambda = lambda;
    Rng k_rng(810);
    const auto fit = fit_knockoff(joint.model, tr, va, c, k_rng);
    Rng e_rng(811);
    return conditional_entropy_estimate(fit.model, te, e_rng);
  };
  const double h_low = entropy_for(0.001);
  const double h_high = entropy_for(10.0);

  // The lambda = 0.1 leg of this criterion is criterion 5's run.
  const auto& c5 = gaussian_ddlk_result();
  bool c5_ok = c5.failed_seeds == 0;
  for (const auto& pt : c5.curve) {
    if (pt.mean_fdp > pt.p + 0.05) c5_ok = false;
    if (pt.p == 0.2 && pt.mean_power < 0.9) c5_ok = false;
  }

  Outcome out;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "entropy(lambda=0.001)=%.3f entropy(lambda=10)=%.3f; lambda=0.1 pipeline %s",
                h_low, h_high, c5_ok ? "ok" : "violated");
  out.detail = buf;
  out.pass = h_high > h_low && c5_ok;
  return out;
}

// ---------------------------------------------------------------- criterion 9

Outcome criterion9_cli_determinism() {
  const char* cli = std::getenv("KFORGE_CLI");
  Outcome out;
  if (!cli) {
    out.detail = "KFORGE_CLI not set";
    return out;
  }
  const fs::path dir = fs::temp_directory_path() / "kforge_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p = [&](const std::string& name) { return (dir / name).string(); };

  {
    Rng rng(909);
    std::ostringstream csv;
    csv << "a,b,c,y\n";
    char buf[96];
    for (int i = 0; i < 220; ++i) {
      const double a = rng.normal();
      const double b = 0.5 * a + std::sqrt(0.75) * rng.normal();
      const double c = rng.normal();
      const double y = 2.0 * a + rng.normal();
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", a, b, c, y);
      csv << buf;
    }
    std::ofstream f(p("data.csv"));
    f << csv.str();
    std::ofstream cfg(p("cfg.json"));
    cfg << R"({"train": {"max_epochs_joint": 4, "max_epochs_knockoff": 4},)"
        << R"( "response_model": "ridge"})";
    std::ofstream bcfg(p("bench.json"));
    bcfg << R"({"response_model": "ridge", "p_grid": [0.2, 0.4],)"
         << R"( "benchmark": {"kind": "gaussian", "n": 200, "d": 5, "m": 2,)"
         << R"( "rho": 0.5, "seeds": [1, 2], "source": "oracle"}})";
  }

  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };
  auto slurp = [](const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };

  auto run_all = [&](const std::string& sub) -> bool {
    if (run("fit-joint --data " + p("data.csv") + " --response-column y --config " +
            p("cfg.json") + " --seed 17 --out " + p(sub)) != 0)
      return false;
    if (run("fit-knockoff --data " + p("data.csv") + " --joint " +
            p(sub + "/joint_model.kfm") + " --response-column y --config " + p("cfg.json") +
            " --seed 17 --out " + p(sub)) != 0)
      return false;
    if (run("sample --model " + p(sub + "/knockoff_model.kfm") + " --data " +
            p("data.csv") + " --seed 17 --out " + p(sub)) != 0)
      return false;
    if (run("select --data " + p("data.csv") + " --knockoffs " + p(sub + "/knockoffs.csv") +
            " --response-column y --config " + p("cfg.json") + " --seed 17 --out " +
            p(sub)) != 0)
      return false;
    if (run("benchmark --config " + p("bench.json") + " --seed 17 --out " +
            p(sub + "/bench")) != 0)
      return false;
    return true;
  };

  if (!run_all("r1") || !run_all("r2")) {
    out.detail = "a command failed";
    fs::remove_all(dir);
    return out;
  }
  const std::vector<std::string> files = {
      "joint_model.kfm",       "joint_history.json", "knockoff_model.kfm",
      "knockoff_history.json", "knockoffs.csv",      "selections.json",
      "bench/curve.csv",       "bench/summary.json", "bench/seed_1.json",
      "bench/seed_2.json",     "bench/hist_x1.csv"};
  int identical = 0;
  std::string first_diff;
  for (const auto& f : files) {
    if (slurp(dir / "r1" / f) == slurp(dir / "r2" / f))
      ++identical;
    else if (first_diff.empty())
      first_diff = f;
  }
  out.pass = identical == int(files.size());
  out.detail = std::to_string(identical) + "/" + std::to_string(files.size()) +
               " outputs byte-identical" +
               (first_diff.empty() ? "" : ("; first diff: " + first_diff));
  fs::remove_all(dir);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto selected = [&](int k) { return wanted.empty() || wanted.count(k) > 0; };

  struct Entry {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const std::vector<Entry> entries = {
      {1, "gradient fidelity", criterion1_gradient_fidelity},
      {2, "swap log-prob identity", criterion2_swap_identity},
      {3, "threshold oracle", criterion3_threshold_oracle},
      {4, "filter correctness with oracle knockoffs", criterion4_oracle_filter},
      {5, "gaussian DDLK pipeline", criterion5_gaussian_pipeline},
      {6, "mixture DDLK pipeline", criterion6_mixture_pipeline},
      {7, "swap-property diagnostic", criterion7_swap_diagnostic},
      {8, "entropy-regularization monotonicity", criterion8_entropy_monotonicity},
      {9, "CLI determinism", criterion9_cli_determinism},
  };

  int failures = 0;
  for (const auto& e : entries) {
    if (!selected(e.id)) continue;
    const double t0 = now_seconds();
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception& ex) {
      out.pass = false;
      out.detail = std::string("exception: ") + ex.what();
    }
    const double dt = now_seconds() - t0;
    std::printf("CRITERION %d (%s): %s [%.1f s] %s\n", e.id, e.name,
                out.pass ? "PASS" : "FAIL", dt, out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures;
}
