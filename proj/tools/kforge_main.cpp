// knockoff-forge command line: fit DDLK models, sample knockoffs, select
// features with FDR control, and run the synthetic benchmark harness.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kforge/autoregressive.hpp"
#include "kforge/benchmarks.hpp"
#include "kforge/data.hpp"
#include "kforge/errors.hpp"
#include "kforge/filter.hpp"
#include "kforge/model_io.hpp"
#include "kforge/trainer.hpp"

using nlohmann::json;
using namespace kforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct RunConfig {
  TrainConfig train;
  std::string statistic = "hrt";           // hrt | mixture
  std::string response_model = "neural";   // neural | ridge
  std::vector<double> p_grid = {0.05, 0.10, 0.15, 0.20, 0.25,
                                0.30, 0.35, 0.40, 0.45, 0.50};
  double fit_val_fraction = 0.15;          // fit commands: validation share
  double select_train_fraction = 0.70;     // select command: response-model share
  bool has_benchmark = false;
  BenchmarkSpec bench;
  std::string knockoff_source = "ddlk";    // ddlk | oracle
};

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw InputError("config: unknown key '" + it.key() + "' in " + where);
  }
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw InputError("config: " + where + " must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw InputError("config: " + where + " must be an integer");
  return v.get<int>();
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  require_keys(j, "top level",
               {"train", "statistic", "response_model", "p_grid", "split", "benchmark"});
  if (j.contains("train")) {
    const json& t = j.at("train");
    require_keys(t, "train",
                 {"lambda", "lr_phi", "lr_beta", "lr_joint", "max_epochs_joint",
                  "max_epochs_knockoff", "batch_size", "patience", "temperature",
                  "mixture_components"});
    if (t.contains("lambda")) cfg.train.lambda = as_number(t["lambda"], "train.lambda");
    if (t.contains("lr_phi")) cfg.train.lr_phi = as_number(t["lr_phi"], "train.lr_phi");
    if (t.contains("lr_beta")) cfg.train.lr_beta = as_number(t["lr_beta"], "train.lr_beta");
    if (t.contains("lr_joint"))
      cfg.train.lr_joint = as_number(t["lr_joint"], "train.lr_joint");
    if (t.contains("max_epochs_joint"))
      cfg.train.max_epochs_joint = as_int(t["max_epochs_joint"], "train.max_epochs_joint");
    if (t.contains("max_epochs_knockoff"))
      cfg.train.max_epochs_knockoff =
          as_int(t["max_epochs_knockoff"], "train.max_epochs_knockoff");
    if (t.contains("batch_size"))
      cfg.train.batch_size = as_int(t["batch_size"], "train.batch_size");
    if (t.contains("patience")) cfg.train.patience = as_int(t["patience"], "train.patience");
    if (t.contains("temperature"))
      cfg.train.temperature = as_number(t["temperature"], "train.temperature");
    if (t.contains("mixture_components"))
      cfg.train.mixture_components =
          as_int(t["mixture_components"], "train.mixture_components");
  }
  if (j.contains("statistic")) {
    cfg.statistic = j.at("statistic").get<std::string>();
    if (cfg.statistic != "hrt" && cfg.statistic != "mixture")
      throw InputError("config: statistic must be 'hrt' or 'mixture'");
  }
  if (j.contains("response_model")) {
    cfg.response_model = j.at("response_model").get<std::string>();
    if (cfg.response_model != "neural" && cfg.response_model != "ridge")
      throw InputError("config: response_model must be 'neural' or 'ridge'");
  }
  if (j.contains("p_grid")) {
    cfg.p_grid.clear();
    for (const auto& v : j.at("p_grid")) {
      const double p = as_number(v, "p_grid entry");
      if (!(p > 0.0 && p < 1.0)) throw InputError("config: p_grid entries must be in (0,1)");
      cfg.p_grid.push_back(p);
    }
    if (cfg.p_grid.empty()) throw InputError("config: p_grid empty");
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    require_keys(s, "split", {"fit_val_fraction", "select_train_fraction"});
    if (s.contains("fit_val_fraction"))
      cfg.fit_val_fraction = as_number(s["fit_val_fraction"], "split.fit_val_fraction");
    if (s.contains("select_train_fraction"))
      cfg.select_train_fraction =
          as_number(s["select_train_fraction"], "split.select_train_fraction");
    if (!(cfg.fit_val_fraction > 0.0 && cfg.fit_val_fraction < 0.5))
      throw InputError("config: fit_val_fraction must be in (0, 0.5)");
    if (!(cfg.select_train_fraction > 0.0 && cfg.select_train_fraction < 1.0))
      throw InputError("config: select_train_fraction must be in (0, 1)");
  }
  if (j.contains("benchmark")) {
    cfg.has_benchmark = true;
    const json& b = j.at("benchmark");
    require_keys(b, "benchmark",
                 {"kind", "n", "d", "m", "rho", "centers", "weights", "lambda", "seeds",
                  "source", "split"});
    const std::string kind = b.value("kind", "gaussian");
    if (kind == "gaussian")
      cfg.bench.kind = BenchmarkSpec::Kind::gaussian;
    else if (kind == "mixture")
      cfg.bench.kind = BenchmarkSpec::Kind::mixture;
    else if (kind == "gene")
      cfg.bench.kind = BenchmarkSpec::Kind::gene_response;
    else
      throw InputError("config: benchmark.kind must be gaussian, mixture, or gene");
    if (b.contains("n")) cfg.bench.n = as_int(b["n"], "benchmark.n");
    if (b.contains("d")) cfg.bench.d = as_int(b["d"], "benchmark.d");
    if (b.contains("m")) cfg.bench.m = as_int(b["m"], "benchmark.m");
    if (b.contains("rho")) {
      cfg.bench.rho.clear();
      if (b["rho"].is_array())
        for (const auto& v : b["rho"]) cfg.bench.rho.push_back(as_number(v, "rho"));
      else
        cfg.bench.rho.push_back(as_number(b["rho"], "rho"));
    }
    if (b.contains("centers")) {
      cfg.bench.mixture_centers.clear();
      for (const auto& v : b["centers"])
        cfg.bench.mixture_centers.push_back(as_number(v, "centers"));
    }
    if (b.contains("weights")) {
      cfg.bench.mixture_weights.clear();
      for (const auto& v : b["weights"])
        cfg.bench.mixture_weights.push_back(as_number(v, "weights"));
    }
    if (b.contains("lambda")) cfg.bench.lambda = as_number(b["lambda"], "benchmark.lambda");
    if (b.contains("seeds")) {
      cfg.bench.seeds.clear();
      for (const auto& v : b["seeds"])
        cfg.bench.seeds.push_back(std::uint64_t(as_int(v, "seeds")));
      if (cfg.bench.seeds.empty()) throw InputError("config: benchmark.seeds empty");
    }
    if (b.contains("source")) {
      cfg.knockoff_source = b["source"].get<std::string>();
      if (cfg.knockoff_source != "ddlk" && cfg.knockoff_source != "oracle")
        throw InputError("config: benchmark.source must be 'ddlk' or 'oracle'");
    }
    if (b.contains("split")) {
      const json& s = b["split"];
      require_keys(s, "benchmark.split", {"train", "val", "test"});
      cfg.bench.split_train = as_number(s.value("train", json(0.70)), "split.train");
      cfg.bench.split_val = as_number(s.value("val", json(0.15)), "split.val");
      cfg.bench.split_test = as_number(s.value("test", json(0.15)), "split.test");
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw InputError(std::string("config '") + path + "': " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------

void ensure_outdir(const std::string& out) {
  if (out.empty()) throw InputError("--out directory required");
  std::filesystem::create_directories(out);
}

struct SplitData {
  Eigen::MatrixXd train, val;
};

// Seed-shuffled row split used by the fitting commands.
SplitData split_rows(const Eigen::MatrixXd& x, double val_fraction, std::uint64_t seed) {
  const int n = int(x.rows());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5b117));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[size_t(rng.below(std::uint64_t(i + 1)))]);
  const int n_val = std::max(1, int(std::lround(val_fraction * n)));
  const int n_tr = n - n_val;
  if (n_tr < 2) throw InputError("dataset too small to split");
  SplitData out;
  out.train.resize(n_tr, x.cols());
  out.val.resize(n_val, x.cols());
  for (int i = 0; i < n_tr; ++i) out.train.row(i) = x.row(order[i]);
  for (int i = 0; i < n_val; ++i) out.val.row(i) = x.row(order[n_tr + i]);
  return out;
}

struct Covariates {
  Eigen::MatrixXd x;
  std::vector<std::string> names;
  Eigen::VectorXd y;
  bool has_y = false;
};

Covariates covariates_of(const DataMatrix& data, const std::string& response_column,
                         bool response_required) {
  Covariates out;
  int y_idx = -1;
  for (size_t j = 0; j < data.columns.size(); ++j)
    if (data.columns[j] == response_column) y_idx = int(j);
  if (response_required && y_idx < 0)
    throw InputError("response column '" + response_column + "' not found");
  for (size_t j = 0; j < data.columns.size(); ++j) {
    if (int(j) == y_idx) continue;
    out.names.push_back(data.columns[j]);
  }
  out.x.resize(data.rows(), long(out.names.size()));
  int k = 0;
  for (size_t j = 0; j < data.columns.size(); ++j) {
    if (int(j) == y_idx) continue;
    out.x.col(k++) = data.values.col(long(j));
  }
  if (y_idx >= 0) {
    out.y = data.values.col(y_idx);
    out.has_y = true;
  }
  return out;
}

json history_json(const std::vector<ConditionalFitHistory>& hist) {
  json out = json::array();
  for (const auto& h : hist) {
    out.push_back({{"feature", h.feature},
                   {"train_nll", h.train_nll},
                   {"val_nll", h.val_nll},
                   {"best_epoch", h.best_epoch},
                   {"best_val_nll", h.best_val_nll}});
  }
  return out;
}

json history_json(const std::vector<EpochReport>& hist) {
  json out = json::array();
  for (const auto& h : hist) {
    out.push_back({{"epoch", h.epoch},
                   {"A", h.a},
                   {"B", h.b},
                   {"objective", h.objective},
                   {"val_objective", h.val_objective}});
  }
  return out;
}

void write_json(const std::string& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int cmd_fit_joint(const std::string& data_path, const std::string& response_column,
                  const RunConfig& cfg, std::uint64_t seed, const std::string& out) {
  ensure_outdir(out);
  const DataMatrix data = read_csv(data_path);
  const Covariates cov = covariates_of(data, response_column, false);
  const SplitData split = split_rows(cov.x, cfg.fit_val_fraction, seed);
  const Standardizer standardizer = Standardizer::fit(split.train);

  TrainConfig tc = cfg.train;
  tc.seed = seed;
  Rng rng(derive_seed(seed, 0xF177));
  const JointFitResult fit = fit_joint(standardizer.transform(split.train),
                                       standardizer.transform(split.val), tc, rng);

  ModelBundle bundle;
  bundle.kind = "joint";
  bundle.model = fit.model;
  bundle.standardizer = standardizer;
  bundle.columns = cov.names;
  save_model(out + "/joint_model.kfm", bundle);
  json hist;
  hist["command"] = "fit-joint";
  hist["seed"] = seed;
  hist["d"] = int(cov.names.size());
  hist["conditionals"] = history_json(fit.history);
  write_json(out + "/joint_history.json", hist);
  std::cout << "wrote " << out << "/joint_model.kfm\n";
  return kExitOk;
}

int cmd_fit_knockoff(const std::string& data_path, const std::string& joint_path,
                     const std::string& response_column, const RunConfig& cfg,
                     std::uint64_t seed, double lambda_override, const std::string& out) {
  ensure_outdir(out);
  const ModelBundle joint = load_model(joint_path);
  if (joint.kind != "joint") throw InputError("'" + joint_path + "' is not a joint model");
  const DataMatrix data = read_csv(data_path);
  const Covariates cov = covariates_of(data, response_column, false);
  if (cov.names != joint.columns)
    throw InputError("data columns do not match the joint model's covariates");

  const SplitData split = split_rows(cov.x, cfg.fit_val_fraction, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  if (lambda_override >= 0.0) tc.lambda = lambda_override;
  Rng rng(derive_seed(seed, 0xA177));
  const KnockoffFitResult fit =
      fit_knockoff(joint.model, joint.standardizer.transform(split.train),
                   joint.standardizer.transform(split.val), tc, rng);

  ModelBundle bundle;
  bundle.kind = "knockoff";
  bundle.model = fit.model;
  bundle.standardizer = joint.standardizer;
  bundle.columns = joint.columns;
  bundle.sampler = fit.sampler;
  bundle.has_sampler = true;
  save_model(out + "/knockoff_model.kfm", bundle);
  json hist;
  hist["command"] = "fit-knockoff";
  hist["seed"] = seed;
  hist["lambda"] = tc.lambda;
  hist["epochs"] = history_json(fit.history);
  hist["swap_logits"] = std::vector<double>(
      fit.sampler.logits.data(), fit.sampler.logits.data() + fit.sampler.logits.size());
  write_json(out + "/knockoff_history.json", hist);
  std::cout << "wrote " << out << "/knockoff_model.kfm\n";
  return kExitOk;
}

int cmd_sample(const std::string& model_path, const std::string& data_path,
               std::uint64_t seed, const std::string& out) {
  ensure_outdir(out);
  const ModelBundle bundle = load_model(model_path);
  if (bundle.kind != "knockoff")
    throw InputError("'" + model_path + "' is not a knockoff model");
  const DataMatrix data = read_csv(data_path);

  // Select the model's covariates by name; everything else is echoed.
  std::vector<int> col_idx;
  for (const auto& name : bundle.columns) {
    int found = -1;
    for (size_t j = 0; j < data.columns.size(); ++j)
      if (data.columns[j] == name) found = int(j);
    if (found < 0) throw InputError("input is missing model covariate '" + name + "'");
    col_idx.push_back(found);
  }
  Eigen::MatrixXd x(data.rows(), long(col_idx.size()));
  for (size_t k = 0; k < col_idx.size(); ++k) x.col(long(k)) = data.values.col(col_idx[k]);

  Rng rng(derive_seed(seed, 0x5A3));
  const Eigen::MatrixXd kn = bundle.standardizer.inverse(
      sample_knockoffs_batch(bundle.model, bundle.standardizer.transform(x), rng));

  DataMatrix outm;
  outm.columns = data.columns;
  for (const auto& name : bundle.columns) outm.columns.push_back(name + "_knockoff");
  outm.values.resize(data.rows(), data.values.cols() + kn.cols());
  outm.values.leftCols(data.values.cols()) = data.values;
  outm.values.rightCols(kn.cols()) = kn;
  write_csv(out + "/knockoffs.csv", outm);
  std::cout << "wrote " << out << "/knockoffs.csv\n";
  return kExitOk;
}

int cmd_select(const std::string& data_path, const std::string& knockoffs_path,
               const std::string& response_column, const RunConfig& cfg,
               const std::string& stat_override, std::uint64_t seed,
               const std::string& out) {
  ensure_outdir(out);
  const DataMatrix data = read_csv(data_path);
  const Covariates cov = covariates_of(data, response_column, true);
  const DataMatrix kn_data = read_csv(knockoffs_path);
  if (kn_data.rows() != data.rows())
    throw InputError("knockoffs row count does not match the data");

  Eigen::MatrixXd kn(data.rows(), cov.x.cols());
  for (size_t j = 0; j < cov.names.size(); ++j) {
    const std::string want = cov.names[j] + "_knockoff";
    int found = -1;
    for (size_t k = 0; k < kn_data.columns.size(); ++k)
      if (kn_data.columns[k] == want) found = int(k);
    if (found < 0) throw InputError("knockoffs file is missing column '" + want + "'");
    kn.col(long(j)) = kn_data.values.col(found);
  }

  const std::string stat = stat_override.empty() ? cfg.statistic : stat_override;
  ResponseModel::Options opt;
  opt.kind = cfg.response_model == "ridge" ? ResponseModel::Kind::ridge
                                           : ResponseModel::Kind::neural;

  // Seed-shuffled holdout split for the statistic.
  const int n = data.rows();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(seed, 0x5E1));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[size_t(shuffle_rng.below(std::uint64_t(i + 1)))]);
  const int n_tr = std::max(2, int(std::lround(cfg.select_train_fraction * n)));
  const int n_te = n - n_tr;
  if (n_te < 2) throw InputError("dataset too small for a holdout split");
  Eigen::MatrixXd xtr(n_tr, cov.x.cols()), xte(n_te, cov.x.cols());
  Eigen::MatrixXd kntr(n_tr, cov.x.cols()), knte(n_te, cov.x.cols());
  Eigen::VectorXd ytr(n_tr), yte(n_te);
  for (int i = 0; i < n_tr; ++i) {
    xtr.row(i) = cov.x.row(order[i]);
    kntr.row(i) = kn.row(order[i]);
    ytr[i] = cov.y[order[i]];
  }
  for (int i = 0; i < n_te; ++i) {
    xte.row(i) = cov.x.row(order[n_tr + i]);
    knte.row(i) = kn.row(order[n_tr + i]);
    yte[i] = cov.y[order[n_tr + i]];
  }

  Rng fit_rng(derive_seed(seed, 0x5E2));
  KnockoffStatistics stats;
  if (stat == "mixture") {
    stats = mixture_statistics(xtr, ytr, kntr, xte, yte, knte, opt, fit_rng).stats;
  } else {
    const ResponseModel model = ResponseModel::fit(xtr, ytr, opt, fit_rng);
    stats = hrt_statistics(model, xte, yte, knte);
  }

  json report;
  report["command"] = "select";
  report["seed"] = seed;
  report["statistic"] = stat;
  report["response_column"] = response_column;
  json wj = json::object();
  for (size_t j = 0; j < cov.names.size(); ++j) wj[cov.names[j]] = stats.w[long(j)];
  report["w"] = wj;
  int pos = 0, neg = 0, zero = 0;
  for (Eigen::Index j = 0; j < stats.w.size(); ++j) {
    if (stats.w[j] > 0.0)
      ++pos;
    else if (stats.w[j] < 0.0)
      ++neg;
    else
      ++zero;
  }
  report["null_sign_balance"] = {{"positive", pos},
                                 {"negative", neg},
                                 {"zero", zero},
                                 {"fraction_positive_nonzero",
                                  pos + neg > 0 ? double(pos) / double(pos + neg) : 0.5}};
  json levels = json::array();
  for (double p : cfg.p_grid) {
    const SelectionResult sel = knockoff_threshold(stats, p);
    json lv;
    lv["p"] = p;
    if (std::isfinite(sel.threshold))
      lv["tau"] = sel.threshold;
    else
      lv["tau"] = nullptr;
    json names = json::array();
    for (int j : sel.selected) names.push_back(cov.names[size_t(j)]);
    lv["selected"] = names;
    levels.push_back(lv);
  }
  report["levels"] = levels;
  write_json(out + "/selections.json", report);
  std::cout << "wrote " << out << "/selections.json\n";
  return kExitOk;
}

int cmd_benchmark(const RunConfig& cfg, std::uint64_t seed, double lambda_override,
                  const std::string& stat_override, const std::string& out) {
  ensure_outdir(out);
  if (!cfg.has_benchmark) throw InputError("config lacks a 'benchmark' section");
  BenchmarkSpec spec = cfg.bench;
  if (lambda_override >= 0.0) spec.lambda = lambda_override;
  MethodConfig method;
  method.train = cfg.train;
  method.p_grid = cfg.p_grid;
  method.source = cfg.knockoff_source == "oracle" ? MethodConfig::KnockoffSource::oracle
                                                  : MethodConfig::KnockoffSource::ddlk;
  const std::string stat = stat_override.empty() ? cfg.statistic : stat_override;
  method.statistic = stat == "mixture" ? MethodConfig::Statistic::mixture
                                       : MethodConfig::Statistic::hrt;
  method.response.kind = cfg.response_model == "ridge" ? ResponseModel::Kind::ridge
                                                       : ResponseModel::Kind::neural;

  Rng rng(seed);
  const ExperimentResult result = run_experiment(spec, method, rng);

  for (const auto& s : result.seeds) {
    json js;
    js["seed"] = s.seed;
    js["failed"] = s.failed;
    if (s.failed) {
      js["error"] = s.error;
    } else {
      js["w"] = std::vector<double>(s.w.data(), s.w.data() + s.w.size());
      js["truth"] = s.truth;
      js["conditional_entropy"] = s.conditional_entropy;
      json levels = json::array();
      for (const auto& lv : s.levels) {
        json l;
        l["p"] = lv.p;
        l["fdp"] = lv.fdp;
        l["power"] = lv.power;
        l["n_selected"] = lv.n_selected;
        if (std::isfinite(lv.tau))
          l["tau"] = lv.tau;
        else
          l["tau"] = nullptr;
        levels.push_back(l);
      }
      js["levels"] = levels;
    }
    write_json(out + "/seed_" + std::to_string(s.seed) + ".json", js);
  }

  {
    std::string csv = "p,mean_fdp,se_fdp,mean_power,se_power\n";
    char buf[160];
    for (const auto& pt : result.curve) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n", pt.p, pt.mean_fdp,
                    pt.se_fdp, pt.mean_power, pt.se_power);
      csv += buf;
    }
    write_file_atomic(out + "/curve.csv", csv);
  }

  // Per-feature marginal histograms, data vs knockoffs, pooled over the
  // non-failed seeds' test splits.
  {
    std::vector<const SeedResult*> ok;
    for (const auto& s : result.seeds)
      if (!s.failed) ok.push_back(&s);
    if (!ok.empty()) {
      const int d = int(ok.front()->x_test.cols());
      long total = 0;
      for (const auto* s : ok) total += s->x_test.rows();
      for (int j = 0; j < d; ++j) {
        Eigen::VectorXd a(total), b(total);
        long off = 0;
        for (const auto* s : ok) {
          a.segment(off, s->x_test.rows()) = s->x_test.col(j);
          b.segment(off, s->x_test.rows()) = s->knockoffs_test.col(j);
          off += s->x_test.rows();
        }
        const double lo = std::min(a.minCoeff(), b.minCoeff());
        const double hi = std::max(a.maxCoeff(), b.maxCoeff());
        const int bins = 60;
        const double width = hi > lo ? (hi - lo) / bins : 1.0;
        std::vector<long> ca(bins, 0), cb(bins, 0);
        for (long i = 0; i < total; ++i) {
          ca[std::min(bins - 1, int((a[i] - lo) / width))] += 1;
          cb[std::min(bins - 1, int((b[i] - lo) / width))] += 1;
        }
        std::string csv = "bin_lo,bin_hi,count_data,count_knockoff\n";
        char buf[160];
        for (int g = 0; g < bins; ++g) {
          std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%ld,%ld\n", lo + g * width,
                        lo + (g + 1) * width, ca[g], cb[g]);
          csv += buf;
        }
        write_file_atomic(out + "/hist_x" + std::to_string(j + 1) + ".csv", csv);
      }
    }
  }

  json summary;
  summary["seeds_total"] = int(result.seeds.size());
  summary["seeds_failed"] = result.failed_seeds;
  summary["p_grid"] = cfg.p_grid;
  write_json(out + "/summary.json", summary);
  std::cout << "wrote " << out << "/curve.csv (" << result.failed_seeds
            << " failed seeds)\n";
  return result.failed_seeds == int(result.seeds.size()) ? kExitNumeric : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knockoff-forge: DDLK knockoff generation and FDR-controlled selection"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_path, response_column = "y";
  std::string joint_path, model_path, knockoffs_path, stat_override;
  std::uint64_t seed = 0;
  double lambda_override = -1.0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--out", out_dir, "output directory")->required();
  };

  auto* fit_joint_cmd =
      app.add_subcommand("fit-joint", "Stage 1: fit the covariate joint model");
  fit_joint_cmd->add_option("--data", data_path, "covariate CSV")->required();
  fit_joint_cmd->add_option("--response-column", response_column,
                            "column to exclude from the covariates");
  add_common(fit_joint_cmd);

  auto* fit_knockoff_cmd =
      app.add_subcommand("fit-knockoff", "Stage 2: minimax-train the knockoff model");
  fit_knockoff_cmd->add_option("--data", data_path, "covariate CSV")->required();
  fit_knockoff_cmd->add_option("--joint", joint_path, "joint model file")->required();
  fit_knockoff_cmd->add_option("--response-column", response_column,
                               "column to exclude from the covariates");
  fit_knockoff_cmd->add_option("--lambda", lambda_override, "entropy regularization");
  add_common(fit_knockoff_cmd);

  auto* sample_cmd = app.add_subcommand("sample", "sample knockoffs for a dataset");
  sample_cmd->add_option("--model", model_path, "knockoff model file")->required();
  sample_cmd->add_option("--data", data_path, "covariate CSV")->required();
  add_common(sample_cmd);

  auto* select_cmd = app.add_subcommand("select", "compute statistics and select features");
  select_cmd->add_option("--data", data_path, "data CSV including the response")->required();
  select_cmd->add_option("--knockoffs", knockoffs_path, "knockoff CSV")->required();
  select_cmd->add_option("--response-column", response_column, "response column name");
  select_cmd->add_option("--stat", stat_override, "hrt or mixture")
      ->check(CLI::IsMember({"hrt", "mixture"}));
  add_common(select_cmd);

  auto* bench_cmd = app.add_subcommand("benchmark", "run a synthetic benchmark");
  bench_cmd->add_option("--lambda", lambda_override, "entropy regularization");
  bench_cmd->add_option("--stat", stat_override, "hrt or mixture")
      ->check(CLI::IsMember({"hrt", "mixture"}));
  add_common(bench_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    const RunConfig cfg = load_config(config_path);
    if (app.got_subcommand(fit_joint_cmd))
      return cmd_fit_joint(data_path, response_column, cfg, seed, out_dir);
    if (app.got_subcommand(fit_knockoff_cmd))
      return cmd_fit_knockoff(data_path, joint_path, response_column, cfg, seed,
                              lambda_override, out_dir);
    if (app.got_subcommand(sample_cmd))
      return cmd_sample(model_path, data_path, seed, out_dir);
    if (app.got_subcommand(select_cmd))
      return cmd_select(data_path, knockoffs_path, response_column, cfg, stat_override,
                        seed, out_dir);
    if (app.got_subcommand(bench_cmd))
      return cmd_benchmark(cfg, seed, lambda_override, stat_override, out_dir);
    throw InputError("no subcommand");
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
