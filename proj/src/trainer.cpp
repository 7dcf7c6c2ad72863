#include "kforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace kforge {

namespace {

struct SampledBatch {
  Eigen::MatrixXd full;  // (2d) x n: x rows then sampled xt rows
  std::vector<ConditionalDensityNetwork::BatchCache> caches;
  std::vector<ConditionalDensityNetwork::HeadSeeds> sample_seeds;
  std::vector<Eigen::MatrixXd> sample_dcond;  // per conditional, (d+j) x n
};

// Samples knockoffs for every batch row, keeping forward caches and the
// pathwise seed/input-gradient records when requested.
SampledBatch sample_batch(const AutoregressiveModel& phi, const Eigen::MatrixXd& batch,
                          Rng& rng, bool want_grads) {
  const int d = phi.d;
  const int n = static_cast<int>(batch.rows());
  SampledBatch sb;
  sb.full.resize(2 * d, n);
  sb.full.topRows(d) = batch.transpose();
  Eigen::MatrixXd u1(n, d), u2(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      u1(i, j) = rng.uniform();
      u2(i, j) = rng.uniform();
    }
  sb.caches.resize(d);
  if (want_grads) {
    sb.sample_seeds.resize(d);
    sb.sample_dcond.resize(d);
  }
  for (int j = 0; j < d; ++j) {
    sb.caches[j] = phi.conditionals[j].forward_batch(sb.full.topRows(d + j));
    Eigen::VectorXd zs(n);
    for (int i = 0; i < n; ++i)
      zs[i] = mixture_sample_value(phi.conditionals[j].mixture_at(sb.caches[j], i),
                                   u1(i, j), u2(i, j));
    sb.full.row(d + j) = zs.transpose();
    if (want_grads) {
      sb.sample_seeds[j] = phi.conditionals[j].sample_seeds(sb.caches[j], zs, nullptr);
      phi.conditionals[j].backward(sb.caches[j], sb.sample_seeds[j], &sb.sample_dcond[j],
                                   nullptr, nullptr);
    }
  }
  return sb;
}

Eigen::VectorXd joint_logp_rows(const AutoregressiveModel& theta,
                                const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd base(rows.rows(), 0);
  return model_log_prob_batch(theta, base, rows);
}

}  // namespace

ObjectiveBatchResult ddlk_objective_batch(const AutoregressiveModel& theta,
                                          const AutoregressiveModel& phi,
                                          const Eigen::MatrixXd& batch,
                                          const SwapDraw& swap, double lambda, Rng& rng,
                                          const Eigen::VectorXd* cached_joint_logp) {
  const int d = phi.d;
  const int n = static_cast<int>(batch.rows());
  if (phi.base_dim != d || batch.cols() != d || theta.d != d || theta.base_dim != 0)
    throw std::invalid_argument("ddlk_objective_batch dimension mismatch");
  if (swap.indicator.size() != d)
    throw std::invalid_argument("swap indicator length mismatch");
  if (!batch.allFinite()) throw std::invalid_argument("batch must be finite");
  const double inv_n = 1.0 / double(n);

  // ---- sample xt with pathwise records ----
  SampledBatch sb = sample_batch(phi, batch, rng, true);

  // ---- A: joint at x (phi-constant) plus knockoff log-likelihood at xt ----
  Eigen::VectorXd a_rows =
      cached_joint_logp ? *cached_joint_logp : joint_logp_rows(theta, batch);
  if (a_rows.size() != n) throw std::invalid_argument("cached joint logp length mismatch");

  std::vector<ConditionalDensityNetwork::BatchLogProb> a_blp(d);
  std::vector<Eigen::MatrixXd> a_dcond(d);
  for (int j = 0; j < d; ++j) {
    a_blp[j] = phi.conditionals[j].logprob_seeds(sb.caches[j], sb.full.row(d + j).transpose());
    phi.conditionals[j].backward(sb.caches[j], a_blp[j].seeds, &a_dcond[j], nullptr,
                                 nullptr);
    a_rows += (1.0 + lambda) * a_blp[j].logp;
  }

  // ---- swap to (u, ut) and evaluate B ----
  Eigen::MatrixXd full_b(2 * d, n);
  for (int k = 0; k < d; ++k) {
    if (swap.indicator.bits[k]) {
      full_b.row(k) = sb.full.row(d + k);
      full_b.row(d + k) = sb.full.row(k);
    } else {
      full_b.row(k) = sb.full.row(k);
      full_b.row(d + k) = sb.full.row(d + k);
    }
  }
  const Eigen::MatrixXd u_rows_t = full_b.topRows(d).transpose();  // n x d
  const ModelInputGrads theta_grads =
      model_log_prob_input_grads(theta, Eigen::MatrixXd(n, 0), u_rows_t);
  Eigen::VectorXd b_rows = theta_grads.logp;

  std::vector<ConditionalDensityNetwork::BatchCache> b_caches(d);
  std::vector<ConditionalDensityNetwork::BatchLogProb> b_blp(d);
  std::vector<Eigen::MatrixXd> b_dcond(d);
  for (int j = 0; j < d; ++j) {
    b_caches[j] = phi.conditionals[j].forward_batch(full_b.topRows(d + j));
    b_blp[j] = phi.conditionals[j].logprob_seeds(b_caches[j], full_b.row(d + j).transpose());
    phi.conditionals[j].backward(b_caches[j], b_blp[j].seeds, &b_dcond[j], nullptr,
                                 nullptr);
    b_rows += b_blp[j].logp;
  }

  ObjectiveBatchResult out;
  out.knockoffs = sb.full.bottomRows(d).transpose();
  out.report.a = a_rows.mean();
  out.report.b = b_rows.mean();
  out.report.objective = out.report.a - out.report.b;
  if (!std::isfinite(out.report.objective)) {
    std::ostringstream msg;
    msg << "ddlk objective non-finite (A=" << out.report.a << ", B=" << out.report.b
        << ")";
    throw NumericError(msg.str());
  }

  // ---- dL/du and dL/dut, accumulated across every B-side consumer ----
  // du(i, k): theta conditioning/evaluation paths plus knockoff cond paths.
  Eigen::MatrixXd du = theta_grads.d_v;                  // n x d
  Eigen::MatrixXd dut = Eigen::MatrixXd::Zero(n, d);     // n x d
  for (int j = 0; j < d; ++j) {
    du += b_dcond[j].topRows(d).transpose();
    if (j > 0) dut.leftCols(j) += b_dcond[j].bottomRows(j).transpose();
    dut.col(j) += b_blp[j].d_z;
  }

  // ---- adjoint on xt: direct A terms plus swapped B terms ----
  Eigen::MatrixXd dxt = Eigen::MatrixXd::Zero(n, d);
  for (int j = 0; j < d; ++j) {
    dxt.col(j) += (1.0 + lambda) * inv_n * a_blp[j].d_z;
    if (j > 0)
      dxt.leftCols(j) += (1.0 + lambda) * inv_n * a_dcond[j].bottomRows(j).transpose();
  }
  for (int k = 0; k < d; ++k) {
    if (swap.indicator.bits[k])
      dxt.col(k) -= inv_n * du.col(k);
    else
      dxt.col(k) -= inv_n * dut.col(k);
  }

  // ---- straight-through beta gradient ----
  out.grad_beta.resize(d);
  for (int k = 0; k < d; ++k) {
    const Eigen::VectorXd diff = (sb.full.row(d + k) - sb.full.row(k)).transpose();
    const double d_soft = (du.col(k).dot(diff) - dut.col(k).dot(diff)) * inv_n;
    out.grad_beta[k] = -d_soft * swap.pathgrad_logits[k];
  }

  // ---- chain the xt adjoint back through the sampling path ----
  Eigen::MatrixXd chained = dxt;  // n x d
  for (int l = d - 1; l >= 0; --l)
    for (int j = 0; j < l; ++j)
      chained.col(j) +=
          chained.col(l).cwiseProduct(sb.sample_dcond[l].row(d + j).transpose());

  // ---- parameter gradients ----
  out.grads_phi.resize(d);
  const Eigen::VectorXd w_a = Eigen::VectorXd::Constant(n, (1.0 + lambda) * inv_n);
  const Eigen::VectorXd w_b = Eigen::VectorXd::Constant(n, -inv_n);
  for (int j = 0; j < d; ++j) {
    out.grads_phi[j] = Eigen::VectorXd::Zero(phi.conditionals[j].param_count());
    const Eigen::VectorXd w_path = chained.col(j);
    phi.conditionals[j].backward(sb.caches[j], sb.sample_seeds[j], nullptr, &w_path,
                                 &out.grads_phi[j]);
    phi.conditionals[j].backward(sb.caches[j], a_blp[j].seeds, nullptr, &w_a,
                                 &out.grads_phi[j]);
    phi.conditionals[j].backward(b_caches[j], b_blp[j].seeds, nullptr, &w_b,
                                 &out.grads_phi[j]);
  }
  return out;
}

ObjectiveReport ddlk_objective_value(const AutoregressiveModel& theta,
                                     const AutoregressiveModel& phi,
                                     const Eigen::MatrixXd& batch, const SwapIndicator& h,
                                     double lambda, Rng& rng,
                                     const Eigen::VectorXd* cached_joint_logp) {
  const int d = phi.d;
  const int n = static_cast<int>(batch.rows());
  SampledBatch sb = sample_batch(phi, batch, rng, false);

  Eigen::VectorXd a_rows =
      cached_joint_logp ? *cached_joint_logp : joint_logp_rows(theta, batch);
  for (int j = 0; j < d; ++j) {
    const auto blp = phi.conditionals[j].logprob_seeds(sb.caches[j], sb.full.row(d + j).transpose());
    a_rows += (1.0 + lambda) * blp.logp;
  }

  Eigen::MatrixXd full_b(2 * d, n);
  for (int k = 0; k < d; ++k) {
    if (h.bits[k]) {
      full_b.row(k) = sb.full.row(d + k);
      full_b.row(d + k) = sb.full.row(k);
    } else {
      full_b.row(k) = sb.full.row(k);
      full_b.row(d + k) = sb.full.row(d + k);
    }
  }
  Eigen::VectorXd b_rows = joint_logp_rows(theta, full_b.topRows(d).transpose());
  for (int j = 0; j < d; ++j) {
    const auto cache = phi.conditionals[j].forward_batch(full_b.topRows(d + j));
    const auto blp = phi.conditionals[j].logprob_seeds(cache, full_b.row(d + j).transpose());
    b_rows += blp.logp;
  }

  ObjectiveReport rep;
  rep.a = a_rows.mean();
  rep.b = b_rows.mean();
  rep.objective = rep.a - rep.b;
  return rep;
}

KnockoffFitResult fit_knockoff(const AutoregressiveModel& theta,
                               const Eigen::MatrixXd& train, const Eigen::MatrixXd& val,
                               const TrainConfig& config, Rng& rng) {
  config.validate();
  const int d = theta.d;
  if (train.cols() != d || val.cols() != d)
    throw InputError("fit_knockoff data dimension mismatch");
  if (train.rows() < 2 || val.rows() < 1)
    throw InputError("fit_knockoff needs train and validation rows");
  const int n = static_cast<int>(train.rows());

  Rng init_rng = rng.substream(0x30001);
  KnockoffFitResult out;
  out.model = make_autoregressive(d, d, config.mixture_components, theta.support, init_rng);
  out.sampler = SwapSampler(d, config.temperature);

  std::vector<AdamState> phi_state;
  phi_state.reserve(d);
  for (int j = 0; j < d; ++j)
    phi_state.emplace_back(out.model.conditionals[j].param_count());
  AdamState beta_state(d);

  // log q_joint at the observed rows never changes during stage 2.
  const Eigen::VectorXd joint_train = joint_logp_rows(theta, train);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffle_rng = rng.substream(0x30002);
  Rng sample_rng = rng.substream(0x30003);
  Rng swap_rng = rng.substream(0x30004);
  Rng val_rng_master = rng.substream(0x30005);

  const Eigen::VectorXd joint_val = joint_logp_rows(theta, val);

  Eigen::VectorXd best_params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  for (int epoch = 0; epoch < config.max_epochs_knockoff; ++epoch) {
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[size_t(shuffle_rng.below(std::uint64_t(i + 1)))]);

    double sum_a = 0.0, sum_b = 0.0;
    int batches = 0;
    for (int s = 0; s < n; s += config.batch_size) {
      const int m = std::min(config.batch_size, n - s);
      Eigen::MatrixXd xb(m, d);
      Eigen::VectorXd jb(m);
      for (int i = 0; i < m; ++i) {
        xb.row(i) = train.row(perm[s + i]);
        jb[i] = joint_train[perm[s + i]];
      }
      const SwapDraw draw = sample_swap(out.sampler, swap_rng);
      ObjectiveBatchResult res =
          ddlk_objective_batch(theta, out.model, xb, draw, config.lambda, sample_rng, &jb);
      res.report.epoch = epoch;
      if (res.report.objective > 1e6) {
        std::ostringstream msg;
        msg << "stage-2 training diverged (objective " << res.report.objective
            << " > 1e6) at epoch " << epoch;
        throw TrainingDivergenceError(msg.str(), out.history);
      }
      for (int j = 0; j < d; ++j)
        adam_step(out.model.conditionals[j].params(), res.grads_phi[j], phi_state[j],
                  config.lr_phi);
      // Ascent on beta: descend along the negated gradient.
      const Eigen::VectorXd neg = -res.grad_beta;
      adam_step(out.sampler.logits, neg, beta_state, config.lr_beta);
      sum_a += res.report.a;
      sum_b += res.report.b;
      ++batches;
    }

    // Validation swap objective with the entropy bonus removed, so early
    // stopping tracks swap-KL fidelity rather than the regularizer.
    // Averaged over several swap/knockoff draws to steady the monitor.
    Rng val_rng = val_rng_master.substream(std::uint64_t(epoch));
    double val_obj = 0.0;
    {
      constexpr int passes = 4;
      const int nv = static_cast<int>(val.rows());
      int count = 0;
      for (int pass = 0; pass < passes; ++pass) {
        for (int s = 0; s < nv; s += config.batch_size) {
          const int m = std::min(config.batch_size, nv - s);
          const Eigen::MatrixXd xb = val.middleRows(s, m);
          const Eigen::VectorXd jb = joint_val.segment(s, m);
          const SwapDraw draw = sample_swap(out.sampler, val_rng);
          const ObjectiveReport rep =
              ddlk_objective_value(theta, out.model, xb, draw.indicator, 0.0, val_rng, &jb);
          val_obj += rep.objective * double(m);
          count += m;
        }
      }
      val_obj /= double(count);
    }

    EpochReport er;
    er.epoch = epoch;
    er.a = sum_a / double(batches);
    er.b = sum_b / double(batches);
    er.objective = er.a - er.b;
    er.val_objective = val_obj;
    out.history.push_back(er);

    if (val_obj < best_val) {
      best_val = val_obj;
      best_epoch = epoch;
      best_params = out.model.pack_params();
    } else if (epoch - best_epoch > config.patience) {
      break;
    }
  }
  if (best_params.size() > 0) out.model.unpack_params(best_params);
  return out;
}

double conditional_entropy_estimate(const AutoregressiveModel& phi,
                                    const Eigen::MatrixXd& data, Rng& rng) {
  const int d = phi.d;
  const int n = static_cast<int>(data.rows());
  double acc = 0.0;
  constexpr int chunk = 512;
  for (int s = 0; s < n; s += chunk) {
    const int m = std::min(chunk, n - s);
    SampledBatch sb = sample_batch(phi, data.middleRows(s, m), rng, false);
    for (int j = 0; j < d; ++j) {
      const auto blp = phi.conditionals[j].logprob_seeds(sb.caches[j], sb.full.row(d + j).transpose());
      acc += blp.logp.sum();
    }
  }
  return -acc / double(n);
}

}  // namespace kforge
