#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kforge/trainer.hpp"
#include "oracles.hpp"

using namespace kforge;

namespace {

GaussianMixture1D std_normal_mixture() {
  GaussianMixture1D g;
  g.weights = Eigen::VectorXd::Ones(1);
  g.means = Eigen::VectorXd::Zero(1);
  g.stddevs = Eigen::VectorXd::Ones(1);
  return g;
}

// Stationary AR(1) Gaussian rows with unit marginals.
Eigen::MatrixXd ar_gaussian(int n, int d, double rho, Rng& rng) {
  Eigen::MatrixXd x(n, d);
  const double noise = std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    for (int j = 1; j < d; ++j) x(i, j) = rho * x(i, j - 1) + noise * rng.normal();
  }
  return x;
}

AutoregressiveModel constant_joint(int d) {
  AutoregressiveModel m;
  m.d = d;
  m.base_dim = 0;
  m.support.assign(d, {-3.0, 3.0});
  for (int j = 0; j < d; ++j) m.conditionals.push_back(constant_network(j, std_normal_mixture()));
  return m;
}

AutoregressiveModel constant_knockoff(int d) {
  AutoregressiveModel m;
  m.d = d;
  m.base_dim = d;
  m.support.assign(d, {-3.0, 3.0});
  for (int j = 0; j < d; ++j)
    m.conditionals.push_back(constant_network(d + j, std_normal_mixture()));
  return m;
}

}  // namespace

TEST_CASE("adam leaves parameters alone when the gradient vanishes") {
  Eigen::VectorXd p = Eigen::Vector3d(1.0, -2.0, 0.5);
  const Eigen::VectorXd before = p;
  AdamState st(3);
  adam_step(p, Eigen::VectorXd::Zero(3), st, 0.1);
  CHECK(p == before);
}

TEST_CASE("first adam step moves each coordinate by about the learning rate") {
  Eigen::VectorXd p = Eigen::Vector2d(0.0, 0.0);
  AdamState st(2);
  Eigen::VectorXd g(2);
  g << 3.7, -0.04;
  adam_step(p, g, st, 0.01);
  CHECK(std::abs(p[0] + 0.01) < 1e-5);  // moved against the positive gradient
  CHECK(std::abs(p[1] - 0.01) < 1e-4);
}

TEST_CASE("adam minimizes a quadratic") {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(1);
  AdamState st(1);
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd g(1);
    g[0] = 2.0 * (w[0] - 3.0);
    adam_step(w, g, st, 0.1);
  }
  CHECK(std::abs(w[0] - 3.0) < 0.05);
}

TEST_CASE("exchangeable models give a zero swap objective") {
  // theta exact N(0,1) i.i.d., knockoffs i.i.d. N(0,1) independent of x:
  // (x, xt) is exchangeable, so the KL estimate vanishes.
  const int d = 1;
  auto theta = constant_joint(d);
  auto phi = constant_knockoff(d);
  Rng rng(5);
  const int n = 10000;
  Eigen::MatrixXd batch(n, d);
  for (int i = 0; i < n; ++i) batch(i, 0) = rng.normal();
  SwapSampler sampler(d, 0.5);
  const SwapDraw draw = sample_swap(sampler, rng);
  const auto res = ddlk_objective_batch(theta, phi, batch, draw, 0.0, rng);
  CHECK(std::abs(res.report.objective) <= 0.05);
  CHECK(std::abs(res.report.objective) <= 1e-9);
}

TEST_CASE("identity swap with zero lambda gives an exactly zero objective") {
  Rng rng(6);
  const int d = 3;
  std::vector<std::pair<double, double>> support(d, {-2.0, 2.0});
  Rng mk1 = rng.substream(1), mk2 = rng.substream(2);
  auto theta = make_autoregressive(d, 0, 3, support, mk1);
  auto phi = make_autoregressive(d, d, 3, support, mk2);
  Eigen::MatrixXd batch = ar_gaussian(32, d, 0.5, rng);
  SwapDraw draw;
  draw.indicator = SwapIndicator::none(d);
  draw.pathgrad_logits = Eigen::VectorXd::Zero(d);
  const auto res = ddlk_objective_batch(theta, phi, batch, draw, 0.0, rng);
  CHECK(res.report.objective == 0.0);
  CHECK(res.report.a == res.report.b);
}

TEST_CASE("objective equals A minus B") {
  Rng rng(7);
  const int d = 2;
  std::vector<std::pair<double, double>> support(d, {-2.0, 2.0});
  Rng mk1 = rng.substream(1), mk2 = rng.substream(2);
  auto theta = make_autoregressive(d, 0, 2, support, mk1);
  auto phi = make_autoregressive(d, d, 2, support, mk2);
  Eigen::MatrixXd batch = ar_gaussian(16, d, 0.3, rng);
  SwapSampler sampler(d, 0.5);
  const SwapDraw draw = sample_swap(sampler, rng);
  const auto res = ddlk_objective_batch(theta, phi, batch, draw, 0.25, rng);
  CHECK(res.report.objective == res.report.a - res.report.b);
}

TEST_CASE("phi gradients match finite differences with fixed-u resampling") {
  Rng rng(1717);
  const int d = 2;
  const int n = 6;
  const double lambda = 0.2;
  std::vector<std::pair<double, double>> support(d, {-2.0, 2.0});
  Rng mk1 = rng.substream(1), mk2 = rng.substream(2);
  auto theta = make_autoregressive(d, 0, 2, support, mk1);
  AutoregressiveModel phi;
  phi.d = d;
  phi.base_dim = d;
  phi.support = support;
  for (int j = 0; j < d; ++j) {
    Rng sub = rng.substream(100 + j);
    phi.conditionals.push_back(random_network(d + j, 2, sub, 0.3));
  }
  Eigen::MatrixXd batch = ar_gaussian(n, d, 0.5, rng);
  SwapDraw draw;
  draw.indicator = SwapIndicator::from_set(d, {1});
  draw.pathgrad_logits = Eigen::VectorXd::Zero(d);

  Rng obj_rng(909);
  const auto res = ddlk_objective_batch(theta, phi, batch, draw, lambda, obj_rng);

  // Fixed CDF levels of the realized knockoffs define the resampling map.
  Eigen::MatrixXd levels(n, d);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd cond(2 * d);
    cond.head(d) = batch.row(i).transpose();
    cond.tail(d) = res.knockoffs.row(i).transpose();
    for (int j = 0; j < d; ++j)
      levels(i, j) = mixture_cdf(phi.conditionals[j].forward(cond.head(d + j)),
                                 res.knockoffs(i, j));
  }

  auto objective_at = [&](const AutoregressiveModel& model) {
    double a = 0.0, b = 0.0;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd x = batch.row(i).transpose();
      Eigen::VectorXd xt(d);
      Eigen::VectorXd cond(2 * d);
      cond.head(d) = x;
      for (int j = 0; j < d; ++j) {
        xt[j] = oracle::inverse_cdf(model.conditionals[j].forward(cond.head(d + j)),
                                    levels(i, j));
        cond[d + j] = xt[j];
      }
      const auto [u, ut] = apply_swap(x, xt, draw.indicator);
      a += model_log_prob(theta, Eigen::VectorXd(0), x) +
           (1.0 + lambda) * model_log_prob(model, x, xt);
      b += model_log_prob(theta, Eigen::VectorXd(0), u) + model_log_prob(model, u, ut);
    }
    return (a - b) / double(n);
  };

  double worst = 0.0;
  AutoregressiveModel probe = phi;
  for (int j = 0; j < d; ++j) {
    auto& params = probe.conditionals[j].params();
    for (int p = 0; p < params.size(); ++p) {
      const double p0 = params[p];
      const double h = 1e-5 * std::max(1.0, std::abs(p0));
      params[p] = p0 + h;
      const double fp = objective_at(probe);
      params[p] = p0 - h;
      const double fm = objective_at(probe);
      params[p] = p0;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = res.grads_phi[j][p];
      worst = std::max(worst, std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)}));
    }
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("beta ascends toward the coordinate whose swap is detectable") {
  // Knockoffs copy coordinates 0 and 1 exactly (swap-invariant there) but
  // ignore coordinate 2 despite the strong serial correlation; the
  // adversary should concentrate on it.
  Rng rng(33);
  const int d = 3;
  Eigen::MatrixXd train = ar_gaussian(3000, d, 0.9, rng);
  Eigen::MatrixXd val = ar_gaussian(600, d, 0.9, rng);
  TrainConfig config;
  config.max_epochs_joint = 25;
  Rng fit_rng(34);
  auto theta = fit_joint(train, val, config, fit_rng).model;

  AutoregressiveModel phi;
  phi.d = d;
  phi.base_dim = d;
  phi.support.assign(d, {-3.0, 3.0});
  for (int j = 0; j < 2; ++j) {
    GaussianMixture1D g = std_normal_mixture();
    g.stddevs[0] = kSigmaFloor;
    auto net = constant_network(d + j, g);
    const double shift = 1000.0;
    net.params()[net.offset_hidden3_bias()] = shift;
    net.params()[net.offset_skip_weights() + j * ConditionalDensityNetwork::kHidden] = 1.0;
    net.params()[net.offset_means_weights()] = 1.0;
    net.params()[net.offset_means_bias()] = -shift;
    phi.conditionals.push_back(net);
  }
  phi.conditionals.push_back(constant_network(d + 2, std_normal_mixture()));

  SwapSampler sampler(d, config.temperature);
  AdamState beta_state(d);
  Rng loop_rng(35);
  for (int epoch = 0; epoch < 50; ++epoch) {
    for (int s = 0; s + 64 <= 3000; s += 64) {
      const Eigen::MatrixXd xb = train.middleRows(s, 64);
      const SwapDraw draw = sample_swap(sampler, loop_rng);
      const auto res = ddlk_objective_batch(theta, phi, xb, draw, 0.0, loop_rng);
      const Eigen::VectorXd neg = -res.grad_beta;
      adam_step(sampler.logits, neg, beta_state, config.lr_beta);
    }
  }
  const Eigen::VectorXd probs = sampler.swap_probabilities();
  std::vector<double> sorted(probs.data(), probs.data() + d);
  std::sort(sorted.begin(), sorted.end());
  CHECK(probs[2] > sorted[d / 2]);
  CHECK(probs[2] > 0.9);
}

TEST_CASE("stage-2 training drives the validation swap objective down on 5-d AR data") {
  for (std::uint64_t seed : {101ULL, 202ULL, 303ULL}) {
    Rng rng(seed);
    const int d = 5;
    Eigen::MatrixXd train = ar_gaussian(1400, d, 0.6, rng);
    Eigen::MatrixXd val = ar_gaussian(300, d, 0.6, rng);
    TrainConfig config;
    config.lambda = 0.1;
    config.seed = seed;
    Rng fit_rng(seed + 1);
    auto theta = fit_joint(train, val, config, fit_rng).model;
    Rng k_rng(seed + 2);
    const auto fit = fit_knockoff(theta, train, val, config, k_rng);
    REQUIRE(fit.history.size() >= 2);
    const double initial = fit.history.front().val_objective;
    double best = initial;
    for (const auto& h : fit.history) best = std::min(best, h.val_objective);
    CHECK(best <= 0.2 * initial);
  }
}

TEST_CASE("stronger entropy regularization raises the conditional entropy") {
  Rng rng(55);
  const int d = 3;
  Eigen::MatrixXd train = ar_gaussian(1200, d, 0.6, rng);
  Eigen::MatrixXd val = ar_gaussian(300, d, 0.6, rng);
  Eigen::MatrixXd held = ar_gaussian(500, d, 0.6, rng);
  TrainConfig config;
  config.max_epochs_joint = 30;
  config.max_epochs_knockoff = 60;
  Rng fit_rng(56);
  auto theta = fit_joint(train, val, config, fit_rng).model;

  auto entropy_for = [&](double lambda) {
    TrainConfig c = config;
    c.lambda = lambda;
    Rng k_rng(57);
    const auto fit = fit_knockoff(theta, train, val, c, k_rng);
    Rng e_rng(58);
    return conditional_entropy_estimate(fit.model, held, e_rng);
  };
  CHECK(entropy_for(10.0) > entropy_for(0.001));
}

TEST_CASE("fixed seeds reproduce the training history bitwise") {
  Rng rng(66);
  const int d = 2;
  Eigen::MatrixXd train = ar_gaussian(400, d, 0.4, rng);
  Eigen::MatrixXd val = ar_gaussian(100, d, 0.4, rng);
  TrainConfig config;
  config.max_epochs_joint = 5;
  config.max_epochs_knockoff = 5;
  config.seed = 4242;

  auto run = [&]() {
    Rng fit_rng(config.seed);
    auto theta = fit_joint(train, val, config, fit_rng).model;
    Rng k_rng(config.seed + 1);
    return fit_knockoff(theta, train, val, config, k_rng);
  };
  const auto r1 = run();
  const auto r2 = run();
  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].a == r2.history[i].a);
    CHECK(r1.history[i].b == r2.history[i].b);
    CHECK(r1.history[i].objective == r2.history[i].objective);
    CHECK(r1.history[i].val_objective == r2.history[i].val_objective);
  }
  CHECK(r1.model.pack_params() == r2.model.pack_params());
  CHECK(r1.sampler.logits == r2.sampler.logits);
}

TEST_CASE("runaway objectives abort with the history attached") {
  // Knockoffs centered absurdly far from the data make any swapped batch
  // score astronomically badly under theta.
  Rng rng(88);
  const int d = 3;
  Eigen::MatrixXd train = ar_gaussian(256, d, 0.3, rng);
  Eigen::MatrixXd val = ar_gaussian(64, d, 0.3, rng);
  auto theta = constant_joint(d);
  // Pathological starting point: shift every mean-head bias by 1e5.
  TrainConfig config;
  config.max_epochs_knockoff = 3;
  Rng k_rng(89);
  // Build the initial phi the trainer would build, then poison it via the
  // support so initial modes sit at 1e5.
  AutoregressiveModel poisoned = theta;
  poisoned.support.assign(d, {99990.0, 100010.0});
  bool threw = false;
  try {
    (void)fit_knockoff(poisoned, train, val, config, k_rng);
  } catch (const TrainingDivergenceError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  } catch (const NumericError&) {
    threw = true;  // non-finite abort is the adjacent guard
  }
  CHECK(threw);
}

TEST_CASE("stage 2 never touches theta") {
  Rng rng(77);
  const int d = 2;
  Eigen::MatrixXd train = ar_gaussian(300, d, 0.4, rng);
  Eigen::MatrixXd val = ar_gaussian(80, d, 0.4, rng);
  TrainConfig config;
  config.max_epochs_joint = 3;
  config.max_epochs_knockoff = 3;
  Rng fit_rng(78);
  auto theta = fit_joint(train, val, config, fit_rng).model;
  const Eigen::VectorXd before = theta.pack_params();
  Rng k_rng(79);
  (void)fit_knockoff(theta, train, val, config, k_rng);
  CHECK(theta.pack_params() == before);
}
