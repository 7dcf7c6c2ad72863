#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kforge/autoregressive.hpp"
#include "kforge/math.hpp"
#include "kforge/swap.hpp"
#include "oracles.hpp"

using namespace kforge;

TEST_CASE("apply_swap exchanges exactly the flagged coordinates") {
  Eigen::Vector3d x(1.0, 2.0, 3.0);
  Eigen::Vector3d xt(10.0, 20.0, 30.0);
  const auto h = SwapIndicator::from_set(3, {0, 2});
  const auto [u, ut] = apply_swap(x, xt, h);
  CHECK(u == Eigen::Vector3d(10.0, 2.0, 30.0));
  CHECK(ut == Eigen::Vector3d(1.0, 20.0, 3.0));
}

TEST_CASE("empty swap is the identity") {
  Eigen::Vector3d x(1.0, 2.0, 3.0), xt(4.0, 5.0, 6.0);
  const auto [u, ut] = apply_swap(x, xt, SwapIndicator::none(3));
  CHECK(u == x);
  CHECK(ut == xt);
}

TEST_CASE("a swap applied twice is the identity") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 1 + int(rng.below(6));
    Eigen::VectorXd x(d), xt(d);
    std::vector<int> idx;
    for (int j = 0; j < d; ++j) {
      x[j] = rng.normal();
      xt[j] = rng.normal();
      if (rng.uniform() < 0.5) idx.push_back(j);
    }
    const auto h = SwapIndicator::from_set(d, idx);
    const auto [u, ut] = apply_swap(x, xt, h);
    const auto [x2, xt2] = apply_swap(u, ut, h);
    CHECK(x2 == x);
    CHECK(xt2 == xt);
  }
}

TEST_CASE("apply_swap rejects mismatched lengths") {
  CHECK_THROWS_AS(apply_swap(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2),
                             SwapIndicator::none(3)),
                  std::invalid_argument);
}

TEST_CASE("swapped log density is the unswapped scorer at the swapped point") {
  const PairLogProbFn scorer = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return norm_log_pdf(a[0]) + norm_log_pdf(b[0] - 5.0);
  };
  Eigen::VectorXd x(1), xt(1);
  x[0] = 0.0;
  xt[0] = 5.0;
  SUBCASE("identity swap") {
    CHECK(swap_log_prob(scorer, x, xt, SwapIndicator::none(1)) ==
          scorer(x, xt));
  }
  SUBCASE("full swap, hand change of variables") {
    const double got = swap_log_prob(scorer, x, xt, SwapIndicator::from_set(1, {0}));
    CHECK(got == doctest::Approx(-26.837877066409346).epsilon(1e-12));
  }
}

TEST_CASE("an exchangeable scorer is invariant to the swap choice") {
  const PairLogProbFn scorer = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double acc = 0.0;
    for (int j = 0; j < a.size(); ++j) acc += norm_log_pdf(a[j]) + norm_log_pdf(b[j]);
    return acc;
  };
  Rng rng(8);
  Eigen::VectorXd x(4), xt(4);
  for (int j = 0; j < 4; ++j) {
    x[j] = rng.normal();
    xt[j] = rng.normal();
  }
  const double ref = swap_log_prob(scorer, x, xt, SwapIndicator::none(4));
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<int> idx;
    for (int j = 0; j < 4; ++j)
      if (rng.uniform() < 0.5) idx.push_back(j);
    CHECK(swap_log_prob(scorer, x, xt, SwapIndicator::from_set(4, idx)) ==
          doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("swap log-prob equals the autoregressive scorer at the swapped point bit-exactly") {
  Rng rng(21);
  const int d = 3;
  std::vector<std::pair<double, double>> support(d, {-2.0, 2.0});
  Rng mk1 = rng.substream(1), mk2 = rng.substream(2);
  auto theta = make_autoregressive(d, 0, 3, support, mk1);
  auto phi = make_autoregressive(d, d, 3, support, mk2);
  const PairLogProbFn scorer = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return model_log_prob(theta, Eigen::VectorXd(0), a) + model_log_prob(phi, a, b);
  };
  for (int rep = 0; rep < 50; ++rep) {
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
    CHECK(swap_log_prob(scorer, x, xt, h) == direct);
  }
}

TEST_CASE("sampled bits are always binary and respect the logits") {
  SwapSampler sampler(3, 1.0);
  sampler.logits << 20.0, 0.0, -20.0;
  Rng rng(99);
  int ones0 = 0, ones1 = 0, ones2 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto draw = sample_swap(sampler, rng);
    for (int j = 0; j < 3; ++j) {
      CHECK((draw.indicator.bits[j] == 0 || draw.indicator.bits[j] == 1));
      CHECK(draw.indicator.soft[j] > 0.0);
      CHECK(draw.indicator.soft[j] < 1.0);
    }
    ones0 += draw.indicator.bits[0];
    ones1 += draw.indicator.bits[1];
    ones2 += draw.indicator.bits[2];
  }
  CHECK(double(ones0) / n >= 0.999);
  CHECK(double(ones1) / n >= 0.48);
  CHECK(double(ones1) / n <= 0.52);
  CHECK(double(ones2) / n <= 0.001);
}

TEST_CASE("zero logits give exchangeable bits across coordinates") {
  const int d = 8;
  const int n = 10000;
  SwapSampler sampler(d, 0.5);
  Rng rng(123);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < n; ++i) {
    const auto draw = sample_swap(sampler, rng);
    for (int j = 0; j < d; ++j) counts[j] += draw.indicator.bits[j];
  }
  const double pooled = counts.sum() / double(n * d);
  double stat = 0.0;
  for (int j = 0; j < d; ++j) {
    const double e1 = n * pooled, e0 = n * (1.0 - pooled);
    stat += (counts[j] - e1) * (counts[j] - e1) / e1 +
            ((n - counts[j]) - e0) * ((n - counts[j]) - e0) / e0;
  }
  CHECK(oracle::chi2_pvalue(stat, d - 1) > 0.01);
}

TEST_CASE("soft values converge to the hard bits as temperature vanishes") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const std::uint64_t seed = rng.substream(rep).seed();
    double prev_gap = 1.0;
    for (double temp : {0.5, 0.05, 0.005}) {
      SwapSampler sampler(4, temp);
      sampler.logits << 0.3, -0.2, 0.7, 0.0;
      Rng draw_rng(seed);
      const auto draw = sample_swap(sampler, draw_rng);
      double gap = 0.0;
      for (int j = 0; j < 4; ++j)
        gap = std::max(gap, std::abs(draw.indicator.soft[j] - draw.indicator.bits[j]));
      CHECK(gap <= prev_gap + 1e-12);
      prev_gap = gap;
    }
    CHECK(prev_gap < 1e-8);
  }
}

TEST_CASE("pathgrad matches the logistic derivative identity") {
  SwapSampler sampler(5, 0.7);
  Rng rng(31);
  const auto draw = sample_swap(sampler, rng);
  for (int j = 0; j < 5; ++j) {
    const double s = draw.indicator.soft[j];
    CHECK(draw.pathgrad_logits[j] == doctest::Approx(s * (1.0 - s) / 0.7).epsilon(1e-12));
  }
}
