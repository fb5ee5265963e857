#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "etuner/cka.hpp"
#include "etuner/errors.hpp"
#include "etuner/simfreeze.hpp"

using namespace etuner;

namespace {

Tensor2 randn(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor2 t(r, c);
  for (auto& v : t.data) v = n(rng);
  return t;
}

}  // namespace

TEST_CASE("cka basic values") {
  std::mt19937_64 rng(3);
  const auto x = randn(12, 5, rng);
  CHECK(cka::cka(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  const auto y = randn(12, 7, rng);
  const double v = cka::cka(x, y);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
  CHECK(cka::cka(y, x) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("sample-space and feature-space paths agree") {
  std::mt19937_64 rng(8);
  // 4 samples x 40 features takes the n x n path, 40 x 4 the feature path.
  const auto wide_x = randn(4, 40, rng), wide_y = randn(4, 40, rng);
  const auto tall_x = randn(40, 4, rng), tall_y = randn(40, 4, rng);
  auto brute = [](const Tensor2& x, const Tensor2& y) {
    // ||Yc^T Xc||^2 / (||Xc^T Xc|| ||Yc^T Yc||), written out.
    auto centre = [](Tensor2 m) {
      for (std::size_t c = 0; c < m.cols; ++c) {
        double mu = 0;
        for (std::size_t r = 0; r < m.rows; ++r) mu += m(r, c);
        mu /= static_cast<double>(m.rows);
        for (std::size_t r = 0; r < m.rows; ++r) m(r, c) -= mu;
      }
      return m;
    };
    const auto a = centre(x), b = centre(y);
    auto fro2 = [](const Tensor2& p, const Tensor2& q) {
      double s = 0;
      for (std::size_t i = 0; i < q.cols; ++i) {
        for (std::size_t j = 0; j < p.cols; ++j) {
          double d = 0;
          for (std::size_t r = 0; r < p.rows; ++r) d += q(r, i) * p(r, j);
          s += d * d;
        }
      }
      return s;
    };
    return fro2(a, b) / (std::sqrt(fro2(a, a)) * std::sqrt(fro2(b, b)));
  };
  CHECK(cka::cka(wide_x, wide_y) == doctest::Approx(brute(wide_x, wide_y)).epsilon(1e-12));
  CHECK(cka::cka(tall_x, tall_y) == doctest::Approx(brute(tall_x, tall_y)).epsilon(1e-12));
}

TEST_CASE("cka falls as independent noise grows") {
  const std::vector<double> sigmas{0.0, 0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> mean(sigmas.size(), 0.0);
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto x = randn(64, 8, rng);
    const auto noise = randn(64, 8, rng);
    for (std::size_t s = 0; s < sigmas.size(); ++s) {
      Tensor2 y = x;
      for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += sigmas[s] * noise.data[i];
      mean[s] += cka::cka(x, y) / 20.0;
    }
  }
  for (std::size_t s = 1; s < sigmas.size(); ++s) CHECK(mean[s] <= mean[s - 1]);
}

TEST_CASE("cka errors") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(cka::cka(randn(5, 3, rng), randn(6, 3, rng)), ShapeError);
  Tensor2 constant(5, 3, 2.0);
  CHECK_THROWS_AS(cka::cka(constant, randn(5, 3, rng)), DegenerateInputError);
}

TEST_CASE("variation rate") {
  cka::CkaTrack t;
  CHECK(cka::variation_rate(t, 0.905, 100) == std::numeric_limits<double>::infinity());
  CHECK(cka::variation_rate(t, 0.906, 200) == doctest::Approx(0.001 / 0.905).epsilon(1e-12));
  CHECK(cka::variation_rate(t, 0.906, 300) == 0.0);
  CHECK_THROWS_AS(cka::variation_rate(t, 0.9, 300), InputError);
  CHECK(t.history.size() == 3);
}

TEST_CASE("freeze rule") {
  cka::CkaTrack t;
  CHECK_FALSE(simfreeze::should_freeze(t, 0.90, 200, 0.01));  // first sight
  CHECK(simfreeze::should_freeze(t, 0.905, 400, 0.01) == true);  // 0.56%
  CHECK(simfreeze::should_freeze(t, 0.906, 600, 0.01));         // 0.11%
}

TEST_CASE("unfreeze rule") {
  CHECK(simfreeze::should_unfreeze(0.95, 0.94, 0.01));
  CHECK_FALSE(simfreeze::should_unfreeze(0.95, 0.9495, 0.01));
}

TEST_CASE("freeze controller") {
  const std::vector<std::size_t> dims{6, 8, 8, 3};
  auto net = nn::Network::make(dims, 4);
  simfreeze::FreezeController ctl(net, {});
  CHECK_THROWS_AS(ctl.maybe_freeze(net, 200), StateError);

  std::mt19937_64 rng(2);
  ctl.set_probe(randn(16, 6, rng));

  SUBCASE("all frozen: nothing measured, nothing charged") {
    net.layers[0].frozen = net.layers[1].frozen = true;
    simfreeze::FreezeStats stats;
    CHECK(ctl.maybe_freeze(net, 200, &stats).empty());
    CHECK(stats.cka_evaluations == 0);
    CHECK(stats.flops == 0);
  }

  SUBCASE("unchanged weights freeze on the second measurement") {
    CHECK(ctl.maybe_freeze(net, 200).empty());
    const auto frozen = ctl.maybe_freeze(net, 400);
    CHECK(frozen == std::vector<std::size_t>{0, 1});
  }

  SUBCASE("scenario change with nothing frozen thaws nothing") {
    CHECK(ctl.on_scenario_change(net, randn(16, 6, rng)).empty());
    CHECK_THROWS_AS(ctl.on_scenario_change(net, Tensor2()), InputError);
  }

  SUBCASE("a frozen layer thaws when its CKA moves") {
    ctl.maybe_freeze(net, 200);
    ctl.maybe_freeze(net, 400);
    REQUIRE(net.layers[0].frozen);
    ctl.set_prev_scenario_cka(0, 0.5);  // far from the true value of 1
    const auto thawed = ctl.on_scenario_change(net, randn(16, 6, rng));
    CHECK(thawed == std::vector<std::size_t>{0});
    CHECK_FALSE(net.layers[0].frozen);
    CHECK(net.layers[1].frozen);
    CHECK(ctl.tracks()[0].history.empty());
  }
}

TEST_CASE("freeze controller config errors") {
  const std::vector<std::size_t> dims{6, 8, 3};
  auto net = nn::Network::make(dims, 4);
  simfreeze::FreezeConfig bad;
  bad.freeze_interval = 0;
  CHECK_THROWS_AS(simfreeze::FreezeController(net, bad), ConfigError);
  bad = {};
  bad.stability_threshold = 0.0;
  CHECK_THROWS_AS(simfreeze::FreezeController(net, bad), ConfigError);
}
