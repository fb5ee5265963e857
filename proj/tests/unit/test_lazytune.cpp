#include <cmath>
#include <numbers>

#include "doctest.h"
#include "etuner/errors.hpp"
#include "etuner/lazytune.hpp"

using namespace etuner;
using lazytune::TunerState;

TEST_CASE("trigger uses the ceiling of batches_needed") {
  TunerState s;
  s.batches_ava = 1;
  CHECK(lazytune::should_trigger(s));
  s.batches_needed = 5.66;
  s.batches_ava = 5;
  CHECK_FALSE(lazytune::should_trigger(s));
  s.batches_ava = 6;
  CHECK(lazytune::should_trigger(s));
}

TEST_CASE("inference decrement") {
  TunerState s;
  s.batches_needed = 10.0;
  lazytune::on_inference(s);
  CHECK(s.batches_needed == doctest::Approx(5.65706).epsilon(1e-6));
  s.batches_needed = 2.0;
  lazytune::on_inference(s);
  CHECK(s.batches_needed == 1.0);
  lazytune::on_inference(s);
  CHECK(s.batches_needed == 1.0);
  s.batches_needed = std::numbers::e + 1e-9;  // just above e: tiny but positive factor
  lazytune::on_inference(s);
  CHECK(s.batches_needed == 1.0);
}

TEST_CASE("scenario change resets") {
  TunerState s;
  s.batches_needed = 40.0;
  for (std::uint64_t i = 1; i <= 10; ++i) s.history.emplace_back(i * 10, 0.5);
  s.curve = lazytune::CurveFit{0.01, 1.0, 0.0, 0.0};
  lazytune::on_scenario_change(s);
  CHECK(s.batches_needed == 1.0);
  CHECK(s.history.empty());
  CHECK_FALSE(s.curve.has_value());
  lazytune::on_scenario_change(s);
  CHECK(s.batches_needed == 1.0);
}

TEST_CASE("curve appears after the third round") {
  TunerState s;
  lazytune::record_round(s, 10, 0.5);
  lazytune::record_round(s, 10, 0.6);
  CHECK_FALSE(s.curve);
  CHECK(lazytune::estimate_batches_needed(s, 0.01, 1).from_curve == false);
  CHECK(lazytune::estimate_batches_needed(s, 0.01, 1).batches_needed == s.batches_needed);
  lazytune::record_round(s, 10, 0.65);
  CHECK(s.curve);
  CHECK(s.history.back().first == 30);
  CHECK_THROWS_AS(lazytune::record_round(s, 0, 0.7), InputError);
  CHECK_THROWS_AS(lazytune::record_round(s, 5, 1.2), InputError);
}

TEST_CASE("noiseless recovery of a known curve") {
  std::vector<std::pair<std::uint64_t, double>> pts;
  for (std::uint64_t t = 50; t <= 500; t += 50) {
    pts.emplace_back(t, 1.0 - (1.0 / (0.02 * static_cast<double>(t) + 1.0) + 0.1));
  }
  const auto c = lazytune::fit_curve(pts);
  REQUIRE(c);
  CHECK(std::abs(c->beta0 - 0.02) < 1e-3);
  CHECK(std::abs(c->beta1 - 1.0) < 1e-3);
  CHECK(std::abs(c->beta2 - 0.1) < 1e-3);
}

TEST_CASE("noisy non-monotone accuracies still fit with non-negative coefficients") {
  const std::vector<std::pair<std::uint64_t, double>> pts{
      {10, 0.52}, {20, 0.61}, {30, 0.58}, {40, 0.70}, {50, 0.66}, {60, 0.72}};
  const auto c = lazytune::fit_curve(pts);
  REQUIRE(c);
  CHECK(c->beta0 >= 0.0);
  CHECK(c->beta1 >= 0.0);
  CHECK(c->beta2 >= 0.0);
}

TEST_CASE("nnls keeps coefficients non-negative") {
  // b = 2*a0 - 1*a1 exactly; the constrained optimum drops a1.
  const std::vector<double> a{1, 0, 0, 1, 1, 1};
  const std::vector<double> b{2, -1, 1};
  const auto x = lazytune::nnls(a, 2, b);
  CHECK(x[0] >= 0.0);
  CHECK(x[1] == 0.0);
  CHECK(x[0] == doctest::Approx(1.5));
}

TEST_CASE("estimate_batches_needed") {
  TunerState s;
  s.curve = lazytune::CurveFit{0.02, 1.0, 0.1, 0.0};
  s.history = {{500, 0.0}};

  CHECK(lazytune::estimate_batches_needed(s, 0.0, 1).batches_needed == 1.0);

  // Brute-force scan over n = 1..cap.
  std::size_t want = s.cap;
  const double base = s.curve->accuracy_at(500);
  for (std::size_t n = 1; n <= s.cap; ++n) {
    if (s.curve->accuracy_at(500.0 + static_cast<double>(n)) - base >= 0.005) {
      want = n;
      break;
    }
  }
  CHECK(lazytune::estimate_batches_needed(s, 0.005, 1).batches_needed == static_cast<double>(want));

  s.curve = lazytune::CurveFit{0.0, 2.0, 0.1, 0.0};  // saturated
  CHECK(lazytune::estimate_batches_needed(s, 0.01, 1).batches_needed == static_cast<double>(s.cap));
}

TEST_CASE("after_round: slowing improvement grows the threshold") {
  TunerState s;
  std::uint64_t t = 0;
  double prev = 0.0;
  for (int round = 0; round < 12; ++round) {
    const auto n = static_cast<std::uint64_t>(std::ceil(s.batches_needed));
    t += n;
    lazytune::after_round(s, n, 1.0 - (1.0 / (0.01 * static_cast<double>(t) + 2.0) + 0.05), 1);
    if (round >= 3) CHECK(s.batches_needed >= prev);
    prev = s.batches_needed;
  }
  CHECK(s.batches_needed > 1.0);
  CHECK(s.batches_needed <= static_cast<double>(s.cap));
}

TEST_CASE("after_round: a flat curve doubles the last round") {
  TunerState s;
  lazytune::after_round(s, 4, 0.9, 1);
  lazytune::after_round(s, 4, 0.9, 1);
  lazytune::after_round(s, 4, 0.9, 1);
  REQUIRE(s.curve);
  CHECK(s.batches_needed == 8.0);
  s.cap = 5;
  lazytune::after_round(s, 4, 0.9, 1);
  CHECK(s.batches_needed == 5.0);
}

TEST_CASE("more frequent inference means more, smaller rounds") {
  // Same diminishing-returns curve, two request densities; the denser stream
  // keeps pulling the threshold down.
  auto rounds_for = [](std::size_t batches_per_request) {
    TunerState s;
    std::uint64_t t = 0;
    std::size_t rounds = 0;
    for (std::size_t b = 1; b <= 2000; ++b) {
      ++s.batches_ava;
      if (lazytune::should_trigger(s)) {
        t += s.batches_ava;
        lazytune::after_round(s, s.batches_ava,
                              1.0 - (1.0 / (0.005 * static_cast<double>(t) + 1.5) + 0.05), 1);
        s.batches_ava = 0;
        ++rounds;
      }
      if (b % batches_per_request == 0) lazytune::on_inference(s);
    }
    return rounds;
  };
  const auto dense = rounds_for(5), sparse = rounds_for(50), none = rounds_for(100000);
  CHECK(dense > sparse);
  CHECK(sparse >= none);
  CHECK(none < 2000);
}
