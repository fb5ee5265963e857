#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "etuner/drift.hpp"
#include "etuner/errors.hpp"
#include "etuner/workload.hpp"

using namespace etuner;

TEST_CASE("energy score") {
  const std::vector<double> zero{0.0, 0.0};
  CHECK(drift::energy_score(zero, 1.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  for (double c : {-3.0, 0.0, 2.5, 400.0}) {
    const std::vector<double> one{c};
    CHECK(drift::energy_score(one, 1.0) == doctest::Approx(-c).epsilon(1e-12));
  }
  const std::vector<double> big{1000.0, 0.0};
  const double v = drift::energy_score(big, 1.0);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-1000.0 - std::log1p(std::exp(-1000.0))));
  CHECK_THROWS_AS(drift::energy_score(std::vector<double>{}, 1.0), InputError);
}

TEST_CASE("detector never fires on a constant stream") {
  drift::DriftDetector d({1.0, 8, 4.0, drift::Mode::energy});
  for (int i = 0; i < 1000; ++i) CHECK_FALSE(d.observe(-3.0));
  CHECK(d.fire_count() == 0);
}

TEST_CASE("detector catches an N(0,1) -> N(6,1) shift") {
  int caught = 0, clean = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    drift::DriftDetector d({1.0, 8, 4.0, drift::Mode::energy});
    bool false_fire = false;
    for (int i = 0; i < 200; ++i) false_fire |= d.observe(n(rng));
    bool fired = false;
    for (int i = 0; i < 16 && !fired; ++i) fired = d.observe(6.0 + n(rng));
    caught += fired;
    clean += !false_fire;
  }
  CHECK(caught >= 95);
  CHECK(clean >= 95);
}

TEST_CASE("detector config errors") {
  CHECK_THROWS_AS(drift::DriftDetector({1.0, 2, 4.0, drift::Mode::energy}), ConfigError);
  CHECK_THROWS_AS(drift::DriftDetector({1.0, 8, 0.0, drift::Mode::energy}), ConfigError);
}

namespace {

workload::WorkloadSpec two_scenarios() {
  workload::WorkloadSpec spec;
  spec.dims = 8;
  spec.test_pool = 64;
  workload::ScenarioSpec a;
  a.classes = {0, 1};
  a.train_batches = 10;
  workload::ScenarioSpec b;
  b.classes = {0, 1, 2, 3};
  b.train_batches = 10;
  spec.scenarios = {a, b};
  return spec;
}

}  // namespace

TEST_CASE("new-class scenario carries every active class") {
  const auto ds = workload::generate_dataset(two_scenarios());
  REQUIRE(ds.scenarios.size() == 2);
  const std::set<int> labels(ds.scenarios[1].train.y.begin(), ds.scenarios[1].train.y.end());
  CHECK(labels == std::set<int>{0, 1, 2, 3});
  CHECK(ds.class_count() == 4);
  // Existing classes keep their means under new_class drift.
  CHECK(ds.scenarios[0].class_means.at(0) == ds.scenarios[1].class_means.at(0));
}

TEST_CASE("validation split and disjoint pools") {
  const auto ds = workload::generate_dataset(two_scenarios());
  for (const auto& sc : ds.scenarios) {
    CHECK(sc.train.size() == 160);
    CHECK(sc.validation.size() == workload::validation_size(sc.pre_split_train_size, 0.05));
    CHECK(sc.validation.size() == static_cast<std::size_t>(std::lround(0.05 * sc.pre_split_train_size)));
    std::set<std::uint64_t> train(sc.train.ids.begin(), sc.train.ids.end());
    for (auto id : sc.validation.ids) CHECK_FALSE(train.count(id));
    for (auto id : sc.test.ids) CHECK_FALSE(train.count(id));
  }
}

TEST_CASE("pattern drift moves existing clusters") {
  auto spec = two_scenarios();
  spec.scenarios[1].kind = workload::DriftKind::new_pattern;
  spec.scenarios[1].classes = {0, 1};
  spec.scenarios[1].transform.rotation_deg = 90.0;
  const auto ds = workload::generate_dataset(spec);
  const auto& before = ds.scenarios[0].class_means.at(0);
  const auto& after = ds.scenarios[1].class_means.at(0);
  CHECK(after[0] == doctest::Approx(-before[1]));
  CHECK(after[1] == doctest::Approx(before[0]));
}

TEST_CASE("dataset generation is deterministic and validates its spec") {
  const auto a = workload::generate_dataset(two_scenarios());
  const auto b = workload::generate_dataset(two_scenarios());
  CHECK(a.scenarios[1].train.x == b.scenarios[1].train.x);
  auto bad = two_scenarios();
  bad.scenarios[1].classes = {0, 0};
  CHECK_THROWS_AS(workload::generate_dataset(bad), ConfigError);
  bad = two_scenarios();
  bad.scenarios.clear();
  CHECK_THROWS_AS(workload::generate_dataset(bad), ConfigError);
}

TEST_CASE("close class means raise a warning, not an error") {
  auto spec = two_scenarios();
  spec.separation = 0.01;
  const auto ds = workload::generate_dataset(spec);
  CHECK_FALSE(ds.warnings.empty());
}

TEST_CASE("arrival processes") {
  workload::ArrivalProcess p;
  p.kind = workload::ArrivalKind::poisson;
  p.rate = 1.0;
  const auto gaps = workload::sample_interarrivals(p, 1000, 5);
  double mean = 0;
  for (double g : gaps) mean += g / 1000.0;
  CHECK(mean >= 0.9);
  CHECK(mean <= 1.1);

  p.kind = workload::ArrivalKind::uniform;
  p.lo = p.hi = 2.0;
  for (double g : workload::sample_interarrivals(p, 20, 1)) CHECK(g == 2.0);

  p.kind = workload::ArrivalKind::normal;
  p.mean = 1.0;
  p.std = 5.0;
  p.floor = 0.25;
  for (double g : workload::sample_interarrivals(p, 200, 1)) CHECK(g >= 0.25);

  p.kind = workload::ArrivalKind::poisson;
  p.rate = 0.0;
  CHECK_THROWS_AS(workload::sample_interarrivals(p, 5, 1), ConfigError);
}

TEST_CASE("trace parsing") {
  const auto rows = workload::parse_trace("time_seconds,kind\n0.5,train\n1.0,infer\n1.5,train\n");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].time == 1.0);
  CHECK(rows[1].kind == "infer");

  auto line_of = [](const std::string& text) {
    try {
      workload::parse_trace(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of("time_seconds,kind\n0.5,train\nabc,infer\n") == 3);
  CHECK(line_of("time_seconds,kind\n0.5,train\n0.4,infer\n") == 3);
  CHECK(line_of("time_seconds,kind\n0.5,walk\n") == 2);
  CHECK(line_of("when,what\n") == 1);
}

TEST_CASE("trace arrivals produce exactly the listed events") {
  const auto path = std::filesystem::temp_directory_path() / "etuner_unit_trace.csv";
  {
    std::ofstream f(path);
    f << "time_seconds,kind\n1.0,train\n2.0,infer\n3.0,train\n";
  }
  auto spec = two_scenarios();
  spec.scenarios[1].train_batches = 2;
  const auto ds = workload::generate_dataset(spec);
  workload::ArrivalProcess trace;
  trace.kind = workload::ArrivalKind::trace;
  trace.trace_path = path.string();
  workload::EventOptions opts;
  opts.total_inferences = 10;
  const auto events = workload::generate_events(trace, trace, ds, opts);
  std::vector<double> times;
  for (const auto& e : events) {
    if (e.kind != workload::EventKind::scenario_boundary) times.push_back(e.time);
  }
  CHECK(times == std::vector<double>{1.0, 2.0, 3.0});
  std::filesystem::remove(path);
}

TEST_CASE("event stream ordering") {
  auto spec = two_scenarios();
  spec.scenarios.push_back(spec.scenarios[1]);
  spec.scenarios[2].classes = {0, 1, 2, 3, 4};
  const auto ds = workload::generate_dataset(spec);
  workload::ArrivalProcess train, infer;
  train.kind = workload::ArrivalKind::uniform;
  train.lo = train.hi = 1.0;
  infer.kind = workload::ArrivalKind::uniform;
  infer.lo = infer.hi = 2.0;
  workload::EventOptions opts;
  opts.total_inferences = 8;
  const auto events = workload::generate_events(train, infer, ds, opts);
  std::size_t batches = 0, requests = 0, boundaries = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    batches += e.kind == workload::EventKind::train_batch;
    requests += e.kind == workload::EventKind::inference_request;
    boundaries += e.kind == workload::EventKind::scenario_boundary;
    if (i > 0) {
      const auto& p = events[i - 1];
      CHECK((p.time < e.time || (p.time == e.time && p.kind <= e.kind)));
    }
    if (e.kind == workload::EventKind::inference_request) {
      CHECK(e.sample_rows.size() == spec.batch_size);
      CHECK(workload::inference_batch(ds, e).size() == spec.batch_size);
    }
  }
  CHECK(batches == 20);
  CHECK(requests == 8);
  CHECK(boundaries == 2);
  // Train and inference at the same instant: the batch comes first.
  CHECK(events.front().kind == workload::EventKind::scenario_boundary);
}
