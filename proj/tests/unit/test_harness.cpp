#include <cmath>

#include "doctest.h"
#include "etuner/costmodel.hpp"
#include "etuner/errors.hpp"
#include "etuner/harness.hpp"
#include "etuner/io.hpp"
#include "etuner/nn.hpp"

using namespace etuner;

namespace {

// Pre-training scenario plus one streamed scenario of `batches` batches,
// training batches every second and requests at `infer_every` seconds.
harness::RunConfig small_config(const std::string& policy, std::size_t batches,
                                std::size_t requests, double infer_every = 1000.0) {
  auto cfg = harness::default_config(7);
  cfg.policy = harness::Policy::parse(policy);
  auto& spec = cfg.workload.spec;
  spec.scenarios.resize(2);
  spec.scenarios[0].train_batches = 20;
  spec.scenarios[1].train_batches = batches;
  spec.test_pool = 64;
  cfg.training.pretrain_epochs = 1;
  cfg.workload.total_inferences = requests;
  cfg.workload.train_arrival.kind = workload::ArrivalKind::uniform;
  cfg.workload.train_arrival.lo = cfg.workload.train_arrival.hi = 1.0;
  cfg.workload.inference_arrival.kind = workload::ArrivalKind::uniform;
  cfg.workload.inference_arrival.lo = cfg.workload.inference_arrival.hi = infer_every;
  return cfg;
}

}  // namespace

TEST_CASE("cost ledger") {
  costmodel::CostParams p;
  p.t_init = 1.0;
  p.t_load = 0.5;
  p.t_save = 0.5;
  p.e_init = 10.0;
  p.t_per_gflop = 2.0;
  p.e_per_gflop = 3.0;

  SUBCASE("merging two rounds saves exactly one overhead") {
    costmodel::CostLedger merged, separate;
    costmodel::charge_round(merged, p, 2'000'000'000, 0);
    costmodel::charge_round(separate, p, 1'000'000'000, 0);
    costmodel::charge_round(separate, p, 1'000'000'000, 0);
    CHECK(separate.total_time() - merged.total_time() == doctest::Approx(p.overhead_time()));
    CHECK(separate.total_energy() - merged.total_energy() == doctest::Approx(p.overhead_energy()));
  }
  SUBCASE("zero FLOPs cost only the overhead") {
    costmodel::CostLedger l;
    const auto& r = costmodel::charge_round(l, p, 0, 0);
    CHECK(r.time() == 2.0);
    CHECK(r.energy() == 10.0);
  }
  SUBCASE("CKA FLOPs are charged unless disabled") {
    costmodel::CostLedger a, b;
    costmodel::charge_round(a, p, 0, 1'000'000'000);
    p.cka_overhead_charged = false;
    costmodel::charge_round(b, p, 0, 1'000'000'000);
    CHECK(a.compute_time == 2.0);
    CHECK(b.compute_time == 0.0);
    CHECK(b.cka_flops == 1'000'000'000);
  }
  SUBCASE("negative parameters are rejected") {
    costmodel::CostLedger l;
    p.e_save = -1.0;
    CHECK_THROWS_AS(costmodel::charge_round(l, p, 0, 0), InputError);
  }
  SUBCASE("size-scaled load and save") {
    p.size_scaled_io = true;
    p.t_io_per_mparam = 4.0;
    CHECK(p.overhead_time(500'000) == doctest::Approx(1.0 + 2.0));
  }
}

TEST_CASE("default calibration") {
  const auto p = costmodel::calibrate_defaults();
  const auto flops = costmodel::reference_round_flops();
  const std::vector<std::size_t> dims{64, 128, 128, 10};
  CHECK(flops == nn::training_cost(nn::Network::make(dims, 3), 16).total());
  const double compute_t = 1e-9 * static_cast<double>(flops) * p.t_per_gflop;
  const double compute_e = 1e-9 * static_cast<double>(flops) * p.e_per_gflop;
  CHECK(p.overhead_time() / (p.overhead_time() + compute_t) == doctest::Approx(0.58));
  CHECK(p.overhead_energy() / (p.overhead_energy() + compute_e) == doctest::Approx(0.38));

  // Twice the compute price: share -> o / (o + 2c).
  auto q = p;
  q.t_per_gflop *= 2.0;
  CHECK(q.overhead_time() / (q.overhead_time() + 2 * compute_t) ==
        doctest::Approx(p.overhead_time() / (p.overhead_time() + 2 * compute_t)));

  const auto zero = costmodel::calibrate_for(flops, 0.0, 0.0, 1.0, 1.0);
  CHECK(zero.overhead_time() == 0.0);
  CHECK_THROWS_AS(costmodel::calibrate_for(flops, 1.0, 0.5, 1.0, 1.0), InputError);
}

TEST_CASE("policy names") {
  CHECK(harness::Policy::parse("static:20").k == 20);
  CHECK(harness::Policy::parse("static:20").name() == "static:20");
  CHECK(harness::Policy::parse("etuner").uses_lazytune());
  CHECK(harness::Policy::parse("etuner").uses_simfreeze());
  CHECK_FALSE(harness::Policy::parse("lazytune").uses_simfreeze());
  CHECK_THROWS_AS(harness::Policy::parse("static:0"), ConfigError);
  CHECK_THROWS_AS(harness::Policy::parse("eager"), ConfigError);
}

TEST_CASE("immediate tuning on 8 batches runs 8 rounds") {
  const auto r = harness::run(small_config("immediate", 8, 1));
  CHECK(r.round_count() == 8);
  CHECK(r.ledger.rounds.size() == 8);
}

TEST_CASE("static:20 on 100 batches with no requests runs 5 rounds") {
  const auto r = harness::run(small_config("static:20", 100, 0));
  CHECK(r.round_count() == 5);
  CHECK(r.requests.empty());
}

TEST_CASE("identical runs produce byte-identical reports") {
  const auto cfg = small_config("etuner", 60, 10, 5.0);
  const auto a = io::report_text(harness::run(cfg));
  const auto b = io::report_text(harness::run(cfg));
  CHECK(a == b);
}

TEST_CASE("report round trip") {
  const auto r = harness::run(small_config("lazytune", 40, 8, 4.0));
  const auto text = io::report_text(r);
  const auto back = io::report_from_json(nlohmann::json::parse(text));
  CHECK(back == r);
  CHECK(io::report_text(back) == text);
}

TEST_CASE("average accuracy is the mean over requests") {
  const auto r = harness::run(small_config("static:5", 40, 12, 3.0));
  REQUIRE(r.requests.size() == 12);
  double s = 0.0;
  for (const auto& q : r.requests) s += q.accuracy;
  CHECK(r.avg_inference_accuracy == doctest::Approx(s / 12.0).epsilon(1e-15));
}

TEST_CASE("compare runs each policy on the same workload") {
  std::vector<harness::RunConfig> cfgs{small_config("immediate", 30, 6, 5.0),
                                       small_config("static:10", 30, 6, 5.0)};
  const auto reps = harness::compare(cfgs);
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].round_count() == 30);
  CHECK(reps[1].round_count() == 3);
  for (std::size_t i = 0; i < 6; ++i) CHECK(reps[0].requests[i].time == reps[1].requests[i].time);
  const auto rows = harness::summarize(reps);
  CHECK(rows[1].policy == "static:10");

  cfgs[1].workload.spec.seed = 99;
  CHECK_THROWS_AS(harness::compare(cfgs), ConfigError);
}

TEST_CASE("config validation") {
  auto cfg = small_config("immediate", 8, 1);
  cfg.training.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config("immediate", 8, 1);
  cfg.controllers.cka_threshold = 1.5;
  CHECK_THROWS_AS(harness::run(cfg), ConfigError);
  cfg = small_config("immediate", 8, 1);
  cfg.workload.spec.scenarios.resize(1);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("non-finite training aborts with a state dump") {
  auto cfg = small_config("immediate", 20, 1);
  cfg.training.lr = 1e300;
  try {
    harness::run(cfg);
    FAIL("expected a numeric failure");
  } catch (const NumericError& e) {
    CHECK_FALSE(e.state_dump().empty());
  }
}

TEST_CASE("config JSON: round trip and strict keys") {
  const auto cfg = harness::default_config(4);
  const auto j = io::config_to_json(cfg);
  CHECK(io::config_to_json(io::config_from_json(j)) == j);

  auto bad = j;
  bad["training"]["learning_rate"] = 0.1;
  CHECK_THROWS_AS(io::config_from_json(bad), ConfigError);
  bad = j;
  bad["controllers"]["cap"] = "lots";
  CHECK_THROWS_AS(io::config_from_json(bad), ConfigError);

  const auto partial = io::config_from_json(nlohmann::json{{"seed", 4}, {"policy", "static:5"}});
  CHECK(partial.policy.k == 5);
  CHECK(partial.workload.spec.scenarios.size() == cfg.workload.spec.scenarios.size());
}

TEST_CASE("etuner trains fewer FLOPs than lazytune on a stationary stretch") {
  auto cfg = small_config("lazytune", 400, 20, 20.0);
  cfg.controllers.freeze_interval = 20;
  const auto lazy = harness::run(cfg);
  cfg.policy = harness::Policy::parse("etuner");
  const auto et = harness::run(cfg);
  CHECK(et.ledger.flops <= lazy.ledger.flops);
  CHECK(et.cka_evaluations > 0);
  CHECK(lazy.cka_evaluations == 0);
}
