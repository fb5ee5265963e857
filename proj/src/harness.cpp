#include "etuner/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <future>
#include <limits>
#include <set>
#include <thread>

#include "etuner/errors.hpp"
#include "etuner/io.hpp"
#include "etuner/lazytune.hpp"
#include "etuner/nn.hpp"
#include "etuner/simfreeze.hpp"

namespace etuner::harness {

std::string Policy::name() const {
  switch (kind) {
    case PolicyKind::immediate: return "immediate";
    case PolicyKind::static_k: return "static:" + std::to_string(k);
    case PolicyKind::lazytune: return "lazytune";
    case PolicyKind::simfreeze: return "simfreeze";
    case PolicyKind::etuner: return "etuner";
  }
  return "unknown";
}

Policy Policy::parse(const std::string& text) {
  Policy p;
  if (text == "immediate") {
    p.kind = PolicyKind::immediate;
  } else if (text == "lazytune") {
    p.kind = PolicyKind::lazytune;
  } else if (text == "simfreeze") {
    p.kind = PolicyKind::simfreeze;
  } else if (text == "etuner") {
    p.kind = PolicyKind::etuner;
  } else if (text.rfind("static:", 0) == 0) {
    p.kind = PolicyKind::static_k;
    const std::string n = text.substr(7);
    std::size_t used = 0;
    long long k = 0;
    try {
      k = std::stoll(n, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != n.size() || k < 1) throw ConfigError("static policy needs k >= 1: " + text);
    p.k = static_cast<std::size_t>(k);
  } else {
    throw ConfigError("unknown policy '" + text + "'");
  }
  return p;
}

void RunConfig::validate() const {
  const auto& t = training;
  if (t.hidden.empty()) throw ConfigError("training.hidden needs at least one layer");
  for (auto h : t.hidden) {
    if (h == 0) throw ConfigError("training.hidden widths must be positive");
  }
  if (!(t.lr > 0.0) || !std::isfinite(t.lr)) throw ConfigError("training.lr must be positive");
  if (t.epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (policy.kind == PolicyKind::static_k && policy.k < 1) throw ConfigError("static k must be >= 1");
  const auto& c = controllers;
  if (!(c.cka_threshold > 0.0 && c.cka_threshold < 1.0)) {
    throw ConfigError("controllers.cka_threshold must lie in (0, 1)");
  }
  if (c.freeze_interval < 1) throw ConfigError("controllers.freeze_interval must be >= 1");
  if (c.cap < 1) throw ConfigError("controllers.cap must be >= 1");
  if (c.probe_size < 2) throw ConfigError("controllers.probe_size must be >= 2");
  if (drift.window < 4) throw ConfigError("drift.window must be >= 4");
  if (!(drift.z_threshold > 0.0)) throw ConfigError("drift.z_threshold must be positive");
  if (!(drift.temperature > 0.0)) throw ConfigError("drift.temperature must be positive");
  for (double v : {cost.t_init, cost.t_load, cost.t_save, cost.e_init, cost.e_load, cost.e_save,
                   cost.t_per_gflop, cost.e_per_gflop, cost.t_io_per_mparam,
                   cost.e_io_per_mparam}) {
    if (!(v >= 0.0)) throw ConfigError("cost parameters must be non-negative");
  }
  const auto& w = workload.spec;
  if (w.scenarios.size() < 2) throw ConfigError("workload needs a pre-training and a streamed scenario");
  if (w.dims < 2) throw ConfigError("workload.dims must be >= 2");
  if (w.batch_size < 1) throw ConfigError("workload.batch_size must be >= 1");
  if (c.probe_size > w.batch_size) throw ConfigError("controllers.probe_size exceeds batch_size");
  if (w.test_pool < 1) throw ConfigError("workload.test_pool must be >= 1");
  for (const auto* proc : {&workload.train_arrival, &workload.inference_arrival}) {
    if (proc->kind == workload::ArrivalKind::poisson && !(proc->rate > 0.0)) {
      throw ConfigError("poisson arrival rate must be positive");
    }
    if (proc->kind == workload::ArrivalKind::uniform && !(proc->lo > 0.0 && proc->hi >= proc->lo)) {
      throw ConfigError("uniform arrivals need 0 < lo <= hi");
    }
    if (proc->kind == workload::ArrivalKind::trace && proc->trace_path.empty()) {
      throw ConfigError("trace arrivals need a path");
    }
  }
}

RunConfig default_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.workload.spec = workload::default_benchmark_spec(seed);
  // Scheduling and freezing are compared against true boundaries by default.
  cfg.drift.mode = drift::Mode::oracle;
  std::size_t streamed = 0;
  for (std::size_t s = 1; s < cfg.workload.spec.scenarios.size(); ++s) {
    streamed += cfg.workload.spec.scenarios[s].train_batches;
  }
  cfg.workload.train_arrival.kind = workload::ArrivalKind::poisson;
  cfg.workload.train_arrival.rate = 1.0;
  cfg.workload.inference_arrival.kind = workload::ArrivalKind::poisson;
  cfg.workload.inference_arrival.rate =
      static_cast<double>(cfg.workload.total_inferences) / static_cast<double>(streamed);
  return cfg;
}

namespace {

struct Batch {
  Tensor2 x;
  std::vector<int> y;
  std::size_t scenario = 0;
};

class Simulation {
 public:
  explicit Simulation(const RunConfig& cfg) : cfg_(cfg) {}

  RunReport execute() {
    setup();
    const auto events = workload::generate_events(cfg_.workload.train_arrival,
                                                  cfg_.workload.inference_arrival, dataset_,
                                                  {cfg_.workload.total_inferences, 1, cfg_.seed});
    for (const auto& e : events) {
      settle(e.time);
      switch (e.kind) {
        case workload::EventKind::train_batch: on_train(e); break;
        case workload::EventKind::inference_request: on_inference(e); break;
        case workload::EventKind::scenario_boundary:
          if (cfg_.drift.mode == drift::Mode::oracle) scenario_change(e.time);
          break;
      }
      if (!in_flight_ && triggered()) start_round(e.time);
    }
    settle(std::numeric_limits<double>::infinity());
    finish();
    return std::move(report_);
  }

 private:
  void setup() {
    dataset_ = workload::generate_dataset(cfg_.workload.spec);
    std::vector<std::size_t> dims{cfg_.workload.spec.dims};
    dims.insert(dims.end(), cfg_.training.hidden.begin(), cfg_.training.hidden.end());
    dims.push_back(dataset_.class_count());
    net_ = nn::Network::make(dims, cfg_.seed * 7919 + 17);

    // Pre-train on the first scenario; not charged to the ledger.
    const auto& pre = dataset_.scenarios.front();
    const std::size_t b = cfg_.workload.spec.batch_size;
    for (std::size_t ep = 0; ep < cfg_.training.pretrain_epochs; ++ep) {
      for (std::size_t first = 0; first + b <= pre.train.size(); first += b) {
        auto pool = pre.train.slice(first, b);
        auto res = nn::backward(net_, pool.x, pool.y);
        nn::sgd_step(net_, res.grads, cfg_.training.lr);
      }
    }
    if (cfg_.training.cwr) nn::cwr_seed(net_, bank_, pre.classes);
    serving_net_ = net_;
    serving_bank_ = bank_;

    if (cfg_.policy.uses_simfreeze()) {
      freezer_.emplace(net_, simfreeze::FreezeConfig{cfg_.controllers.freeze_interval,
                                                     cfg_.controllers.cka_threshold});
    }
    tuner_.cap = cfg_.controllers.cap;
    detector_.emplace(cfg_.drift);

    report_.policy = cfg_.policy.name();
    report_.seed = cfg_.seed;
    report_.config_json = io::config_to_json(cfg_).dump();
    if (cfg_.policy.uses_lazytune()) threshold_point(0.0, "round");
  }

  bool triggered() const {
    const std::size_t ava = pending_.size();
    if (ava == 0) return false;
    switch (cfg_.policy.kind) {
      case PolicyKind::immediate:
      case PolicyKind::simfreeze: return true;
      case PolicyKind::static_k: return ava >= cfg_.policy.k;
      case PolicyKind::lazytune:
      case PolicyKind::etuner: return lazytune::should_trigger(tuner_);
    }
    return false;
  }

  // Publishes a finished round and lets the next one start at its end time.
  void settle(double now) {
    while (in_flight_ && busy_until_ <= now) {
      in_flight_ = false;
      serving_net_ = net_;
      serving_bank_ = bank_;
      if (triggered()) start_round(busy_until_);
    }
  }

  void on_train(const workload::Event& e) {
    auto pool = workload::train_batch(dataset_, e);
    Batch batch{std::move(pool.x), std::move(pool.y), e.scenario};
    if (freezer_) {
      Tensor2 probe = batch.x.slice_rows(0, cfg_.controllers.probe_size);
      if (need_probe_) {
        auto thawed = freezer_->on_scenario_change(net_, std::move(probe), &freeze_stats_);
        if (!thawed.empty()) freeze_point(e.time);
        need_probe_ = false;
      } else if (!freezer_->has_probe()) {
        freezer_->set_probe(std::move(probe));
      }
    }
    last_scenario_ = e.scenario;
    pending_.push_back(std::move(batch));
    tuner_.batches_ava = pending_.size();
  }

  void on_inference(const workload::Event& e) {
    const auto pool = workload::inference_batch(dataset_, e);
    const auto out = nn::infer(serving_net_, serving_bank_, pool.x);
    const auto pred = nn::predict(out);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == pool.y[i] ? 1 : 0;
    report_.requests.push_back({report_.requests.size(), e.time, e.scenario,
                                static_cast<double>(correct) / static_cast<double>(pred.size())});
    if (cfg_.policy.uses_lazytune()) {
      lazytune::on_inference(tuner_);
      threshold_point(e.time, "inference");
    }
    if (cfg_.drift.mode == drift::Mode::energy) {
      bool fired = false;
      for (std::size_t r = 0; r < out.logits.rows; ++r) {
        fired |= detector_->observe(drift::energy_score(out.logits.row(r), cfg_.drift.temperature));
      }
      if (fired) scenario_change(e.time);
    }
  }

  void scenario_change(double now) {
    report_.scenario_changes.push_back(now);
    // The consolidation period of the CWR head ends with the scenario. The
    // live network may be mid-round in simulated time; its head is what the
    // next publish would expose anyway.
    if (cfg_.training.cwr) nn::cwr_consolidate(net_, bank_);
    if (cfg_.policy.uses_lazytune()) {
      lazytune::on_scenario_change(tuner_);
      scenario_iterations_ = 0;
      threshold_point(now, "scenario");
    }
    if (freezer_) need_probe_ = true;
  }

  void start_round(double now) {
    std::vector<Batch> batches;
    batches.swap(pending_);
    tuner_.batches_ava = 0;

    std::set<int> class_set;
    for (const auto& b : batches) class_set.insert(b.y.begin(), b.y.end());
    const std::vector<int> classes(class_set.begin(), class_set.end());
    if (cfg_.training.cwr) nn::cwr_begin_round(net_, bank_, classes);

    RoundInfo info;
    info.round = report_.rounds.size();
    info.start_time = now;
    info.batches = batches.size();

    std::uint64_t flops = 0;
    const auto stats_before = freeze_stats_;
    for (std::size_t ep = 0; ep < cfg_.training.epochs; ++ep) {
      for (const auto& b : batches) {
        auto res = nn::backward(net_, b.x, b.y);
        if (!std::isfinite(res.loss)) abort_numeric("non-finite training loss", now);
        nn::sgd_step(net_, res.grads, cfg_.training.lr);
        flops += res.flops.total();
        costmodel::note_activation_memory(report_.ledger, res.flops.activation_mem_units);
        ++iterations_;
        ++scenario_iterations_;
        ++info.iterations;
        if (freezer_ && freezer_->due(iterations_) && freezer_->has_probe()) {
          const auto frozen = freezer_->maybe_freeze(net_, iterations_, &freeze_stats_);
          if (!frozen.empty()) freeze_point(now);
        }
      }
    }
    check_finite(now);

    if (cfg_.policy.uses_lazytune()) {
      const auto& val = dataset_.scenarios.at(last_scenario_).validation;
      const std::size_t n = cfg_.controllers.validation_samples == 0
                                ? val.size()
                                : std::min(val.size(), cfg_.controllers.validation_samples);
      const auto vx = val.x.slice_rows(0, n);
      const std::vector<int> vy(val.y.begin(), val.y.begin() + static_cast<std::ptrdiff_t>(n));
      const auto out = nn::infer(net_, bank_, vx);
      const auto pred = nn::predict(out);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < n; ++i) correct += pred[i] == vy[i] ? 1 : 0;
      const double acc = static_cast<double>(correct) / static_cast<double>(n);
      if (cfg_.controllers.charge_validation) flops += out.flops;
      info.val_accuracy = acc;
      lazytune::after_round(tuner_, info.iterations, acc, cfg_.training.epochs);
      threshold_point(now, "round");
    }

    const std::uint64_t cka_flops = freeze_stats_.flops - stats_before.flops;
    const auto& rec = costmodel::charge_round(report_.ledger, cfg_.cost, flops, cka_flops,
                                             nn::parameter_count(net_));
    info.frozen_layers = net_.frozen_feature_count();
    report_.rounds.push_back(info);
    busy_until_ = now + rec.time();
    in_flight_ = true;
  }

  void freeze_point(double now) {
    report_.frozen_timeline.push_back({now, iterations_, net_.freeze_mask()});
  }

  void threshold_point(double now, const char* cause) {
    report_.batches_needed_timeline.push_back({now, tuner_.batches_needed, cause});
  }

  void check_finite(double now) {
    for (std::size_t i = 0; i < net_.chain_length(); ++i) {
      const auto& l = net_.at(i);
      if (!l.weights.all_finite() ||
          !std::all_of(l.bias.begin(), l.bias.end(), [](double v) { return std::isfinite(v); })) {
        abort_numeric("non-finite weights in layer " + std::to_string(i), now);
      }
    }
  }

  [[noreturn]] void abort_numeric(const std::string& what, double now) {
    nlohmann::json dump;
    dump["time"] = now;
    dump["policy"] = cfg_.policy.name();
    dump["seed"] = cfg_.seed;
    dump["iterations"] = iterations_;
    dump["rounds"] = report_.rounds.size();
    dump["batches_needed"] = tuner_.batches_needed;
    dump["frozen"] = net_.freeze_mask();
    throw NumericError(what, dump.dump(2));
  }

  void finish() {
    double sum = 0.0;
    for (const auto& r : report_.requests) sum += r.accuracy;
    report_.avg_inference_accuracy =
        report_.requests.empty() ? 0.0 : sum / static_cast<double>(report_.requests.size());
    report_.cka_evaluations = freeze_stats_.cka_evaluations;
  }

  const RunConfig& cfg_;
  workload::Dataset dataset_;
  nn::Network net_;
  nn::CwrBank bank_;
  nn::Network serving_net_;
  nn::CwrBank serving_bank_;
  std::optional<simfreeze::FreezeController> freezer_;
  simfreeze::FreezeStats freeze_stats_;
  lazytune::TunerState tuner_;
  std::optional<drift::DriftDetector> detector_;

  std::vector<Batch> pending_;
  bool in_flight_ = false;
  double busy_until_ = 0.0;
  bool need_probe_ = false;
  std::size_t last_scenario_ = 1;
  std::uint64_t iterations_ = 0;
  std::uint64_t scenario_iterations_ = 0;
  RunReport report_;
};

}  // namespace

RunReport run(const RunConfig& config) {
  config.validate();
  return Simulation(config).execute();
}

std::size_t max_workers() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ETUNER_MAX_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = static_cast<std::size_t>(v);
  }
  return n;
}

std::vector<RunReport> compare(const std::vector<RunConfig>& configs) {
  if (configs.empty()) return {};
  for (const auto& c : configs) {
    c.validate();
    if (c.workload.spec.seed != configs.front().workload.spec.seed || c.seed != configs.front().seed) {
      throw ConfigError("compare: configs must share one workload seed");
    }
  }
  std::vector<RunReport> reports(configs.size());
  const std::size_t workers = std::min(max_workers(), configs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < configs.size(); i = next++) reports[i] = run(configs[i]);
    }));
  }
  for (auto& f : pool) f.get();
  return reports;
}

std::vector<ComparisonRow> summarize(const std::vector<RunReport>& reports) {
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    rows.push_back({r.policy, r.avg_inference_accuracy, r.total_time(), r.total_energy(),
                    r.round_count(), r.ledger.flops + r.ledger.cka_flops, r.requests.size()});
  }
  return rows;
}

}  // namespace etuner::harness
