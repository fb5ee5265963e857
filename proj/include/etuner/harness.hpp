#pragma once

// Discrete-event continual-learning runner: replays a workload stream through
// one fine-tuning policy and reports inference accuracy plus modeled cost.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "etuner/costmodel.hpp"
#include "etuner/drift.hpp"
#include "etuner/workload.hpp"

namespace etuner::harness {

enum class PolicyKind { immediate, static_k, lazytune, simfreeze, etuner };

struct Policy {
  PolicyKind kind = PolicyKind::etuner;
  std::size_t k = 1;  // static_k only

  bool uses_lazytune() const { return kind == PolicyKind::lazytune || kind == PolicyKind::etuner; }
  bool uses_simfreeze() const { return kind == PolicyKind::simfreeze || kind == PolicyKind::etuner; }
  std::string name() const;
  static Policy parse(const std::string& text);  // "immediate", "static:20", ...
  bool operator==(const Policy&) const = default;
};

struct TrainingConfig {
  std::vector<std::size_t> hidden{128, 128};
  double lr = 0.1;
  std::size_t epochs = 1;
  std::size_t pretrain_epochs = 5;
  bool cwr = true;
};

struct ControllerConfig {
  double cka_threshold = 0.005;
  std::uint64_t freeze_interval = 200;
  std::size_t cap = 64;
  std::size_t probe_size = 16;          // rows of the scenario's first batch
  std::size_t validation_samples = 0;   // 0: whole validation pool
  bool charge_validation = false;  // validation passes are inference, not tuning
};

struct WorkloadConfig {
  workload::WorkloadSpec spec;
  std::size_t total_inferences = 500;
  workload::ArrivalProcess train_arrival;
  workload::ArrivalProcess inference_arrival;
};

struct RunConfig {
  std::uint64_t seed = 1;
  Policy policy;
  TrainingConfig training;
  WorkloadConfig workload;
  costmodel::CostParams cost = costmodel::calibrate_defaults();
  ControllerConfig controllers;
  drift::DetectorConfig drift;
  std::string output;

  // Throws ConfigError describing the first violated constraint.
  void validate() const;
};

// Default desk-scale benchmark: nine-scenario workload, reference network,
// Poisson arrivals with 500 requests spread over the training stream.
RunConfig default_config(std::uint64_t seed = 1);

struct RequestRecord {
  std::size_t request = 0;
  double time = 0.0;
  std::size_t scenario = 0;
  double accuracy = 0.0;
  bool operator==(const RequestRecord&) const = default;
};

struct RoundInfo {
  std::size_t round = 0;
  double start_time = 0.0;
  std::size_t batches = 0;
  std::uint64_t iterations = 0;
  std::size_t frozen_layers = 0;
  std::optional<double> val_accuracy;
  bool operator==(const RoundInfo&) const = default;
};

struct FreezeEvent {
  double time = 0.0;
  std::uint64_t iteration = 0;
  std::vector<bool> frozen;  // mask after the change
  bool operator==(const FreezeEvent&) const = default;
};

struct ThresholdPoint {
  double time = 0.0;
  double batches_needed = 1.0;
  std::string cause;  // "round" | "inference" | "scenario"
  bool operator==(const ThresholdPoint&) const = default;
};

struct RunReport {
  std::string policy;
  std::uint64_t seed = 0;
  double avg_inference_accuracy = 0.0;
  std::vector<RequestRecord> requests;
  std::vector<RoundInfo> rounds;
  costmodel::CostLedger ledger;
  std::vector<FreezeEvent> frozen_timeline;
  std::vector<ThresholdPoint> batches_needed_timeline;
  std::vector<double> scenario_changes;  // times the controllers were notified
  std::uint64_t cka_evaluations = 0;
  std::string config_json;  // canonical echo of the run configuration

  std::size_t round_count() const { return rounds.size(); }
  double total_time() const { return ledger.total_time(); }
  double total_energy() const { return ledger.total_energy(); }
  bool operator==(const RunReport&) const = default;
};

RunReport run(const RunConfig& config);

struct ComparisonRow {
  std::string policy;
  double avg_inference_accuracy = 0.0;
  double total_time = 0.0;
  double total_energy = 0.0;
  std::size_t rounds = 0;
  std::uint64_t flops = 0;
  std::size_t requests = 0;
};

// Runs configs that share one workload concurrently (ETUNER_MAX_WORKERS caps
// the worker count). Throws ConfigError if workload seeds differ.
std::vector<RunReport> compare(const std::vector<RunConfig>& configs);
std::vector<ComparisonRow> summarize(const std::vector<RunReport>& reports);

std::size_t max_workers();

}  // namespace etuner::harness
