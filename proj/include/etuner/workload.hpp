#pragma once

// Synthetic multi-scenario classification streams: Gaussian class clusters
// that gain classes (new_class) or move under an affine map (new_pattern),
// plus timestamped arrivals of training batches and inference requests.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "etuner/tensor.hpp"

namespace etuner::workload {

enum class DriftKind { new_class, new_pattern, mixed };

// x -> R(angle) x + shift, where R rotates every coordinate pair (0,1),
// (2,3), ... by the same angle.
struct AffineTransform {
  double rotation_deg = 0.0;
  std::vector<double> shift;  // empty means zero

  bool is_identity() const;
  std::vector<double> apply(const std::vector<double>& x) const;
};

struct ScenarioSpec {
  DriftKind kind = DriftKind::new_class;
  std::vector<int> classes;  // classes active in this scenario
  AffineTransform transform; // applied to classes that existed before it
  std::size_t train_batches = 200;
  double inference_share = 0.0;  // informational; requests follow arrival times
};

struct WorkloadSpec {
  std::vector<ScenarioSpec> scenarios;
  std::size_t dims = 64;
  std::size_t batch_size = 16;
  double cluster_std = 1.0;
  double separation = 4.0;  // distance of each fresh class mean from the origin
  std::size_t test_pool = 512;
  double validation_fraction = 0.05;
  std::uint64_t seed = 1;
};

struct Pool {
  Tensor2 x;
  std::vector<int> y;
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return y.size(); }
  // Rows [first, first + count).
  Pool slice(std::size_t first, std::size_t count) const;
  Pool gather(const std::vector<std::uint32_t>& rows) const;
};

struct ScenarioData {
  std::vector<int> classes;
  std::map<int, std::vector<double>> class_means;  // after this scenario's transform
  Pool train;       // train_batches * batch_size rows, stream order
  Pool validation;  // diverted from the pre-split train pool
  Pool test;
  std::size_t pre_split_train_size = 0;
};

struct Dataset {
  WorkloadSpec spec;
  std::vector<ScenarioData> scenarios;
  std::vector<std::string> warnings;

  std::size_t class_count() const;
};

// Validation rows diverted from a pre-split pool of this size.
std::size_t validation_size(std::size_t pre_split, double fraction);

Dataset generate_dataset(const WorkloadSpec& spec);

// Nine scenarios shaped like a new-class benchmark: two classes pre-trained,
// one class added per streamed scenario, some scenarios also shifting the
// existing clusters. 800 batches per scenario puts one inference request
// about every 13 training batches.
inline constexpr std::size_t kBenchmarkBatchesPerScenario = 800;
WorkloadSpec default_benchmark_spec(std::uint64_t seed);

enum class ArrivalKind { poisson, uniform, normal, trace };

struct ArrivalProcess {
  ArrivalKind kind = ArrivalKind::poisson;
  double rate = 1.0;           // poisson
  double lo = 1.0, hi = 1.0;   // uniform
  double mean = 1.0, std = 0.1, floor = 1e-3;  // normal (truncated at floor)
  std::string trace_path;      // trace
  std::uint64_t seed = 0;
};

std::vector<double> sample_interarrivals(const ArrivalProcess& proc, std::size_t n,
                                         std::uint64_t seed);

struct TraceRow {
  double time = 0.0;
  std::string kind;  // "train" | "infer"
};

// CSV with header `time_seconds,kind`. Throws ParseError with the line number.
std::vector<TraceRow> read_trace(const std::string& path);
std::vector<TraceRow> parse_trace(const std::string& text);

enum class EventKind { train_batch = 0, inference_request = 1, scenario_boundary = 2 };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::train_batch;
  std::size_t scenario = 0;
  std::size_t index = 0;  // batch index in scenario / request number / boundary id
  std::uint64_t seq = 0;
  std::vector<std::uint32_t> sample_rows;  // inference: rows of the scenario test pool
};

struct EventOptions {
  std::size_t total_inferences = 500;
  std::size_t first_streamed = 1;  // scenarios before this one are pre-training data
  std::uint64_t seed = 0;
};

// Merged, totally ordered stream: by time, then train < inference < boundary,
// then sequence number.
std::vector<Event> generate_events(const ArrivalProcess& train, const ArrivalProcess& inference,
                                   const Dataset& dataset, const EventOptions& opts);

Pool train_batch(const Dataset& dataset, const Event& e);
Pool inference_batch(const Dataset& dataset, const Event& e);

}  // namespace etuner::workload
