#include "etuner/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "etuner/errors.hpp"

namespace etuner::workload {
namespace {

std::vector<double> random_mean(std::mt19937_64& rng, std::size_t dims, double radius) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(dims);
  double norm = 0.0;
  for (auto& x : v) {
    x = n01(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x *= radius / norm;
  return v;
}

// Balanced labels over `classes`, then isotropic samples around their means.
Pool sample_pool(std::mt19937_64& rng, const std::vector<int>& classes,
                 const std::map<int, std::vector<double>>& means, std::size_t n, std::size_t dims,
                 double sigma, std::uint64_t& next_id) {
  Pool p;
  p.x = Tensor2(n, dims);
  p.y.resize(n);
  p.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.y[i] = classes[i % classes.size()];
  std::shuffle(p.y.begin(), p.y.end(), rng);
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mu = means.at(p.y[i]);
    auto row = p.x.row(i);
    for (std::size_t d = 0; d < dims; ++d) row[d] = mu[d] + noise(rng);
    p.ids[i] = next_id++;
  }
  return p;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

bool AffineTransform::is_identity() const {
  return rotation_deg == 0.0 && std::all_of(shift.begin(), shift.end(), [](double v) { return v == 0.0; });
}

std::vector<double> AffineTransform::apply(const std::vector<double>& x) const {
  std::vector<double> out = x;
  const double theta = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (std::size_t i = 0; i + 1 < x.size(); i += 2) {
    out[i] = c * x[i] - s * x[i + 1];
    out[i + 1] = s * x[i] + c * x[i + 1];
  }
  for (std::size_t i = 0; i < shift.size() && i < out.size(); ++i) out[i] += shift[i];
  return out;
}

Pool Pool::slice(std::size_t first, std::size_t count) const {
  Pool p;
  p.x = x.slice_rows(first, count);
  p.y.assign(y.begin() + static_cast<std::ptrdiff_t>(first),
             y.begin() + static_cast<std::ptrdiff_t>(first + count));
  p.ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(first),
               ids.begin() + static_cast<std::ptrdiff_t>(first + count));
  return p;
}

Pool Pool::gather(const std::vector<std::uint32_t>& rows) const {
  Pool p;
  p.x = Tensor2(rows.size(), x.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.row(rows[i]).begin(), x.cols, p.x.row(i).begin());
    p.y.push_back(y[rows[i]]);
    p.ids.push_back(ids[rows[i]]);
  }
  return p;
}

std::size_t Dataset::class_count() const {
  int mx = -1;
  for (const auto& s : scenarios) {
    for (int c : s.classes) mx = std::max(mx, c);
  }
  return static_cast<std::size_t>(mx + 1);
}

std::size_t validation_size(std::size_t pre_split, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pre_split)));
}

Dataset generate_dataset(const WorkloadSpec& spec) {
  if (spec.dims < 2) throw ConfigError("workload dims must be >= 2");
  if (spec.scenarios.empty()) throw ConfigError("workload needs at least one scenario");
  if (spec.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(spec.cluster_std > 0.0)) throw ConfigError("cluster_std must be positive");
  if (!(spec.validation_fraction >= 0.0 && spec.validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
  if (!spec.scenarios.front().transform.is_identity()) {
    throw ConfigError("the first scenario must use the identity transform");
  }

  Dataset ds;
  ds.spec = spec;
  std::mt19937_64 rng(spec.seed);
  std::uint64_t next_id = 0;
  std::map<int, std::vector<double>> means;

  for (std::size_t s = 0; s < spec.scenarios.size(); ++s) {
    const auto& sc = spec.scenarios[s];
    if (sc.classes.empty()) throw ConfigError("scenario " + std::to_string(s) + " has no classes");
    if (sc.train_batches == 0) throw ConfigError("scenario " + std::to_string(s) + " has no batches");
    for (int c : sc.classes) {
      if (c < 0 || c >= 64) throw ConfigError("class ids must lie in [0, 64)");
    }
    if (std::set<int>(sc.classes.begin(), sc.classes.end()).size() != sc.classes.size()) {
      throw ConfigError("scenario " + std::to_string(s) + " repeats a class id");
    }
    if (!sc.transform.shift.empty() && sc.transform.shift.size() != spec.dims) {
      throw ConfigError("transform shift length must equal dims");
    }
    if (sc.kind != DriftKind::new_class) {
      for (auto& [cls, mu] : means) mu = sc.transform.apply(mu);
    }
    for (int c : sc.classes) {
      if (!means.count(c)) {
        auto mu = random_mean(rng, spec.dims, spec.separation * spec.cluster_std);
        for (const auto& [other, omu] : means) {
          if (distance(mu, omu) < spec.cluster_std) {
            ds.warnings.push_back("scenario " + std::to_string(s) + ": class " +
                                  std::to_string(c) + " mean within 1 sigma of class " +
                                  std::to_string(other));
          }
        }
        means[c] = std::move(mu);
      }
    }

    ScenarioData data;
    data.classes = sc.classes;
    for (int c : sc.classes) data.class_means[c] = means.at(c);

    const std::size_t needed = sc.train_batches * spec.batch_size;
    std::size_t pre = needed;
    while (pre - validation_size(pre, spec.validation_fraction) < needed) ++pre;
    const std::size_t nval = validation_size(pre, spec.validation_fraction);
    data.pre_split_train_size = pre;
    Pool all = sample_pool(rng, sc.classes, means, pre, spec.dims, spec.cluster_std, next_id);
    std::vector<std::uint32_t> order(pre);
    for (std::size_t i = 0; i < pre; ++i) order[i] = static_cast<std::uint32_t>(i);
    std::shuffle(order.begin(), order.end(), rng);
    data.validation = all.gather({order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nval)});
    data.train = all.gather({order.begin() + static_cast<std::ptrdiff_t>(nval), order.end()});
    data.test = sample_pool(rng, sc.classes, means, spec.test_pool, spec.dims, spec.cluster_std,
                            next_id);
    ds.scenarios.push_back(std::move(data));
  }
  return ds;
}

WorkloadSpec default_benchmark_spec(std::uint64_t seed) {
  WorkloadSpec spec;
  spec.seed = seed;
  std::vector<int> classes{0, 1};
  ScenarioSpec first;
  first.kind = DriftKind::new_class;
  first.classes = classes;
  first.train_batches = kBenchmarkBatchesPerScenario;
  spec.scenarios.push_back(first);
  for (int s = 1; s < 9; ++s) {
    classes.push_back(s + 1);
    ScenarioSpec sc;
    sc.classes = classes;
    sc.train_batches = kBenchmarkBatchesPerScenario;
    if (s % 2 == 0) {
      sc.kind = DriftKind::mixed;
      sc.transform.rotation_deg = 30.0;
    }
    spec.scenarios.push_back(sc);
  }
  return spec;
}

std::vector<double> sample_interarrivals(const ArrivalProcess& proc, std::size_t n,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> out;
  out.reserve(n);
  switch (proc.kind) {
    case ArrivalKind::poisson: {
      if (!(proc.rate > 0.0)) throw ConfigError("poisson rate must be positive");
      std::exponential_distribution<double> d(proc.rate);
      for (std::size_t i = 0; i < n; ++i) out.push_back(d(rng));
      break;
    }
    case ArrivalKind::uniform: {
      if (!(proc.lo > 0.0 && proc.hi >= proc.lo)) throw ConfigError("uniform needs 0 < lo <= hi");
      if (proc.lo == proc.hi) {
        out.assign(n, proc.lo);
      } else {
        std::uniform_real_distribution<double> d(proc.lo, proc.hi);
        for (std::size_t i = 0; i < n; ++i) out.push_back(d(rng));
      }
      break;
    }
    case ArrivalKind::normal: {
      if (!(proc.floor > 0.0) || proc.std < 0.0) throw ConfigError("normal needs floor > 0, std >= 0");
      std::normal_distribution<double> d(proc.mean, proc.std);
      for (std::size_t i = 0; i < n; ++i) out.push_back(std::max(d(rng), proc.floor));
      break;
    }
    case ArrivalKind::trace:
      throw ConfigError("trace arrivals have no inter-arrival distribution");
  }
  return out;
}

std::vector<TraceRow> parse_trace(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<TraceRow> rows;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "time_seconds,kind") throw ParseError("trace: expected header 'time_seconds,kind'", lineno);
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError("trace: expected two fields", lineno);
    }
    TraceRow row;
    const std::string t = line.substr(0, comma);
    std::size_t used = 0;
    try {
      row.time = std::stod(t, &used);
    } catch (const std::exception&) {
      throw ParseError("trace: bad time '" + t + "'", lineno);
    }
    if (used != t.size() || !std::isfinite(row.time) || row.time < 0.0) {
      throw ParseError("trace: bad time '" + t + "'", lineno);
    }
    row.kind = line.substr(comma + 1);
    if (row.kind != "train" && row.kind != "infer") {
      throw ParseError("trace: kind must be train or infer, got '" + row.kind + "'", lineno);
    }
    if (!rows.empty() && row.time < rows.back().time) {
      throw ParseError("trace: timestamps must be non-decreasing", lineno);
    }
    rows.push_back(std::move(row));
  }
  if (!header) throw ParseError("trace: missing header", lineno + 1);
  return rows;
}

std::vector<TraceRow> read_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open trace file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_trace(ss.str());
}

namespace {

std::vector<double> arrival_times(const ArrivalProcess& proc, std::size_t n, const char* kind,
                                  std::uint64_t seed) {
  std::vector<double> times;
  if (proc.kind == ArrivalKind::trace) {
    for (const auto& row : read_trace(proc.trace_path)) {
      if (row.kind == kind) times.push_back(row.time);
    }
    if (times.size() > n) times.resize(n);
    return times;
  }
  double t = 0.0;
  for (double dt : sample_interarrivals(proc, n, seed)) {
    t += dt;
    times.push_back(t);
  }
  return times;
}

}  // namespace

std::vector<Event> generate_events(const ArrivalProcess& train, const ArrivalProcess& inference,
                                   const Dataset& dataset, const EventOptions& opts) {
  const auto& scen = dataset.scenarios;
  if (opts.first_streamed >= scen.size()) throw ConfigError("no streamed scenarios");
  std::size_t total_batches = 0;
  for (std::size_t s = opts.first_streamed; s < scen.size(); ++s) {
    total_batches += scen[s].train.size() / dataset.spec.batch_size;
  }

  const auto train_times = arrival_times(train, total_batches, "train", opts.seed ^ train.seed);
  const auto infer_times = arrival_times(inference, opts.total_inferences, "infer",
                                         (opts.seed * 0x9E3779B97F4A7C15ull) ^ inference.seed);

  std::vector<Event> events;
  std::uint64_t seq = 0;
  std::vector<double> boundary_times;
  std::size_t k = 0;
  double prev_time = 0.0;
  for (std::size_t s = opts.first_streamed; s < scen.size() && k < train_times.size(); ++s) {
    const std::size_t nb = scen[s].train.size() / dataset.spec.batch_size;
    const double bt = 0.5 * (prev_time + train_times[k]);
    boundary_times.push_back(bt);
    events.push_back({bt, EventKind::scenario_boundary, s, s, seq++, {}});
    for (std::size_t b = 0; b < nb && k < train_times.size(); ++b, ++k) {
      events.push_back({train_times[k], EventKind::train_batch, s, b, seq++, {}});
      prev_time = train_times[k];
    }
  }

  std::mt19937_64 rng(opts.seed ^ 0xA5A5A5A5ull);
  for (std::size_t i = 0; i < infer_times.size(); ++i) {
    const double t = infer_times[i];
    const auto it = std::upper_bound(boundary_times.begin(), boundary_times.end(), t);
    const std::size_t offset = it == boundary_times.begin()
                                   ? 0
                                   : static_cast<std::size_t>(it - boundary_times.begin()) - 1;
    const std::size_t s = opts.first_streamed + offset;
    const auto& test = scen[s].test;
    if (test.size() == 0) throw ConfigError("scenario test pool is empty");
    std::vector<std::uint32_t> rows(test.size());
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = static_cast<std::uint32_t>(r);
    const std::size_t take = std::min(dataset.spec.batch_size, rows.size());
    for (std::size_t r = 0; r < take; ++r) {
      std::uniform_int_distribution<std::size_t> pick(r, rows.size() - 1);
      std::swap(rows[r], rows[pick(rng)]);
    }
    rows.resize(take);
    events.push_back({t, EventKind::inference_request, s, i, seq++, std::move(rows)});
  }

  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    return a.seq < b.seq;
  });
  return events;
}

Pool train_batch(const Dataset& dataset, const Event& e) {
  const std::size_t b = dataset.spec.batch_size;
  return dataset.scenarios.at(e.scenario).train.slice(e.index * b, b);
}

Pool inference_batch(const Dataset& dataset, const Event& e) {
  return dataset.scenarios.at(e.scenario).test.gather(e.sample_rows);
}

}  // namespace etuner::workload
