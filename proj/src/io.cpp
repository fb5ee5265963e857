#include "etuner/io.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "etuner/errors.hpp"

namespace etuner::io {

using nlohmann::json;

namespace {

// Reads keys of one JSON object and rejects any it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  bool get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return false;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
    return true;
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string kind_name(workload::DriftKind k) {
  switch (k) {
    case workload::DriftKind::new_class: return "new_class";
    case workload::DriftKind::new_pattern: return "new_pattern";
    case workload::DriftKind::mixed: return "mixed";
  }
  return "new_class";
}

workload::DriftKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "new_class") return workload::DriftKind::new_class;
  if (s == "new_pattern") return workload::DriftKind::new_pattern;
  if (s == "mixed") return workload::DriftKind::mixed;
  throw ConfigError(path + ": unknown scenario kind '" + s + "'");
}

std::string arrival_name(workload::ArrivalKind k) {
  switch (k) {
    case workload::ArrivalKind::poisson: return "poisson";
    case workload::ArrivalKind::uniform: return "uniform";
    case workload::ArrivalKind::normal: return "normal";
    case workload::ArrivalKind::trace: return "trace";
  }
  return "poisson";
}

std::size_t streamed_batches(const workload::WorkloadSpec& spec) {
  std::size_t n = 0;
  for (std::size_t s = 1; s < spec.scenarios.size(); ++s) n += spec.scenarios[s].train_batches;
  return n;
}

}  // namespace

json arrival_to_json(const workload::ArrivalProcess& p) {
  json j;
  j["kind"] = arrival_name(p.kind);
  switch (p.kind) {
    case workload::ArrivalKind::poisson: j["rate"] = p.rate; break;
    case workload::ArrivalKind::uniform:
      j["lo"] = p.lo;
      j["hi"] = p.hi;
      break;
    case workload::ArrivalKind::normal:
      j["mean"] = p.mean;
      j["std"] = p.std;
      j["floor"] = p.floor;
      break;
    case workload::ArrivalKind::trace: j["path"] = p.trace_path; break;
  }
  j["seed"] = p.seed;
  return j;
}

workload::ArrivalProcess arrival_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  workload::ArrivalProcess p;
  std::string kind = "poisson";
  r.get("kind", kind);
  if (kind == "poisson") {
    p.kind = workload::ArrivalKind::poisson;
    r.get("rate", p.rate);
  } else if (kind == "uniform") {
    p.kind = workload::ArrivalKind::uniform;
    r.get("lo", p.lo);
    r.get("hi", p.hi);
  } else if (kind == "normal") {
    p.kind = workload::ArrivalKind::normal;
    r.get("mean", p.mean);
    r.get("std", p.std);
    r.get("floor", p.floor);
  } else if (kind == "trace") {
    p.kind = workload::ArrivalKind::trace;
    r.get("path", p.trace_path);
  } else {
    throw ConfigError(path + ".kind: unknown arrival kind '" + kind + "'");
  }
  r.get("seed", p.seed);
  r.finish();
  return p;
}

json workload_spec_to_json(const workload::WorkloadSpec& spec) {
  json j;
  j["dims"] = spec.dims;
  j["batch_size"] = spec.batch_size;
  j["cluster_std"] = spec.cluster_std;
  j["separation"] = spec.separation;
  j["test_pool"] = spec.test_pool;
  j["validation_fraction"] = spec.validation_fraction;
  j["seed"] = spec.seed;
  json scen = json::array();
  for (const auto& s : spec.scenarios) {
    json o;
    o["kind"] = kind_name(s.kind);
    o["classes"] = s.classes;
    o["rotation_deg"] = s.transform.rotation_deg;
    o["shift"] = s.transform.shift;
    o["train_batches"] = s.train_batches;
    o["inference_share"] = s.inference_share;
    scen.push_back(o);
  }
  j["scenarios"] = scen;
  return j;
}

workload::WorkloadSpec workload_spec_from_json(const json& j, std::uint64_t seed) {
  ObjectReader r(j, "workload");
  workload::WorkloadSpec spec = workload::default_benchmark_spec(seed);
  r.get("dims", spec.dims);
  r.get("batch_size", spec.batch_size);
  r.get("cluster_std", spec.cluster_std);
  r.get("separation", spec.separation);
  r.get("test_pool", spec.test_pool);
  r.get("validation_fraction", spec.validation_fraction);
  r.get("seed", spec.seed);
  if (const json* scen = r.child("scenarios")) {
    if (!scen->is_array()) throw ConfigError("workload.scenarios: expected an array");
    spec.scenarios.clear();
    for (std::size_t i = 0; i < scen->size(); ++i) {
      const std::string path = "workload.scenarios[" + std::to_string(i) + "]";
      ObjectReader s(scen->at(i), path);
      workload::ScenarioSpec sc;
      std::string kind = "new_class";
      s.get("kind", kind);
      sc.kind = parse_kind(kind, path + ".kind");
      s.get("classes", sc.classes);
      s.get("rotation_deg", sc.transform.rotation_deg);
      s.get("shift", sc.transform.shift);
      s.get("train_batches", sc.train_batches);
      s.get("inference_share", sc.inference_share);
      s.finish();
      spec.scenarios.push_back(std::move(sc));
    }
  }
  // Keys owned by the surrounding workload section.
  r.child("total_inferences");
  r.child("train_arrival");
  r.child("inference_arrival");
  r.finish();
  return spec;
}

json config_to_json(const harness::RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["policy"] = c.policy.name();
  j["training"] = {{"hidden", c.training.hidden},
                   {"lr", c.training.lr},
                   {"epochs", c.training.epochs},
                   {"pretrain_epochs", c.training.pretrain_epochs},
                   {"cwr", c.training.cwr}};
  json w = workload_spec_to_json(c.workload.spec);
  w["total_inferences"] = c.workload.total_inferences;
  w["train_arrival"] = arrival_to_json(c.workload.train_arrival);
  w["inference_arrival"] = arrival_to_json(c.workload.inference_arrival);
  j["workload"] = w;
  j["cost"] = {{"t_init", c.cost.t_init},
               {"t_load", c.cost.t_load},
               {"t_save", c.cost.t_save},
               {"e_init", c.cost.e_init},
               {"e_load", c.cost.e_load},
               {"e_save", c.cost.e_save},
               {"t_per_gflop", c.cost.t_per_gflop},
               {"e_per_gflop", c.cost.e_per_gflop},
               {"cka_overhead_charged", c.cost.cka_overhead_charged},
               {"size_scaled_io", c.cost.size_scaled_io},
               {"t_io_per_mparam", c.cost.t_io_per_mparam},
               {"e_io_per_mparam", c.cost.e_io_per_mparam}};
  j["controllers"] = {{"cka_threshold", c.controllers.cka_threshold},
                      {"freeze_interval", c.controllers.freeze_interval},
                      {"cap", c.controllers.cap},
                      {"probe_size", c.controllers.probe_size},
                      {"validation_samples", c.controllers.validation_samples},
                      {"charge_validation", c.controllers.charge_validation}};
  j["drift"] = {{"mode", c.drift.mode == drift::Mode::energy ? "energy" : "oracle"},
                {"temperature", c.drift.temperature},
                {"window", c.drift.window},
                {"z_threshold", c.drift.z_threshold}};
  j["output"] = c.output;
  return j;
}

harness::RunConfig config_from_json(const json& j) {
  ObjectReader r(j, "config");
  std::uint64_t seed = 1;
  r.get("seed", seed);
  harness::RunConfig c = harness::default_config(seed);

  std::string policy = c.policy.name();
  r.get("policy", policy);
  c.policy = harness::Policy::parse(policy);

  if (const json* t = r.child("training")) {
    ObjectReader tr(*t, "training");
    tr.get("hidden", c.training.hidden);
    tr.get("lr", c.training.lr);
    tr.get("epochs", c.training.epochs);
    tr.get("pretrain_epochs", c.training.pretrain_epochs);
    tr.get("cwr", c.training.cwr);
    tr.finish();
  }

  if (const json* w = r.child("workload")) {
    c.workload.spec = workload_spec_from_json(*w, seed);
    ObjectReader wr(*w, "workload");
    wr.get("total_inferences", c.workload.total_inferences);
    bool explicit_inference = false;
    if (const json* a = wr.child("train_arrival")) {
      c.workload.train_arrival = arrival_from_json(*a, "workload.train_arrival");
    }
    if (const json* a = wr.child("inference_arrival")) {
      c.workload.inference_arrival = arrival_from_json(*a, "workload.inference_arrival");
      explicit_inference = true;
    }
    const std::size_t streamed = streamed_batches(c.workload.spec);
    if (!explicit_inference && c.workload.train_arrival.kind == workload::ArrivalKind::poisson &&
        streamed > 0) {
      // Spread the requests over the expected span of the training stream.
      c.workload.inference_arrival.kind = workload::ArrivalKind::poisson;
      c.workload.inference_arrival.rate = static_cast<double>(c.workload.total_inferences) *
                                          c.workload.train_arrival.rate /
                                          static_cast<double>(streamed);
    }
  }

  if (const json* k = r.child("cost")) {
    ObjectReader cr(*k, "cost");
    cr.get("t_init", c.cost.t_init);
    cr.get("t_load", c.cost.t_load);
    cr.get("t_save", c.cost.t_save);
    cr.get("e_init", c.cost.e_init);
    cr.get("e_load", c.cost.e_load);
    cr.get("e_save", c.cost.e_save);
    cr.get("t_per_gflop", c.cost.t_per_gflop);
    cr.get("e_per_gflop", c.cost.e_per_gflop);
    cr.get("cka_overhead_charged", c.cost.cka_overhead_charged);
    cr.get("size_scaled_io", c.cost.size_scaled_io);
    cr.get("t_io_per_mparam", c.cost.t_io_per_mparam);
    cr.get("e_io_per_mparam", c.cost.e_io_per_mparam);
    cr.finish();
  }

  if (const json* k = r.child("controllers")) {
    ObjectReader cr(*k, "controllers");
    cr.get("cka_threshold", c.controllers.cka_threshold);
    cr.get("freeze_interval", c.controllers.freeze_interval);
    cr.get("cap", c.controllers.cap);
    cr.get("probe_size", c.controllers.probe_size);
    cr.get("validation_samples", c.controllers.validation_samples);
    cr.get("charge_validation", c.controllers.charge_validation);
    cr.finish();
  }

  if (const json* k = r.child("drift")) {
    ObjectReader dr(*k, "drift");
    std::string mode = "energy";
    if (dr.get("mode", mode)) {
      if (mode == "energy") {
        c.drift.mode = drift::Mode::energy;
      } else if (mode == "oracle") {
        c.drift.mode = drift::Mode::oracle;
      } else {
        throw ConfigError("drift.mode: expected energy or oracle");
      }
    }
    dr.get("temperature", c.drift.temperature);
    dr.get("window", c.drift.window);
    dr.get("z_threshold", c.drift.z_threshold);
    dr.finish();
  }

  r.get("output", c.output);
  r.finish();
  c.validate();
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << text;
}

harness::RunConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

json dataset_to_json(const workload::Dataset& ds) {
  json j;
  j["spec"] = workload_spec_to_json(ds.spec);
  j["class_count"] = ds.class_count();
  j["warnings"] = ds.warnings;
  json scen = json::array();
  for (const auto& s : ds.scenarios) {
    json o;
    o["classes"] = s.classes;
    json means = json::object();
    for (const auto& [c, mu] : s.class_means) means[std::to_string(c)] = mu;
    o["class_means"] = means;
    o["train_size"] = s.train.size();
    o["pre_split_train_size"] = s.pre_split_train_size;
    o["validation_size"] = s.validation.size();
    o["test_size"] = s.test.size();
    scen.push_back(o);
  }
  j["scenarios"] = scen;
  return j;
}

json report_to_json(const harness::RunReport& r) {
  json j;
  j["policy"] = r.policy;
  j["seed"] = r.seed;
  j["avg_inference_accuracy"] = r.avg_inference_accuracy;
  j["round_count"] = r.round_count();
  j["total_time"] = r.total_time();
  j["total_energy"] = r.total_energy();
  j["cka_evaluations"] = r.cka_evaluations;
  json req = json::array();
  for (const auto& q : r.requests) {
    req.push_back({{"request", q.request}, {"time", q.time}, {"scenario", q.scenario},
                   {"accuracy", q.accuracy}});
  }
  j["requests"] = req;
  json rounds = json::array();
  for (const auto& x : r.rounds) {
    json o{{"round", x.round},
           {"start_time", x.start_time},
           {"batches", x.batches},
           {"iterations", x.iterations},
           {"frozen_layers", x.frozen_layers}};
    o["val_accuracy"] = x.val_accuracy ? json(*x.val_accuracy) : json(nullptr);
    rounds.push_back(o);
  }
  j["rounds"] = rounds;
  json ledger;
  ledger["overhead_time"] = r.ledger.overhead_time;
  ledger["compute_time"] = r.ledger.compute_time;
  ledger["overhead_energy"] = r.ledger.overhead_energy;
  ledger["compute_energy"] = r.ledger.compute_energy;
  ledger["flops"] = r.ledger.flops;
  ledger["cka_flops"] = r.ledger.cka_flops;
  ledger["peak_activation_mem_units"] = r.ledger.peak_activation_mem_units;
  json recs = json::array();
  for (const auto& x : r.ledger.rounds) {
    recs.push_back({{"round", x.round},
                    {"overhead_time", x.overhead_time},
                    {"compute_time", x.compute_time},
                    {"overhead_energy", x.overhead_energy},
                    {"compute_energy", x.compute_energy},
                    {"flops", x.flops},
                    {"cka_flops", x.cka_flops}});
  }
  ledger["rounds"] = recs;
  j["ledger"] = ledger;
  json frozen = json::array();
  for (const auto& f : r.frozen_timeline) {
    frozen.push_back({{"time", f.time}, {"iteration", f.iteration}, {"frozen", f.frozen}});
  }
  j["frozen_timeline"] = frozen;
  json bn = json::array();
  for (const auto& p : r.batches_needed_timeline) {
    bn.push_back({{"time", p.time}, {"batches_needed", p.batches_needed}, {"cause", p.cause}});
  }
  j["batches_needed_timeline"] = bn;
  j["scenario_changes"] = r.scenario_changes;
  j["config"] = r.config_json.empty() ? json::object() : json::parse(r.config_json);
  return j;
}

harness::RunReport report_from_json(const json& j) {
  harness::RunReport r;
  try {
    r.policy = j.at("policy").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.avg_inference_accuracy = j.at("avg_inference_accuracy").get<double>();
    r.cka_evaluations = j.at("cka_evaluations").get<std::uint64_t>();
    for (const auto& q : j.at("requests")) {
      r.requests.push_back({q.at("request").get<std::size_t>(), q.at("time").get<double>(),
                            q.at("scenario").get<std::size_t>(), q.at("accuracy").get<double>()});
    }
    for (const auto& x : j.at("rounds")) {
      harness::RoundInfo info;
      info.round = x.at("round").get<std::size_t>();
      info.start_time = x.at("start_time").get<double>();
      info.batches = x.at("batches").get<std::size_t>();
      info.iterations = x.at("iterations").get<std::uint64_t>();
      info.frozen_layers = x.at("frozen_layers").get<std::size_t>();
      if (!x.at("val_accuracy").is_null()) info.val_accuracy = x.at("val_accuracy").get<double>();
      r.rounds.push_back(info);
    }
    const auto& l = j.at("ledger");
    r.ledger.overhead_time = l.at("overhead_time").get<double>();
    r.ledger.compute_time = l.at("compute_time").get<double>();
    r.ledger.overhead_energy = l.at("overhead_energy").get<double>();
    r.ledger.compute_energy = l.at("compute_energy").get<double>();
    r.ledger.flops = l.at("flops").get<std::uint64_t>();
    r.ledger.cka_flops = l.at("cka_flops").get<std::uint64_t>();
    r.ledger.peak_activation_mem_units = l.at("peak_activation_mem_units").get<std::uint64_t>();
    for (const auto& x : l.at("rounds")) {
      costmodel::RoundRecord rec;
      rec.round = x.at("round").get<std::size_t>();
      rec.overhead_time = x.at("overhead_time").get<double>();
      rec.compute_time = x.at("compute_time").get<double>();
      rec.overhead_energy = x.at("overhead_energy").get<double>();
      rec.compute_energy = x.at("compute_energy").get<double>();
      rec.flops = x.at("flops").get<std::uint64_t>();
      rec.cka_flops = x.at("cka_flops").get<std::uint64_t>();
      r.ledger.rounds.push_back(rec);
    }
    for (const auto& f : j.at("frozen_timeline")) {
      r.frozen_timeline.push_back({f.at("time").get<double>(), f.at("iteration").get<std::uint64_t>(),
                                   f.at("frozen").get<std::vector<bool>>()});
    }
    for (const auto& p : j.at("batches_needed_timeline")) {
      r.batches_needed_timeline.push_back({p.at("time").get<double>(),
                                           p.at("batches_needed").get<double>(),
                                           p.at("cause").get<std::string>()});
    }
    r.scenario_changes = j.at("scenario_changes").get<std::vector<double>>();
    r.config_json = j.at("config").dump();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string report_text(const harness::RunReport& r) { return report_to_json(r).dump(2) + "\n"; }

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string requests_csv(const harness::RunReport& r) {
  std::string out = "request,time,scenario,accuracy\n";
  for (const auto& q : r.requests) {
    out += std::to_string(q.request) + "," + fmt(q.time) + "," + std::to_string(q.scenario) + "," +
           fmt(q.accuracy) + "\n";
  }
  return out;
}

std::string rounds_csv(const harness::RunReport& r) {
  std::string out =
      "round,start_time,batches,iterations,frozen_layers,val_accuracy,flops,cka_flops,"
      "overhead_time,compute_time,overhead_energy,compute_energy\n";
  for (std::size_t i = 0; i < r.rounds.size(); ++i) {
    const auto& x = r.rounds[i];
    const auto& c = r.ledger.rounds.at(i);
    out += std::to_string(x.round) + "," + fmt(x.start_time) + "," + std::to_string(x.batches) +
           "," + std::to_string(x.iterations) + "," + std::to_string(x.frozen_layers) + "," +
           (x.val_accuracy ? fmt(*x.val_accuracy) : std::string()) + "," +
           std::to_string(c.flops) + "," + std::to_string(c.cka_flops) + "," +
           fmt(c.overhead_time) + "," + fmt(c.compute_time) + "," + fmt(c.overhead_energy) + "," +
           fmt(c.compute_energy) + "\n";
  }
  return out;
}

void write_report_files(const harness::RunReport& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_file((base / "report.json").string(), report_text(r));
  write_file((base / "requests.csv").string(), requests_csv(r));
  write_file((base / "rounds.csv").string(), rounds_csv(r));
}

}  // namespace etuner::io
