#pragma once

// JSON/CSV encodings of run configurations, reports and generated datasets.

#include <string>

#include "json.hpp"

#include "etuner/harness.hpp"
#include "etuner/workload.hpp"

namespace etuner::io {

// Strict decoding: unknown keys and wrong types raise ConfigError naming the
// offending JSON path. Missing keys keep the defaults of default_config(seed).
harness::RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const harness::RunConfig& cfg);
harness::RunConfig load_config(const std::string& path);

workload::WorkloadSpec workload_spec_from_json(const nlohmann::json& j, std::uint64_t seed);
nlohmann::json workload_spec_to_json(const workload::WorkloadSpec& spec);

nlohmann::json arrival_to_json(const workload::ArrivalProcess& p);
workload::ArrivalProcess arrival_from_json(const nlohmann::json& j, const std::string& path);

// Class means per scenario, transforms, pool sizes and seed; no samples.
nlohmann::json dataset_to_json(const workload::Dataset& ds);

nlohmann::json report_to_json(const harness::RunReport& r);
harness::RunReport report_from_json(const nlohmann::json& j);
std::string report_text(const harness::RunReport& r);  // canonical serialized form

std::string requests_csv(const harness::RunReport& r);
std::string rounds_csv(const harness::RunReport& r);

// report.json, requests.csv and rounds.csv under `dir` (created if needed).
void write_report_files(const harness::RunReport& r, const std::string& dir);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace etuner::io
