// etuner: run, compare and inspect continual-learning fine-tuning policies.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "etuner/checks.hpp"
#include "etuner/errors.hpp"
#include "etuner/harness.hpp"
#include "etuner/io.hpp"
#include "etuner/kernels.hpp"

namespace {

using namespace etuner;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_table(const std::vector<harness::ComparisonRow>& rows, std::ostream& os) {
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %10s %12s %12s %8s %14s %9s\n", "policy", "accuracy",
                "time_s", "energy_J", "rounds", "flops", "requests");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %10.4f %12.3f %12.3f %8zu %14llu %9zu\n",
                  r.policy.c_str(), r.avg_inference_accuracy, r.total_time, r.total_energy,
                  r.rounds, static_cast<unsigned long long>(r.flops), r.requests);
    os << line;
  }
}

std::string table_csv(const std::vector<harness::ComparisonRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "policy,avg_inference_accuracy,total_time,total_energy,rounds,flops,requests\n";
  for (const auto& r : rows) {
    os << r.policy << ',' << r.avg_inference_accuracy << ',' << r.total_time << ','
       << r.total_energy << ',' << r.rounds << ',' << r.flops << ',' << r.requests << '\n';
  }
  return os.str();
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_dir) {
  auto cfg = io::load_config(config_path);
  if (seed) {
    auto j = io::config_to_json(cfg);
    j["seed"] = *seed;
    j["workload"]["seed"] = *seed;
    cfg = io::config_from_json(j);
  }
  const auto report = harness::run(cfg);
  const std::string dir = !out_dir.empty() ? out_dir : cfg.output;
  if (!dir.empty()) io::write_report_files(report, dir);
  print_table(harness::summarize({report}), std::cout);
  return 0;
}

int cmd_compare(const std::string& config_path, const std::string& policies,
                const std::string& seeds, const std::string& out_dir) {
  const auto base = io::load_config(config_path);
  std::vector<std::uint64_t> seed_list;
  for (const auto& s : split(seeds, ',')) seed_list.push_back(std::stoull(s));
  if (seed_list.empty()) seed_list.push_back(base.seed);
  const auto names = split(policies, ',');
  if (names.empty()) throw ConfigError("--policies is empty");

  std::vector<harness::ComparisonRow> mean_rows(names.size());
  for (std::uint64_t seed : seed_list) {
    std::vector<harness::RunConfig> cfgs;
    for (const auto& name : names) {
      auto j = io::config_to_json(base);
      j["policy"] = name;
      if (seed != base.seed) {
        j["seed"] = seed;
        j["workload"]["seed"] = seed;
      }
      cfgs.push_back(io::config_from_json(j));
    }
    const auto reports = harness::compare(cfgs);
    const auto rows = harness::summarize(reports);
    if (seed_list.size() > 1) std::cout << "seed " << seed << "\n";
    print_table(rows, std::cout);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto& m = mean_rows[i];
      m.policy = rows[i].policy;
      m.avg_inference_accuracy += rows[i].avg_inference_accuracy / seed_list.size();
      m.total_time += rows[i].total_time / seed_list.size();
      m.total_energy += rows[i].total_energy / seed_list.size();
      m.rounds += rows[i].rounds;
      m.flops += rows[i].flops;
      m.requests += rows[i].requests;
    }
    if (!out_dir.empty()) {
      for (const auto& r : reports) {
        auto name = r.policy;
        std::replace(name.begin(), name.end(), ':', '_');
        io::write_report_files(
            r, (std::filesystem::path(out_dir) / ("seed" + std::to_string(seed)) / name).string());
      }
    }
  }
  for (auto& m : mean_rows) {
    m.rounds /= seed_list.size();
    m.flops /= seed_list.size();
    m.requests /= seed_list.size();
  }
  if (seed_list.size() > 1) {
    std::cout << "mean over " << seed_list.size() << " seeds\n";
    print_table(mean_rows, std::cout);
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    io::write_file((std::filesystem::path(out_dir) / "comparison.csv").string(),
                   table_csv(mean_rows));
  }
  return 0;
}

int cmd_gen_workload(const std::string& spec_path, const std::string& out_path) {
  const auto j = nlohmann::json::parse(io::read_file(spec_path));
  std::uint64_t seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : 1;
  const auto spec = io::workload_spec_from_json(j, seed);
  const auto ds = workload::generate_dataset(spec);
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  io::write_file(out_path, io::dataset_to_json(ds).dump(2) + "\n");
  std::cout << "wrote " << out_path << " (" << ds.scenarios.size() << " scenarios, "
            << ds.class_count() << " classes)\n";
  return 0;
}

int cmd_selftest() {
  std::cout << "kernel isa: " << kernels::isa_name(kernels::active_isa()) << "\n";
  const auto results = checks::run_selftest();
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    ok &= r.passed;
  }
  std::cout << (ok ? "selftest passed\n" : "selftest FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning fine-tuning scheduler simulator"};
  app.require_subcommand(1);
  std::string isa;
  app.add_option("--isa", isa, "Force a kernel variant (scalar, avx2, neon)")
      ->check(CLI::IsMember({"scalar", "avx2", "neon"}));

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "Run one policy and write its report");
  run->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed, "Override the run seed");
  run->add_option("--out", out_dir, "Report directory (overrides config output)");

  std::string policies = "immediate,static:20,lazytune,simfreeze,etuner";
  std::string seeds;
  auto* compare = app.add_subcommand("compare", "Run several policies on one shared workload");
  compare->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  compare->add_option("--policies", policies, "Comma-separated policy list");
  compare->add_option("--seeds", seeds, "Comma-separated seeds; rows are averaged");
  compare->add_option("--out", out_dir, "Directory for reports and comparison.csv");

  std::string spec_path;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-workload", "Generate a workload and export its description");
  gen->add_option("--spec", spec_path, "JSON workload spec")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output JSON path")->required();

  auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (isa == "scalar") kernels::set_isa(kernels::Isa::scalar);
    if (isa == "avx2") kernels::set_isa(kernels::Isa::avx2);
    if (isa == "neon") kernels::set_isa(kernels::Isa::neon);
    if (*run) return cmd_run(config_path, *seed_opt ? std::optional(seed) : std::nullopt, out_dir);
    if (*compare) return cmd_compare(config_path, policies, seeds, out_dir);
    if (*gen) return cmd_gen_workload(spec_path, gen_out);
    if (*selftest) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\nstate:\n" << e.state_dump() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
