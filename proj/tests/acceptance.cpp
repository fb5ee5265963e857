// Acceptance suite: one PASS/FAIL line per criterion. Expected values all come
// from the oracles in support/checks.cpp, never from the library under test.
//
// Exit status is non-zero if any criterion fails, unless the failing set is
// exactly the one listed with --known-failures (e.g. "9"). A known failure
// that starts passing is also an error, so the list can't go stale.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "etuner/checks.hpp"
#include "etuner/harness.hpp"
#include "etuner/kernels.hpp"

using namespace etuner;

namespace {

struct Line {
  int id;
  std::string title;
  checks::CheckResult result;
};

checks::CheckResult all_of(std::string name, std::vector<checks::CheckResult> parts) {
  checks::CheckResult r;
  r.name = std::move(name);
  r.passed = true;
  for (const auto& p : parts) {
    r.passed = r.passed && p.passed;
    r.seconds += p.seconds;
    if (!r.detail.empty()) r.detail += " | ";
    r.detail += (p.passed ? "" : "FAILED ") + p.name + ": " + p.detail;
  }
  return r;
}

checks::CheckResult with_budget(checks::CheckResult r, double seconds) {
  if (r.seconds >= seconds) {
    r.passed = false;
    r.detail += "; over the " + std::to_string(static_cast<int>(seconds)) + " s budget";
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> known;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--known-failures" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) known.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: etuner_acceptance [--known-failures 9,...]\n";
      return 2;
    }
  }
  std::cout << "kernel isa: " << kernels::isa_name(kernels::active_isa())
            << ", workers: " << harness::max_workers() << "\n";
  std::vector<Line> lines;
  auto report = [&](int id, std::string title, checks::CheckResult r) {
    std::printf("%s %2d %-28s %8.2fs  %s\n", r.passed ? "PASS" : "FAIL", id, title.c_str(),
                r.seconds, r.detail.c_str());
    std::fflush(stdout);
    lines.push_back({id, std::move(title), std::move(r)});
  };

  report(1, "cka suite", with_budget(checks::cka_properties(10000), 30.0));
  report(2, "gradient oracle", with_budget(checks::gradient_oracle(20), 60.0));
  report(3, "flop oracle", checks::flop_oracle(6));
  report(4, "lazytune behaviour", checks::lazytune_behaviour(100000));
  report(5, "curve-fit recovery", checks::curve_fit(100));
  report(6, "simfreeze state machine", checks::simfreeze_state_machine(100));
  report(7, "cost-model calibration", checks::cost_calibration());

  const auto t0 = std::chrono::steady_clock::now();
  const auto runs = checks::run_benchmark(
      {1, 2, 3, 4, 5},
      {"immediate", "static:5", "static:10", "static:20", "static:50", "lazytune", "etuner"});
  const double bench_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto e2e = checks::end_to_end(runs);
  e2e.seconds += bench_s;
  report(8, "end-to-end analog", with_budget(e2e, 600.0));
  report(9, "static sweep", checks::static_sweep(runs));

  auto det_cfg = harness::default_config(3);
  det_cfg.policy = harness::Policy::parse("etuner");
  auto parts = checks::run_selftest();
  parts.insert(parts.begin(), checks::determinism(det_cfg));
  report(10, "determinism + selftest", all_of("determinism + selftest", std::move(parts)));

  std::set<int> failing;
  for (const auto& l : lines) {
    if (!l.result.passed) failing.insert(l.id);
  }
  std::cout << (lines.size() - failing.size()) << "/" << lines.size() << " criteria passed\n";
  if (failing.empty() && known.empty()) return 0;
  if (failing == known) {
    std::cout << "failing set matches --known-failures (see README)\n";
    return 0;
  }
  for (int id : known) {
    if (!failing.count(id)) std::cout << "criterion " << id << " listed as known failure but passed\n";
  }
  return 1;
}
