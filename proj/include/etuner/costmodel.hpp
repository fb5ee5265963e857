#pragma once

// Modeled time/energy ledger for fine-tuning rounds: a fixed per-round
// overhead (system init + model load + model save) plus FLOP-proportional
// compute.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace etuner::costmodel {

struct CostParams {
  double t_init = 0.0, t_load = 0.0, t_save = 0.0;  // seconds per round
  double e_init = 0.0, e_load = 0.0, e_save = 0.0;  // joules per round
  double t_per_gflop = 0.0;                          // seconds
  double e_per_gflop = 0.0;                          // joules
  bool cka_overhead_charged = true;
  // Size-dependent variant: load + save cost per million model parameters
  // replaces the flat t_load/t_save and e_load/e_save.
  bool size_scaled_io = false;
  double t_io_per_mparam = 0.0;
  double e_io_per_mparam = 0.0;

  double overhead_time(std::uint64_t model_params = 0) const;
  double overhead_energy(std::uint64_t model_params = 0) const;
  bool operator==(const CostParams&) const = default;
};

struct RoundRecord {
  std::size_t round = 0;
  double overhead_time = 0.0;
  double compute_time = 0.0;
  double overhead_energy = 0.0;
  double compute_energy = 0.0;
  std::uint64_t flops = 0;
  std::uint64_t cka_flops = 0;

  double time() const { return overhead_time + compute_time; }
  double energy() const { return overhead_energy + compute_energy; }
  bool operator==(const RoundRecord&) const = default;
};

struct CostLedger {
  std::vector<RoundRecord> rounds;
  double overhead_time = 0.0, compute_time = 0.0;
  double overhead_energy = 0.0, compute_energy = 0.0;
  std::uint64_t flops = 0, cka_flops = 0;
  std::uint64_t peak_activation_mem_units = 0;

  double total_time() const { return overhead_time + compute_time; }
  double total_energy() const { return overhead_energy + compute_energy; }
  double overhead_time_share() const;
  double overhead_energy_share() const;
  bool operator==(const CostLedger&) const = default;
};

// Appends one round. `model_params` only matters with size_scaled_io.
// Throws InputError on negative parameters.
const RoundRecord& charge_round(CostLedger& ledger, const CostParams& params, std::uint64_t flops,
                                std::uint64_t cka_flops, std::uint64_t model_params = 0);

void note_activation_memory(CostLedger& ledger, std::uint64_t units);

// Fixed overhead shares of a round that trains exactly one batch of the
// reference network with nothing frozen.
inline constexpr double kReferenceOverheadTimeShare = 0.58;
inline constexpr double kReferenceOverheadEnergyShare = 0.38;
inline constexpr double kReferenceSecondsPerGflop = 10.0;
inline constexpr double kReferenceJoulesPerGflop = 100.0;

// FLOPs of one reference training round (64-128-128-10 network, batch 16,
// nothing frozen), taken from the network's own cost accounting.
std::uint64_t reference_round_flops();

// Solves overhead / (overhead + compute) = share for the reference round and
// splits the overhead 50/30/20 across init, load and save.
CostParams calibrate_defaults();
CostParams calibrate_for(std::uint64_t round_flops, double time_share, double energy_share,
                         double seconds_per_gflop, double joules_per_gflop);

}  // namespace etuner::costmodel
