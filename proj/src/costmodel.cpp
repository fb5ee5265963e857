#include "etuner/costmodel.hpp"

#include <algorithm>
#include <array>

#include "etuner/errors.hpp"
#include "etuner/nn.hpp"

namespace etuner::costmodel {

double CostParams::overhead_time(std::uint64_t model_params) const {
  const double io = size_scaled_io ? t_io_per_mparam * 1e-6 * static_cast<double>(model_params)
                                   : t_load + t_save;
  return t_init + io;
}

double CostParams::overhead_energy(std::uint64_t model_params) const {
  const double io = size_scaled_io ? e_io_per_mparam * 1e-6 * static_cast<double>(model_params)
                                   : e_load + e_save;
  return e_init + io;
}

double CostLedger::overhead_time_share() const {
  const double t = total_time();
  return t > 0.0 ? overhead_time / t : 0.0;
}

double CostLedger::overhead_energy_share() const {
  const double e = total_energy();
  return e > 0.0 ? overhead_energy / e : 0.0;
}

const RoundRecord& charge_round(CostLedger& ledger, const CostParams& p, std::uint64_t flops,
                                std::uint64_t cka_flops, std::uint64_t model_params) {
  for (double v : {p.t_init, p.t_load, p.t_save, p.e_init, p.e_load, p.e_save, p.t_per_gflop,
                   p.e_per_gflop, p.t_io_per_mparam, p.e_io_per_mparam}) {
    if (!(v >= 0.0)) throw InputError("cost parameters must be non-negative");
  }
  RoundRecord r;
  r.round = ledger.rounds.size();
  r.flops = flops;
  r.cka_flops = cka_flops;
  const double charged_gflops =
      1e-9 * static_cast<double>(flops + (p.cka_overhead_charged ? cka_flops : 0));
  r.overhead_time = p.overhead_time(model_params);
  r.overhead_energy = p.overhead_energy(model_params);
  r.compute_time = charged_gflops * p.t_per_gflop;
  r.compute_energy = charged_gflops * p.e_per_gflop;

  ledger.overhead_time += r.overhead_time;
  ledger.compute_time += r.compute_time;
  ledger.overhead_energy += r.overhead_energy;
  ledger.compute_energy += r.compute_energy;
  ledger.flops += flops;
  ledger.cka_flops += cka_flops;
  ledger.rounds.push_back(r);
  return ledger.rounds.back();
}

void note_activation_memory(CostLedger& ledger, std::uint64_t units) {
  ledger.peak_activation_mem_units = std::max(ledger.peak_activation_mem_units, units);
}

std::uint64_t reference_round_flops() {
  const std::array<std::size_t, 4> dims{64, 128, 128, 10};
  return nn::training_cost(nn::Network::make(dims, 0), 16).total();
}

CostParams calibrate_for(std::uint64_t round_flops, double time_share, double energy_share,
                         double seconds_per_gflop, double joules_per_gflop) {
  if (!(time_share >= 0.0 && time_share < 1.0 && energy_share >= 0.0 && energy_share < 1.0)) {
    throw InputError("overhead shares must lie in [0, 1)");
  }
  const double gflops = 1e-9 * static_cast<double>(round_flops);
  const double compute_t = gflops * seconds_per_gflop;
  const double compute_e = gflops * joules_per_gflop;
  // share = o / (o + c)  =>  o = c * share / (1 - share)
  const double overhead_t = compute_t * time_share / (1.0 - time_share);
  const double overhead_e = compute_e * energy_share / (1.0 - energy_share);
  CostParams p;
  p.t_per_gflop = seconds_per_gflop;
  p.e_per_gflop = joules_per_gflop;
  p.t_init = 0.5 * overhead_t;
  p.t_load = 0.3 * overhead_t;
  p.t_save = 0.2 * overhead_t;
  p.e_init = 0.5 * overhead_e;
  p.e_load = 0.3 * overhead_e;
  p.e_save = 0.2 * overhead_e;
  return p;
}

CostParams calibrate_defaults() {
  return calibrate_for(reference_round_flops(), kReferenceOverheadTimeShare,
                       kReferenceOverheadEnergyShare, kReferenceSecondsPerGflop,
                       kReferenceJoulesPerGflop);
}

}  // namespace etuner::costmodel
