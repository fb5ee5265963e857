#pragma once

// Intra-round layer freezing: a feature layer whose CKA against the reference
// snapshot has stopped moving is frozen; after a scenario change, frozen layers
// whose CKA shifted on the new scenario's probe are thawed again.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "etuner/cka.hpp"
#include "etuner/nn.hpp"

namespace etuner::simfreeze {

struct FreezeConfig {
  std::uint64_t freeze_interval = 200;
  double stability_threshold = 0.01;
};

struct FreezeStats {
  std::uint64_t cka_evaluations = 0;
  std::uint64_t flops = 0;  // reference/current probe passes + CKA arithmetic
};

class FreezeController {
 public:
  // `reference` is the network at the start of continual learning and is
  // never replaced.
  FreezeController(nn::Network reference, FreezeConfig config);

  const FreezeConfig& config() const { return config_; }
  const nn::Network& reference() const { return reference_; }
  const std::vector<cka::CkaTrack>& tracks() const { return tracks_; }
  const std::map<std::size_t, double>& prev_scenario_cka() const { return prev_scenario_cka_; }
  bool has_probe() const { return probe_.has_value(); }
  const Tensor2& probe() const;
  void set_probe(Tensor2 probe);

  bool due(std::uint64_t iteration) const {
    return iteration > 0 && iteration % config_.freeze_interval == 0;
  }

  // Measures every active feature layer and freezes the stable ones.
  // Returns the newly frozen layer ids; throws StateError without a probe.
  std::vector<std::size_t> maybe_freeze(nn::Network& net, std::uint64_t iteration,
                                        FreezeStats* stats = nullptr);

  // Replaces the probe and thaws frozen layers whose CKA on it moved by at
  // least the threshold relative to the last stored value.
  std::vector<std::size_t> on_scenario_change(nn::Network& net, Tensor2 new_probe,
                                              FreezeStats* stats = nullptr);

  // Test hook: seeds a layer's history as if it had been measured.
  cka::CkaTrack& track(std::size_t layer) { return tracks_.at(layer); }
  void set_prev_scenario_cka(std::size_t layer, double value) { prev_scenario_cka_[layer] = value; }

 private:
  // CKA for each listed layer on the current probe; layers whose features are
  // degenerate are omitted.
  std::map<std::size_t, double> measure(const nn::Network& net,
                                        const std::vector<std::size_t>& layers,
                                        FreezeStats* stats) const;

  nn::Network reference_;
  FreezeConfig config_;
  std::vector<cka::CkaTrack> tracks_;
  std::optional<Tensor2> probe_;
  std::map<std::size_t, double> prev_scenario_cka_;
};

// Applies a precomputed CKA value to one layer's freeze decision. Shared by
// the controller and by unit tests that script CKA sequences.
bool should_freeze(cka::CkaTrack& track, double cka_value, std::uint64_t iteration,
                   double threshold);
bool should_unfreeze(double prev_scenario_cka, double new_cka, double threshold);

}  // namespace etuner::simfreeze
