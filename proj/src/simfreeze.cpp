#include "etuner/simfreeze.hpp"

#include <algorithm>

#include "etuner/errors.hpp"

namespace etuner::simfreeze {

bool should_freeze(cka::CkaTrack& track, double cka_value, std::uint64_t iteration,
                   double threshold) {
  return cka::variation_rate(track, cka_value, iteration) <= threshold;
}

bool should_unfreeze(double prev_scenario_cka, double new_cka, double threshold) {
  return cka::relative_change(prev_scenario_cka, new_cka) >= threshold;
}

FreezeController::FreezeController(nn::Network reference, FreezeConfig config)
    : reference_(std::move(reference)), config_(config) {
  if (config_.freeze_interval < 1) throw ConfigError("freeze_interval must be >= 1");
  if (!(config_.stability_threshold > 0.0 && config_.stability_threshold < 1.0)) {
    throw ConfigError("stability_threshold must lie in (0, 1)");
  }
  tracks_.resize(reference_.layers.size());
  for (std::size_t i = 0; i < tracks_.size(); ++i) tracks_[i].layer_id = i;
}

const Tensor2& FreezeController::probe() const {
  if (!probe_) throw StateError("no CKA probe batch yet");
  return *probe_;
}

void FreezeController::set_probe(Tensor2 probe) {
  if (probe.rows < 2) throw InputError("CKA probe needs at least 2 samples");
  probe_ = std::move(probe);
}

std::map<std::size_t, double> FreezeController::measure(const nn::Network& net,
                                                         const std::vector<std::size_t>& layers,
                                                         FreezeStats* stats) const {
  std::map<std::size_t, double> out;
  if (layers.empty()) return out;
  const std::size_t depth = *std::max_element(layers.begin(), layers.end()) + 1;
  const auto current = nn::capture_features(net, *probe_, depth);
  const auto reference = nn::capture_features(reference_, *probe_, depth);
  if (stats) stats->flops += 2 * nn::forward_cost(net, probe_->rows, depth);
  for (std::size_t l : layers) {
    if (stats) {
      ++stats->cka_evaluations;
      stats->flops += cka::cka_cost(probe_->rows, current[l].cols, reference[l].cols);
    }
    try {
      out[l] = cka::cka(current[l], reference[l]);
    } catch (const DegenerateInputError&) {
      // Dead layer on this probe; no measurement.
    }
  }
  return out;
}

std::vector<std::size_t> FreezeController::maybe_freeze(nn::Network& net, std::uint64_t iteration,
                                                        FreezeStats* stats) {
  if (!probe_) throw StateError("maybe_freeze called before any probe batch arrived");
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].frozen) active.push_back(i);
  }
  std::vector<std::size_t> frozen_now;
  for (const auto& [layer, value] : measure(net, active, stats)) {
    prev_scenario_cka_[layer] = value;
    if (should_freeze(tracks_[layer], std::min(value, 1.0), iteration,
                      config_.stability_threshold)) {
      net.layers[layer].frozen = true;
      frozen_now.push_back(layer);
    }
  }
  return frozen_now;
}

std::vector<std::size_t> FreezeController::on_scenario_change(nn::Network& net, Tensor2 new_probe,
                                                              FreezeStats* stats) {
  if (new_probe.rows == 0) throw InputError("scenario change needs a non-empty probe batch");
  set_probe(std::move(new_probe));
  std::vector<std::size_t> frozen;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].frozen) {
      frozen.push_back(i);
    } else {
      // Values measured on the old probe are not comparable with new ones.
      tracks_[i].reset();
    }
  }
  std::vector<std::size_t> thawed;
  for (const auto& [layer, value] : measure(net, frozen, stats)) {
    auto prev = prev_scenario_cka_.find(layer);
    const bool unfreeze =
        prev == prev_scenario_cka_.end() ||
        should_unfreeze(prev->second, value, config_.stability_threshold);
    prev_scenario_cka_[layer] = value;
    if (unfreeze) {
      net.layers[layer].frozen = false;
      tracks_[layer].reset();
      thawed.push_back(layer);
    }
  }
  return thawed;
}

}  // namespace etuner::simfreeze
