#pragma once

// Scenario-change detection from energy scores of served inference inputs.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>

namespace etuner::drift {

// -T * log(sum_i exp(f_i / T)), evaluated with max subtraction.
double energy_score(std::span<const double> logits, double temperature);

enum class Mode { energy, oracle };

struct DetectorConfig {
  double temperature = 1.0;
  std::size_t window = 16;
  double z_threshold = 4.0;
  Mode mode = Mode::energy;
};

// Fires when the mean of the last `window` scores exceeds
// baseline_mean + z_threshold * baseline_std. The baseline absorbs scores as
// they leave the window; after a firing it restarts from the post-change
// window and the detector stays silent for `window` observations.
class DriftDetector {
 public:
  explicit DriftDetector(DetectorConfig config = {});

  const DetectorConfig& config() const { return config_; }

  bool observe(double score);

  double baseline_mean() const { return count_ ? mean_ : 0.0; }
  double baseline_std() const;
  std::size_t baseline_count() const { return count_; }
  std::size_t refractory_remaining() const { return refractory_; }
  std::uint64_t fire_count() const { return fires_; }

 private:
  void absorb(double score);

  DetectorConfig config_;
  std::deque<double> window_;
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  std::size_t refractory_ = 0;
  std::uint64_t fires_ = 0;
};

}  // namespace etuner::drift
