#include "etuner/drift.hpp"

#include <algorithm>
#include <cmath>

#include "etuner/errors.hpp"

namespace etuner::drift {

double energy_score(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw InputError("energy_score: empty logits");
  if (!(temperature > 0.0)) throw InputError("energy_score: temperature must be positive");
  double mx = logits[0] / temperature;
  for (double f : logits) mx = std::max(mx, f / temperature);
  double sum = 0.0;
  for (double f : logits) sum += std::exp(f / temperature - mx);
  return -temperature * (mx + std::log(sum));
}

DriftDetector::DriftDetector(DetectorConfig config) : config_(config) {
  if (config_.window < 4) throw ConfigError("drift window must be >= 4");
  if (!(config_.z_threshold > 0.0)) throw ConfigError("drift z_threshold must be positive");
  if (!(config_.temperature > 0.0)) throw ConfigError("drift temperature must be positive");
}

double DriftDetector::baseline_std() const {
  return count_ > 1 ? std::sqrt(m2_ / static_cast<double>(count_ - 1)) : 0.0;
}

void DriftDetector::absorb(double score) {
  ++count_;
  const double delta = score - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (score - mean_);
}

bool DriftDetector::observe(double score) {
  window_.push_back(score);
  if (window_.size() > config_.window) {
    absorb(window_.front());
    window_.pop_front();
  }
  if (refractory_ > 0) {
    --refractory_;
    return false;
  }
  if (window_.size() < config_.window || count_ < config_.window) return false;

  double sum = 0.0;
  for (double s : window_) sum += s;
  const double window_mean = sum / static_cast<double>(window_.size());
  // Relative floor so rounding noise on a flat stream cannot fire.
  const double spread =
      std::max(baseline_std(), 1e-12 * std::max(1.0, std::abs(baseline_mean())));
  if (!(window_mean > baseline_mean() + config_.z_threshold * spread)) return false;

  ++fires_;
  count_ = 0;
  mean_ = 0.0;
  m2_ = 0.0;
  for (double s : window_) absorb(s);
  window_.clear();
  refractory_ = config_.window;
  return true;
}

}  // namespace etuner::drift
