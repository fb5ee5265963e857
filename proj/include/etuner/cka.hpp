#pragma once

// Linear Centered Kernel Alignment between two feature maps of the same probe
// samples, and per-layer tracking of how much that value moves over time.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "etuner/tensor.hpp"

namespace etuner::cka {

// ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F * ||Yc^T Yc||_F) with column-centred Xc, Yc.
// Evaluated through whichever of the sample-space (n x n) or feature-space
// Gram matrices is smaller; both are the same quantity.
double cka(const FeatureMatrix& x, const FeatureMatrix& y);

// Dominant FLOPs spent by cka() for matrices of these shapes.
std::uint64_t cka_cost(std::size_t samples, std::size_t x_features, std::size_t y_features);

inline constexpr double kVariationEpsilon = 1e-6;
inline constexpr double kNoPrevious = std::numeric_limits<double>::infinity();

struct CkaTrack {
  std::size_t layer_id = 0;
  std::vector<std::pair<std::uint64_t, double>> history;  // (iteration, cka)
  std::optional<double> last_variation;

  void reset() {
    history.clear();
    last_variation.reset();
  }
};

// Appends (iteration, new_cka) and returns |new - prev| / max(prev, eps), or
// kNoPrevious when this is the first measurement.
double variation_rate(CkaTrack& track, double new_cka, std::uint64_t iteration);

// Relative change used for both freezing and unfreezing decisions.
inline double relative_change(double previous, double current) {
  const double denom = previous > kVariationEpsilon ? previous : kVariationEpsilon;
  const double diff = current > previous ? current - previous : previous - current;
  return diff / denom;
}

}  // namespace etuner::cka
