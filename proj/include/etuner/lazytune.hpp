#pragma once

// Inter-round scheduling: a real-valued trigger threshold on accumulated
// training batches, re-estimated from a fitted validation-accuracy curve after
// every round, shrunk logarithmically on each served inference request, and
// reset when the deployment scenario changes.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace etuner::lazytune {

// Validation error model e(t) = 1 / (beta0 * t + beta1) + beta2, all betas >= 0.
struct CurveFit {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double fit_residual = 0.0;

  double error_at(double t) const { return 1.0 / (beta0 * t + beta1) + beta2; }
  double accuracy_at(double t) const { return 1.0 - error_at(t); }
  bool operator==(const CurveFit&) const = default;
};

// Lawson-Hanson non-negative least squares: argmin ||A x - b|| s.t. x >= 0.
// `a` is row-major with `cols` columns.
std::vector<double> nnls(std::span<const double> a, std::size_t cols, std::span<const double> b);

struct FitOptions {
  double beta2_step = 0.01;
  double error_floor = 1e-3;  // keeps 1/(e - beta2) finite for perfect accuracy
};

// Fits the curve to (iteration, accuracy) points; needs >= 2 points with
// distinct iterations. Returns nullopt when no grid point admits a fit.
std::optional<CurveFit> fit_curve(std::span<const std::pair<std::uint64_t, double>> points,
                                  const FitOptions& opts = {});

struct TunerState {
  double batches_needed = 1.0;
  std::size_t batches_ava = 0;
  std::vector<std::pair<std::uint64_t, double>> history;  // (cumulative iters, val acc)
  std::optional<CurveFit> curve;
  std::size_t cap = 64;

  bool operator==(const TunerState&) const = default;
};

inline constexpr std::size_t kMinPointsForFit = 3;

bool should_trigger(const TunerState& state);

// Appends a point at cumulative iterations and refits once enough points exist.
void record_round(TunerState& state, std::uint64_t iterations_this_round, double val_accuracy);

struct Estimate {
  double batches_needed;
  bool from_curve;  // false: no curve, value is the unchanged current threshold
};

// Smallest n in [1, cap] whose predicted gain over n more batches reaches
// `last_gain`; cap when unreachable.
Estimate estimate_batches_needed(const TunerState& state, double last_gain,
                                 std::uint64_t iters_per_batch);

// Accuracy the fitted curve attributes to the last `iterations` iterations
// ending at cumulative iteration `now`.
double fitted_gain(const CurveFit& curve, std::uint64_t now, std::uint64_t iterations);

// Below this the fitted curve is treated as flat.
inline constexpr double kFlatGain = 1e-9;

// record_round, then re-estimates batches_needed for a gain equal to the one
// the fitted curve credits to the round just finished. Observed validation
// accuracy is too coarse for round-to-round differences (a converged model
// shows a gain of exactly zero), so the curve smooths it. A flat curve doubles
// the size of the round just finished. Without a curve nothing changes.
void after_round(TunerState& state, std::uint64_t iterations_this_round, double val_accuracy,
                 std::uint64_t iters_per_batch);

// d <- d * (1 - 1/ln d) for d > e, else 1.
void on_inference(TunerState& state);

void on_scenario_change(TunerState& state);

}  // namespace etuner::lazytune
