#include "etuner/lazytune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "etuner/errors.hpp"

namespace etuner::lazytune {
namespace {

// Solves the normal equations restricted to `support`; Gaussian elimination
// with partial pivoting. Entries outside the support are zero.
std::vector<double> restricted_least_squares(std::span<const double> a, std::size_t cols,
                                             std::span<const double> b,
                                             const std::vector<bool>& support) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < cols; ++j) {
    if (support[j]) idx.push_back(j);
  }
  const std::size_t k = idx.size();
  const std::size_t rows = b.size();
  std::vector<double> m(k * (k + 1), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t p = 0; p < k; ++p) {
      const double ap = a[r * cols + idx[p]];
      for (std::size_t q = 0; q < k; ++q) m[p * (k + 1) + q] += ap * a[r * cols + idx[q]];
      m[p * (k + 1) + k] += ap * b[r];
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r) {
      if (std::abs(m[r * (k + 1) + c]) > std::abs(m[piv * (k + 1) + c])) piv = r;
    }
    if (piv != c) {
      for (std::size_t q = 0; q <= k; ++q) std::swap(m[c * (k + 1) + q], m[piv * (k + 1) + q]);
    }
    const double d = m[c * (k + 1) + c];
    if (d == 0.0) continue;
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const double f = m[r * (k + 1) + c] / d;
      if (f == 0.0) continue;
      for (std::size_t q = c; q <= k; ++q) m[r * (k + 1) + q] -= f * m[c * (k + 1) + q];
    }
  }
  std::vector<double> x(cols, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double d = m[p * (k + 1) + p];
    x[idx[p]] = d == 0.0 ? 0.0 : m[p * (k + 1) + k] / d;
  }
  return x;
}

std::vector<double> gradient(std::span<const double> a, std::size_t cols,
                             std::span<const double> b, const std::vector<double>& x) {
  std::vector<double> w(cols, 0.0);
  for (std::size_t r = 0; r < b.size(); ++r) {
    double res = b[r];
    for (std::size_t j = 0; j < cols; ++j) res -= a[r * cols + j] * x[j];
    for (std::size_t j = 0; j < cols; ++j) w[j] += a[r * cols + j] * res;
  }
  return w;
}

}  // namespace

std::vector<double> nnls(std::span<const double> a, std::size_t cols, std::span<const double> b) {
  if (cols == 0 || a.size() != cols * b.size()) throw ShapeError("nnls: matrix shape mismatch");
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  const double tol = 1e-12 * std::max(1.0, scale) * static_cast<double>(b.size() * cols);

  std::vector<double> x(cols, 0.0);
  std::vector<bool> passive(cols, false);
  const std::size_t max_outer = 3 * cols + 10;
  for (std::size_t outer = 0; outer < max_outer; ++outer) {
    const auto w = gradient(a, cols, b, x);
    std::size_t best = cols;
    double best_w = tol;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!passive[j] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    }
    if (best == cols) break;
    passive[best] = true;
    for (std::size_t inner = 0; inner < 3 * cols + 10; ++inner) {
      auto s = restricted_least_squares(a, cols, b, passive);
      bool feasible = true;
      for (std::size_t j = 0; j < cols; ++j) {
        if (passive[j] && s[j] <= 0.0) feasible = false;
      }
      if (feasible) {
        x = std::move(s);
        break;
      }
      double alpha = 1.0;
      for (std::size_t j = 0; j < cols; ++j) {
        if (passive[j] && s[j] <= 0.0) alpha = std::min(alpha, x[j] / (x[j] - s[j]));
      }
      for (std::size_t j = 0; j < cols; ++j) x[j] += alpha * (s[j] - x[j]);
      for (std::size_t j = 0; j < cols; ++j) {
        if (passive[j] && x[j] <= tol) {
          passive[j] = false;
          x[j] = 0.0;
        }
      }
    }
  }
  return x;
}

std::optional<CurveFit> fit_curve(std::span<const std::pair<std::uint64_t, double>> points,
                                  const FitOptions& opts) {
  if (points.size() < 2) return std::nullopt;
  std::vector<double> err;
  std::vector<double> design;
  double min_err = std::numeric_limits<double>::infinity();
  for (const auto& [t, acc] : points) {
    const double e = std::max(1.0 - acc, opts.error_floor);
    err.push_back(e);
    min_err = std::min(min_err, e);
    design.push_back(static_cast<double>(t));
    design.push_back(1.0);
  }

  std::optional<CurveFit> best;
  std::vector<double> z(err.size());
  for (std::size_t k = 0;; ++k) {
    const double beta2 = static_cast<double>(k) * opts.beta2_step;
    if (beta2 >= min_err) break;
    for (std::size_t i = 0; i < err.size(); ++i) z[i] = 1.0 / (err[i] - beta2);
    const auto coef = nnls(design, 2, z);
    CurveFit fit{coef[0], coef[1], beta2, 0.0};
    if (!(fit.beta0 * static_cast<double>(points.front().first) + fit.beta1 > 0.0)) continue;
    double rss = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) {
      const double d = err[i] - fit.error_at(static_cast<double>(points[i].first));
      rss += d * d;
    }
    if (!std::isfinite(rss)) continue;
    fit.fit_residual = rss;
    if (!best || rss < best->fit_residual) best = fit;
  }
  return best;
}

bool should_trigger(const TunerState& state) {
  return static_cast<double>(state.batches_ava) >= std::ceil(state.batches_needed);
}

void record_round(TunerState& state, std::uint64_t iterations_this_round, double val_accuracy) {
  if (iterations_this_round == 0) throw InputError("record_round: round had no iterations");
  if (!(val_accuracy >= 0.0 && val_accuracy <= 1.0)) {
    throw InputError("record_round: accuracy outside [0, 1]");
  }
  const std::uint64_t base = state.history.empty() ? 0 : state.history.back().first;
  state.history.emplace_back(base + iterations_this_round, val_accuracy);
  if (state.history.size() >= kMinPointsForFit) state.curve = fit_curve(state.history);
}

Estimate estimate_batches_needed(const TunerState& state, double last_gain,
                                 std::uint64_t iters_per_batch) {
  if (!state.curve || state.history.empty()) return {state.batches_needed, false};
  const double cap = static_cast<double>(state.cap);
  if (last_gain <= 0.0) return {1.0, true};
  const auto& c = *state.curve;
  const double now = static_cast<double>(state.history.back().first);
  const double acc_now = c.accuracy_at(now);
  auto reaches = [&](std::size_t n) {
    const double t = now + static_cast<double>(n * iters_per_batch);
    return c.accuracy_at(t) - acc_now >= last_gain;
  };
  // Predicted accuracy is non-decreasing in t, so the predicate is monotone.
  if (!reaches(state.cap)) return {cap, true};
  std::size_t lo = 1;
  std::size_t hi = state.cap;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (reaches(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return {std::clamp(static_cast<double>(lo), 1.0, cap), true};
}

void after_round(TunerState& state, std::uint64_t iterations_this_round, double val_accuracy,
                 std::uint64_t iters_per_batch) {
  record_round(state, iterations_this_round, val_accuracy);
  if (!state.curve) return;
  const double gain = fitted_gain(*state.curve, state.history.back().first, iterations_this_round);
  if (!(gain > kFlatGain)) {
    // Flat curve: the model has stopped improving on validation data, so
    // rounds are merged further by doubling the size of the one just finished.
    const double n = static_cast<double>(iterations_this_round) / static_cast<double>(iters_per_batch);
    state.batches_needed = std::clamp(2.0 * std::ceil(n), 1.0, static_cast<double>(state.cap));
    return;
  }
  state.batches_needed = estimate_batches_needed(state, gain, iters_per_batch).batches_needed;
}

double fitted_gain(const CurveFit& curve, std::uint64_t now, std::uint64_t iterations) {
  const double t = static_cast<double>(now);
  const double back = static_cast<double>(std::min(now, iterations));
  return curve.accuracy_at(t) - curve.accuracy_at(t - back);
}

void on_inference(TunerState& state) {
  double d = state.batches_needed;
  if (d > std::numbers::e) {
    d *= 1.0 - 1.0 / std::log(d);
  } else {
    d = 1.0;
  }
  state.batches_needed = std::clamp(d, 1.0, static_cast<double>(state.cap));
}

void on_scenario_change(TunerState& state) {
  state.batches_needed = 1.0;
  state.history.clear();
  state.curve.reset();
}

}  // namespace etuner::lazytune
