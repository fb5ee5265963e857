#include "etuner/cka.hpp"

#include <cmath>
#include <string>

#include "etuner/errors.hpp"
#include "etuner/kernels.hpp"

namespace etuner::cka {
namespace {

Tensor2 centered(const FeatureMatrix& m) {
  Tensor2 c = m;
  std::vector<double> mean(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) kernels::axpy(1.0, m.row(r), mean);
  const double inv = 1.0 / static_cast<double>(m.rows);
  for (auto& v : mean) v *= inv;
  for (std::size_t r = 0; r < c.rows; ++r) kernels::axpy(-1.0, mean, c.row(r));
  return c;
}

bool sample_space_cheaper(std::size_t n, std::size_t fx, std::size_t fy) {
  // n^2 (fx + fy) vs fx fy n + n (fx^2 + fy^2)
  return n * (fx + fy) <= fx * fy + fx * fx + fy * fy;
}

}  // namespace

double cka(const FeatureMatrix& x, const FeatureMatrix& y) {
  if (x.rows != y.rows) {
    throw ShapeError("cka: sample counts differ (" + std::to_string(x.rows) + " vs " +
                     std::to_string(y.rows) + ")");
  }
  if (x.rows < 2 || x.cols == 0 || y.cols == 0) throw ShapeError("cka: need >= 2 samples");
  const Tensor2 xc = centered(x);
  const Tensor2 yc = centered(y);

  double cross = 0.0;
  double xx = 0.0;
  double yy = 0.0;
  if (sample_space_cheaper(x.rows, x.cols, y.cols)) {
    Tensor2 k;
    Tensor2 l;
    kernels::gemm_nt(xc, xc, k);
    kernels::gemm_nt(yc, yc, l);
    cross = kernels::dot(k.data, l.data);
    xx = kernels::sum_squares(k.data);
    yy = kernels::sum_squares(l.data);
  } else {
    Tensor2 a;
    Tensor2 gx;
    Tensor2 gy;
    kernels::gemm_tn(yc, xc, a);
    kernels::gemm_tn(xc, xc, gx);
    kernels::gemm_tn(yc, yc, gy);
    cross = kernels::sum_squares(a.data);
    xx = kernels::sum_squares(gx.data);
    yy = kernels::sum_squares(gy.data);
  }
  if (!(xx > 0.0) || !(yy > 0.0)) throw DegenerateInputError("cka: feature map is constant");
  const double denom = std::sqrt(xx) * std::sqrt(yy);
  const double v = cross / denom;
  if (!std::isfinite(v)) throw DegenerateInputError("cka: non-finite result");
  return v;
}

std::uint64_t cka_cost(std::size_t n, std::size_t fx, std::size_t fy) {
  const std::uint64_t centering = 2ull * n * (fx + fy);
  if (sample_space_cheaper(n, fx, fy)) {
    return centering + 2ull * n * n * (fx + fy) + 6ull * n * n;
  }
  return centering + 2ull * n * (fx * fy + fx * fx + fy * fy) + 2ull * (fx * fy + fx * fx + fy * fy);
}

double variation_rate(CkaTrack& track, double new_cka, std::uint64_t iteration) {
  if (!(new_cka >= 0.0 && new_cka <= 1.0 + 1e-9)) {
    throw InputError("variation_rate: cka value outside [0, 1]");
  }
  if (!track.history.empty() && iteration <= track.history.back().first) {
    throw InputError("variation_rate: iteration " + std::to_string(iteration) +
                     " does not advance past " + std::to_string(track.history.back().first));
  }
  double rate = kNoPrevious;
  if (!track.history.empty()) rate = relative_change(track.history.back().second, new_cka);
  track.history.emplace_back(iteration, new_cka);
  if (rate != kNoPrevious) track.last_variation = rate;
  return rate;
}

}  // namespace etuner::cka
