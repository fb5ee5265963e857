#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace etuner {

// Row-major dense matrix of doubles.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Tensor2(std::size_t r, std::size_t c, std::vector<double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool empty() const { return rows == 0 || cols == 0; }
  bool all_finite() const;

  // Rows [first, first + count) as a new matrix.
  Tensor2 slice_rows(std::size_t first, std::size_t count) const;

  bool operator==(const Tensor2&) const = default;
};

// Feature maps handed to CKA share the same layout.
using FeatureMatrix = Tensor2;

}  // namespace etuner
