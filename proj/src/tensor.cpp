#include "etuner/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "etuner/errors.hpp"

namespace etuner {

Tensor2::Tensor2(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != rows * cols) {
    throw ShapeError("Tensor2: data length " + std::to_string(data.size()) +
                     " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

bool Tensor2::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Tensor2 Tensor2::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > rows) throw ShapeError("Tensor2::slice_rows out of range");
  Tensor2 out(count, cols);
  std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(first * cols), count * cols,
              out.data.begin());
  return out;
}

}  // namespace etuner
