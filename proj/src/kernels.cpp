#include "etuner/kernels.hpp"

#include <atomic>

#include "etuner/errors.hpp"

namespace etuner::kernels {
namespace {

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{detect_isa()};
  return isa;
}

void check_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(ETUNER_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(ETUNER_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() {
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  if (isa_supported(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

Isa active_isa() { return selected().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw StateError("kernel ISA '" + std::string(isa_name(isa)) + "' not supported on this CPU");
  }
  selected().store(isa, std::memory_order_relaxed);
}

const KernelTable& table(Isa isa) {
  switch (isa) {
#if defined(ETUNER_HAVE_AVX2)
    case Isa::avx2: return detail::kAvx2Table;
#endif
#if defined(ETUNER_HAVE_NEON)
    case Isa::neon: return detail::kNeonTable;
#endif
    default: return detail::kScalarTable;
  }
}

const KernelTable& active() { return table(active_isa()); }

double dot(std::span<const double> a, std::span<const double> b) {
  check_shape(a.size() == b.size(), "dot: length mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_shape(x.size() == y.size(), "axpy: length mismatch");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

double sum_squares(std::span<const double> x) { return active().sum_squares(x.data(), x.size()); }

void gemm_nn(const Tensor2& a, const Tensor2& b, Tensor2& c, bool accumulate) {
  check_shape(a.cols == b.rows, "gemm_nn: inner dimension mismatch");
  if (!accumulate) c = Tensor2(a.rows, b.cols);
  check_shape(c.rows == a.rows && c.cols == b.cols, "gemm_nn: output shape mismatch");
  const auto& k = active();
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* out = c.data.data() + i * c.cols;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double s = a(i, p);
      if (s != 0.0) k.axpy(s, b.data.data() + p * b.cols, out, b.cols);
    }
  }
}

void gemm_tn(const Tensor2& a, const Tensor2& b, Tensor2& c, bool accumulate) {
  check_shape(a.rows == b.rows, "gemm_tn: inner dimension mismatch");
  if (!accumulate) c = Tensor2(a.cols, b.cols);
  check_shape(c.rows == a.cols && c.cols == b.cols, "gemm_tn: output shape mismatch");
  const auto& k = active();
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* brow = b.data.data() + i * b.cols;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double s = a(i, p);
      if (s != 0.0) k.axpy(s, brow, c.data.data() + p * c.cols, b.cols);
    }
  }
}

void gemm_nt(const Tensor2& a, const Tensor2& b, Tensor2& c, bool accumulate) {
  check_shape(a.cols == b.cols, "gemm_nt: inner dimension mismatch");
  if (!accumulate) c = Tensor2(a.rows, b.rows);
  check_shape(c.rows == a.rows && c.cols == b.rows, "gemm_nt: output shape mismatch");
  const auto& k = active();
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      c(i, j) += k.dot(arow, b.data.data() + j * b.cols, a.cols);
    }
  }
}

}  // namespace etuner::kernels
