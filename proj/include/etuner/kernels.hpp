#pragma once

// Inner-loop arithmetic used by the network and by CKA. Every primitive has a
// scalar reference implementation; SIMD variants (AVX2+FMA on x86-64, NEON on
// AArch64) are selected at startup from CPU features and may be overridden for
// equivalence testing. Variants differ only in summation order.

#include <cstddef>
#include <span>
#include <string_view>

#include "etuner/tensor.hpp"

namespace etuner::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i x[i]^2
  double (*sum_squares)(const double* x, std::size_t n);
};

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa detect_isa();

// Process-wide selection. Throws StateError when the ISA is unavailable.
Isa active_isa();
void set_isa(Isa isa);

const KernelTable& table(Isa isa);
const KernelTable& active();

// RAII override, restores the previous ISA on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double sum_squares(std::span<const double> x);

// c = a * b         (a: m x k, b: k x n)
void gemm_nn(const Tensor2& a, const Tensor2& b, Tensor2& c, bool accumulate = false);
// c = a^T * b       (a: m x k, b: m x n, c: k x n)
void gemm_tn(const Tensor2& a, const Tensor2& b, Tensor2& c, bool accumulate = false);
// c = a * b^T       (a: m x k, b: n x k, c: m x n)
void gemm_nt(const Tensor2& a, const Tensor2& b, Tensor2& c, bool accumulate = false);

namespace detail {
extern const KernelTable kScalarTable;
#if defined(ETUNER_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
#if defined(ETUNER_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif
}  // namespace detail

}  // namespace etuner::kernels
