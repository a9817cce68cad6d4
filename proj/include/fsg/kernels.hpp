#pragma once

// Dense f64 compute kernels with a portable scalar reference path and an
// AVX2/FMA path selected at runtime. Every op in the autodiff engine that
// touches a large contiguous buffer routes through here.

#include <cstddef>
#include <string_view>

namespace fsg::kernels {

enum class Isa { scalar, avx2 };

// Row-major C = alpha * op(A) * op(B) + beta * C, with op(X) = X or X^T.
// op(A) is m x k, op(B) is k x n. When beta == 0, C is overwritten without
// being read.
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                        std::size_t k, double alpha, const double* a, std::size_t lda,
                        const double* b, std::size_t ldb, double beta, double* c,
                        std::size_t ldc);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  // y += a * x
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // out = x + y
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  // out = x * y
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  // out += x * y
  void (*mul_acc)(std::size_t n, const double* x, const double* y, double* out);
  double (*dot)(std::size_t n, const double* x, const double* y);
  double (*sum)(std::size_t n, const double* x);
};

const KernelTable& scalar_table();
// Null when the binary was built without the AVX2 translation unit.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// Table in effect for this process. Chosen once on first use: AVX2 when the
// CPU supports it, unless FSG_KERNELS=scalar is set in the environment.
const KernelTable& active();
std::string_view isa_name(Isa isa);

// Pins the active table (tests and benchmarking). Throws if the requested
// ISA is unavailable on this CPU.
void select(Isa isa);

inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 double alpha, const double* a, std::size_t lda, const double* b,
                 std::size_t ldb, double beta, double* c, std::size_t ldc) {
  active().gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void axpy(std::size_t n, double a, const double* x, double* y) { active().axpy(n, a, x, y); }
inline void add(std::size_t n, const double* x, const double* y, double* out) {
  active().add(n, x, y, out);
}
inline void mul(std::size_t n, const double* x, const double* y, double* out) {
  active().mul(n, x, y, out);
}
inline void mul_acc(std::size_t n, const double* x, const double* y, double* out) {
  active().mul_acc(n, x, y, out);
}
inline double dot(std::size_t n, const double* x, const double* y) { return active().dot(n, x, y); }
inline double sum(std::size_t n, const double* x) { return active().sum(n, x); }

}  // namespace fsg::kernels
