#pragma once

#include <cstddef>

namespace mgcat {

/// Execution policy for the data-parallel kernels. Both policies produce
/// bitwise-identical results.
enum class Exec { serial, parallel };

namespace kernels {

/// Shape of C = op(A) * op(B), row-major. op(A) is m x k, op(B) is k x n.
struct GemmShape {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool trans_a = false;
  bool trans_b = false;
};

namespace serial {
/// Reference: one dot product per output element, accumulated in ascending k.
void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate);
}  // namespace serial

namespace omp {
/// Row-parallel; per element the accumulation order matches serial::gemm.
void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate);
}  // namespace omp

/// Dispatches to omp::gemm when the product is large enough to amortize a
/// parallel region, serial::gemm otherwise.
void gemm(Exec exec, const GemmShape& s, const double* a, const double* b, double* c, bool accumulate);

int max_threads();
void set_threads(int n);

}  // namespace kernels
}  // namespace mgcat
