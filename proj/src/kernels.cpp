#include "mgcat/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mgcat::kernels {

namespace {

inline double a_at(const GemmShape& s, const double* a, std::size_t i, std::size_t p) {
  return s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
}

inline double b_at(const GemmShape& s, const double* b, std::size_t p, std::size_t j) {
  return s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
}

// One output row. For the common non-transposed B the loop runs p-outer so
// the inner loop is contiguous; each c[i][j] still sees its k terms in
// ascending p starting from its initial value.
inline void gemm_row(const GemmShape& s, const double* a, const double* b, double* c, std::size_t i,
                     bool accumulate) {
  double* crow = c + i * s.n;
  if (!accumulate) std::fill(crow, crow + s.n, 0.0);
  if (!s.trans_b) {
    for (std::size_t p = 0; p < s.k; ++p) {
      const double av = a_at(s, a, i, p);
      const double* brow = b + p * s.n;
      for (std::size_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = crow[j];
      const double* brow = b + j * s.k;
      for (std::size_t p = 0; p < s.k; ++p) acc += a_at(s, a, i, p) * brow[p];
      crow[j] = acc;
    }
  }
}

}  // namespace

namespace serial {

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = accumulate ? c[i * s.n + j] : 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += a_at(s, a, i, p) * b_at(s, b, p, j);
      c[i * s.n + j] = acc;
    }
  }
}

}  // namespace serial

namespace omp {

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  const auto m = static_cast<long long>(s.m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < m; ++i) gemm_row(s, a, b, c, static_cast<std::size_t>(i), accumulate);
}

}  // namespace omp

void gemm(Exec exec, const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  constexpr std::size_t kParallelWork = 1u << 16;
  if (exec == Exec::parallel && s.m > 1 && s.m * s.n * s.k >= kParallelWork && max_threads() > 1) {
    omp::gemm(s, a, b, c, accumulate);
    return;
  }
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(s, a, b, c, i, accumulate);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

}  // namespace mgcat::kernels
