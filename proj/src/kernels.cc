#include "rilm/kernels.hpp"

#include <vector>

namespace rilm::kernels {

namespace {

// Rows [r0, r1) of C += A B. Each C element sums over p in order, so the
// vector widths of the clones do not change results.
__attribute__((target_clones("avx2", "default"))) void rows_nn(
    const double* __restrict a, const double* __restrict b, double* __restrict c,
    std::size_t r0, std::size_t r1, std::size_t k, std::size_t n) {
  for (std::size_t i = r0; i < r1; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// Rows [r0, r1) of C = A^T B, summed over the m rows of A and B in order.
__attribute__((target_clones("avx2", "default"))) void rows_tn(
    const double* __restrict a, const double* __restrict b, double* __restrict c,
    std::size_t r0, std::size_t r1, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t r = r0; r < r1; ++r) {
    double* cr = c + r * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + r];
      if (av == 0.0) continue;
      const double* bi = b + i * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * bi[j];
    }
  }
}

std::vector<double> transpose(const double* b, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = b[i * cols + j];
  return t;
}

}  // namespace

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  rows_nn(a, b, c, 0, m, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const auto bt = transpose(b, n, k);
  rows_nn(a, bt.data(), c, 0, m, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  rows_tn(a, b, c, 0, k, m, k, n);
}

}  // namespace serial

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (long i = 0; i < rows; ++i)
    rows_nn(a, b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const auto bt = transpose(b, n, k);
  gemm_nn(a, bt.data(), c, m, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const long rows = static_cast<long>(k);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (long r = 0; r < rows; ++r)
    rows_tn(a, b, c, static_cast<std::size_t>(r), static_cast<std::size_t>(r) + 1, m, k, n);
}

}  // namespace rilm::kernels
