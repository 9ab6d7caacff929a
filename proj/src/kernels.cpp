#include "tsarank/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <omp.h>

namespace tsarank::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

inline double load(std::span<const double> x, Trans t, std::size_t rows, std::size_t cols,
                   std::size_t i, std::size_t j) {
  // Logical element (i, j) of an op(X) that is rows x cols.
  return t == Trans::No ? x[i * cols + j] : x[j * rows + i];
}

inline void gemm_row(std::size_t i, std::size_t m, std::size_t n, std::size_t k,
                     std::span<const double> a, Trans ta,
                     std::span<const double> b, Trans tb,
                     std::span<double> c, bool accumulate) {
  double* crow = c.data() + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      sum += load(a, ta, m, k, i, p) * load(b, tb, k, n, p, j);
    }
    crow[j] = accumulate ? crow[j] + sum : sum;
  }
}

// Fast path for the common no-transpose-B case: walk B row by row so the
// inner loop is contiguous. The per-element summation order over p is the
// same as gemm_row, so the two paths agree exactly.
inline void gemm_row_nn(std::size_t i, std::size_t n, std::size_t k, const double* arow,
                        std::size_t a_stride, std::span<const double> b, double* acc) {
  std::fill(acc, acc + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p * a_stride];
    const double* brow = b.data() + p * n;
    for (std::size_t j = 0; j < n; ++j) {
      acc[j] += av * brow[j];
    }
  }
  (void)i;
}

inline void log_softmax_row(std::size_t cols, const double* x, double* out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[j] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < cols; ++j) out[j] = x[j] - lse;
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void gemm(std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, Trans ta,
          std::span<const double> b, Trans tb,
          std::span<double> c, bool accumulate) {
  const bool parallel = m * n * k >= kParallelWork && m > 1;
  if (tb == Trans::No) {
    const std::size_t a_stride = ta == Trans::No ? 1 : m;
#pragma omp parallel if (parallel)
    {
      std::vector<double> acc(n);
#pragma omp for schedule(static)
      for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* arow = ta == Trans::No ? a.data() + i * k : a.data() + i;
        gemm_row_nn(i, n, k, arow, a_stride, b, acc.data());
        double* crow = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = accumulate ? crow[j] + acc[j] : acc[j];
      }
    }
    return;
  }
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(m); ++ii) {
    gemm_row(static_cast<std::size_t>(ii), m, n, k, a, ta, b, tb, c, accumulate);
  }
}

void log_softmax_rows(std::size_t rows, std::size_t cols,
                      std::span<const double> x, std::span<double> out) {
  const bool parallel = rows * cols >= kParallelWork && rows > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const auto off = static_cast<std::size_t>(r) * cols;
    log_softmax_row(cols, x.data() + off, out.data() + off);
  }
}

namespace reference {

void gemm(std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, Trans ta,
          std::span<const double> b, Trans tb,
          std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    gemm_row(i, m, n, k, a, ta, b, tb, c, accumulate);
  }
}

void log_softmax_rows(std::size_t rows, std::size_t cols,
                      std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    log_softmax_row(cols, x.data() + r * cols, out.data() + r * cols);
  }
}

}  // namespace reference

}  // namespace tsarank::kernels
