#pragma once

#include <cstddef>
#include <span>

// Dense row-major kernels. The default entry points parallelize over
// independent output rows with OpenMP; the `reference` namespace holds the
// serial versions the tests and benchmarks compare against. Both compute
// every output element with the same summation order, so results agree
// bit-for-bit regardless of thread count.
namespace tsarank::kernels {

enum class Trans { No, Yes };

/// C[m x n] (+)= op(A) * op(B), where op(A) is m x k and op(B) is k x n.
/// A is stored as m x k (Trans::No) or k x m (Trans::Yes); likewise B.
void gemm(std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, Trans ta,
          std::span<const double> b, Trans tb,
          std::span<double> c, bool accumulate);

/// Row-wise log-softmax with max subtraction: out[r, :] = x[r, :] - logsumexp(x[r, :]).
void log_softmax_rows(std::size_t rows, std::size_t cols,
                      std::span<const double> x, std::span<double> out);

/// Number of threads the parallel kernels would use.
int max_threads();

namespace reference {

void gemm(std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, Trans ta,
          std::span<const double> b, Trans tb,
          std::span<double> c, bool accumulate);

void log_softmax_rows(std::size_t rows, std::size_t cols,
                      std::span<const double> x, std::span<double> out);

}  // namespace reference

}  // namespace tsarank::kernels
