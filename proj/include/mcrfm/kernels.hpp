#pragma once

// Dense kernels behind the differentiable ops.
//
// `serial` is the reference implementation. `parallel` splits work over
// output rows with OpenMP; each output element is still reduced in the same
// ascending-k order, so both produce bit-identical results. The unqualified
// entry points dispatch on the configured thread count and problem size.

#include <functional>

#include "mcrfm/matrix.hpp"

namespace mcrfm::kernels {

/// Threads used by the dispatching kernels (1 disables OpenMP regions).
void set_num_threads(int n);
int num_threads();
/// Reads MCRFM_THREADS if set; returns the value applied.
int configure_threads_from_env();

using RowFn = std::function<void(std::size_t row)>;

namespace serial {
/// C = A * B^T, A: n x k, B: m x k.
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
/// C = A * B, A: n x k, B: k x m.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
/// C = A^T * B, A: k x n, B: k x m.
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void for_rows(std::size_t n, const RowFn& fn);
}  // namespace serial

namespace parallel {
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void for_rows(std::size_t n, const RowFn& fn);
}  // namespace parallel

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
/// Runs fn(r) for each row; fn must only write row-local output.
void for_rows(std::size_t n, std::size_t work_per_row, const RowFn& fn);

}  // namespace mcrfm::kernels
