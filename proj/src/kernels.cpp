#include "mcrfm/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>

#include "mcrfm/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mcrfm::kernels {

namespace {

std::atomic<int> g_threads{1};

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1 << 15;

void check_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.cols) throw InvalidArgument("gemm_nt: inner dimension mismatch");
  if (c.rows != a.rows || c.cols != b.rows) c = Matrix(a.rows, b.rows);
}

void check_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.rows) throw InvalidArgument("gemm_nn: inner dimension mismatch");
  c = Matrix(a.rows, b.cols);
}

void check_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows != b.rows) throw InvalidArgument("gemm_tn: inner dimension mismatch");
  c = Matrix(a.cols, b.cols);
}

inline void nt_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const double* ai = a.data.data() + i * a.cols;
  for (std::size_t j = 0; j < b.rows; ++j) {
    const double* bj = b.data.data() + j * b.cols;
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
    c.data[i * c.cols + j] = s;
  }
}

inline void nn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  double* ci = c.data.data() + i * c.cols;
  for (std::size_t k = 0; k < a.cols; ++k) {
    const double aik = a.data[i * a.cols + k];
    const double* bk = b.data.data() + k * b.cols;
    for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
  }
}

inline void tn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  double* ci = c.data.data() + i * c.cols;
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double aki = a.data[k * a.cols + i];
    const double* bk = b.data.data() + k * b.cols;
    for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
  }
}

}  // namespace

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

int configure_threads_from_env() {
  if (const char* env = std::getenv("MCRFM_THREADS")) {
    try {
      set_num_threads(std::stoi(env));
    } catch (const std::exception&) {
      throw InvalidArgument(std::string("MCRFM_THREADS is not an integer: ") + env);
    }
  }
  return num_threads();
}

namespace serial {

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nt(a, b, c);
  for (std::size_t i = 0; i < a.rows; ++i) nt_row(a, b, c, i);
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nn(a, b, c);
  for (std::size_t i = 0; i < a.rows; ++i) nn_row(a, b, c, i);
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_tn(a, b, c);
  for (std::size_t i = 0; i < a.cols; ++i) tn_row(a, b, c, i);
}

void for_rows(std::size_t n, const RowFn& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace serial

namespace parallel {

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nt(a, b, c);
  const auto n = static_cast<std::ptrdiff_t>(a.rows);
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t i = 0; i < n; ++i) nt_row(a, b, c, static_cast<std::size_t>(i));
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nn(a, b, c);
  const auto n = static_cast<std::ptrdiff_t>(a.rows);
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t i = 0; i < n; ++i) nn_row(a, b, c, static_cast<std::size_t>(i));
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_tn(a, b, c);
  const auto n = static_cast<std::ptrdiff_t>(a.cols);
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t i = 0; i < n; ++i) tn_row(a, b, c, static_cast<std::size_t>(i));
}

void for_rows(std::size_t n, const RowFn& fn) {
  const auto count = static_cast<std::ptrdiff_t>(n);
  // Exceptions must not escape an OpenMP region; rethrow the first one.
  std::exception_ptr first;
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(mcrfm_for_rows)
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace parallel

namespace {
bool go_parallel(std::size_t work) { return num_threads() > 1 && work >= kParallelThreshold; }
}  // namespace

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (go_parallel(a.rows * a.cols * b.rows)) {
    parallel::gemm_nt(a, b, c);
  } else {
    serial::gemm_nt(a, b, c);
  }
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (go_parallel(a.rows * a.cols * b.cols)) {
    parallel::gemm_nn(a, b, c);
  } else {
    serial::gemm_nn(a, b, c);
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (go_parallel(a.rows * a.cols * b.cols)) {
    parallel::gemm_tn(a, b, c);
  } else {
    serial::gemm_tn(a, b, c);
  }
}

void for_rows(std::size_t n, std::size_t work_per_row, const RowFn& fn) {
  if (go_parallel(n * work_per_row)) {
    parallel::for_rows(n, fn);
  } else {
    serial::for_rows(n, fn);
  }
}

}  // namespace mcrfm::kernels
