#pragma once

#include <cstdint>

// Dense f64 compute kernels. Every kernel has two implementations:
//
//   kern::foo(...)         OpenMP-parallel over independent output rows/groups
//   kern::serial::foo(...) straight-loop reference
//
// Both accumulate each output element in the same index order, so serial and
// parallel results are bit-identical for any thread count. Tests assert exact
// equality; tools/bench_kernels compares throughput.

namespace provpt::kern {

bool parallel_enabled();
void set_parallel(bool on);

// y[m,n] = a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n);
// y[m,k] = a[m,n] * b[k,n]^T    (b transposed)
void matmul_nt(const double* a, const double* b, double* y, int64_t m, int64_t n, int64_t k);
// y[k,n] += a[m,k]^T * b[m,n]   (a transposed, accumulating)
void matmul_tn_acc(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n);

// Grouped matmuls: g independent [m,k]x[k,n] products.
void bmm(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t k, int64_t n);
void bmm_nt(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t n, int64_t k);
void bmm_tn_acc(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t k, int64_t n);

// Row-wise softmax over the last axis: rows x width.
void softmax_rows(const double* x, double* y, int64_t rows, int64_t width);
// dx = (dy - sum(dy*y)) * y per row, given y = softmax(x).
void softmax_rows_backward(const double* y, const double* dy, double* dx, int64_t rows, int64_t width);

// Row-wise layer norm with affine params; saves mean and rstd per row.
void layernorm_rows(const double* x, const double* gamma, const double* beta, double* y,
                    double* mean, double* rstd, int64_t rows, int64_t width, double eps);
void layernorm_rows_backward(const double* x, const double* gamma, const double* mean,
                             const double* rstd, const double* dy, double* dx,
                             double* dgamma, double* dbeta, int64_t rows, int64_t width);

// Elementwise.
void gelu(const double* x, double* y, int64_t n);
void gelu_backward(const double* x, const double* dy, double* dx, int64_t n);
void tanh_ew(const double* x, double* y, int64_t n);
void add(const double* a, const double* b, double* y, int64_t n);
void mul(const double* a, const double* b, double* y, int64_t n);
void scale(const double* x, double c, double* y, int64_t n);
void axpy(double c, const double* x, double* y, int64_t n);  // y += c*x

// Broadcast bias over rows: y[r,:] = x[r,:] + b[:].
void add_rowvec(const double* x, const double* b, double* y, int64_t rows, int64_t width);

namespace serial {
void matmul(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* y, int64_t m, int64_t n, int64_t k);
void matmul_tn_acc(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n);
void bmm(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t k, int64_t n);
void bmm_nt(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t n, int64_t k);
void bmm_tn_acc(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t k, int64_t n);
void softmax_rows(const double* x, double* y, int64_t rows, int64_t width);
void layernorm_rows(const double* x, const double* gamma, const double* beta, double* y,
                    double* mean, double* rstd, int64_t rows, int64_t width, double eps);
void gelu(const double* x, double* y, int64_t n);
}  // namespace serial

}  // namespace provpt::kern
