#include "provpt/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace provpt::kern {

namespace {
std::atomic<bool> g_parallel{true};

// Small problems are not worth a fork/join.
constexpr int64_t kParGrain = 8 * 1024;

inline bool par(int64_t work) { return g_parallel.load(std::memory_order_relaxed) && work >= kParGrain; }

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double gelu_one(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
inline double gelu_grad_one(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline void matmul_row(const double* a, const double* b, double* y, int64_t k, int64_t n, int64_t i) {
    double* yi = y + i * n;
    const double* ai = a + i * k;
    for (int64_t j = 0; j < n; ++j) yi[j] = 0.0;
    for (int64_t l = 0; l < k; ++l) {
        const double av = ai[l];
        const double* bl = b + l * n;
        for (int64_t j = 0; j < n; ++j) yi[j] += av * bl[j];
    }
}

inline void matmul_nt_row(const double* a, const double* b, double* y, int64_t n, int64_t k, int64_t i) {
    const double* ai = a + i * n;
    double* yi = y + i * k;
    for (int64_t l = 0; l < k; ++l) {
        const double* bl = b + l * n;
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) s += ai[j] * bl[j];
        yi[l] = s;
    }
}

inline void matmul_tn_col(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n, int64_t l) {
    double* yl = y + l * n;
    for (int64_t i = 0; i < m; ++i) {
        const double av = a[i * k + l];
        const double* bi = b + i * n;
        for (int64_t j = 0; j < n; ++j) yl[j] += av * bi[j];
    }
}

inline void softmax_row(const double* x, double* y, int64_t width, int64_t r) {
    const double* xr = x + r * width;
    double* yr = y + r * width;
    double mx = xr[0];
    for (int64_t j = 1; j < width; ++j) mx = xr[j] > mx ? xr[j] : mx;
    double s = 0.0;
    for (int64_t j = 0; j < width; ++j) {
        yr[j] = std::exp(xr[j] - mx);
        s += yr[j];
    }
    const double inv = 1.0 / s;
    for (int64_t j = 0; j < width; ++j) yr[j] *= inv;
}

inline void layernorm_row(const double* x, const double* gamma, const double* beta, double* y,
                          double* mean, double* rstd, int64_t width, double eps, int64_t r) {
    const double* xr = x + r * width;
    double* yr = y + r * width;
    double mu = 0.0;
    for (int64_t j = 0; j < width; ++j) mu += xr[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (int64_t j = 0; j < width; ++j) {
        const double d = xr[j] - mu;
        var += d * d;
    }
    var /= static_cast<double>(width);
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int64_t j = 0; j < width; ++j) yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
}

}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

void matmul(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (par(m * k * n))
    for (int64_t i = 0; i < m; ++i) matmul_row(a, b, y, k, n, i);
}

void matmul_nt(const double* a, const double* b, double* y, int64_t m, int64_t n, int64_t k) {
#pragma omp parallel for schedule(static) if (par(m * k * n))
    for (int64_t i = 0; i < m; ++i) matmul_nt_row(a, b, y, n, k, i);
}

void matmul_tn_acc(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (par(m * k * n))
    for (int64_t l = 0; l < k; ++l) matmul_tn_col(a, b, y, m, k, n, l);
}

void bmm(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (par(g * m * k * n))
    for (int64_t gi = 0; gi < g; ++gi) {
        const double* ag = a + gi * m * k;
        const double* bg = b + gi * k * n;
        double* yg = y + gi * m * n;
        for (int64_t i = 0; i < m; ++i) matmul_row(ag, bg, yg, k, n, i);
    }
}

void bmm_nt(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t n, int64_t k) {
#pragma omp parallel for schedule(static) if (par(g * m * k * n))
    for (int64_t gi = 0; gi < g; ++gi) {
        const double* ag = a + gi * m * n;
        const double* bg = b + gi * k * n;
        double* yg = y + gi * m * k;
        for (int64_t i = 0; i < m; ++i) matmul_nt_row(ag, bg, yg, n, k, i);
    }
}

void bmm_tn_acc(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (par(g * m * k * n))
    for (int64_t gi = 0; gi < g; ++gi) {
        const double* ag = a + gi * m * k;
        const double* bg = b + gi * m * n;
        double* yg = y + gi * k * n;
        for (int64_t l = 0; l < k; ++l) matmul_tn_col(ag, bg, yg, m, k, n, l);
    }
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t width) {
#pragma omp parallel for schedule(static) if (par(rows * width))
    for (int64_t r = 0; r < rows; ++r) softmax_row(x, y, width, r);
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, int64_t rows, int64_t width) {
#pragma omp parallel for schedule(static) if (par(rows * width))
    for (int64_t r = 0; r < rows; ++r) {
        const double* yr = y + r * width;
        const double* dr = dy + r * width;
        double* xr = dx + r * width;
        double dot = 0.0;
        for (int64_t j = 0; j < width; ++j) dot += dr[j] * yr[j];
        for (int64_t j = 0; j < width; ++j) xr[j] += (dr[j] - dot) * yr[j];
    }
}

void layernorm_rows(const double* x, const double* gamma, const double* beta, double* y,
                    double* mean, double* rstd, int64_t rows, int64_t width, double eps) {
#pragma omp parallel for schedule(static) if (par(rows * width))
    for (int64_t r = 0; r < rows; ++r) layernorm_row(x, gamma, beta, y, mean, rstd, width, eps, r);
}

void layernorm_rows_backward(const double* x, const double* gamma, const double* mean,
                             const double* rstd, const double* dy, double* dx,
                             double* dgamma, double* dbeta, int64_t rows, int64_t width) {
    // dgamma/dbeta accumulate across rows; done serially to keep a fixed
    // summation order (row-major), dx rows are independent.
#pragma omp parallel for schedule(static) if (par(rows * width))
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x + r * width;
        const double* dr = dy + r * width;
        double* dxr = dx + r * width;
        const double mu = mean[r];
        const double rs = rstd[r];
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (int64_t j = 0; j < width; ++j) {
            const double xhat = (xr[j] - mu) * rs;
            const double gl = dr[j] * gamma[j];
            sum_g += gl;
            sum_gx += gl * xhat;
        }
        const double inv_w = 1.0 / static_cast<double>(width);
        for (int64_t j = 0; j < width; ++j) {
            const double xhat = (xr[j] - mu) * rs;
            const double gl = dr[j] * gamma[j];
            dxr[j] += rs * (gl - inv_w * sum_g - xhat * inv_w * sum_gx);
        }
    }
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x + r * width;
        const double* dr = dy + r * width;
        const double mu = mean[r];
        const double rs = rstd[r];
        for (int64_t j = 0; j < width; ++j) {
            dgamma[j] += dr[j] * (xr[j] - mu) * rs;
            dbeta[j] += dr[j];
        }
    }
}

void gelu(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n * 8))
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void gelu_backward(const double* x, const double* dy, double* dx, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n * 8))
    for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_one(x[i]);
}

void tanh_ew(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n * 8))
    for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void add(const double* a, const double* b, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n))
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n))
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void scale(const double* x, double c, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n))
    for (int64_t i = 0; i < n; ++i) y[i] = c * x[i];
}

void axpy(double c, const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n))
    for (int64_t i = 0; i < n; ++i) y[i] += c * x[i];
}

void add_rowvec(const double* x, const double* b, double* y, int64_t rows, int64_t width) {
#pragma omp parallel for schedule(static) if (par(rows * width))
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x + r * width;
        double* yr = y + r * width;
        for (int64_t j = 0; j < width; ++j) yr[j] = xr[j] + b[j];
    }
}

namespace serial {

void matmul(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) matmul_row(a, b, y, k, n, i);
}

void matmul_nt(const double* a, const double* b, double* y, int64_t m, int64_t n, int64_t k) {
    for (int64_t i = 0; i < m; ++i) matmul_nt_row(a, b, y, n, k, i);
}

void matmul_tn_acc(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n) {
    for (int64_t l = 0; l < k; ++l) matmul_tn_col(a, b, y, m, k, n, l);
}

void bmm(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t k, int64_t n) {
    for (int64_t gi = 0; gi < g; ++gi)
        for (int64_t i = 0; i < m; ++i)
            matmul_row(a + gi * m * k, b + gi * k * n, y + gi * m * n, k, n, i);
}

void bmm_nt(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t n, int64_t k) {
    for (int64_t gi = 0; gi < g; ++gi)
        for (int64_t i = 0; i < m; ++i)
            matmul_nt_row(a + gi * m * n, b + gi * k * n, y + gi * m * k, n, k, i);
}

void bmm_tn_acc(const double* a, const double* b, double* y, int64_t g, int64_t m, int64_t k, int64_t n) {
    for (int64_t gi = 0; gi < g; ++gi)
        for (int64_t l = 0; l < k; ++l)
            matmul_tn_col(a + gi * m * k, b + gi * m * n, y + gi * k * n, m, k, n, l);
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t width) {
    for (int64_t r = 0; r < rows; ++r) softmax_row(x, y, width, r);
}

void layernorm_rows(const double* x, const double* gamma, const double* beta, double* y,
                    double* mean, double* rstd, int64_t rows, int64_t width, double eps) {
    for (int64_t r = 0; r < rows; ++r) layernorm_row(x, gamma, beta, y, mean, rstd, width, eps, r);
}

void gelu(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

}  // namespace serial

}  // namespace provpt::kern
