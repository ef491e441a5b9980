#include "doctest.h"

#include <omp.h>

#include "provpt/checks.hpp"
#include "provpt/kernels.hpp"
#include "provpt/rng.hpp"

using namespace provpt;

TEST_CASE("parallel kernels match serial reference bit-exactly") {
    // per-output-element accumulation order is identical in both variants
    REQUIRE(kern::parallel_enabled());
    CheckResult r = check_kernel_parity(1);
    CHECK_MESSAGE(r.pass, r.detail);
}

TEST_CASE("parity holds across thread counts") {
    Rng rng(3);
    const int64_t m = 64, k = 48, n = 56;
    std::vector<double> a(static_cast<size_t>(m * k)), b(static_cast<size_t>(k * n));
    for (double& x : a) x = rng.normal();
    for (double& x : b) x = rng.normal();
    std::vector<double> ref(static_cast<size_t>(m * n));
    kern::serial::matmul(a.data(), b.data(), ref.data(), m, k, n);
    for (int threads : {1, 2, 4}) {
        omp_set_num_threads(threads);
        std::vector<double> y(static_cast<size_t>(m * n));
        kern::matmul(a.data(), b.data(), y.data(), m, k, n);
        CHECK(y == ref);
    }
}

TEST_CASE("transposed-operand matmuls agree with the plain route") {
    Rng rng(5);
    const int64_t m = 9, k = 7, n = 11;
    std::vector<double> a(static_cast<size_t>(m * k)), b(static_cast<size_t>(k * n));
    for (double& x : a) x = rng.normal();
    for (double& x : b) x = rng.normal();
    std::vector<double> y(static_cast<size_t>(m * n));
    kern::matmul(a.data(), b.data(), y.data(), m, k, n);

    // nt: y2[m,k2] = y[m,n] * b[k2,n]^T with k2 = k requires b^T; check one entry directly
    std::vector<double> bt(static_cast<size_t>(n * k));
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < n; ++j) bt[static_cast<size_t>(j * k + i)] = b[static_cast<size_t>(i * n + j)];
    std::vector<double> y2(static_cast<size_t>(m * n));
    kern::matmul_nt(a.data(), bt.data(), y2.data(), m, k, n);
    for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(y2[i]).epsilon(1e-12));

    // tn_acc: c[k,n] += a[m,k]^T * y[m,n]
    std::vector<double> c(static_cast<size_t>(k * n), 0.0), c_ref(static_cast<size_t>(k * n), 0.0);
    kern::matmul_tn_acc(a.data(), y.data(), c.data(), m, k, n);
    for (int64_t l = 0; l < k; ++l)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t i = 0; i < m; ++i) s += a[static_cast<size_t>(i * k + l)] * y[static_cast<size_t>(i * n + j)];
            c_ref[static_cast<size_t>(l * n + j)] = s;
        }
    for (size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(c_ref[i]).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(8);
    const int64_t rows = 17, width = 9;
    std::vector<double> x(static_cast<size_t>(rows * width)), y(x.size());
    for (double& v : x) v = rng.uniform(-30.0, 30.0);
    kern::softmax_rows(x.data(), y.data(), rows, width);
    for (int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int64_t j = 0; j < width; ++j) {
            const double p = y[static_cast<size_t>(r * width + j)];
            CHECK(p > 0.0);
            s += p;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}
