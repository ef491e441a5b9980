// Throughput comparison: serial reference kernels vs the OpenMP variants,
// plus an end-to-end training-epoch timing at the toy-model scale.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "provpt/data.hpp"
#include "provpt/kernels.hpp"
#include "provpt/rng.hpp"
#include "provpt/trainer.hpp"

using namespace provpt;
using Clock = std::chrono::steady_clock;

namespace {

double time_of(int reps, const std::function<void()>& fn) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double>(Clock::now() - t0).count() / reps;
}

void row(const char* name, double serial_s, double parallel_s, double flops) {
    std::printf("%-24s %10.3f ms %10.3f ms %7.2fx %8.2f GFLOP/s\n", name, serial_s * 1e3, parallel_s * 1e3,
                serial_s / parallel_s, flops / parallel_s * 1e-9);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-24s %13s %13s %8s %15s\n", "kernel", "serial", "openmp", "speedup", "throughput");

    Rng rng(1);
    {
        const int64_t m = 512, k = 512, n = 512;
        std::vector<double> a(static_cast<size_t>(m * k)), b(static_cast<size_t>(k * n)),
            y(static_cast<size_t>(m * n));
        for (double& v : a) v = rng.normal();
        for (double& v : b) v = rng.normal();
        const double s = time_of(3, [&] { kern::serial::matmul(a.data(), b.data(), y.data(), m, k, n); });
        const double p = time_of(3, [&] { kern::matmul(a.data(), b.data(), y.data(), m, k, n); });
        row("matmul 512^3", s, p, 2.0 * m * k * n);
    }
    {
        const int64_t g = 128, m = 32, k = 16, n = 32;
        std::vector<double> a(static_cast<size_t>(g * m * k)), b(static_cast<size_t>(g * k * n)),
            y(static_cast<size_t>(g * m * n));
        for (double& v : a) v = rng.normal();
        for (double& v : b) v = rng.normal();
        const double s = time_of(20, [&] { kern::serial::bmm(a.data(), b.data(), y.data(), g, m, k, n); });
        const double p = time_of(20, [&] { kern::bmm(a.data(), b.data(), y.data(), g, m, k, n); });
        row("bmm 128x32x16x32", s, p, 2.0 * g * m * k * n);
    }
    {
        const int64_t rows = 8192, width = 64;
        std::vector<double> x(static_cast<size_t>(rows * width)), y(x.size());
        for (double& v : x) v = rng.normal();
        const double s = time_of(20, [&] { kern::serial::softmax_rows(x.data(), y.data(), rows, width); });
        const double p = time_of(20, [&] { kern::softmax_rows(x.data(), y.data(), rows, width); });
        row("softmax 8192x64", s, p, 4.0 * rows * width);
    }
    {
        const int64_t rows = 8192, width = 64;
        std::vector<double> x(static_cast<size_t>(rows * width)), y(x.size());
        std::vector<double> gamma(static_cast<size_t>(width), 1.0), beta(static_cast<size_t>(width), 0.0);
        std::vector<double> mean(static_cast<size_t>(rows)), rstd(static_cast<size_t>(rows));
        for (double& v : x) v = rng.normal();
        const double s = time_of(20, [&] {
            kern::serial::layernorm_rows(x.data(), gamma.data(), beta.data(), y.data(), mean.data(),
                                         rstd.data(), rows, width, 1e-6);
        });
        const double p = time_of(20, [&] {
            kern::layernorm_rows(x.data(), gamma.data(), beta.data(), y.data(), mean.data(), rstd.data(),
                                 rows, width, 1e-6);
        });
        row("layernorm 8192x64", s, p, 6.0 * rows * width);
    }
    {
        const int64_t n = 1 << 20;
        std::vector<double> x(static_cast<size_t>(n)), y(x.size());
        for (double& v : x) v = rng.normal();
        const double s = time_of(10, [&] { kern::serial::gelu(x.data(), y.data(), n); });
        const double p = time_of(10, [&] { kern::gelu(x.data(), y.data(), n); });
        row("gelu 1M", s, p, 8.0 * n);
    }

    // end-to-end: one tuning epoch of the toy task, serial vs parallel kernels
    {
        SyntheticTaskConfig tcfg;
        tcfg.train_size = 256;
        tcfg.val_size = 32;
        tcfg.test_size = 64;
        SyntheticTask task = make_block_sensitive_task(tcfg);
        TrainConfig cfg;
        cfg.total_epochs = 1;
        cfg.batch_size = 64;
        cfg.prompts_total = 12;
        cfg.probe_batch_size = 64;
        auto one_epoch = [&]() {
            Trainer trainer(task.model, task.dataset, cfg);
            trainer.run_epoch();
        };
        kern::set_parallel(false);
        const double s = time_of(2, one_epoch);
        kern::set_parallel(true);
        const double p = time_of(2, one_epoch);
        row("train epoch (toy)", s, p, 0.0);
    }
    return 0;
}
