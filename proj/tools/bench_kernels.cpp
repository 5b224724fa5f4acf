// Times the serial and OpenMP variants of each dense kernel and verifies the
// two paths agree bitwise on the benchmarked shapes.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "ces/kernels.hpp"

namespace {

using clock_t_ = std::chrono::steady_clock;

double time_ms(int reps, auto&& fn) {
    fn(); // warmup
    const auto t0 = clock_t_::now();
    for (int i = 0; i < reps; i++) fn();
    const auto t1 = clock_t_::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<double> randn(size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

void row(const char* name, double serial_ms, double omp_ms, bool exact) {
    std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name, serial_ms,
                omp_ms, serial_ms / omp_ms, exact ? "bitwise-equal" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP kernel timings"};
    int reps = 5;
    int size = 512;
    app.add_option("--reps", reps, "repetitions per measurement");
    app.add_option("--size", size, "square problem size");
    CLI11_PARSE(app, argc, argv);

    std::mt19937_64 rng(42);
    const int n = size;
    const auto a = randn(static_cast<size_t>(n) * n, rng);
    const auto b = randn(static_cast<size_t>(n) * n, rng);
    std::vector<double> c1(static_cast<size_t>(n) * n), c2(c1.size());

    using namespace ces::kernels;
    {
        const double ts = time_ms(reps, [&] { matmul_serial(a.data(), b.data(), c1.data(), n, n, n, false, false, false); });
        const double to = time_ms(reps, [&] { matmul_omp(a.data(), b.data(), c2.data(), n, n, n, false, false, false); });
        row("matmul", ts, to, c1 == c2);
    }
    {
        const double ts = time_ms(reps, [&] { matmul_serial(a.data(), b.data(), c1.data(), n, n, n, true, true, false); });
        const double to = time_ms(reps, [&] { matmul_omp(a.data(), b.data(), c2.data(), n, n, n, true, true, false); });
        row("matmul (both transposed)", ts, to, c1 == c2);
    }
    {
        const auto gamma = randn(static_cast<size_t>(n), rng);
        const auto beta = randn(static_cast<size_t>(n), rng);
        std::vector<double> m1(static_cast<size_t>(n)), r1(m1.size()), m2(m1.size()), r2(m1.size());
        const double ts = time_ms(reps, [&] {
            layer_norm_rows_serial(a.data(), gamma.data(), beta.data(), c1.data(), m1.data(),
                                   r1.data(), n, n, 1e-5);
        });
        const double to = time_ms(reps, [&] {
            layer_norm_rows_omp(a.data(), gamma.data(), beta.data(), c2.data(), m2.data(),
                                r2.data(), n, n, 1e-5);
        });
        row("layer_norm_rows", ts, to, c1 == c2 && m1 == m2 && r1 == r2);
    }
    {
        const double ts = time_ms(reps, [&] {
            c1 = a;
            softmax_rows_serial(c1.data(), n, n);
        });
        const double to = time_ms(reps, [&] {
            c2 = a;
            softmax_rows_omp(c2.data(), n, n);
        });
        row("softmax_rows", ts, to, c1 == c2);
    }
    return 0;
}
