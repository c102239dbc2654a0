#include "emovid/kernels.hpp"
#include "emovid/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using emovid::Rng;
namespace k = emovid::kernels;

std::vector<double> random_buf(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

// Median-of-repeats wall time in milliseconds.
double time_ms(const std::function<void()>& fn, int repeats) {
    std::vector<double> times;
    times.reserve(static_cast<size_t>(repeats));
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

void report(const char* name, double serial_ms, double parallel_ms, const char* agreement) {
    std::printf("%-28s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   %s\n", name,
                serial_ms, parallel_ms, serial_ms / parallel_ms, agreement);
}

// The serial gradient kernels accumulate in a different (scatter) order, so
// agreement there is to rounding, not bitwise.
double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::fabs(a[i]), std::fabs(b[i]), 1.0});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
    }
    return worst;
}

bool bench_gemm(int m, int kk, int n, int repeats, Rng& rng) {
    const std::vector<double> a = random_buf(static_cast<size_t>(m) * kk, rng);
    const std::vector<double> b = random_buf(static_cast<size_t>(kk) * n, rng);
    std::vector<double> y_serial(static_cast<size_t>(m) * n);
    std::vector<double> y_parallel(y_serial.size());

    const double ts = time_ms([&] { k::serial::gemm(a.data(), b.data(), y_serial.data(), m, kk, n); },
                              repeats);
    const double tp =
        time_ms([&] { k::gemm(a.data(), b.data(), y_parallel.data(), m, kk, n); }, repeats);
    const bool same =
        std::memcmp(y_serial.data(), y_parallel.data(), y_serial.size() * sizeof(double)) == 0;
    char name[64];
    std::snprintf(name, sizeof name, "gemm %dx%dx%d", m, kk, n);
    report(name, ts, tp, same ? "bit-identical" : "MISMATCH");
    return same;
}

bool bench_conv(const k::Conv2dShape& s, int repeats, Rng& rng) {
    const size_t xn = static_cast<size_t>(s.cin) * s.h * s.w;
    const size_t wn = static_cast<size_t>(s.cout) * (s.cin / s.groups) * s.kh * s.kw;
    const size_t yn = static_cast<size_t>(s.cout) * s.oh() * s.ow();
    const std::vector<double> x = random_buf(xn, rng);
    const std::vector<double> w = random_buf(wn, rng);
    const std::vector<double> gy = random_buf(yn, rng);

    bool all_same = true;
    {
        std::vector<double> ys(yn), yp(yn);
        const double ts =
            time_ms([&] { k::serial::conv2d_forward(s, x.data(), w.data(), ys.data()); }, repeats);
        const double tp =
            time_ms([&] { k::conv2d_forward(s, x.data(), w.data(), yp.data()); }, repeats);
        const bool same = std::memcmp(ys.data(), yp.data(), yn * sizeof(double)) == 0;
        all_same = all_same && same;
        char name[64];
        std::snprintf(name, sizeof name, "conv fwd c%d->%d g%d %dx%d s%d", s.cin, s.cout,
                      s.groups, s.h, s.w, s.stride);
        report(name, ts, tp, same ? "bit-identical" : "MISMATCH");
    }
    {
        std::vector<double> gs(xn, 0.0), gp(xn, 0.0);
        const double ts = time_ms(
            [&] {
                std::fill(gs.begin(), gs.end(), 0.0);
                k::serial::conv2d_grad_input(s, gy.data(), w.data(), gs.data());
            },
            repeats);
        const double tp = time_ms(
            [&] {
                std::fill(gp.begin(), gp.end(), 0.0);
                k::conv2d_grad_input(s, gy.data(), w.data(), gp.data());
            },
            repeats);
        const double err = max_rel_err(gs, gp);
        const bool same = err <= 1e-12;
        all_same = all_same && same;
        char agree[48];
        std::snprintf(agree, sizeof agree, same ? "max rel err %.1e" : "DIVERGED %.1e", err);
        report("conv grad-input", ts, tp, agree);
    }
    {
        std::vector<double> gs(wn, 0.0), gp(wn, 0.0);
        const double ts = time_ms(
            [&] {
                std::fill(gs.begin(), gs.end(), 0.0);
                k::serial::conv2d_grad_weight(s, gy.data(), x.data(), gs.data());
            },
            repeats);
        const double tp = time_ms(
            [&] {
                std::fill(gp.begin(), gp.end(), 0.0);
                k::conv2d_grad_weight(s, gy.data(), x.data(), gp.data());
            },
            repeats);
        const double err = max_rel_err(gs, gp);
        const bool same = err <= 1e-12;
        all_same = all_same && same;
        char agree[48];
        std::snprintf(agree, sizeof agree, same ? "max rel err %.1e" : "DIVERGED %.1e", err);
        report("conv grad-weight", ts, tp, agree);
    }
    return all_same;
}

} // namespace

int main(int argc, char** argv) {
    int repeats = 5;
    if (argc > 1) repeats = std::max(1, std::atoi(argv[1]));
#ifdef _OPENMP
    std::printf("OpenMP with up to %d threads, %d repeats (median)\n", omp_get_max_threads(),
                repeats);
#else
    std::printf("OpenMP unavailable: parallel kernels run serially, %d repeats\n", repeats);
#endif

    Rng rng(2024);
    bool ok = true;
    ok = bench_gemm(256, 256, 256, repeats, rng) && ok;
    ok = bench_gemm(64, 4096, 64, repeats, rng) && ok;
    ok = bench_gemm(1024, 64, 1024, repeats, rng) && ok;

    k::Conv2dShape big;
    big.groups = 3;
    big.cin = 48;
    big.cout = 96;
    big.h = 56;
    big.w = 56;
    big.kh = 3;
    big.kw = 3;
    big.pad = 1;
    ok = bench_conv(big, repeats, rng) && ok;

    k::Conv2dShape strided = big;
    strided.stride = 2;
    ok = bench_conv(strided, repeats, rng) && ok;

    if (!ok) {
        std::printf("FAILURE: a parallel kernel diverged from the serial reference\n");
        return 1;
    }
    return 0;
}
