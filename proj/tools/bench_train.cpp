// Micro-benchmark for one training iteration (forward + seeds + reverse)
// at the batch shapes the presets use. Guides preset runtime budgets.

#include <chrono>
#include <cstdio>
#include <span>
#include <vector>

#include "multisol/autodiff.hpp"
#include "multisol/net.hpp"
#include "multisol/rng.hpp"

using namespace multisol;

static double now_s() {
    using clk = std::chrono::steady_clock;
    return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

static void bench_1d(const char* label, std::vector<int> widths, int n_points, int iters) {
    NetworkSpec spec(widths);
    auto p = init_params(spec, InitScheme::normal(1.0), 1);
    std::vector<double> xs(n_points);
    for (int i = 0; i < n_points; ++i) xs[i] = static_cast<double>(i) / (n_points - 1);
    JetEvaluator ev(spec);
    ParamVector grad;
    double sink = 0;
    const double t0 = now_s();
    for (int it = 0; it < iters; ++it) {
        ev.forward(p, xs);
        for (int i = 0; i < n_points; ++i) {
            auto j = ev.jet1(i);
            ev.add_seed1(i, {2 * j.u, j.ux, 0.5 * j.uxx});
        }
        ev.reverse(p, grad);
        sink += grad[0];
    }
    const double dt = (now_s() - t0) / iters;
    std::printf("%-28s N=%5d  %8.3f ms/iter  (sink %g)\n", label, n_points, dt * 1e3, sink);
}

static void bench_2d(const char* label, std::vector<int> widths, int n_points, int iters) {
    NetworkSpec spec(widths);
    auto p = init_params(spec, InitScheme::normal(0.5), 1);
    std::vector<double> xs(n_points), ys(n_points);
    Rng rng(3);
    for (int i = 0; i < n_points; ++i) {
        xs[i] = rng.uniform01();
        ys[i] = rng.uniform01();
    }
    JetEvaluator ev(spec, JetEvaluator::Mode::Laplacian);
    ParamVector grad;
    double sink = 0;
    const double t0 = now_s();
    for (int it = 0; it < iters; ++it) {
        ev.forward(p, xs, ys);
        for (int i = 0; i < n_points; ++i) {
            auto j = ev.jet_lap(i);
            ev.add_seed_lap(i, {2 * j.u, 0, 0, 0.1 * j.lap});
        }
        ev.reverse(p, grad);
        sink += grad[0];
    }
    const double dt = (now_s() - t0) / iters;
    std::printf("%-28s N=%5d  %8.3f ms/iter  (sink %g)\n", label, n_points, dt * 1e3, sink);
}

int main() {
    bench_1d("[1,50,50,1] bratu", {1, 50, 50, 1}, 101, 2000);
    bench_1d("[1,50,50,50,1] blayer", {1, 50, 50, 50, 1}, 100, 1000);
    bench_1d("[1,50,50,50,1] rd", {1, 50, 50, 50, 1}, 201, 1000);
    bench_2d("[2,50,50,50,1] allen-cahn", {2, 50, 50, 50, 1}, 3400, 50);
    bench_2d("[2,50,50,50,1] poisson2d", {2, 50, 50, 50, 1}, 1400, 100);
    return 0;
}
