#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "multisol/autodiff.hpp"
#include "multisol/net.hpp"
#include "multisol/rng.hpp"
#include "oracles.hpp"

using namespace multisol;

namespace {

double net_value(const ParamVector& p, const NetworkSpec& spec, double x) {
    return forward_jet1(p, spec, x).u;
}

} // namespace

TEST_CASE("init_params: degenerate variance gives near-zero parameters") {
    NetworkSpec spec({1, 50, 50, 1});
    auto p = init_params(spec, InitScheme::normal(1e-12), 1);
    for (double v : p) REQUIRE(std::abs(v) < 1e-10);
}

TEST_CASE("init_params: deterministic in (spec, scheme, seed)") {
    NetworkSpec spec({1, 50, 50, 1});
    auto a = init_params(spec, InitScheme::normal(2.0), 777);
    auto b = init_params(spec, InitScheme::normal(2.0), 777);
    REQUIRE(a.size() == spec.param_count());
    REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    auto c = init_params(spec, InitScheme::normal(2.0), 778);
    REQUIRE(a != c);
}

TEST_CASE("init_params: pooled sample std matches sigma=2") {
    NetworkSpec spec({1, 50, 50, 1});
    double sum = 0, sum2 = 0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; n < 100000; ++seed) {
        auto p = init_params(spec, InitScheme::normal(2.0), derive_seed(5, seed));
        for (double v : p) {
            sum += v;
            sum2 += v * v;
            ++n;
        }
    }
    double mean = sum / n;
    double std = std::sqrt(sum2 / n - mean * mean);
    REQUIRE(std >= 1.98);
    REQUIRE(std <= 2.02);
}

TEST_CASE("init_params: uniform draws stay in [-B, B)") {
    NetworkSpec spec({1, 50, 50, 1});
    auto p = init_params(spec, InitScheme::uniform(2.5), 3);
    for (double v : p) {
        REQUIRE(v >= -2.5);
        REQUIRE(v < 2.5);
    }
}

TEST_CASE("layer kernel: affine jets are linear in all components") {
    // Single affine layer u = w x + b: jet (wx+b, w, 0).
    detail::LayerStack stack;
    stack.widths = {1, 1};
    stack.output_identity = true;
    stack.resize(1, 3);
    const double w = 1.7, b = -0.3, x = 0.42;
    detail::fill_input_block(stack.act[0], 3, std::span<const double>(&x, 1), {});
    const double params[2] = {w, b};
    stack.forward(params);
    REQUIRE(stack.act.back()(0, 0) == Catch::Approx(w * x + b).epsilon(1e-15));
    REQUIRE(stack.act.back()(1, 0) == Catch::Approx(w).epsilon(1e-15));
    REQUIRE(stack.act.back()(2, 0) == 0.0);

    // Hand-derived gradient of L = u(x)^2: dL/dw = 2 u x, dL/db = 2 u.
    Eigen::MatrixXd seed(3, 1);
    const double u = w * x + b;
    seed << 2 * u, 0, 0;
    double grad[2] = {0, 0};
    stack.reverse(params, seed, grad, nullptr);
    REQUIRE(grad[0] == Catch::Approx(2 * u * x).epsilon(1e-14));
    REQUIRE(grad[1] == Catch::Approx(2 * u).epsilon(1e-14));
}

TEST_CASE("layer kernel: 2D affine jets") {
    detail::LayerStack stack;
    stack.widths = {2, 1};
    stack.output_identity = true;
    stack.resize(1, 5);
    const double a = 0.8, b = -1.1, c = 0.25, x = 0.3, y = -0.6;
    detail::fill_input_block(stack.act[0], 5, std::span<const double>(&x, 1), std::span<const double>(&y, 1));
    const double params[3] = {a, b, c};
    stack.forward(params);
    const auto& out = stack.act.back();
    REQUIRE(out(0, 0) == Catch::Approx(a * x + b * y + c).epsilon(1e-15));
    REQUIRE(out(1, 0) == Catch::Approx(a).epsilon(1e-15));
    REQUIRE(out(2, 0) == Catch::Approx(b).epsilon(1e-15));
    REQUIRE(out(3, 0) == 0.0);
    REQUIRE(out(4, 0) == 0.0);
}

TEST_CASE("forward_jet1: constant network") {
    NetworkSpec spec({1, 50, 50, 1});
    ParamVector p(spec.param_count(), 0.0);
    p[spec.bias_offset(2)] = 3.25; // output bias only
    auto j = forward_jet1(p, spec, 0.7);
    REQUIRE(j.u == 3.25);
    REQUIRE(j.ux == 0.0);
    REQUIRE(j.uxx == 0.0);
}

TEST_CASE("forward_jet1 matches 4th-order finite differences") {
    // 100 random (architecture, seed) pairs x 10 points, step 1e-4.
    std::vector<std::vector<int>> archs = {
        {1, 10, 1}, {1, 20, 20, 1}, {1, 50, 50, 1}, {1, 15, 15, 15, 1}};
    Rng point_rng(2024);
    const double h = 1e-4;
    for (int trial = 0; trial < 100; ++trial) {
        NetworkSpec spec(archs[trial % archs.size()]);
        auto p = init_params(spec, InitScheme::normal(1.0), derive_seed(81, trial));
        auto f = [&](double x) { return net_value(p, spec, x); };
        // establish derivative scales first so near-zero crossings don't
        // blow up the relative error
        std::vector<double> xs(10);
        std::vector<Jet1> jets(10);
        for (int k = 0; k < 10; ++k) {
            xs[k] = point_rng.uniform_sym(1.0);
            jets[k] = forward_jet1(p, spec, xs[k]);
        }
        for (int k = 0; k < 10; ++k) {
            const double fd1 = oracles::fd_first(f, xs[k], h);
            const double fd2 = oracles::fd_second(f, xs[k], h);
            const double sc = oracles::stencil_scale(f, xs[k], h);
            // Richardson bound on the oracle's truncation term (outlier nets
            // reach |u^(6)| ~ 1e12 where the raw h^4 error tops 1e-6)
            const double tr1 = 1.1 * std::abs(fd1 - oracles::fd_first(f, xs[k], h / 2));
            const double tr2 = 1.1 * std::abs(fd2 - oracles::fd_second(f, xs[k], h / 2));
            REQUIRE(std::abs(jets[k].ux - fd1) <=
                    1e-6 * std::abs(fd1) + oracles::fd_first_noise(sc, h / 2) + tr1);
            REQUIRE(std::abs(jets[k].uxx - fd2) <=
                    1e-6 * std::abs(fd2) + oracles::fd_second_noise(sc, h / 2) + tr2);
        }
    }
}

TEST_CASE("forward_jet2: parameter symmetry swaps directional jets") {
    NetworkSpec spec({2, 20, 20, 1});
    auto p = init_params(spec, InitScheme::normal(0.8), 5);
    // swap the two input columns of W1 (row-major out x in)
    ParamVector q = p;
    for (int r = 0; r < 20; ++r) std::swap(q[2 * r], q[2 * r + 1]);
    const double x = 0.3, y = -0.7;
    auto a = forward_jet2(p, spec, x, y);
    auto b = forward_jet2(q, spec, y, x);
    // not bitwise: FMA contraction orders differ between the two layouts
    REQUIRE(a.u == Catch::Approx(b.u).epsilon(5e-13));
    REQUIRE(a.ux == Catch::Approx(b.uy).epsilon(5e-13));
    REQUIRE(a.uy == Catch::Approx(b.ux).epsilon(5e-13));
    REQUIRE(a.uxx == Catch::Approx(b.uyy).epsilon(5e-13));
    REQUIRE(a.uyy == Catch::Approx(b.uxx).epsilon(5e-13));
}

TEST_CASE("forward_jet2: zero hidden weights give zero derivatives") {
    NetworkSpec spec({2, 10, 10, 1});
    ParamVector p(spec.param_count(), 0.0);
    Rng rng(3);
    // random biases everywhere, weights zero
    p[spec.bias_offset(0)] = rng.normal(1.0);
    p[spec.bias_offset(2)] = rng.normal(1.0);
    auto j = forward_jet2(p, spec, 0.2, 0.9);
    REQUIRE(j.ux == 0.0);
    REQUIRE(j.uy == 0.0);
    REQUIRE(j.uxx == 0.0);
    REQUIRE(j.uyy == 0.0);
}

TEST_CASE("forward_jet2 matches finite differences per direction") {
    NetworkSpec spec({2, 50, 50, 50, 1});
    auto p = init_params(spec, InitScheme::normal(0.5), 17);
    Rng point_rng(99);
    const double h = 1e-4;
    std::vector<std::pair<double, double>> pts(10);
    std::vector<Jet2> jets(10);
    for (int k = 0; k < 10; ++k) {
        pts[k] = {point_rng.uniform01(), point_rng.uniform01()};
        jets[k] = forward_jet2(p, spec, pts[k].first, pts[k].second);
    }
    for (int k = 0; k < 10; ++k) {
        auto [x, y] = pts[k];
        auto fx = [&](double t) { return forward_jet2(p, spec, t, y).u; };
        auto fy = [&](double t) { return forward_jet2(p, spec, x, t).u; };
        const double sc = std::max(oracles::stencil_scale(fx, x, h), oracles::stencil_scale(fy, y, h));
        const double n1 = oracles::fd_first_noise(sc, h), n2 = oracles::fd_second_noise(sc, h);
        REQUIRE(std::abs(jets[k].ux - oracles::fd_first(fx, x, h)) <= 1e-6 * std::abs(jets[k].ux) + n1);
        REQUIRE(std::abs(jets[k].uy - oracles::fd_first(fy, y, h)) <= 1e-6 * std::abs(jets[k].uy) + n1);
        REQUIRE(std::abs(jets[k].uxx - oracles::fd_second(fx, x, h)) <= 1e-6 * std::abs(jets[k].uxx) + n2);
        REQUIRE(std::abs(jets[k].uyy - oracles::fd_second(fy, y, h)) <= 1e-6 * std::abs(jets[k].uyy) + n2);
    }
}

TEST_CASE("loss_gradient: empty batch returns zero") {
    NetworkSpec spec({1, 10, 1});
    auto p = init_params(spec, InitScheme::normal(1.0), 4);
    auto [loss, grad] = loss_gradient(p, spec, std::span<const double>{},
                                      [](JetEvaluator&) { return 1.0; });
    REQUIRE(loss == 0.0);
    for (double g : grad) REQUIRE(g == 0.0);
}

TEST_CASE("loss_gradient matches finite differences on a mixed-jet loss") {
    // loss touching u, ux and uxx exercises every adjoint path
    NetworkSpec spec({1, 20, 20, 1});
    auto p = init_params(spec, InitScheme::normal(1.0), 23);
    std::vector<double> xs = {-0.8, -0.3, 0.1, 0.55, 0.9};

    auto batch = [&](JetEvaluator& ev) {
        double L = 0;
        for (int i = 0; i < ev.n_points(); ++i) {
            auto j = ev.jet1(i);
            L += j.u * j.u + 0.5 * j.ux * j.ux + 0.1 * j.uxx * j.uxx;
            ev.add_seed1(i, {2 * j.u, j.ux, 0.2 * j.uxx});
        }
        return L;
    };
    auto [loss, grad] = loss_gradient(p, spec, xs, batch);

    auto loss_only = [&](const std::vector<double>& q) {
        double L = 0;
        for (double x : xs) {
            auto j = forward_jet1(q, spec, x);
            L += j.u * j.u + 0.5 * j.ux * j.ux + 0.1 * j.uxx * j.uxx;
        }
        return L;
    };
    REQUIRE(loss == Catch::Approx(loss_only(p)).epsilon(1e-12));

    for (std::size_t i = 0; i < p.size(); ++i) {
        const double fd = oracles::fd_partial(loss_only, p, i, 1e-6);
        REQUIRE(oracles::grad_close(grad[i], fd, loss, 1e-6, 1e-5));
    }
}

TEST_CASE("forward_jet_head: single head equals the standalone network") {
    MultiHeadSpec mh({1, 50}, {50, 50, 1}, 1);
    auto p = init_params(mh, InitScheme::normal(1.0), 31);
    auto standalone = mh.assemble_standalone(p, 0);
    auto spec = mh.standalone_spec();
    REQUIRE(spec.layer_widths == std::vector<int>{1, 50, 50, 1});
    for (double x : {0.0, 0.25, 0.9}) {
        auto a = forward_jet_head(p, mh, 0, x);
        auto b = forward_jet1(standalone, spec, x);
        REQUIRE(a.u == b.u);
        REQUIRE(a.ux == b.ux);
        REQUIRE(a.uxx == b.uxx);
    }
}

TEST_CASE("forward_jet_head: identical head parameters give identical jets") {
    MultiHeadSpec mh({1, 20}, {20, 20, 1}, 2);
    auto p = init_params(mh, InitScheme::normal(1.0), 8);
    const std::size_t nb = mh.body_param_count(), nh = mh.head_param_count();
    std::copy(p.begin() + nb, p.begin() + nb + nh, p.begin() + nb + nh);
    auto a = forward_jet_head(p, mh, 0, 0.4);
    auto b = forward_jet_head(p, mh, 1, 0.4);
    REQUIRE(a.u == b.u);
    REQUIRE(a.ux == b.ux);
    REQUIRE(a.uxx == b.uxx);
}

TEST_CASE("forward_jet_head: 1000 heads match 1000 standalone assemblies exactly") {
    MultiHeadSpec mh({1, 50}, {50, 50, 1}, 1000);
    auto p = init_params(mh, InitScheme::normal(2.0), 606);
    auto spec = mh.standalone_spec();
    for (int head = 0; head < 1000; ++head) {
        auto a = forward_jet_head(p, mh, head, 0.5);
        auto b = forward_jet1(mh.assemble_standalone(p, head), spec, 0.5);
        REQUIRE(a.u == b.u);
        REQUIRE(a.ux == b.ux);
        REQUIRE(a.uxx == b.uxx);
    }
}

TEST_CASE("forward_jet_head: out-of-range head throws") {
    MultiHeadSpec mh({1, 10}, {10, 1}, 3);
    auto p = init_params(mh, InitScheme::normal(1.0), 2);
    REQUIRE_THROWS(forward_jet_head(p, mh, 3, 0.1));
}

TEST_CASE("multi-head gradient: body gradient is the mean of per-head body gradients") {
    MultiHeadSpec mh({1, 10}, {10, 10, 1}, 3);
    auto p = init_params(mh, InitScheme::normal(1.0), 55);
    std::vector<double> xs = {0.1, 0.4, 0.8};
    const int H = mh.n_heads;

    // multi-head pass: loss = mean over heads of sum_i u_h(x_i)^2
    MultiHeadEvaluator ev(mh);
    ev.forward_body(p, xs);
    ParamVector grad(mh.param_count(), 0.0);
    for (int h = 0; h < H; ++h) {
        ev.forward_head(h);
        for (int i = 0; i < (int)xs.size(); ++i) {
            auto j = ev.jet1(i);
            ev.add_seed1(i, {2 * j.u / H, 0, 0});
        }
        ev.reverse_head(grad);
    }
    ev.reverse_body(grad);

    // oracle: mean of standalone per-head gradients, body block
    auto spec = mh.standalone_spec();
    std::vector<double> body_mean(mh.body_param_count(), 0.0);
    for (int h = 0; h < H; ++h) {
        auto ph = mh.assemble_standalone(p, h);
        auto [loss, g] = loss_gradient(ph, spec, xs, [&](JetEvaluator& e) {
            double L = 0;
            for (int i = 0; i < e.n_points(); ++i) {
                auto j = e.jet1(i);
                L += j.u * j.u;
                e.add_seed1(i, {2 * j.u, 0, 0});
            }
            return L;
        });
        (void)loss;
        for (std::size_t k = 0; k < body_mean.size(); ++k) body_mean[k] += g[k] / H;
    }
    for (std::size_t k = 0; k < body_mean.size(); ++k)
        REQUIRE(grad[k] == Catch::Approx(body_mean[k]).epsilon(1e-12).margin(1e-14));
}

TEST_CASE("determinism: identical inputs give bitwise-identical jets") {
    NetworkSpec spec({1, 50, 50, 1});
    auto p = init_params(spec, InitScheme::uniform(2.0), 12);
    auto a = forward_jet1(p, spec, 0.37);
    auto b = forward_jet1(p, spec, 0.37);
    REQUIRE(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("Laplacian mode agrees with full jets in value and gradient") {
    NetworkSpec spec({2, 30, 30, 1});
    auto p = init_params(spec, InitScheme::normal(0.7), 91);
    std::vector<double> xs, ys;
    Rng rng(4);
    for (int i = 0; i < 40; ++i) {
        xs.push_back(rng.uniform01());
        ys.push_back(rng.uniform01());
    }

    JetEvaluator full(spec, JetEvaluator::Mode::FullJets);
    JetEvaluator lap(spec, JetEvaluator::Mode::Laplacian);
    full.forward(p, xs, ys);
    lap.forward(p, xs, ys);

    // loss = sum (lap u)^2 + u^2 seeded identically through both modes
    ParamVector gf, gl;
    for (int i = 0; i < 40; ++i) {
        auto j2 = full.jet2(i);
        auto jl = lap.jet_lap(i);
        REQUIRE(jl.u == j2.u);
        REQUIRE(jl.ux == j2.ux);
        REQUIRE(jl.uy == j2.uy);
        REQUIRE(jl.lap == Catch::Approx(j2.uxx + j2.uyy).epsilon(1e-12).margin(1e-14));
        const double L = j2.uxx + j2.uyy;
        full.add_seed2(i, {2 * j2.u, 0, 0, 2 * L, 2 * L});
        lap.add_seed_lap(i, {2 * jl.u, 0, 0, 2 * jl.lap});
    }
    full.reverse(p, gf);
    lap.reverse(p, gl);
    double scale = 0;
    for (double g : gf) scale = std::max(scale, std::abs(g));
    for (std::size_t k = 0; k < gf.size(); ++k)
        REQUIRE(gl[k] == Catch::Approx(gf[k]).epsilon(1e-11).margin(1e-11 * scale));
}
