#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "multisol/problems.hpp"
#include "multisol/rng.hpp"
#include "oracles.hpp"

using namespace multisol;

TEST_CASE("residual1d: Bratu on the zero jet") {
    ProblemSpec p(Bratu{1.0});
    REQUIRE(residual1d(p, 0.3, {0, 0, 0}) == Catch::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("residual1d: boundary layer keeps only +u on constant jets") {
    ProblemSpec p(BoundaryLayer{0.06});
    REQUIRE(residual1d(p, 0.1, {3.5, 0, 0}) == Catch::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("residual1d: prescribed reaction-diffusion solution annihilates the residual") {
    ProblemSpec p(ReactionDiffusion{0.01, 0.7, 6.0});
    for (double x : {0.3, -0.77, 0.123, 0.999}) {
        const Jet1 j = prescribed_rd_solution(6.0, x);
        REQUIRE(std::abs(residual1d(p, x, j)) < 1e-12);
    }
}

TEST_CASE("residual1d rejects 2D problems") {
    ProblemSpec p(AllenCahn2D{0.01});
    REQUIRE_THROWS(residual1d(p, 0.5, {0, 0, 0}));
}

TEST_CASE("residual2d: trivial Allen-Cahn jets") {
    ProblemSpec p(AllenCahn2D{0.01});
    REQUIRE(residual2d(p, 0.4, 0.6, {1, 0, 0, 0, 0}) == 0.0);
    REQUIRE(residual2d(p, 0.4, 0.6, {0, 0, 0, 0, 0}) == 0.0);
}

TEST_CASE("residual2d: sourced Poisson at the domain center") {
    ProblemSpec p(SourcedPoisson2D{800.0});
    REQUIRE(residual2d(p, 0.5, 0.5, {0, 0, 0, 0, 0}) == Catch::Approx(-800.0).epsilon(1e-14));
}

TEST_CASE("residual partials match finite differences of the residual") {
    Rng rng(17);
    std::vector<ProblemSpec> probs = {ProblemSpec(Bratu{1.3}), ProblemSpec(BoundaryLayer{0.06}),
                                      ProblemSpec(ReactionDiffusion{0.01, 0.7, 6.0})};
    for (const auto& p : probs) {
        for (int trial = 0; trial < 20; ++trial) {
            const double x = p.domain_min() + (p.domain_max() - p.domain_min()) * rng.uniform01();
            Jet1 j{rng.normal(1.0), rng.normal(1.0), rng.normal(1.0)};
            const Jet1 pr = residual1d_partials(p, x, j);
            const double h = 1e-7;
            auto fd = [&](double Jet1::* field) {
                Jet1 jp = j, jm = j;
                jp.*field += h;
                jm.*field -= h;
                return (residual1d(p, x, jp) - residual1d(p, x, jm)) / (2 * h);
            };
            REQUIRE(pr.u == Catch::Approx(fd(&Jet1::u)).epsilon(1e-6).margin(1e-8));
            REQUIRE(pr.ux == Catch::Approx(fd(&Jet1::ux)).epsilon(1e-6).margin(1e-8));
            REQUIRE(pr.uxx == Catch::Approx(fd(&Jet1::uxx)).epsilon(1e-6).margin(1e-8));
        }
    }
    std::vector<ProblemSpec> probs2 = {ProblemSpec(AllenCahn2D{0.01}), ProblemSpec(SourcedPoisson2D{800})};
    for (const auto& p : probs2) {
        for (int trial = 0; trial < 20; ++trial) {
            const double x = rng.uniform01(), y = rng.uniform01();
            Jet2 j{rng.normal(1.0), rng.normal(1.0), rng.normal(1.0), rng.normal(1.0), rng.normal(1.0)};
            const Jet2 pr = residual2d_partials(p, x, y, j);
            const double h = 1e-7;
            auto fd = [&](double Jet2::* field) {
                Jet2 jp = j, jm = j;
                jp.*field += h;
                jm.*field -= h;
                return (residual2d(p, x, y, jp) - residual2d(p, x, y, jm)) / (2 * h);
            };
            REQUIRE(pr.u == Catch::Approx(fd(&Jet2::u)).epsilon(1e-5).margin(1e-7));
            REQUIRE(pr.uxx == Catch::Approx(fd(&Jet2::uxx)).epsilon(1e-6).margin(1e-8));
            REQUIRE(pr.uyy == Catch::Approx(fd(&Jet2::uyy)).epsilon(1e-6).margin(1e-8));
        }
    }
}

TEST_CASE("hard BC transform: Bratu endpoints vanish exactly") {
    ProblemSpec p(Bratu{1.0});
    for (double v : {-2.3, 0.0, 5.5}) {
        REQUIRE(hard_bc_transform(p, 0.0, {v, 1.0, -1.0}).u == 0.0);
        REQUIRE(hard_bc_transform(p, 1.0, {v, 1.0, -1.0}).u == 0.0);
    }
}

TEST_CASE("hard BC transform: boundary-layer endpoint values") {
    ProblemSpec p(BoundaryLayer{0.06});
    REQUIRE(hard_bc_transform(p, -0.5, {3.0, 0, 0}).u == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(hard_bc_transform(p, 0.5, {3.0, 0, 0}).u == Catch::Approx(-1.0).margin(1e-15));
}

TEST_CASE("hard BC transform: product rule at x=0.5") {
    // u = x(1-x) v: with raw jet (1,0,0), u'' = -2 v + 2(1-2x) v' + x(1-x) v''
    ProblemSpec p(Bratu{1.0});
    const Jet1 out = hard_bc_transform(p, 0.5, {1.0, 0.0, 0.0});
    REQUIRE(out.u == Catch::Approx(0.25).epsilon(1e-15));
    REQUIRE(out.ux == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(out.uxx == Catch::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("hard BC transform matches finite differences of the transformed function") {
    // treat v as a fixed smooth function and check all three components
    ProblemSpec p(BoundaryLayer{0.06});
    auto v = [](double x) { return std::sin(3 * x) + 0.5 * x * x; };
    auto vj = [&](double x) { return Jet1{v(x), 3 * std::cos(3 * x) + x, -9 * std::sin(3 * x) + 1.0}; };
    auto u = [&](double x) { return hard_bc_transform(p, x, vj(x)).u; };
    for (double x : {-0.4, -0.1, 0.22, 0.45}) {
        const Jet1 out = hard_bc_transform(p, x, vj(x));
        REQUIRE(out.ux == Catch::Approx(oracles::fd_first(u, x, 1e-5)).epsilon(1e-8));
        REQUIRE(out.uxx == Catch::Approx(oracles::fd_second(u, x, 1e-4)).epsilon(1e-6));
    }
}

TEST_CASE("hard BC pullback is the transpose of the transform's jet map") {
    ProblemSpec p(BoundaryLayer{0.06});
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const double x = rng.uniform_sym(0.5);
        const auto tc = hard_bc_coeffs(p, x);
        const Jet1 raw{rng.normal(1.0), rng.normal(1.0), rng.normal(1.0)};
        const Jet1 seed{rng.normal(1.0), rng.normal(1.0), rng.normal(1.0)};
        // <seed, T(raw)> == <pullback(seed), raw> for the linear-in-v part
        const Jet1 fwd = hard_bc_transform(p, x, raw);
        const Jet1 zero_fwd = hard_bc_transform(p, x, {0, 0, 0});
        const double lhs = seed.u * (fwd.u - zero_fwd.u) + seed.ux * (fwd.ux - zero_fwd.ux) +
                           seed.uxx * (fwd.uxx - zero_fwd.uxx);
        const Jet1 pb = hard_bc_pullback(tc, seed);
        const double rhs = pb.u * raw.u + pb.ux * raw.ux + pb.uxx * raw.uxx;
        REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12).margin(1e-13));
    }
}

TEST_CASE("source_rd: odd symmetry and zero at origin") {
    REQUIRE(source_rd(0.01, 0.7, 6.0, 0.0) == 0.0);
    for (double x : {0.1, 0.37, 0.92}) {
        REQUIRE(source_rd(0.01, 0.7, 6.0, -x) ==
                Catch::Approx(-source_rd(0.01, 0.7, 6.0, x)).epsilon(1e-13).margin(1e-15));
    }
}

TEST_CASE("source_rd matches the FD oracle built from u* directly") {
    const double D = 0.01, kap = 0.7, w = 6.0;
    auto ustar = [&](double x) { return std::pow(std::sin(w * x), 3); };
    for (double x : {0.1, -0.63, 0.31}) {
        const double fd = D * oracles::fd_second(ustar, x, 1e-4) + kap * std::tanh(ustar(x));
        REQUIRE(source_rd(D, kap, w, x) == Catch::Approx(fd).epsilon(1e-7).margin(1e-8));
    }
}

TEST_CASE("prescribed_rd_solution: values and derivative oracle") {
    REQUIRE(prescribed_rd_solution(6.0, 0.0).u == 0.0);
    const double peak = 3.14159265358979323846 / 12.0; // pi/(2w)
    REQUIRE(prescribed_rd_solution(6.0, peak).u == Catch::Approx(1.0).epsilon(1e-12));
    auto ustar = [](double x) { return std::pow(std::sin(6.0 * x), 3); };
    for (double x : {0.21, -0.55, 0.83}) {
        const Jet1 j = prescribed_rd_solution(6.0, x);
        REQUIRE(j.uxx == Catch::Approx(oracles::fd_second(ustar, x, 1e-4)).epsilon(1e-8).margin(1e-8));
    }
}

TEST_CASE("source_2d: boundary zeros, center value, symmetry") {
    REQUIRE(source_2d(800, 0.0, 0.37) == Catch::Approx(0.0).margin(1e-10));
    REQUIRE(source_2d(800, 0.42, 1.0) == Catch::Approx(0.0).margin(1e-10));
    REQUIRE(source_2d(800, 0.5, 0.5) == Catch::Approx(800.0).epsilon(1e-14));
    REQUIRE(source_2d(800, 0.3, 0.8) == Catch::Approx(source_2d(800, 0.8, 0.3)).epsilon(1e-14));
}

TEST_CASE("bratu_alpha_roots: lambda=1 two roots against independent bisection") {
    const auto r = bratu_alpha_roots(1.0);
    REQUIRE(r.kind == BratuRoots::Kind::TwoRoots);
    // oracle: independent bracketing + bisection on cosh(a) - c a
    const double c = 4.0 / std::sqrt(2.0);
    auto g = [&](double a) { return std::cosh(a) - c * a; };
    const double lo = oracles::bisect(g, 1e-9, std::asinh(c), 1e-13);
    const double hi = oracles::bisect(g, std::asinh(c), 10.0, 1e-13);
    REQUIRE(r.alpha1 == Catch::Approx(lo).margin(1e-11));
    REQUIRE(r.alpha2 == Catch::Approx(hi).margin(1e-11));
    // frozen oracle values (computed with the scipy brentq oracle)
    REQUIRE(r.alpha1 == Catch::Approx(0.3792911497626886).margin(1e-9));
    REQUIRE(r.alpha2 == Catch::Approx(2.7346756930305265).margin(1e-9));
    REQUIRE(std::abs(g(r.alpha1)) < 1e-11);
    REQUIRE(std::abs(g(r.alpha2)) < 1e-11);
    REQUIRE(r.alpha1 < r.alpha2);
}

TEST_CASE("bratu_alpha_roots: critical lambda collapses to a double root") {
    const auto r = bratu_alpha_roots(3.513830719);
    REQUIRE(r.kind == BratuRoots::Kind::DoubleRoot);
    REQUIRE(std::abs(r.alpha1 - r.alpha2) < 1e-4);
    // just below critical: two nearby roots
    const auto r2 = bratu_alpha_roots(3.5138);
    REQUIRE(r2.kind == BratuRoots::Kind::TwoRoots);
    REQUIRE(std::abs(r2.alpha1 - r2.alpha2) < 0.05);
}

TEST_CASE("bratu_alpha_roots: lambda=4 has no root") {
    REQUIRE(bratu_alpha_roots(4.0).kind == BratuRoots::Kind::NoRoot);
}

TEST_CASE("bratu_closed_form: boundary zeros and reflection symmetry") {
    const auto r = bratu_alpha_roots(1.0);
    for (double alpha : {r.alpha1, r.alpha2}) {
        REQUIRE(bratu_closed_form(alpha, 0.0) == Catch::Approx(0.0).margin(1e-14));
        REQUIRE(bratu_closed_form(alpha, 1.0) == Catch::Approx(0.0).margin(1e-14));
        Rng rng(7);
        for (int t = 0; t < 20; ++t) {
            const double x = rng.uniform01();
            REQUIRE(bratu_closed_form(alpha, x) ==
                    Catch::Approx(bratu_closed_form(alpha, 1.0 - x)).epsilon(1e-12).margin(1e-13));
        }
    }
}

TEST_CASE("bratu closed-form jet satisfies the Bratu equation") {
    for (double lambda : {0.5, 1.0, 2.0, 3.5}) {
        const auto r = bratu_alpha_roots(lambda);
        REQUIRE(r.kind == BratuRoots::Kind::TwoRoots);
        ProblemSpec p(Bratu{lambda});
        Rng rng(11);
        for (double alpha : {r.alpha1, r.alpha2}) {
            for (int t = 0; t < 20; ++t) {
                const double x = rng.uniform01();
                REQUIRE(std::abs(residual1d(p, x, bratu_closed_form_jet(alpha, x))) < 1e-10);
            }
        }
    }
}

TEST_CASE("bratu closed-form jet derivatives match finite differences") {
    const auto r = bratu_alpha_roots(1.0);
    auto u = [&](double x) { return bratu_closed_form(r.alpha2, x); };
    for (double x : {0.17, 0.5, 0.83}) {
        const Jet1 j = bratu_closed_form_jet(r.alpha2, x);
        REQUIRE(j.ux == Catch::Approx(oracles::fd_first(u, x, 1e-5)).epsilon(1e-8).margin(1e-9));
        REQUIRE(j.uxx == Catch::Approx(oracles::fd_second(u, x, 1e-4)).epsilon(1e-6).margin(1e-7));
    }
}

TEST_CASE("boundary values: reaction-diffusion endpoints come from u*") {
    ProblemSpec p(ReactionDiffusion{0.01, 0.7, 6.0});
    auto [l, rr] = boundary_values_1d(p);
    REQUIRE(l == Catch::Approx(std::pow(std::sin(-6.0), 3)).epsilon(1e-14));
    REQUIRE(rr == Catch::Approx(std::pow(std::sin(6.0), 3)).epsilon(1e-14));
}

TEST_CASE("boundary values 2D: Allen-Cahn edges and sourced-Poisson zeros") {
    ProblemSpec ac(AllenCahn2D{0.01});
    REQUIRE(boundary_value_2d(ac, 0.0, 0.3) == 1.0);
    REQUIRE(boundary_value_2d(ac, 1.0, 0.9) == 1.0);
    REQUIRE(boundary_value_2d(ac, 0.4, 0.0) == -1.0);
    REQUIRE(boundary_value_2d(ac, 0.7, 1.0) == -1.0);
    ProblemSpec sp(SourcedPoisson2D{800});
    REQUIRE(boundary_value_2d(sp, 0.0, 0.5) == 0.0);
}
