#pragma once

// Built-in self tests for the `check` subcommand: fast finite-difference
// cross-checks of the jet/gradient machinery plus solver smoke tests.

#include <cmath>
#include <cstdio>

#include "multisol/problems.hpp"
#include "multisol/refine.hpp"
#include "multisol/trainer.hpp"

namespace multisol {

inline bool run_oracle_checks() {
    int failed = 0;
    auto report = [&](const char* name, bool ok, double value) {
        std::printf("[check] %-38s %s (%.3e)\n", name, ok ? "PASS" : "FAIL", value);
        failed += ok ? 0 : 1;
    };

    { // jets vs 4th-order finite differences
        NetworkSpec spec({1, 20, 20, 1});
        auto p = init_params(spec, InitScheme::normal(1.0), 11);
        auto f = [&](double x) { return forward_jet1(p, spec, x).u; };
        double worst = 0;
        const double h = 1e-4;
        for (double x : {-0.7, -0.2, 0.3, 0.8}) {
            const Jet1 j = forward_jet1(p, spec, x);
            const double fd1 = (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
            const double fd2 =
                (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h);
            worst = std::max(worst, std::abs(j.ux - fd1) / std::max(1.0, std::abs(fd1)));
            worst = std::max(worst, std::abs(j.uxx - fd2) / std::max(1.0, std::abs(fd2)));
        }
        report("jet derivatives vs finite differences", worst < 1e-6, worst);
    }
    { // loss gradient vs finite differences on a small Bratu loss
        ProblemSpec prob(Bratu{1.0});
        NetworkSpec spec({1, 12, 12, 1});
        auto p = init_params(spec, InitScheme::normal(1.0), 3);
        auto colloc = colloc_even_1d(prob, 15);
        ParamVector grad;
        const double L = pinn_loss_gradient(p, spec, prob, colloc, {}, grad);
        double worst = 0;
        for (std::size_t i = 0; i < p.size(); i += 11) {
            const double h = 1e-6;
            auto q = p;
            q[i] += h;
            const double lp = pinn_loss(q, spec, prob, colloc);
            q[i] -= 2 * h;
            const double lm = pinn_loss(q, spec, prob, colloc);
            const double fd = (lp - lm) / (2 * h);
            worst = std::max(worst, std::abs(grad[i] - fd) /
                                        std::max(std::abs(fd), 1e-10 * std::abs(L) / h));
        }
        report("loss gradient vs finite differences", worst < 1e-5, worst);
    }
    { // closed-form roots
        const auto r = bratu_alpha_roots(1.0);
        const double e1 = std::abs(r.alpha1 - 0.3792911497626886);
        const double e2 = std::abs(r.alpha2 - 2.7346756930305265);
        report("bratu alpha roots", r.kind == BratuRoots::Kind::TwoRoots && e1 < 1e-9 && e2 < 1e-9,
               std::max(e1, e2));
    }
    { // adam contracts a quadratic
        AdamState st(1);
        ParamVector theta = {1.0};
        for (int i = 0; i < 100; ++i) adam_step(st, theta, {2.0 * theta[0]}, 0.1);
        report("adam contraction on theta^2", std::abs(theta[0]) < 0.05, std::abs(theta[0]));
    }
    { // tridiagonal Newton from the closed form
        const auto roots = bratu_alpha_roots(1.0);
        ProblemSpec prob(Bratu{1.0});
        Mesh1D mesh{0.0, 1.0, 400};
        SolutionField g;
        g.dim = 1;
        g.xmin = 0;
        g.xmax = 1;
        g.nx = mesh.n;
        g.values.resize(mesh.n + 1);
        for (int i = 0; i <= mesh.n; ++i) g.values[i] = bratu_closed_form(roots.alpha2, mesh.node(i));
        auto r = newton_solve_1d(prob, mesh, g, {1e-9, 20, 20});
        report("newton refinement (bratu upper branch)", r.converged && max_residual(prob, r.field) <= 1e-9,
               max_residual(prob, r.field));
    }
    std::printf("[check] %s\n", failed == 0 ? "all checks passed" : "CHECK FAILURES PRESENT");
    return failed == 0;
}

} // namespace multisol
