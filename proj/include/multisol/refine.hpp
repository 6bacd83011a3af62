#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "multisol/clustering.hpp"
#include "multisol/problems.hpp"

namespace multisol {

struct Mesh1D {
    double xmin = 0.0, xmax = 1.0;
    int n = 100; // intervals; n+1 nodes

    double h() const { return (xmax - xmin) / n; }
    double node(int i) const { return ((n - i) * xmin + i * xmax) / n; }

    static Mesh1D for_problem(const ProblemSpec& p, int n) {
        if (!p.is_1d()) throw std::invalid_argument("Mesh1D: 2D problem");
        return {p.domain_min(), p.domain_max(), n};
    }
};

struct Grid2D {
    int nx = 128, ny = 128; // intervals on (0,1)^2

    double hx() const { return 1.0 / nx; }
    double hy() const { return 1.0 / ny; }
    double node_x(int ix) const { return static_cast<double>(ix) / nx; }
    double node_y(int iy) const { return static_cast<double>(iy) / ny; }
};

struct NewtonOptions {
    double tol = 1e-12;    // residual max-norm convergence criterion
    int max_iter = 100;
    int max_halvings = 20; // line-search backtracking limit (min step 2^-20)
};

struct RefineResult {
    SolutionField field;
    std::vector<double> residual_history; // max norms, including the initial one
    bool converged = false;
    int iterations = 0;
};

// ---------------------------------------------------------------------------
// 1D: second-order central differences, tridiagonal Newton
// ---------------------------------------------------------------------------

/// Interior residuals of the 1D equation on the field's mesh. Second
/// differences are assembled from pairwise node differences (exact under
/// Sterbenz subtraction), which keeps the round-off floor minimal.
inline std::vector<double> assemble_residual_1d(const ProblemSpec& problem, const SolutionField& f) {
    if (f.dim != 1) throw std::invalid_argument("assemble_residual_1d: field is not 1D");
    const int n = f.nx;
    const double h = f.hx();
    std::vector<double> r(n - 1);
    for (int i = 1; i < n; ++i) {
        const double d1 = f.values[i - 1] - f.values[i];
        const double d2 = f.values[i + 1] - f.values[i];
        Jet1 jet;
        jet.u = f.values[i];
        jet.ux = (f.values[i + 1] - f.values[i - 1]) / (2.0 * h);
        jet.uxx = (d1 + d2) / (h * h);
        r[i - 1] = residual1d(problem, f.node_x(i), jet);
    }
    return r;
}

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// Damped Newton with tridiagonal analytic Jacobian; backtracks on the
/// residual max norm. Non-convergence returns converged=false with the
/// history rather than throwing.
inline RefineResult newton_solve_1d(const ProblemSpec& problem, const Mesh1D& mesh,
                                    const SolutionField& guess, const NewtonOptions& opts = {}) {
    if (!problem.is_1d()) throw std::invalid_argument("newton_solve_1d: problem is not 1D");
    const int n = mesh.n;
    RefineResult out;
    out.field = guess;
    if (guess.dim != 1 || guess.nx != n)
        throw std::invalid_argument("newton_solve_1d: guess does not match the mesh");
    // endpoints are pinned to the boundary values, not solved
    const auto [ul, ur] = boundary_values_1d(problem);
    out.field.values.front() = ul;
    out.field.values.back() = ur;

    const double h = mesh.h();
    std::vector<double> r = assemble_residual_1d(problem, out.field);
    double rn = max_abs(r);
    out.residual_history.push_back(rn);

    std::vector<double> lower(n - 1), diag(n - 1), upper(n - 1), rhs(n - 1), delta(n - 1);
    std::vector<double> trial(out.field.values.size());

    for (int it = 0; it < opts.max_iter && rn > opts.tol; ++it) {
        // tridiagonal Jacobian rows from the residual partials
        for (int i = 1; i < n; ++i) {
            Jet1 jet;
            jet.u = out.field.values[i];
            jet.ux = (out.field.values[i + 1] - out.field.values[i - 1]) / (2.0 * h);
            jet.uxx = ((out.field.values[i - 1] - out.field.values[i]) +
                       (out.field.values[i + 1] - out.field.values[i])) /
                      (h * h);
            const Jet1 pr = residual1d_partials(problem, mesh.node(i), jet);
            lower[i - 1] = pr.uxx / (h * h) - pr.ux / (2.0 * h);
            diag[i - 1] = -2.0 * pr.uxx / (h * h) + pr.u;
            upper[i - 1] = pr.uxx / (h * h) + pr.ux / (2.0 * h);
            rhs[i - 1] = -r[i - 1];
        }
        // Thomas elimination
        for (int i = 1; i < n - 1; ++i) {
            const double m = lower[i] / diag[i - 1];
            diag[i] -= m * upper[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        delta[n - 2] = rhs[n - 2] / diag[n - 2];
        for (int i = n - 3; i >= 0; --i) delta[i] = (rhs[i] - upper[i] * delta[i + 1]) / diag[i];

        // backtracking line search on the residual max norm
        double step = 1.0;
        bool accepted = false;
        for (int half = 0; half <= opts.max_halvings; ++half) {
            trial = out.field.values;
            for (int i = 1; i < n; ++i) trial[i] += step * delta[i - 1];
            SolutionField tf = out.field;
            tf.values = trial;
            std::vector<double> rt = assemble_residual_1d(problem, tf);
            const double rtn = max_abs(rt);
            if (rtn < rn) {
                out.field.values = trial;
                r = std::move(rt);
                rn = rtn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        out.iterations = it + 1;
        if (!accepted) break; // stalled at the round-off floor
        out.residual_history.push_back(rn);
    }
    out.converged = rn <= opts.tol;
    return out;
}

/// Max norm of the equation residual over interior nodes (1D or 2D).
inline double max_residual(const ProblemSpec& problem, const SolutionField& f);

// ---------------------------------------------------------------------------
// 2D: five-point Laplacian, sparse Newton
// ---------------------------------------------------------------------------

inline std::vector<double> assemble_residual_2d(const ProblemSpec& problem, const SolutionField& f) {
    if (f.dim != 2) throw std::invalid_argument("assemble_residual_2d: field is not 2D");
    const int nx = f.nx, ny = f.ny;
    const double hx = f.hx(), hy = f.hy();
    std::vector<double> r(static_cast<std::size_t>(nx - 1) * (ny - 1));
    std::size_t k = 0;
    for (int iy = 1; iy < ny; ++iy) {
        for (int ix = 1; ix < nx; ++ix, ++k) {
            const double c = f.at(ix, iy);
            const double e = f.at(ix + 1, iy), w = f.at(ix - 1, iy);
            const double nn = f.at(ix, iy + 1), ss = f.at(ix, iy - 1);
            Jet2 jet;
            jet.u = c;
            jet.ux = (e - w) / (2.0 * hx);
            jet.uy = (nn - ss) / (2.0 * hy);
            jet.uxx = ((w - c) + (e - c)) / (hx * hx);
            jet.uyy = ((ss - c) + (nn - c)) / (hy * hy);
            r[k] = residual2d(problem, f.node_x(ix), f.node_y(iy), jet);
        }
    }
    return r;
}

/// Overwrite the boundary ring with the problem's Dirichlet data.
inline void apply_boundary_2d(const ProblemSpec& problem, SolutionField& f) {
    for (int ix = 0; ix <= f.nx; ++ix) {
        f.at(ix, 0) = boundary_value_2d(problem, f.node_x(ix), 0.0);
        f.at(ix, f.ny) = boundary_value_2d(problem, f.node_x(ix), 1.0);
    }
    for (int iy = 0; iy <= f.ny; ++iy) {
        f.at(0, iy) = boundary_value_2d(problem, 0.0, f.node_y(iy));
        f.at(f.nx, iy) = boundary_value_2d(problem, 1.0, f.node_y(iy));
    }
}

/// Sparse damped Newton on the five-point discretization; the linear
/// solves use a direct sparse LU factorization.
inline RefineResult newton_solve_2d(const ProblemSpec& problem, const Grid2D& grid,
                                    const SolutionField& guess, const NewtonOptions& opts = {}) {
    if (!problem.is_2d()) throw std::invalid_argument("newton_solve_2d: problem is not 2D");
    const int nx = grid.nx, ny = grid.ny;
    RefineResult out;
    out.field = guess;
    if (guess.dim != 2 || guess.nx != nx || guess.ny != ny)
        throw std::invalid_argument("newton_solve_2d: guess does not match the grid");
    apply_boundary_2d(problem, out.field);

    const double hx = grid.hx(), hy = grid.hy();
    const int mx = nx - 1, my = ny - 1;
    const int m = mx * my;
    auto idx = [&](int ix, int iy) { return (iy - 1) * mx + (ix - 1); };

    std::vector<double> r = assemble_residual_2d(problem, out.field);
    double rn = max_abs(r);
    out.residual_history.push_back(rn);

    Eigen::SparseMatrix<double> J(m, m);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(m) * 5);
    Eigen::VectorXd rhs(m), delta(m);
    std::vector<double> trial;

    for (int it = 0; it < opts.max_iter && rn > opts.tol; ++it) {
        trips.clear();
        std::size_t k = 0;
        for (int iy = 1; iy < ny; ++iy) {
            for (int ix = 1; ix < nx; ++ix, ++k) {
                const double c = out.field.at(ix, iy);
                const double e = out.field.at(ix + 1, iy), w = out.field.at(ix - 1, iy);
                const double nn = out.field.at(ix, iy + 1), ss = out.field.at(ix, iy - 1);
                Jet2 jet;
                jet.u = c;
                jet.ux = (e - w) / (2.0 * hx);
                jet.uy = (nn - ss) / (2.0 * hy);
                jet.uxx = ((w - c) + (e - c)) / (hx * hx);
                jet.uyy = ((ss - c) + (nn - c)) / (hy * hy);
                const Jet2 pr = residual2d_partials(problem, out.field.node_x(ix), out.field.node_y(iy), jet);
                const int row = static_cast<int>(k);
                trips.emplace_back(row, idx(ix, iy),
                                   pr.u - 2.0 * pr.uxx / (hx * hx) - 2.0 * pr.uyy / (hy * hy));
                if (ix > 1) trips.emplace_back(row, idx(ix - 1, iy), pr.uxx / (hx * hx) - pr.ux / (2.0 * hx));
                if (ix < nx - 1) trips.emplace_back(row, idx(ix + 1, iy), pr.uxx / (hx * hx) + pr.ux / (2.0 * hx));
                if (iy > 1) trips.emplace_back(row, idx(ix, iy - 1), pr.uyy / (hy * hy) - pr.uy / (2.0 * hy));
                if (iy < ny - 1) trips.emplace_back(row, idx(ix, iy + 1), pr.uyy / (hy * hy) + pr.uy / (2.0 * hy));
                rhs[row] = -r[k];
            }
        }
        J.setFromTriplets(trips.begin(), trips.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
        if (lu.info() != Eigen::Success) break; // singular Jacobian: report non-convergence
        delta = lu.solve(rhs);

        double step = 1.0;
        bool accepted = false;
        for (int half = 0; half <= opts.max_halvings; ++half) {
            SolutionField tf = out.field;
            std::size_t kk = 0;
            for (int iy = 1; iy < ny; ++iy)
                for (int ix = 1; ix < nx; ++ix, ++kk) tf.at(ix, iy) += step * delta[kk];
            std::vector<double> rt = assemble_residual_2d(problem, tf);
            const double rtn = max_abs(rt);
            if (rtn < rn) {
                out.field = std::move(tf);
                r = std::move(rt);
                rn = rtn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        out.iterations = it + 1;
        if (!accepted) break;
        out.residual_history.push_back(rn);
    }
    out.converged = rn <= opts.tol;
    return out;
}

inline double max_residual(const ProblemSpec& problem, const SolutionField& f) {
    return f.dim == 1 ? max_abs(assemble_residual_1d(problem, f))
                      : max_abs(assemble_residual_2d(problem, f));
}

// ---------------------------------------------------------------------------
// Artificial-time stability classification (Allen-Cahn)
// ---------------------------------------------------------------------------

struct TimeMarchResult {
    SolutionField final_field;
    std::vector<std::pair<double, SolutionField>> snapshots; // (t, field)
    bool stable = false;       // stayed near its own refined steady state
    int reached_state = -1;    // index into `steady_states` of the closest end state
    double drift = 0.0;        // max-norm distance from the own steady state at T
};

/// Semi-implicit marching of du/dt = eps Lap u - u^3 + u from `init`:
/// implicit diffusion, explicit reaction, boundary pinned. Classified
/// stable if the final state stays within `drift_tol` of `own_steady`;
/// otherwise `reached_state` records the closest steady state.
inline TimeMarchResult time_march_2d(const ProblemSpec& problem, const Grid2D& grid,
                                     const SolutionField& init, double dt, long steps,
                                     const SolutionField& own_steady,
                                     const std::vector<SolutionField>& steady_states,
                                     double drift_tol = 0.05,
                                     const std::vector<double>& snapshot_times = {0, 5, 10, 20, 50}) {
    const auto* ac = std::get_if<AllenCahn2D>(&problem.eq);
    if (!ac) throw std::invalid_argument("time_march_2d: Allen-Cahn problems only");
    const int nx = grid.nx, ny = grid.ny;
    const int mx = nx - 1, my = ny - 1;
    const int m = mx * my;
    const double hx = grid.hx(), hy = grid.hy();

    SolutionField u = init;
    apply_boundary_2d(problem, u);

    // (I - dt eps L) factored once; L includes the Dirichlet ring through
    // the right-hand side
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(m) * 5);
    const double cx = ac->eps * dt / (hx * hx), cy = ac->eps * dt / (hy * hy);
    auto idx = [&](int ix, int iy) { return (iy - 1) * mx + (ix - 1); };
    for (int iy = 1; iy < ny; ++iy) {
        for (int ix = 1; ix < nx; ++ix) {
            const int row = idx(ix, iy);
            trips.emplace_back(row, row, 1.0 + 2.0 * cx + 2.0 * cy);
            if (ix > 1) trips.emplace_back(row, idx(ix - 1, iy), -cx);
            if (ix < nx - 1) trips.emplace_back(row, idx(ix + 1, iy), -cx);
            if (iy > 1) trips.emplace_back(row, idx(ix, iy - 1), -cy);
            if (iy < ny - 1) trips.emplace_back(row, idx(ix, iy + 1), -cy);
        }
    }
    Eigen::SparseMatrix<double> A(m, m);
    A.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
    if (solver.info() != Eigen::Success) throw std::runtime_error("time_march_2d: factorization failed");

    TimeMarchResult out;
    auto maybe_snapshot = [&](long step_index) {
        const double t = step_index * dt;
        for (double ts : snapshot_times)
            if (std::abs(t - ts) < 0.5 * dt) {
                out.snapshots.emplace_back(ts, u);
                return;
            }
    };
    maybe_snapshot(0);

    Eigen::VectorXd rhs(m), sol(m);
    for (long s = 1; s <= steps; ++s) {
        for (int iy = 1; iy < ny; ++iy) {
            for (int ix = 1; ix < nx; ++ix) {
                const double c = u.at(ix, iy);
                double b = c + dt * (c - c * c * c);
                // Dirichlet contributions of the implicit operator
                if (ix == 1) b += cx * u.at(0, iy);
                if (ix == nx - 1) b += cx * u.at(nx, iy);
                if (iy == 1) b += cy * u.at(ix, 0);
                if (iy == ny - 1) b += cy * u.at(ix, ny);
                rhs[idx(ix, iy)] = b;
            }
        }
        sol = solver.solve(rhs);
        for (int iy = 1; iy < ny; ++iy)
            for (int ix = 1; ix < nx; ++ix) u.at(ix, iy) = sol[idx(ix, iy)];
        maybe_snapshot(s);
    }

    out.final_field = u;
    out.drift = max_norm_distance(u, own_steady);
    out.stable = out.drift <= drift_tol;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < steady_states.size(); ++i) {
        const double d = max_norm_distance(u, steady_states[i]);
        if (d < best) {
            best = d;
            out.reached_state = static_cast<int>(i);
        }
    }
    return out;
}

/// Parameter continuation in eps: the converged solution at eps_k seeds
/// the solve at eps_{k+1}.
inline std::vector<RefineResult> continuation_solve(const AllenCahn2D& family,
                                                    const std::vector<double>& eps_sequence,
                                                    const SolutionField& start, const Grid2D& grid,
                                                    const NewtonOptions& opts = {}) {
    (void)family;
    if (eps_sequence.empty()) throw std::invalid_argument("continuation_solve: empty eps sequence");
    std::vector<RefineResult> out;
    const SolutionField* guess = &start;
    for (double eps : eps_sequence) {
        ProblemSpec p(AllenCahn2D{eps});
        out.push_back(newton_solve_2d(p, grid, *guess, opts));
        guess = &out.back().field;
    }
    return out;
}

} // namespace multisol
