#pragma once

#include <cmath>
#include <stdexcept>
#include <variant>

#include "multisol/autodiff.hpp"

namespace multisol {

// ---------------------------------------------------------------------------
// Problem definitions
//
// Residuals follow the convention residual = LHS - RHS with each equation
// written exactly as displayed; the finite-difference refinement shares the
// convention so max-residual reports are comparable across solvers.
// ---------------------------------------------------------------------------

/// u'' + lambda exp(u) = 0 on (0,1), u(0) = u(1) = 0. Hard BC via
/// u = x(1-x) v.
struct Bratu {
    double lambda = 1.0;
};

/// eps u'' - u u' + u = 0 on (-0.5, 0.5), u(-0.5) = 1, u(0.5) = -1.
/// Hard BC via u = (0.5+x)(0.5-x) v - 2x.
struct BoundaryLayer {
    double eps = 0.06;
};

/// D u'' + kappa tanh(u) = f on (-1,1) with f manufactured from the
/// prescribed solution u*(x) = sin^3(w x); soft Dirichlet BCs u*(+-1).
struct ReactionDiffusion {
    double D = 0.01;
    double kappa = 0.7;
    double w = 6.0;
};

/// -eps (u_xx + u_yy) + u^3 - u = 0 on (0,1)^2; u = -1 on the horizontal
/// edges, +1 on the vertical edges. Soft BCs.
struct AllenCahn2D {
    double eps = 0.01;
};

/// (u_xx + u_yy) + u^2 = s sin(pi x) sin(pi y) on (0,1)^2, u = 0 on the
/// boundary. Soft BCs.
struct SourcedPoisson2D {
    double s = 800.0;
};

struct ProblemSpec {
    std::variant<Bratu, BoundaryLayer, ReactionDiffusion, AllenCahn2D, SourcedPoisson2D> eq;

    ProblemSpec() : eq(Bratu{}) {}
    template <typename E>
    ProblemSpec(E e) : eq(e) {}

    bool is_1d() const {
        return std::holds_alternative<Bratu>(eq) || std::holds_alternative<BoundaryLayer>(eq) ||
               std::holds_alternative<ReactionDiffusion>(eq);
    }
    bool is_2d() const { return !is_1d(); }

    bool has_hard_bc() const {
        return std::holds_alternative<Bratu>(eq) || std::holds_alternative<BoundaryLayer>(eq);
    }

    double domain_min() const {
        if (std::holds_alternative<Bratu>(eq)) return 0.0;
        if (std::holds_alternative<BoundaryLayer>(eq)) return -0.5;
        if (std::holds_alternative<ReactionDiffusion>(eq)) return -1.0;
        return 0.0; // 2D problems live on (0,1)^2
    }
    double domain_max() const {
        if (std::holds_alternative<Bratu>(eq)) return 1.0;
        if (std::holds_alternative<BoundaryLayer>(eq)) return 0.5;
        if (std::holds_alternative<ReactionDiffusion>(eq)) return 1.0;
        return 1.0;
    }
};

/// Constraint u(x_c) > 0 or u(x_c) < 0 imposed as an exp penalty (the
/// violated direction grows the penalty).
struct ConstraintSpec {
    double x_c = 0.0;
    enum class Direction { GreaterThanZero, LessThanZero };
    Direction direction = Direction::GreaterThanZero;
};

// ---------------------------------------------------------------------------
// Sources and reference solutions
// ---------------------------------------------------------------------------

/// Prescribed reaction-diffusion solution u*(x) = sin^3(w x) with analytic
/// first and second derivatives.
inline Jet1 prescribed_rd_solution(double w, double x) {
    const double s = std::sin(w * x), c = std::cos(w * x);
    Jet1 j;
    j.u = s * s * s;
    j.ux = 3.0 * w * s * s * c;
    j.uxx = 3.0 * w * w * s * (2.0 * c * c - s * s);
    return j;
}

/// Manufactured source f = D u*'' + kappa tanh(u*).
inline double source_rd(double D, double kappa, double w, double x) {
    const Jet1 j = prescribed_rd_solution(w, x);
    return D * j.uxx + kappa * std::tanh(j.u);
}

/// f(x, y) = s sin(pi x) sin(pi y).
inline double source_2d(double s, double x, double y) {
    constexpr double pi = 3.14159265358979323846;
    return s * std::sin(pi * x) * std::sin(pi * y);
}

// ---------------------------------------------------------------------------
// Residuals over jets
// ---------------------------------------------------------------------------

/// Differential-operator side F[u] evaluated on a jet (no source).
inline double operator_lhs_1d(const ProblemSpec& problem, const Jet1& jet) {
    if (const auto* b = std::get_if<Bratu>(&problem.eq))
        return jet.uxx + b->lambda * std::exp(jet.u);
    if (const auto* bl = std::get_if<BoundaryLayer>(&problem.eq))
        return bl->eps * jet.uxx - jet.u * jet.ux + jet.u;
    if (const auto* rd = std::get_if<ReactionDiffusion>(&problem.eq))
        return rd->D * jet.uxx + rd->kappa * std::tanh(jet.u);
    throw std::invalid_argument("operator_lhs_1d: problem is not one-dimensional");
}

/// Source term f(x); zero for the homogeneous equations.
inline double source_1d(const ProblemSpec& problem, double x) {
    if (const auto* rd = std::get_if<ReactionDiffusion>(&problem.eq))
        return source_rd(rd->D, rd->kappa, rd->w, x);
    if (problem.is_1d()) return 0.0;
    throw std::invalid_argument("source_1d: problem is not one-dimensional");
}

inline double residual1d(const ProblemSpec& problem, double x, const Jet1& jet) {
    return operator_lhs_1d(problem, jet) - source_1d(problem, x);
}

/// Partial derivatives of residual1d with respect to the jet components.
inline Jet1 residual1d_partials(const ProblemSpec& problem, double /*x*/, const Jet1& jet) {
    if (const auto* b = std::get_if<Bratu>(&problem.eq))
        return {b->lambda * std::exp(jet.u), 0.0, 1.0};
    if (const auto* bl = std::get_if<BoundaryLayer>(&problem.eq))
        return {1.0 - jet.ux, -jet.u, bl->eps};
    if (const auto* rd = std::get_if<ReactionDiffusion>(&problem.eq)) {
        const double t = std::tanh(jet.u);
        return {rd->kappa * (1.0 - t * t), 0.0, rd->D};
    }
    throw std::invalid_argument("residual1d_partials: problem is not one-dimensional");
}

inline double operator_lhs_2d(const ProblemSpec& problem, const Jet2& jet) {
    if (const auto* ac = std::get_if<AllenCahn2D>(&problem.eq))
        return -ac->eps * (jet.uxx + jet.uyy) + jet.u * jet.u * jet.u - jet.u;
    if (std::holds_alternative<SourcedPoisson2D>(problem.eq))
        return (jet.uxx + jet.uyy) + jet.u * jet.u;
    throw std::invalid_argument("operator_lhs_2d: problem is not two-dimensional");
}

inline double source_term_2d(const ProblemSpec& problem, double x, double y) {
    if (const auto* sp = std::get_if<SourcedPoisson2D>(&problem.eq)) return source_2d(sp->s, x, y);
    if (problem.is_2d()) return 0.0;
    throw std::invalid_argument("source_term_2d: problem is not two-dimensional");
}

inline double residual2d(const ProblemSpec& problem, double x, double y, const Jet2& jet) {
    return operator_lhs_2d(problem, jet) - source_term_2d(problem, x, y);
}

inline Jet2 residual2d_partials(const ProblemSpec& problem, double /*x*/, double /*y*/, const Jet2& jet) {
    if (const auto* ac = std::get_if<AllenCahn2D>(&problem.eq))
        return {3.0 * jet.u * jet.u - 1.0, 0.0, 0.0, -ac->eps, -ac->eps};
    if (std::holds_alternative<SourcedPoisson2D>(problem.eq))
        return {2.0 * jet.u, 0.0, 0.0, 1.0, 1.0};
    throw std::invalid_argument("residual2d_partials: problem is not two-dimensional");
}

// ---------------------------------------------------------------------------
// Hard boundary-condition transforms: u = m(x) v + c(x)
// ---------------------------------------------------------------------------

/// Coefficients of the affine-in-v transform and their derivatives.
struct HardBCCoeffs {
    double m, mp, mpp; // m, m', m''
    double c, cp, cpp; // c, c', c''
};

inline HardBCCoeffs hard_bc_coeffs(const ProblemSpec& problem, double x) {
    if (std::holds_alternative<Bratu>(problem.eq))
        return {x * (1.0 - x), 1.0 - 2.0 * x, -2.0, 0.0, 0.0, 0.0};
    if (std::holds_alternative<BoundaryLayer>(problem.eq))
        return {(0.5 + x) * (0.5 - x), -2.0 * x, -2.0, -2.0 * x, -2.0, 0.0};
    throw std::invalid_argument("hard_bc_coeffs: problem has no hard BC transform");
}

/// Product-rule propagation of the raw network jet through u = m v + c.
inline Jet1 hard_bc_transform(const ProblemSpec& problem, double x, const Jet1& raw) {
    const HardBCCoeffs t = hard_bc_coeffs(problem, x);
    Jet1 out;
    out.u = t.m * raw.u + t.c;
    out.ux = t.mp * raw.u + t.m * raw.ux + t.cp;
    out.uxx = t.mpp * raw.u + 2.0 * t.mp * raw.ux + t.m * raw.uxx + t.cpp;
    return out;
}

/// Adjoint of hard_bc_transform: maps seeds on the transformed jet back to
/// seeds on the raw jet (transpose of the linear-in-v part).
inline Jet1 hard_bc_pullback(const HardBCCoeffs& t, const Jet1& seed) {
    Jet1 raw;
    raw.u = t.m * seed.u + t.mp * seed.ux + t.mpp * seed.uxx;
    raw.ux = t.m * seed.ux + 2.0 * t.mp * seed.uxx;
    raw.uxx = t.m * seed.uxx;
    return raw;
}

// ---------------------------------------------------------------------------
// Bratu closed form
// ---------------------------------------------------------------------------

/// Roots of g(alpha) = cosh(alpha) - (4/sqrt(2 lambda)) alpha.
struct BratuRoots {
    enum class Kind { TwoRoots, DoubleRoot, NoRoot };
    Kind kind = Kind::NoRoot;
    double alpha1 = 0.0; // smaller root (or the double root)
    double alpha2 = 0.0; // larger root
};

/// Critical lambda above which g has no root (given to 9 decimals in the
/// literature; values within 1e-9 are treated as the double-root case).
inline constexpr double bratu_lambda_critical = 3.513830719;

inline BratuRoots bratu_alpha_roots(double lambda) {
    if (lambda <= 0.0) throw std::invalid_argument("bratu_alpha_roots: lambda must be positive");
    const double c = 4.0 / std::sqrt(2.0 * lambda);
    auto g = [c](double a) { return std::cosh(a) - c * a; };
    const double a_min = std::asinh(c); // g'(a) = sinh(a) - c
    BratuRoots out;
    if (std::abs(lambda - bratu_lambda_critical) <= 1e-9) {
        out.kind = BratuRoots::Kind::DoubleRoot;
        out.alpha1 = out.alpha2 = a_min;
        return out;
    }
    if (g(a_min) >= 0.0) {
        out.kind = BratuRoots::Kind::NoRoot;
        return out;
    }
    auto bisect = [&g](double lo, double hi) {
        // invariant: sign change across [lo, hi]
        double flo = g(lo);
        for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
            double mid = 0.5 * (lo + hi);
            double fm = g(mid);
            if ((flo <= 0.0) == (fm <= 0.0)) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    };
    double hi = a_min;
    while (g(hi) < 0.0) hi *= 2.0;
    out.kind = BratuRoots::Kind::TwoRoots;
    out.alpha1 = bisect(0.0, a_min);
    out.alpha2 = bisect(a_min, hi);
    return out;
}

/// log(cosh(y)) without overflow for large |y|.
inline double log_cosh(double y) {
    const double a = std::abs(y);
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

/// u(x; alpha) = 2 log(cosh(alpha) / cosh(alpha (1 - 2x))).
inline double bratu_closed_form(double alpha, double x) {
    return 2.0 * (log_cosh(alpha) - log_cosh(alpha * (1.0 - 2.0 * x)));
}

/// Analytic jet of the closed form (for oracle use).
inline Jet1 bratu_closed_form_jet(double alpha, double x) {
    const double y = alpha * (1.0 - 2.0 * x);
    const double th = std::tanh(y);
    Jet1 j;
    j.u = bratu_closed_form(alpha, x);
    j.ux = 4.0 * alpha * th;
    const double sech2 = 1.0 - th * th;
    j.uxx = -8.0 * alpha * alpha * sech2;
    return j;
}

// ---------------------------------------------------------------------------
// Boundary values
// ---------------------------------------------------------------------------

/// Dirichlet values at the 1D endpoints (left, right).
inline std::pair<double, double> boundary_values_1d(const ProblemSpec& problem) {
    if (std::holds_alternative<Bratu>(problem.eq)) return {0.0, 0.0};
    if (std::holds_alternative<BoundaryLayer>(problem.eq)) return {1.0, -1.0};
    if (const auto* rd = std::get_if<ReactionDiffusion>(&problem.eq))
        return {prescribed_rd_solution(rd->w, -1.0).u, prescribed_rd_solution(rd->w, 1.0).u};
    throw std::invalid_argument("boundary_values_1d: problem is not one-dimensional");
}

/// Dirichlet value on the boundary of (0,1)^2 at (x, y). Corners take the
/// vertical-edge value for Allen-Cahn (no interior stencil reads them).
inline double boundary_value_2d(const ProblemSpec& problem, double x, double y) {
    if (std::holds_alternative<AllenCahn2D>(problem.eq)) {
        if (x == 0.0 || x == 1.0) return 1.0;
        if (y == 0.0 || y == 1.0) return -1.0;
        throw std::invalid_argument("boundary_value_2d: point not on the boundary");
    }
    if (std::holds_alternative<SourcedPoisson2D>(problem.eq)) return 0.0;
    throw std::invalid_argument("boundary_value_2d: problem is not two-dimensional");
}

} // namespace multisol
