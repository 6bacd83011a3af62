#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "multisol/autodiff.hpp"
#include "multisol/net.hpp"
#include "multisol/problems.hpp"
#include "multisol/rng.hpp"

namespace multisol {

struct TrainingSchedule {
    struct Stage {
        long iterations = 0;
        double learning_rate = 1e-3;
    };
    std::vector<Stage> stages;

    TrainingSchedule() = default;
    explicit TrainingSchedule(std::vector<Stage> s) : stages(std::move(s)) { validate(); }

    void validate() const {
        if (stages.empty()) throw std::invalid_argument("TrainingSchedule: needs at least one stage");
        for (const auto& st : stages) {
            if (st.iterations <= 0)
                throw std::invalid_argument("TrainingSchedule: stage iterations must be positive");
            if (st.learning_rate <= 0.0)
                throw std::invalid_argument("TrainingSchedule: learning rate must be positive");
        }
    }

    long total_iterations() const {
        long n = 0;
        for (const auto& st : stages) n += st.iterations;
        return n;
    }
};

/// Residual and boundary data for Eq-style losses. `ys`/`bys` stay empty
/// for 1D problems. The boundary term is normalized by its own count.
struct CollocationSet {
    std::vector<double> xs, ys; // residual points
    std::vector<double> f;      // source targets per residual point
    std::vector<double> bxs, bys;
    std::vector<double> bvals; // boundary targets
    double w_f = 1.0;
    double w_b = 1.0;

    std::size_t n_residual() const { return xs.size(); }
    std::size_t n_boundary() const { return bxs.size(); }
};

/// Evenly spaced residual points including the endpoints; soft-BC problems
/// get their two endpoint targets.
inline CollocationSet colloc_even_1d(const ProblemSpec& problem, int n_points) {
    if (!problem.is_1d()) throw std::invalid_argument("colloc_even_1d: 2D problem");
    if (n_points < 2) throw std::invalid_argument("colloc_even_1d: need at least 2 points");
    CollocationSet c;
    const double a = problem.domain_min(), b = problem.domain_max();
    c.xs.resize(n_points);
    c.f.resize(n_points);
    for (int i = 0; i < n_points; ++i) {
        c.xs[i] = ((n_points - 1 - i) * a + i * b) / (n_points - 1);
        c.f[i] = source_1d(problem, c.xs[i]);
    }
    if (!problem.has_hard_bc()) {
        auto [ul, ur] = boundary_values_1d(problem);
        c.bxs = {a, b};
        c.bvals = {ul, ur};
    }
    return c;
}

/// Uniform-random interior points plus per-edge evenly spaced boundary
/// points excluding the four corners.
inline CollocationSet colloc_random_2d(const ProblemSpec& problem, int n_interior, int per_edge,
                                       std::uint64_t seed) {
    if (!problem.is_2d()) throw std::invalid_argument("colloc_random_2d: 1D problem");
    CollocationSet c;
    Rng rng(seed);
    c.xs.resize(n_interior);
    c.ys.resize(n_interior);
    c.f.resize(n_interior);
    for (int i = 0; i < n_interior; ++i) {
        c.xs[i] = rng.uniform01();
        c.ys[i] = rng.uniform01();
        c.f[i] = source_term_2d(problem, c.xs[i], c.ys[i]);
    }
    for (int i = 1; i <= per_edge; ++i) {
        const double t = static_cast<double>(i) / (per_edge + 1);
        const double pts[4][2] = {{t, 0.0}, {t, 1.0}, {0.0, t}, {1.0, t}};
        for (auto& p : pts) {
            c.bxs.push_back(p[0]);
            c.bys.push_back(p[1]);
            c.bvals.push_back(boundary_value_2d(problem, p[0], p[1]));
        }
    }
    return c;
}

struct ProbeSpec {
    std::vector<double> xs, ys; // probe locations (ys empty for 1D)
    long stride = 10;           // record every `stride` iterations

    std::size_t n_probes() const { return xs.size(); }
};

struct AdamState {
    std::vector<double> m, v;
    long step = 0;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Standard Adam update, beta1=0.9, beta2=0.999, eps=1e-8, bias correction.
inline void adam_step(AdamState& state, ParamVector& params, const ParamVector& grad, double lr) {
    if (params.size() != state.m.size() || grad.size() != state.m.size())
        throw std::invalid_argument("adam_step: dimension mismatch");
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    state.step += 1;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + eps);
    }
}

struct MemberResult {
    ParamVector final_params;
    std::vector<double> stage_final_losses;
    std::vector<std::vector<double>> probe_history; // [probe][record]
    bool diverged = false;
    std::uint64_t seed = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    long iterations_run = 0;
};

namespace detail {

/// Shared loss/seed evaluation over one forward pass. Batch layout:
/// [residual | boundary | constraint | probe] points. Returns the PINN
/// loss; when `seed` is set, writes the jet adjoints of the total loss
/// (including the detached-factor constraint penalty).
struct BatchEvaluator {
    const ProblemSpec& problem;
    const CollocationSet& colloc;
    const std::vector<ConstraintSpec>& constraints;
    const ProbeSpec& probes;
    std::vector<double> xs, ys; // assembled batch
    std::size_t off_boundary = 0, off_constraint = 0, off_probe = 0;

    BatchEvaluator(const ProblemSpec& prob, const CollocationSet& col,
                   const std::vector<ConstraintSpec>& cons, const ProbeSpec& prb)
        : problem(prob), colloc(col), constraints(cons), probes(prb) {
        xs = colloc.xs;
        ys = colloc.ys;
        append(colloc.bxs, colloc.bys);
        off_boundary = colloc.xs.size();
        for (const auto& c : constraints) {
            xs.push_back(c.x_c);
            if (problem.is_2d()) throw std::invalid_argument("constraints are 1D-only");
        }
        off_constraint = off_boundary + colloc.bxs.size();
        append(probes.xs, probes.ys);
        off_probe = off_constraint + constraints.size();
    }

    void append(const std::vector<double>& axs, const std::vector<double>& ays) {
        xs.insert(xs.end(), axs.begin(), axs.end());
        if (problem.is_2d()) {
            if (ays.size() != axs.size())
                throw std::invalid_argument("2D point set missing y coordinates");
            ys.insert(ys.end(), ays.begin(), ays.end());
        }
    }

    void forward(JetEvaluator& ev, const ParamVector& params) const {
        if (problem.is_2d())
            ev.forward(params, xs, ys);
        else
            ev.forward(params, xs);
    }

    /// Transformed u value at batch index i (hard BC applied for 1D).
    double value_at(const JetEvaluator& ev, std::size_t i) const {
        if (problem.is_2d()) return ev.jet_lap(static_cast<int>(i)).u;
        Jet1 j = ev.jet1(static_cast<int>(i));
        if (problem.has_hard_bc()) j = hard_bc_transform(problem, xs[i], j);
        return j.u;
    }

    /// Loss at the current forward state; seeds the evaluator when
    /// `with_seeds`. Non-finite values propagate to the caller.
    double loss(JetEvaluator& ev, bool with_seeds) const {
        double L = 0.0;
        const std::size_t nf = colloc.n_residual();
        const std::size_t nb = colloc.n_boundary();
        const double cf = nf ? colloc.w_f / static_cast<double>(nf) : 0.0;
        const double cb = nb ? colloc.w_b / static_cast<double>(nb) : 0.0;

        if (problem.is_2d()) {
            for (std::size_t i = 0; i < nf; ++i) {
                const JetLap j = ev.jet_lap(static_cast<int>(i));
                const Jet2 full{j.u, j.ux, j.uy, j.lap, 0.0}; // lap carried in uxx slot
                const double r = lhs_lap(full) - colloc.f[i];
                L += cf * r * r;
                if (with_seeds) {
                    const Jet2 pr = residual2d_partials(problem, xs[i], ys[i], {j.u, j.ux, j.uy, 0, 0});
                    const double s = 2.0 * cf * r;
                    ev.add_seed_lap(static_cast<int>(i), {s * pr.u, s * pr.ux, s * pr.uy, s * pr.uxx});
                }
            }
            for (std::size_t k = 0; k < nb; ++k) {
                const std::size_t i = off_boundary + k;
                const double d = ev.jet_lap(static_cast<int>(i)).u - colloc.bvals[k];
                L += cb * d * d;
                if (with_seeds) ev.add_seed_lap(static_cast<int>(i), {2.0 * cb * d, 0, 0, 0});
            }
        } else {
            const bool hard = problem.has_hard_bc();
            for (std::size_t i = 0; i < nf; ++i) {
                Jet1 j = ev.jet1(static_cast<int>(i));
                HardBCCoeffs tc{};
                if (hard) {
                    tc = hard_bc_coeffs(problem, xs[i]);
                    Jet1 tj;
                    tj.u = tc.m * j.u + tc.c;
                    tj.ux = tc.mp * j.u + tc.m * j.ux + tc.cp;
                    tj.uxx = tc.mpp * j.u + 2.0 * tc.mp * j.ux + tc.m * j.uxx + tc.cpp;
                    j = tj;
                }
                const double r = operator_lhs_1d(problem, j) - colloc.f[i];
                L += cf * r * r;
                if (with_seeds) {
                    const Jet1 pr = residual1d_partials(problem, xs[i], j);
                    const double s = 2.0 * cf * r;
                    Jet1 seed{s * pr.u, s * pr.ux, s * pr.uxx};
                    if (hard) seed = hard_bc_pullback(tc, seed);
                    ev.add_seed1(static_cast<int>(i), seed);
                }
            }
            for (std::size_t k = 0; k < nb; ++k) {
                const std::size_t i = off_boundary + k;
                double u = ev.jet1(static_cast<int>(i)).u;
                double du_dv = 1.0;
                if (hard) {
                    const auto tc = hard_bc_coeffs(problem, xs[i]);
                    u = tc.m * u + tc.c;
                    du_dv = tc.m;
                }
                const double d = u - colloc.bvals[k];
                L += cb * d * d;
                if (with_seeds) ev.add_seed1(static_cast<int>(i), {2.0 * cb * d * du_dv, 0, 0});
            }
        }
        return L;
    }

    /// Constraint penalty with the detached-loss weighting of the
    /// constrained formulation: L_new = L + detach(L) * mean_k exp(-+u_k).
    /// The seeds treat detach(L) as a constant.
    double constrained(JetEvaluator& ev, double plain_loss, bool with_seeds) const {
        if (constraints.empty()) return plain_loss;
        const double w = plain_loss; // detached factor
        const double cm = 1.0 / static_cast<double>(constraints.size());
        double penalty = 0.0;
        for (std::size_t k = 0; k < constraints.size(); ++k) {
            const std::size_t i = off_constraint + k;
            const double sign =
                constraints[k].direction == ConstraintSpec::Direction::GreaterThanZero ? 1.0 : -1.0;
            Jet1 j = ev.jet1(static_cast<int>(i));
            HardBCCoeffs tc{};
            double u = j.u, du_dv = 1.0;
            if (problem.has_hard_bc()) {
                tc = hard_bc_coeffs(problem, xs[i]);
                u = tc.m * j.u + tc.c;
                du_dv = tc.m;
            }
            const double e = std::exp(-sign * u);
            penalty += cm * e;
            if (with_seeds) ev.add_seed1(static_cast<int>(i), {w * cm * e * (-sign) * du_dv, 0, 0});
        }
        return plain_loss + w * penalty;
    }

private:
    double lhs_lap(const Jet2& j) const {
        // j.uxx holds the Laplacian; both in-scope 2D operators depend on
        // the Laplacian only
        if (const auto* ac = std::get_if<AllenCahn2D>(&problem.eq))
            return -ac->eps * j.uxx + j.u * j.u * j.u - j.u;
        return j.uxx + j.u * j.u;
    }
};

} // namespace detail

/// PINN loss of Eq-2 form: w_f/N_f sum |F[u](x_i) - f_i|^2 +
/// w_b/N_b sum |u(x_b) - b|^2 (boundary term normalized by its own count).
inline double pinn_loss(const ParamVector& params, const NetworkSpec& spec,
                        const ProblemSpec& problem, const CollocationSet& colloc) {
    if (colloc.n_residual() == 0 && colloc.n_boundary() == 0) return 0.0;
    static const std::vector<ConstraintSpec> no_constraints;
    static const ProbeSpec no_probes;
    detail::BatchEvaluator batch(problem, colloc, no_constraints, no_probes);
    JetEvaluator ev(spec, problem.is_2d() ? JetEvaluator::Mode::Laplacian : JetEvaluator::Mode::FullJets);
    batch.forward(ev, params);
    return batch.loss(ev, false);
}

/// Constrained loss of the stop-gradient form; value only.
inline double constrained_loss(const ParamVector& params, const NetworkSpec& spec,
                               const ProblemSpec& problem, const CollocationSet& colloc,
                               const std::vector<ConstraintSpec>& constraints) {
    if (constraints.empty()) throw std::invalid_argument("constrained_loss: constraints must be nonempty");
    static const ProbeSpec no_probes;
    detail::BatchEvaluator batch(problem, colloc, constraints, no_probes);
    JetEvaluator ev(spec, JetEvaluator::Mode::FullJets);
    batch.forward(ev, params);
    const double L = batch.loss(ev, false);
    return batch.constrained(ev, L, false);
}

/// Loss and exact gradient (constraint-aware) in one forward/reverse pass.
inline double pinn_loss_gradient(const ParamVector& params, const NetworkSpec& spec,
                                 const ProblemSpec& problem, const CollocationSet& colloc,
                                 const std::vector<ConstraintSpec>& constraints, ParamVector& grad) {
    static const ProbeSpec no_probes;
    detail::BatchEvaluator batch(problem, colloc, constraints, no_probes);
    JetEvaluator ev(spec, problem.is_2d() ? JetEvaluator::Mode::Laplacian : JetEvaluator::Mode::FullJets);
    batch.forward(ev, params);
    const double L = batch.loss(ev, true);
    const double total = batch.constrained(ev, L, true);
    ev.reverse(params, grad);
    return total;
}

/// Train one member by full-batch Adam over the staged schedule.
/// Deterministic function of all inputs; a non-finite loss freezes the
/// member with the divergence flag set.
inline MemberResult train_member(const ProblemSpec& problem, const NetworkSpec& spec,
                                 const InitScheme& init, std::uint64_t seed,
                                 const TrainingSchedule& schedule, const CollocationSet& colloc,
                                 const ProbeSpec& probes,
                                 const std::vector<ConstraintSpec>& constraints = {}) {
    schedule.validate();
    MemberResult out;
    out.seed = seed;
    out.final_params = init_params(spec, init, seed);
    out.probe_history.resize(probes.n_probes());

    detail::BatchEvaluator batch(problem, colloc, constraints, probes);
    JetEvaluator ev(spec, problem.is_2d() ? JetEvaluator::Mode::Laplacian : JetEvaluator::Mode::FullJets);
    AdamState adam(out.final_params.size());
    ParamVector grad;

    const long total = schedule.total_iterations();
    std::vector<long> stage_ends;
    {
        long acc = 0;
        for (const auto& st : schedule.stages) stage_ends.push_back(acc += st.iterations);
    }
    std::size_t stage_idx = 0;

    auto record_probes = [&]() {
        for (std::size_t p = 0; p < probes.n_probes(); ++p)
            out.probe_history[p].push_back(batch.value_at(ev, batch.off_probe + p));
    };

    for (long it = 0; it < total; ++it) {
        batch.forward(ev, out.final_params);
        const double plain = batch.loss(ev, true);
        const double L = batch.constrained(ev, plain, true);
        if (!std::isfinite(L)) {
            out.diverged = true;
            out.final_loss = L;
            out.iterations_run = it;
            return out;
        }
        if (it % probes.stride == 0) record_probes();
        while (stage_idx < stage_ends.size() && it == stage_ends[stage_idx])
            out.stage_final_losses.push_back(L), ++stage_idx;
        ev.reverse(out.final_params, grad);
        adam_step(adam, out.final_params, grad, schedule.stages[stage_idx].learning_rate);
    }

    // closing evaluation at the final parameters
    batch.forward(ev, out.final_params);
    const double plain = batch.loss(ev, false);
    const double L = batch.constrained(ev, plain, false);
    out.final_loss = L;
    out.iterations_run = total;
    if (!std::isfinite(L)) {
        out.diverged = true;
        return out;
    }
    record_probes();
    while (stage_idx < stage_ends.size()) out.stage_final_losses.push_back(L), ++stage_idx;
    return out;
}

/// Independently trained ensemble; member i uses derive_seed(base_seed, i).
/// Results are independent of thread count and completion order.
inline std::vector<MemberResult> train_ensemble(const ProblemSpec& problem, const NetworkSpec& spec,
                                                const InitScheme& init, std::uint64_t base_seed,
                                                int members, const TrainingSchedule& schedule,
                                                const CollocationSet& colloc, const ProbeSpec& probes,
                                                const std::vector<ConstraintSpec>& constraints = {},
                                                int n_threads = 1) {
    if (members <= 0) throw std::invalid_argument("train_ensemble: members must be positive");
    std::vector<MemberResult> results(members);
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= members) return;
            try {
                results[i] = train_member(problem, spec, init, derive_seed(base_seed, i), schedule,
                                          colloc, probes, constraints);
            } catch (...) {
                std::lock_guard<std::mutex> lk(error_mu);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
    return results;
}

/// Jointly trained multi-head ensemble: one Adam state over the
/// concatenated body+heads vector; the loss is the unweighted mean of the
/// per-head PINN losses. Returns per-head results with standalone params.
inline std::vector<MemberResult> train_multihead(const ProblemSpec& problem, const MultiHeadSpec& mh,
                                                 const InitScheme& init, std::uint64_t seed,
                                                 const TrainingSchedule& schedule,
                                                 const CollocationSet& colloc, const ProbeSpec& probes) {
    schedule.validate();
    if (problem.is_2d()) throw std::invalid_argument("train_multihead: 1D problems only");
    const int H = mh.n_heads;
    ParamVector params = init_params(mh, init, seed);
    MultiHeadEvaluator ev(mh);
    AdamState adam(params.size());
    ParamVector grad(params.size(), 0.0);

    // batch = residual points + probe points (hard-BC problems carry no
    // boundary set; soft-BC boundary points appended after residual rows)
    std::vector<double> xs = colloc.xs;
    xs.insert(xs.end(), colloc.bxs.begin(), colloc.bxs.end());
    const std::size_t off_boundary = colloc.xs.size();
    xs.insert(xs.end(), probes.xs.begin(), probes.xs.end());
    const std::size_t off_probe = off_boundary + colloc.bxs.size();

    const bool hard = problem.has_hard_bc();
    const std::size_t nf = colloc.n_residual();
    const std::size_t nb = colloc.n_boundary();
    const double cf = nf ? colloc.w_f / static_cast<double>(nf) : 0.0;
    const double cb = nb ? colloc.w_b / static_cast<double>(nb) : 0.0;

    std::vector<std::vector<std::vector<double>>> probe_hist(
        H, std::vector<std::vector<double>>(probes.n_probes()));
    std::vector<double> head_loss(H, 0.0);
    std::vector<std::vector<double>> stage_losses(H);

    auto head_pass = [&](int h, bool with_seeds, ParamVector* g) {
        ev.forward_head(h);
        double L = 0.0;
        for (std::size_t i = 0; i < nf; ++i) {
            Jet1 j = ev.jet1(static_cast<int>(i));
            HardBCCoeffs tc{};
            if (hard) {
                tc = hard_bc_coeffs(problem, xs[i]);
                Jet1 tj;
                tj.u = tc.m * j.u + tc.c;
                tj.ux = tc.mp * j.u + tc.m * j.ux + tc.cp;
                tj.uxx = tc.mpp * j.u + 2.0 * tc.mp * j.ux + tc.m * j.uxx + tc.cpp;
                j = tj;
            }
            const double r = operator_lhs_1d(problem, j) - colloc.f[i];
            L += cf * r * r;
            if (with_seeds) {
                const Jet1 pr = residual1d_partials(problem, xs[i], j);
                const double s = 2.0 * cf * r / H; // mean over heads
                Jet1 seed{s * pr.u, s * pr.ux, s * pr.uxx};
                if (hard) seed = hard_bc_pullback(tc, seed);
                ev.add_seed1(static_cast<int>(i), seed);
            }
        }
        for (std::size_t k = 0; k < nb; ++k) {
            const std::size_t i = off_boundary + k;
            double u = ev.jet1(static_cast<int>(i)).u;
            double du_dv = 1.0;
            if (hard) {
                const auto tc = hard_bc_coeffs(problem, xs[i]);
                u = tc.m * u + tc.c;
                du_dv = tc.m;
            }
            const double d = u - colloc.bvals[k];
            L += cb * d * d;
            if (with_seeds) ev.add_seed1(static_cast<int>(i), {2.0 * cb * d * du_dv / H, 0, 0});
        }
        if (with_seeds) ev.reverse_head(*g);
        return L;
    };

    auto probe_value = [&](int h, std::size_t p) {
        // heads were just forwarded; read transformed u at the probe row
        const std::size_t i = off_probe + p;
        double u = ev.jet1(static_cast<int>(i)).u;
        if (hard) {
            const auto tc = hard_bc_coeffs(problem, xs[i]);
            u = tc.m * u + tc.c;
        }
        return u;
    };

    const long total = schedule.total_iterations();
    std::vector<long> stage_ends;
    {
        long acc = 0;
        for (const auto& st : schedule.stages) stage_ends.push_back(acc += st.iterations);
    }
    std::size_t stage_idx = 0;
    bool diverged = false;
    long it = 0;

    for (; it < total; ++it) {
        ev.forward_body(params, xs);
        std::fill(grad.begin(), grad.end(), 0.0);
        double mean_loss = 0.0;
        const bool record = (it % probes.stride == 0);
        for (int h = 0; h < H; ++h) {
            head_loss[h] = head_pass(h, true, &grad);
            mean_loss += head_loss[h] / H;
            if (record)
                for (std::size_t p = 0; p < probes.n_probes(); ++p)
                    probe_hist[h][p].push_back(probe_value(h, p));
        }
        ev.reverse_body(grad);
        if (!std::isfinite(mean_loss)) {
            diverged = true;
            break;
        }
        while (stage_idx < stage_ends.size() && it == stage_ends[stage_idx]) {
            for (int h = 0; h < H; ++h) stage_losses[h].push_back(head_loss[h]);
            ++stage_idx;
        }
        adam_step(adam, params, grad, schedule.stages[stage_idx].learning_rate);
    }

    if (!diverged) {
        ev.forward_body(params, xs);
        for (int h = 0; h < H; ++h) {
            head_loss[h] = head_pass(h, false, nullptr);
            for (std::size_t p = 0; p < probes.n_probes(); ++p)
                probe_hist[h][p].push_back(probe_value(h, p));
        }
        while (stage_idx < stage_ends.size()) {
            for (int h = 0; h < H; ++h) stage_losses[h].push_back(head_loss[h]);
            ++stage_idx;
        }
    }

    std::vector<MemberResult> out(H);
    for (int h = 0; h < H; ++h) {
        out[h].final_params = mh.assemble_standalone(params, h);
        out[h].stage_final_losses = stage_losses[h];
        out[h].probe_history = probe_hist[h];
        out[h].diverged = diverged;
        out[h].seed = seed;
        out[h].final_loss = diverged ? std::numeric_limits<double>::quiet_NaN() : head_loss[h];
        out[h].iterations_run = diverged ? it : total;
    }
    return out;
}

} // namespace multisol
