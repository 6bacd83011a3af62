#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "multisol/autodiff.hpp"
#include "multisol/problems.hpp"
#include "multisol/rng.hpp"
#include "multisol/trainer.hpp"

namespace multisol {

/// Nodal values on a uniform grid; the exchange format between PINN
/// sampling and Newton refinement.
struct SolutionField {
    int dim = 1;
    double xmin = 0.0, xmax = 1.0;
    double ymin = 0.0, ymax = 1.0; // 2D only
    int nx = 0;                    // intervals along x (nx+1 nodes)
    int ny = 0;                    // intervals along y (2D)
    std::vector<double> values;    // x-fastest for 2D: v[iy*(nx+1)+ix]

    std::size_t n_nodes() const {
        return dim == 1 ? static_cast<std::size_t>(nx) + 1
                        : (static_cast<std::size_t>(nx) + 1) * (ny + 1);
    }
    double hx() const { return (xmax - xmin) / nx; }
    double hy() const { return (ymax - ymin) / ny; }
    /// Node coordinates via the endpoint-exact affine blend.
    double node_x(int ix) const { return ((nx - ix) * xmin + ix * xmax) / nx; }
    double node_y(int iy) const { return ((ny - iy) * ymin + iy * ymax) / ny; }
    double& at(int ix, int iy) { return values[static_cast<std::size_t>(iy) * (nx + 1) + ix]; }
    double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * (nx + 1) + ix]; }

    bool same_mesh(const SolutionField& o) const {
        return dim == o.dim && nx == o.nx && ny == o.ny && xmin == o.xmin && xmax == o.xmax &&
               ymin == o.ymin && ymax == o.ymax;
    }
};

inline double max_norm_distance(const SolutionField& a, const SolutionField& b) {
    if (!a.same_mesh(b)) throw std::invalid_argument("max_norm_distance: mismatched meshes");
    double d = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        d = std::max(d, std::abs(a.values[i] - b.values[i]));
    return d;
}

/// Evaluate a trained network on a uniform mesh; the hard-BC transform is
/// applied where the problem declares one, so sampled fields satisfy BCs.
inline SolutionField sample_field(const ParamVector& params, const NetworkSpec& spec,
                                  const ProblemSpec& problem, int nx, int ny = 0) {
    SolutionField field;
    if (problem.is_1d()) {
        field.dim = 1;
        field.xmin = problem.domain_min();
        field.xmax = problem.domain_max();
        field.nx = nx;
        std::vector<double> xs(nx + 1);
        for (int i = 0; i <= nx; ++i) xs[i] = field.node_x(i);
        JetEvaluator ev(spec);
        ev.forward(params, xs);
        field.values.resize(nx + 1);
        for (int i = 0; i <= nx; ++i) {
            Jet1 j = ev.jet1(i);
            if (problem.has_hard_bc()) j = hard_bc_transform(problem, xs[i], j);
            field.values[i] = j.u;
        }
    } else {
        field.dim = 2;
        field.nx = nx;
        field.ny = ny > 0 ? ny : nx;
        std::vector<double> xs, ys;
        xs.reserve(field.n_nodes());
        ys.reserve(field.n_nodes());
        for (int iy = 0; iy <= field.ny; ++iy)
            for (int ix = 0; ix <= field.nx; ++ix) {
                xs.push_back(field.node_x(ix));
                ys.push_back(field.node_y(iy));
            }
        JetEvaluator ev(spec, JetEvaluator::Mode::Laplacian);
        ev.forward(params, xs, ys);
        field.values.resize(field.n_nodes());
        for (std::size_t i = 0; i < field.values.size(); ++i)
            field.values[i] = ev.jet_lap(static_cast<int>(i)).u;
    }
    return field;
}

/// Cluster labels over the non-diverged members. Labels are compacted,
/// ordered by each cluster's smallest member index; diverged members get
/// label -1 and form a reserved pseudo-cluster reported via `diverged`.
struct ClusterReport {
    std::vector<int> labels;          // per member; -1 = diverged
    std::vector<int> counts;          // per cluster
    std::vector<int> representatives; // member index per cluster (filled by selection)
    std::vector<int> diverged;        // member indices excluded from clustering
    int n_clusters() const { return static_cast<int>(counts.size()); }
};

namespace detail {

/// Compact arbitrary per-member bin ids (-1 = excluded) into a
/// ClusterReport with empty bins dropped and clusters ordered by first
/// appearance.
inline ClusterReport compact_labels(const std::vector<int>& raw, const std::vector<char>& excluded) {
    ClusterReport rep;
    rep.labels.assign(raw.size(), -1);
    std::vector<int> order; // raw bin id -> compact id, by first appearance
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (excluded[i]) {
            rep.diverged.push_back(static_cast<int>(i));
            continue;
        }
        auto it = std::find(order.begin(), order.end(), raw[i]);
        int id;
        if (it == order.end()) {
            id = static_cast<int>(order.size());
            order.push_back(raw[i]);
            rep.counts.push_back(0);
        } else {
            id = static_cast<int>(it - order.begin());
        }
        rep.labels[i] = id;
        rep.counts[id] += 1;
    }
    return rep;
}

} // namespace detail

/// Threshold binning on the members' final probe values: k sorted
/// thresholds make k+1 bins; empty bins are dropped.
inline ClusterReport cluster_by_probe(const std::vector<MemberResult>& results, int probe_index,
                                      const std::vector<double>& thresholds) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end()))
        throw std::invalid_argument("cluster_by_probe: thresholds must be sorted");
    std::vector<int> bins(results.size(), -1);
    std::vector<char> excluded(results.size(), 0);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (r.diverged) {
            excluded[i] = 1;
            continue;
        }
        if (probe_index < 0 || probe_index >= static_cast<int>(r.probe_history.size()))
            throw std::out_of_range("cluster_by_probe: probe index out of range");
        const double v = r.probe_history[probe_index].back();
        int b = 0;
        while (b < static_cast<int>(thresholds.size()) && v >= thresholds[b]) ++b;
        bins[i] = b;
    }
    return detail::compact_labels(bins, excluded);
}

/// Single-linkage agglomeration under the max norm: members share a
/// cluster iff connected by a chain of pairwise distances < tol.
inline ClusterReport cluster_by_distance(const std::vector<SolutionField>& fields, double tol,
                                         const std::vector<char>& diverged = {}) {
    const std::size_t n = fields.size();
    std::vector<char> excluded(n, 0);
    if (!diverged.empty()) {
        if (diverged.size() != n)
            throw std::invalid_argument("cluster_by_distance: diverged flags size mismatch");
        excluded = diverged;
    }
    // union-find
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (excluded[i]) continue;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (excluded[j]) continue;
            if (max_norm_distance(fields[i], fields[j]) < tol) {
                int ra = find(static_cast<int>(i)), rb = find(static_cast<int>(j));
                if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
            }
        }
    }
    std::vector<int> bins(n, -1);
    for (std::size_t i = 0; i < n; ++i)
        if (!excluded[i]) bins[i] = find(static_cast<int>(i));
    return detail::compact_labels(bins, excluded);
}

enum class RepresentativePolicy { First, BestLoss, WorstLoss, Random };

/// Pick one member per cluster; deterministic given (policy, seed).
/// `losses` are the members' recorded final losses.
inline std::vector<int> select_representative(const ClusterReport& report,
                                              const std::vector<double>& losses,
                                              RepresentativePolicy policy, std::uint64_t seed = 0) {
    std::vector<std::vector<int>> members(report.n_clusters());
    for (std::size_t i = 0; i < report.labels.size(); ++i)
        if (report.labels[i] >= 0) members[report.labels[i]].push_back(static_cast<int>(i));
    std::vector<int> reps(report.n_clusters(), -1);
    Rng rng(seed);
    for (int c = 0; c < report.n_clusters(); ++c) {
        const auto& ms = members[c];
        switch (policy) {
            case RepresentativePolicy::First:
                reps[c] = ms.front();
                break;
            case RepresentativePolicy::BestLoss:
                reps[c] = *std::min_element(ms.begin(), ms.end(), [&](int a, int b) {
                    return losses[a] < losses[b];
                });
                break;
            case RepresentativePolicy::WorstLoss:
                reps[c] = *std::max_element(ms.begin(), ms.end(), [&](int a, int b) {
                    return losses[a] < losses[b];
                });
                break;
            case RepresentativePolicy::Random:
                reps[c] = ms[static_cast<std::size_t>(rng.uniform01() * ms.size())];
                break;
        }
    }
    return reps;
}

/// Fraction of non-diverged members whose final probe value exceeds the
/// threshold (the ablation-table statistic).
inline double ratio_report(const std::vector<MemberResult>& results, int probe_index,
                           double threshold) {
    long above = 0, total = 0;
    for (const auto& r : results) {
        if (r.diverged) continue;
        if (probe_index < 0 || probe_index >= static_cast<int>(r.probe_history.size()))
            throw std::out_of_range("ratio_report: probe index out of range");
        ++total;
        if (r.probe_history[probe_index].back() > threshold) ++above;
    }
    if (total == 0) throw std::runtime_error("ratio_report: no non-diverged members");
    return static_cast<double>(above) / static_cast<double>(total);
}

} // namespace multisol
