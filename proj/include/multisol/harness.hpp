#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multisol/io.hpp"
#include "multisol/refine.hpp"
#include "multisol/trainer.hpp"

namespace multisol {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    ProblemSpec problem;
    NetworkSpec architecture;
    InitScheme init;
    int members = 100;
    std::uint64_t base_seed = 2024;
    TrainingSchedule schedule;
    int residual_points = 101;    // 1D count or 2D interior count
    int boundary_per_edge = 99;   // 2D only
    std::uint64_t sampling_seed = 7;
    double w_f = 1.0, w_b = 1.0;
    ProbeSpec probes;
    std::vector<ConstraintSpec> constraints;

    enum class ClusterMethod { Probe, Distance };
    ClusterMethod cluster_method = ClusterMethod::Distance;
    int probe_index = 0;
    std::vector<double> thresholds;
    double distance_tol = 0.5;
    int cluster_mesh_nodes = 201;  // per dimension
    RepresentativePolicy representative = RepresentativePolicy::BestLoss;
    std::uint64_t representative_seed = 0;

    int refine_intervals = 1600;   // 1D
    int refine_grid = 128;         // 2D intervals per side
    double refine_tol = 1e-10;
    int refine_max_iter = 100;

    std::optional<MultiHeadSpec> multihead;

    bool run_stability = false;
    double stability_dt = 1e-2;
    double stability_time = 50.0;
    double stability_drift_tol = 0.05;

    std::vector<double> continuation_eps;
    double continuation_tol = 1e-9;

    bool symmetry_completion = false;

    std::string output_dir = "out";
    json canonical; // the validated, defaulted config as written
};

namespace cfg_detail {

inline void reject_unknown(const json& obj, const std::string& where,
                           const std::vector<std::string>& known) {
    std::string bad;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            bad += (bad.empty() ? "" : ", ") + where + "." + it.key();
    }
    if (!bad.empty()) throw std::runtime_error("unknown config keys: " + bad);
}

inline ProblemSpec parse_problem(const json& j) {
    if (!j.contains("kind")) throw std::runtime_error("missing required key: problem.kind");
    const std::string kind = j.at("kind");
    if (kind == "bratu") {
        reject_unknown(j, "problem", {"kind", "lambda"});
        return ProblemSpec(Bratu{j.value("lambda", 1.0)});
    }
    if (kind == "boundary_layer") {
        reject_unknown(j, "problem", {"kind", "eps"});
        return ProblemSpec(BoundaryLayer{j.value("eps", 0.06)});
    }
    if (kind == "reaction_diffusion") {
        reject_unknown(j, "problem", {"kind", "D", "kappa", "w"});
        return ProblemSpec(ReactionDiffusion{j.value("D", 0.01), j.value("kappa", 0.7), j.value("w", 6.0)});
    }
    if (kind == "allen_cahn") {
        reject_unknown(j, "problem", {"kind", "eps"});
        return ProblemSpec(AllenCahn2D{j.value("eps", 0.01)});
    }
    if (kind == "poisson2d") {
        reject_unknown(j, "problem", {"kind", "s"});
        return ProblemSpec(SourcedPoisson2D{j.value("s", 800.0)});
    }
    throw std::runtime_error("unknown problem.kind: " + kind);
}

inline InitScheme parse_init(const json& j) {
    const std::string kind = j.value("kind", "normal");
    if (kind == "normal") {
        reject_unknown(j, "init", {"kind", "sigma"});
        return InitScheme::normal(j.value("sigma", 1.0));
    }
    if (kind == "uniform") {
        reject_unknown(j, "init", {"kind", "bound"});
        return InitScheme::uniform(j.value("bound", 1.0));
    }
    if (kind == "truncated_normal") {
        reject_unknown(j, "init", {"kind", "mu", "sigma"});
        return InitScheme::truncated_normal(j.value("mu", 0.0), j.value("sigma", 1.0));
    }
    throw std::runtime_error("unknown init.kind: " + kind);
}

inline json init_to_json(const InitScheme& s) {
    switch (s.kind) {
        case InitScheme::Kind::Normal: return {{"kind", "normal"}, {"sigma", s.sigma}};
        case InitScheme::Kind::Uniform: return {{"kind", "uniform"}, {"bound", s.bound}};
        default: return {{"kind", "truncated_normal"}, {"mu", s.mu}, {"sigma", s.sigma}};
    }
}

} // namespace cfg_detail

/// Validate and default a raw JSON config. Unknown keys anywhere are
/// rejected; `problem` is the only required key.
inline ExperimentConfig config_from_json(json j) {
    using cfg_detail::reject_unknown;
    if (!j.is_object()) throw std::runtime_error("config root must be a JSON object");
    reject_unknown(j, "config",
                   {"problem", "architecture", "init", "ensemble", "schedule", "collocation", "probes",
                    "constraints", "clustering", "refine", "multihead", "stability", "continuation",
                    "symmetry_completion", "output_dir"});
    if (!j.contains("problem")) throw std::runtime_error("missing required key: problem");

    ExperimentConfig c;
    c.problem = cfg_detail::parse_problem(j.at("problem"));
    const bool is2d = c.problem.is_2d();

    c.architecture = NetworkSpec(
        j.value("architecture", is2d ? std::vector<int>{2, 50, 50, 50, 1} : std::vector<int>{1, 50, 50, 1}));
    if ((c.architecture.input_dim() == 2) != is2d)
        throw std::runtime_error("architecture input width does not match the problem dimension");
    c.init = cfg_detail::parse_init(j.value("init", json::object()));

    {
        json e = j.value("ensemble", json::object());
        reject_unknown(e, "ensemble", {"members", "base_seed"});
        c.members = e.value("members", 100);
        c.base_seed = e.value("base_seed", std::uint64_t{2024});
        if (c.members <= 0) throw std::runtime_error("ensemble.members must be positive");
    }
    {
        json s = j.value("schedule", json::array({{{"iterations", 20000}, {"learning_rate", 1e-3}}}));
        std::vector<TrainingSchedule::Stage> stages;
        for (const auto& st : s) {
            reject_unknown(st, "schedule[]", {"iterations", "learning_rate"});
            stages.push_back({st.value("iterations", 0L), st.value("learning_rate", 1e-3)});
        }
        c.schedule = TrainingSchedule(stages);
    }
    {
        json col = j.value("collocation", json::object());
        reject_unknown(col, "collocation",
                       {"residual_points", "boundary_per_edge", "sampling_seed", "w_f", "w_b"});
        c.residual_points = col.value("residual_points", is2d ? 3000 : 101);
        c.boundary_per_edge = col.value("boundary_per_edge", 99);
        c.sampling_seed = col.value("sampling_seed", std::uint64_t{7});
        c.w_f = col.value("w_f", 1.0);
        c.w_b = col.value("w_b", 1.0);
    }
    {
        json p = j.value("probes", json::object());
        reject_unknown(p, "probes", {"locations", "locations_y", "stride"});
        c.probes.xs = p.value("locations", std::vector<double>{});
        c.probes.ys = p.value("locations_y", std::vector<double>{});
        c.probes.stride = p.value("stride", 10L);
        if (c.probes.stride <= 0) throw std::runtime_error("probes.stride must be positive");
    }
    for (const auto& k : j.value("constraints", json::array())) {
        reject_unknown(k, "constraints[]", {"x", "direction"});
        ConstraintSpec cs;
        cs.x_c = k.value("x", 0.0);
        const std::string d = k.value("direction", "greater_than_zero");
        if (d == "greater_than_zero")
            cs.direction = ConstraintSpec::Direction::GreaterThanZero;
        else if (d == "less_than_zero")
            cs.direction = ConstraintSpec::Direction::LessThanZero;
        else
            throw std::runtime_error("constraints[].direction must be greater_than_zero or less_than_zero");
        c.constraints.push_back(cs);
    }
    {
        json cl = j.value("clustering", json::object());
        reject_unknown(cl, "clustering",
                       {"method", "probe_index", "thresholds", "tol", "mesh_nodes", "representative",
                        "representative_seed"});
        const std::string m = cl.value("method", "distance");
        if (m == "probe")
            c.cluster_method = ExperimentConfig::ClusterMethod::Probe;
        else if (m == "distance")
            c.cluster_method = ExperimentConfig::ClusterMethod::Distance;
        else
            throw std::runtime_error("clustering.method must be probe or distance");
        c.probe_index = cl.value("probe_index", 0);
        c.thresholds = cl.value("thresholds", std::vector<double>{});
        c.distance_tol = cl.value("tol", 0.5);
        c.cluster_mesh_nodes = cl.value("mesh_nodes", is2d ? 101 : 201);
        const std::string rep = cl.value("representative", "best_loss");
        if (rep == "first")
            c.representative = RepresentativePolicy::First;
        else if (rep == "best_loss")
            c.representative = RepresentativePolicy::BestLoss;
        else if (rep == "worst_loss")
            c.representative = RepresentativePolicy::WorstLoss;
        else if (rep == "random")
            c.representative = RepresentativePolicy::Random;
        else
            throw std::runtime_error("clustering.representative must be first|best_loss|worst_loss|random");
        c.representative_seed = cl.value("representative_seed", std::uint64_t{0});
        if (c.cluster_method == ExperimentConfig::ClusterMethod::Probe && c.probes.xs.empty())
            throw std::runtime_error("probe clustering requires probes.locations");
    }
    {
        json r = j.value("refine", json::object());
        reject_unknown(r, "refine", {"intervals", "grid", "tolerance", "max_iterations"});
        c.refine_intervals = r.value("intervals", 1600);
        c.refine_grid = r.value("grid", 128);
        c.refine_tol = r.value("tolerance", is2d ? 1e-9 : 1e-10);
        c.refine_max_iter = r.value("max_iterations", 100);
    }
    if (j.contains("multihead")) {
        json m = j.at("multihead");
        reject_unknown(m, "multihead", {"body", "head", "heads"});
        c.multihead = MultiHeadSpec(m.value("body", std::vector<int>{1, 50}),
                                    m.value("head", std::vector<int>{50, 50, 1}), m.value("heads", 100));
    }
    if (j.contains("stability")) {
        json s = j.at("stability");
        reject_unknown(s, "stability", {"dt", "time", "drift_tol"});
        c.run_stability = true;
        c.stability_dt = s.value("dt", 1e-2);
        c.stability_time = s.value("time", 50.0);
        c.stability_drift_tol = s.value("drift_tol", 0.05);
    }
    if (j.contains("continuation")) {
        json s = j.at("continuation");
        reject_unknown(s, "continuation", {"eps_sequence", "tolerance"});
        c.continuation_eps = s.value("eps_sequence", std::vector<double>{});
        c.continuation_tol = s.value("tolerance", 1e-9);
    }
    c.symmetry_completion = j.value("symmetry_completion", false);
    c.output_dir = j.value("output_dir", std::string("out"));

    // canonical form: re-serialize everything that matters, fully defaulted
    json canon;
    canon["problem"] = j.at("problem");
    canon["architecture"] = c.architecture.layer_widths;
    canon["init"] = cfg_detail::init_to_json(c.init);
    canon["ensemble"] = {{"members", c.members}, {"base_seed", c.base_seed}};
    canon["schedule"] = json::array();
    for (const auto& st : c.schedule.stages)
        canon["schedule"].push_back({{"iterations", st.iterations}, {"learning_rate", st.learning_rate}});
    canon["collocation"] = {{"residual_points", c.residual_points},
                            {"boundary_per_edge", c.boundary_per_edge},
                            {"sampling_seed", c.sampling_seed},
                            {"w_f", c.w_f},
                            {"w_b", c.w_b}};
    canon["probes"] = {{"locations", c.probes.xs}, {"locations_y", c.probes.ys}, {"stride", c.probes.stride}};
    canon["constraints"] = j.value("constraints", json::array());
    canon["clustering"] = {{"method", c.cluster_method == ExperimentConfig::ClusterMethod::Probe ? "probe" : "distance"},
                           {"probe_index", c.probe_index},
                           {"thresholds", c.thresholds},
                           {"tol", c.distance_tol},
                           {"mesh_nodes", c.cluster_mesh_nodes},
                           {"representative", j.value("clustering", json::object()).value("representative", "best_loss")},
                           {"representative_seed", c.representative_seed}};
    canon["refine"] = {{"intervals", c.refine_intervals},
                       {"grid", c.refine_grid},
                       {"tolerance", c.refine_tol},
                       {"max_iterations", c.refine_max_iter}};
    if (c.multihead)
        canon["multihead"] = {{"body", c.multihead->body_widths},
                              {"head", c.multihead->head_widths},
                              {"heads", c.multihead->n_heads}};
    if (c.run_stability)
        canon["stability"] = {{"dt", c.stability_dt}, {"time", c.stability_time},
                              {"drift_tol", c.stability_drift_tol}};
    if (!c.continuation_eps.empty())
        canon["continuation"] = {{"eps_sequence", c.continuation_eps}, {"tolerance", c.continuation_tol}};
    canon["symmetry_completion"] = c.symmetry_completion;
    canon["output_dir"] = c.output_dir;
    c.canonical = std::move(canon);
    return c;
}

/// Load a config file; parse errors carry the byte/line diagnostics from
/// the JSON parser, schema errors list the offending keys.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path.string() + ": " + e.what());
    }
    return config_from_json(std::move(j));
}

// ---------------------------------------------------------------------------
// Presets (desk-scale reproductions of the benchmark experiments)
// ---------------------------------------------------------------------------

inline const std::map<std::string, json>& preset_catalog();

inline ExperimentConfig preset_config(const std::string& name) {
    const auto& cat = preset_catalog();
    auto it = cat.find(name);
    if (it == cat.end()) {
        std::string names;
        for (const auto& [k, v] : cat) names += (names.empty() ? "" : ", ") + k;
        throw std::runtime_error("unknown preset '" + name + "'; available: " + names);
    }
    return config_from_json(it->second);
}

// ---------------------------------------------------------------------------
// Manifest and pipeline
// ---------------------------------------------------------------------------

struct RunManifest {
    json doc;          // full manifest document (includes timings)
    std::string hash;  // hash over the document minus timings
    bool any_flagged = false;
};

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(const std::string& s) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

struct PipelineResult {
    RunManifest manifest;
    std::vector<MemberResult> members;
    ClusterReport clusters;
    std::vector<SolutionField> member_fields;     // clustering-mesh samples
    std::vector<SolutionField> refined;           // per solution (clusters + completions)
    std::vector<RefineResult> refinements;
    std::vector<SolutionField> representative_pinn_fields; // refine-mesh guesses
};

namespace pipeline_detail {

/// The eight dihedral images of a square field (identity first).
inline std::vector<SolutionField> dihedral_images(const SolutionField& f) {
    std::vector<SolutionField> out;
    auto make = [&](auto&& map) {
        SolutionField g = f;
        for (int iy = 0; iy <= f.ny; ++iy)
            for (int ix = 0; ix <= f.nx; ++ix) {
                auto [jx, jy] = map(ix, iy);
                g.at(ix, iy) = f.at(jx, jy);
            }
        out.push_back(std::move(g));
    };
    const int nx = f.nx, ny = f.ny;
    make([&](int ix, int iy) { return std::pair{ix, iy}; });
    make([&](int ix, int iy) { return std::pair{nx - ix, iy}; });
    make([&](int ix, int iy) { return std::pair{ix, ny - iy}; });
    make([&](int ix, int iy) { return std::pair{nx - ix, ny - iy}; });
    make([&](int ix, int iy) { return std::pair{iy, ix}; });
    make([&](int ix, int iy) { return std::pair{ny - iy, ix}; });
    make([&](int ix, int iy) { return std::pair{iy, nx - ix}; });
    make([&](int ix, int iy) { return std::pair{ny - iy, nx - ix}; });
    return out;
}

} // namespace pipeline_detail

/// Execute train -> sample -> cluster -> select -> refine -> verify and
/// assemble the manifest. Diverged members and non-converged refinements
/// are recorded, not fatal.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, int n_threads = 1) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto seconds_since = [](clock::time_point a) {
        return std::chrono::duration<double>(clock::now() - a).count();
    };

    PipelineResult out;
    const ProblemSpec& problem = cfg.problem;
    const bool is2d = problem.is_2d();

    CollocationSet colloc = is2d ? colloc_random_2d(problem, cfg.residual_points, cfg.boundary_per_edge,
                                                    cfg.sampling_seed)
                                 : colloc_even_1d(problem, cfg.residual_points);
    colloc.w_f = cfg.w_f;
    colloc.w_b = cfg.w_b;

    // (1) train
    const auto t_train = clock::now();
    if (cfg.multihead) {
        out.members = train_multihead(problem, *cfg.multihead, cfg.init, cfg.base_seed, cfg.schedule,
                                      colloc, cfg.probes);
    } else {
        out.members = train_ensemble(problem, cfg.architecture, cfg.init, cfg.base_seed, cfg.members,
                                     cfg.schedule, colloc, cfg.probes, cfg.constraints, n_threads);
    }
    const double train_s = seconds_since(t_train);
    const NetworkSpec net_spec = cfg.multihead ? cfg.multihead->standalone_spec() : cfg.architecture;

    // (2) cluster
    const auto t_cluster = clock::now();
    const int mesh_n = cfg.cluster_mesh_nodes - 1;
    std::vector<char> diverged_flags(out.members.size(), 0);
    for (std::size_t i = 0; i < out.members.size(); ++i) diverged_flags[i] = out.members[i].diverged;
    out.member_fields.resize(out.members.size());
    for (std::size_t i = 0; i < out.members.size(); ++i)
        if (!out.members[i].diverged)
            out.member_fields[i] =
                sample_field(out.members[i].final_params, net_spec, problem, mesh_n, is2d ? mesh_n : 0);
        else
            out.member_fields[i] = SolutionField{}; // placeholder, excluded from clustering
    // excluded members still need a mesh-compatible shell for distance calls
    for (std::size_t i = 0; i < out.members.size(); ++i)
        if (out.members[i].diverged) {
            for (std::size_t k = 0; k < out.members.size(); ++k)
                if (!out.members[k].diverged) {
                    out.member_fields[i] = out.member_fields[k];
                    break;
                }
        }

    if (cfg.cluster_method == ExperimentConfig::ClusterMethod::Probe)
        out.clusters = cluster_by_probe(out.members, cfg.probe_index, cfg.thresholds);
    else
        out.clusters = cluster_by_distance(out.member_fields, cfg.distance_tol, diverged_flags);

    std::vector<double> losses(out.members.size());
    for (std::size_t i = 0; i < out.members.size(); ++i) losses[i] = out.members[i].final_loss;
    out.clusters.representatives =
        select_representative(out.clusters, losses, cfg.representative, cfg.representative_seed);
    const double cluster_s = seconds_since(t_cluster);

    // (3) refine representatives
    const auto t_refine = clock::now();
    NewtonOptions nopts{cfg.refine_tol, cfg.refine_max_iter, 20};
    Mesh1D mesh1 = is2d ? Mesh1D{} : Mesh1D::for_problem(problem, cfg.refine_intervals);
    Grid2D grid2{cfg.refine_grid, cfg.refine_grid};
    for (int rep : out.clusters.representatives) {
        const auto& params = out.members[rep].final_params;
        SolutionField guess = is2d ? sample_field(params, net_spec, problem, grid2.nx, grid2.ny)
                                   : sample_field(params, net_spec, problem, mesh1.n);
        out.representative_pinn_fields.push_back(guess);
        out.refinements.push_back(is2d ? newton_solve_2d(problem, grid2, guess, nopts)
                                       : newton_solve_1d(problem, mesh1, guess, nopts));
        out.refined.push_back(out.refinements.back().field);
    }

    // (3b) symmetry completion for symmetric 2D problems: dihedral images
    // of found solutions are themselves solutions; refine any image that
    // is not already represented and add it to the solution set
    json completion = json::array();
    if (cfg.symmetry_completion && is2d) {
        const double dedupe = cfg.distance_tol;
        bool grew = true;
        int rounds = 0;
        while (grew && rounds < 3) {
            grew = false;
            ++rounds;
            const std::size_t existing = out.refined.size();
            for (std::size_t s = 0; s < existing; ++s) {
                if (!out.refinements[s].converged) continue;
                auto images = pipeline_detail::dihedral_images(out.refined[s]);
                for (std::size_t g = 1; g < images.size(); ++g) {
                    bool known = false;
                    for (const auto& r : out.refined)
                        if (max_norm_distance(images[g], r) < dedupe) {
                            known = true;
                            break;
                        }
                    if (known) continue;
                    auto rr = newton_solve_2d(problem, grid2, images[g], nopts);
                    if (!rr.converged) continue;
                    bool dup = false;
                    for (const auto& r : out.refined)
                        if (max_norm_distance(rr.field, r) < dedupe) {
                            dup = true;
                            break;
                        }
                    if (dup) continue;
                    completion.push_back({{"source_solution", s},
                                          {"dihedral_element", g},
                                          {"max_residual", max_residual(problem, rr.field)}});
                    out.refined.push_back(rr.field);
                    out.refinements.push_back(std::move(rr));
                    out.representative_pinn_fields.push_back(images[g]);
                    grew = true;
                }
            }
        }
    }
    const double refine_s = seconds_since(t_refine);

    // (4) optional stability classification by artificial-time marching
    json stability = json::array();
    if (cfg.run_stability && std::holds_alternative<AllenCahn2D>(problem.eq)) {
        const long steps = static_cast<long>(std::llround(cfg.stability_time / cfg.stability_dt));
        for (std::size_t k = 0; k < out.clusters.representatives.size(); ++k) {
            if (!out.refinements[k].converged) continue;
            auto tm = time_march_2d(problem, grid2, out.representative_pinn_fields[k], cfg.stability_dt,
                                    steps, out.refined[k], out.refined, cfg.stability_drift_tol);
            stability.push_back({{"solution", k},
                                 {"stable", tm.stable},
                                 {"drift", tm.drift},
                                 {"reached_state", tm.reached_state}});
        }
    }

    // (5) optional continuation in eps
    json continuation = json::array();
    if (!cfg.continuation_eps.empty() && std::holds_alternative<AllenCahn2D>(problem.eq)) {
        NewtonOptions copts{cfg.continuation_tol, cfg.refine_max_iter, 20};
        for (std::size_t k = 0; k < out.clusters.representatives.size(); ++k) {
            if (!out.refinements[k].converged) continue;
            auto seq = continuation_solve(AllenCahn2D{}, cfg.continuation_eps, out.refined[k], grid2, copts);
            for (std::size_t e = 0; e < seq.size(); ++e) {
                ProblemSpec pe(AllenCahn2D{cfg.continuation_eps[e]});
                continuation.push_back({{"solution", k},
                                        {"eps", cfg.continuation_eps[e]},
                                        {"converged", seq[e].converged},
                                        {"newton_iterations", seq[e].iterations},
                                        {"max_residual", max_residual(pe, seq[e].field)}});
            }
        }
    }

    // manifest assembly
    json doc;
    doc["config"] = cfg.canonical;
    doc["config_hash"] = hash_hex(cfg.canonical.dump());
    json members = json::array();
    for (std::size_t i = 0; i < out.members.size(); ++i) {
        const auto& m = out.members[i];
        json probe_end = json::array();
        for (const auto& series : m.probe_history)
            if (!series.empty()) probe_end.push_back(series.back());
        members.push_back({{"index", i},
                           {"seed", m.seed},
                           {"final_loss", m.diverged ? json() : json(m.final_loss)},
                           {"probe_end", probe_end},
                           {"cluster", out.clusters.labels[i]},
                           {"diverged", m.diverged}});
    }
    doc["members"] = std::move(members);
    json clusters = json::array();
    for (int cidx = 0; cidx < out.clusters.n_clusters(); ++cidx)
        clusters.push_back({{"id", cidx},
                            {"count", out.clusters.counts[cidx]},
                            {"representative", out.clusters.representatives[cidx]}});
    doc["clusters"] = std::move(clusters);
    json refinements = json::array();
    for (std::size_t k = 0; k < out.refinements.size(); ++k)
        refinements.push_back({{"solution", k},
                               {"converged", out.refinements[k].converged},
                               {"newton_iterations", out.refinements[k].iterations},
                               {"max_residual", max_residual(problem, out.refined[k])}});
    doc["refinements"] = std::move(refinements);
    if (cfg.cluster_method == ExperimentConfig::ClusterMethod::Probe && !cfg.thresholds.empty() &&
        static_cast<std::size_t>(std::count_if(out.members.begin(), out.members.end(),
                                               [](const MemberResult& m) { return m.diverged; })) <
            out.members.size())
        doc["ratio_above_threshold"] = ratio_report(out.members, cfg.probe_index, cfg.thresholds.front());
    if (!stability.empty()) doc["stability"] = std::move(stability);
    if (!continuation.empty()) doc["continuation"] = std::move(continuation);
    if (!completion.empty()) doc["symmetry_completion"] = std::move(completion);

    int n_diverged = 0;
    for (const auto& m : out.members) n_diverged += m.diverged ? 1 : 0;
    bool refine_fail = false;
    for (const auto& r : out.refinements) refine_fail |= !r.converged;
    doc["flags"] = {{"diverged_members", n_diverged}, {"nonconverged_refinements", refine_fail}};

    out.manifest.hash = hash_hex(doc.dump());
    doc["manifest_hash"] = out.manifest.hash;
    doc["timings"] = {{"train_s", train_s},
                      {"cluster_s", cluster_s},
                      {"refine_s", refine_s},
                      {"total_s", seconds_since(t0)}};
    out.manifest.doc = std::move(doc);
    out.manifest.any_flagged = n_diverged > 0 || refine_fail;
    return out;
}

/// Write the manifest and the CSV artifacts under the output directory.
inline void emit_reports(const PipelineResult& result, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_text_file(out_dir / "manifest.json", result.manifest.doc.dump(2) + "\n");

    for (std::size_t k = 0; k < result.refined.size(); ++k) {
        write_text_file(out_dir / "fields" / ("solution_" + std::to_string(k) + "_refined.csv"),
                        field_to_csv(result.refined[k]));
        write_text_file(out_dir / "fields" / ("solution_" + std::to_string(k) + "_pinn.csv"),
                        field_to_csv(result.representative_pinn_fields[k]));
    }
    const long stride =
        result.manifest.doc["config"]["probes"]["stride"].get<long>();
    for (std::size_t i = 0; i < result.members.size(); ++i) {
        if (result.members[i].probe_history.empty()) continue;
        write_text_file(out_dir / "probes" / ("member_" + std::to_string(i) + ".csv"),
                        probes_to_csv(result.members[i], stride));
    }
    // residual table (header always, one row per solution)
    std::string res_csv = "solution,converged,newton_iterations,max_residual\n";
    for (const auto& r : result.manifest.doc["refinements"]) {
        res_csv += std::to_string(r["solution"].get<int>()) + "," +
                   (r["converged"].get<bool>() ? "1" : "0") + "," +
                   std::to_string(r["newton_iterations"].get<int>()) + "," +
                   format_double(r["max_residual"].get<double>()) + "\n";
    }
    write_text_file(out_dir / "tables" / "residuals.csv", res_csv);
    if (result.manifest.doc.contains("ratio_above_threshold")) {
        write_text_file(out_dir / "tables" / "ratio.csv",
                        "ratio_above_threshold\n" +
                            format_double(result.manifest.doc["ratio_above_threshold"].get<double>()) + "\n");
    }
}

/// Run a named preset end to end (the three-step procedure).
inline PipelineResult reproduce(const std::string& preset_name, int n_threads = 1,
                                const std::optional<std::string>& out_dir_override = {}) {
    ExperimentConfig cfg = preset_config(preset_name);
    if (out_dir_override) cfg.output_dir = *out_dir_override;
    PipelineResult r = run_pipeline(cfg, n_threads);
    emit_reports(r, cfg.output_dir);
    return r;
}

// ---------------------------------------------------------------------------
// Preset catalog
// ---------------------------------------------------------------------------

inline const std::map<std::string, json>& preset_catalog() {
    static const std::map<std::string, json> catalog = [] {
        std::map<std::string, json> m;

        auto bratu = [](double lambda, json init, int members) {
            return json{
                {"problem", {{"kind", "bratu"}, {"lambda", lambda}}},
                {"architecture", {1, 50, 50, 1}},
                {"init", std::move(init)},
                {"ensemble", {{"members", members}, {"base_seed", 2024}}},
                {"schedule", {{{"iterations", 20000}, {"learning_rate", 1e-3}}}},
                {"collocation", {{"residual_points", 101}}},
                {"probes", {{"locations", {0.5}}, {"stride", 10}}},
                {"clustering",
                 {{"method", "probe"}, {"thresholds", {3.0}}, {"mesh_nodes", 201}, {"representative", "best_loss"}}},
                {"refine", {{"intervals", 1600}, {"tolerance", 1e-10}}},
                {"output_dir", "out"}};
        };
        m["bratu-lambda1"] = bratu(1.0, {{"kind", "normal"}, {"sigma", 2.0}}, 100);
        m["bratu-lambda0.5"] = bratu(0.5, {{"kind", "normal"}, {"sigma", 2.0}}, 10);
        m["bratu-lambda2"] = bratu(2.0, {{"kind", "normal"}, {"sigma", 2.0}}, 10);
        m["bratu-lambda3.5"] = bratu(3.5, {{"kind", "normal"}, {"sigma", 2.0}}, 10);

        // ablation-table cells (desk scale M=500; the reference tables use 10,000)
        auto table1 = [&](json init) {
            json j = bratu(1.0, std::move(init), 500);
            j["clustering"]["representative"] = "best_loss";
            return j;
        };
        m["bratu-table1-n05"] = table1({{"kind", "normal"}, {"sigma", 0.5}});
        m["bratu-table1-n10"] = table1({{"kind", "normal"}, {"sigma", 1.0}});
        m["bratu-table1-n15"] = table1({{"kind", "normal"}, {"sigma", 1.5}});
        m["bratu-table1-u10"] = table1({{"kind", "uniform"}, {"bound", 1.0}});
        m["bratu-table1-u20"] = table1({{"kind", "uniform"}, {"bound", 2.0}});
        m["bratu-table1-u25"] = table1({{"kind", "uniform"}, {"bound", 2.5}});
        m["bratu-table1-u30"] = table1({{"kind", "uniform"}, {"bound", 3.0}});

        m["bratu-multihead"] = json{
            {"problem", {{"kind", "bratu"}, {"lambda", 1.0}}},
            {"architecture", {1, 50, 50, 1}},
            {"init", {{"kind", "normal"}, {"sigma", 2.0}}},
            {"multihead", {{"body", {1, 50}}, {"head", {50, 50, 1}}, {"heads", 100}}},
            {"schedule", {{{"iterations", 20000}, {"learning_rate", 1e-3}}}},
            {"collocation", {{"residual_points", 101}}},
            {"probes", {{"locations", {0.5}}, {"stride", 10}}},
            {"clustering", {{"method", "probe"}, {"thresholds", {3.0}}, {"mesh_nodes", 201}}},
            {"refine", {{"intervals", 1600}, {"tolerance", 1e-10}}},
            {"output_dir", "out"}};

        auto blayer = [](json init, int members, json constraints) {
            json j{{"problem", {{"kind", "boundary_layer"}, {"eps", 0.06}}},
                   {"architecture", {1, 50, 50, 50, 1}},
                   {"init", std::move(init)},
                   {"ensemble", {{"members", members}, {"base_seed", 2024}}},
                   {"schedule",
                    {{{"iterations", 5000}, {"learning_rate", 1e-3}},
                     {{"iterations", 15000}, {"learning_rate", 1e-4}}}},
                   {"collocation", {{"residual_points", 100}}},
                   {"probes", {{"locations", {-0.3, 0.3}}, {"stride", 10}}},
                   {"clustering", {{"method", "distance"}, {"tol", 0.5}, {"mesh_nodes", 201}}},
                   {"refine", {{"intervals", 1000}, {"tolerance", 1e-10}}},
                   {"output_dir", "out"}};
            if (!constraints.empty()) j["constraints"] = std::move(constraints);
            return j;
        };
        m["blayer-tn0.1"] = blayer({{"kind", "truncated_normal"}, {"mu", 0.0}, {"sigma", 0.1}}, 100, json::array());
        m["blayer-tn1"] = blayer({{"kind", "truncated_normal"}, {"mu", 0.0}, {"sigma", 1.0}}, 100, json::array());
        m["blayer-constrained-left"] =
            blayer({{"kind", "truncated_normal"}, {"mu", 0.0}, {"sigma", 1.0}}, 60,
                   json::array({{{"x", -0.3}, {"direction", "greater_than_zero"}}}));
        m["blayer-constrained-right"] =
            blayer({{"kind", "truncated_normal"}, {"mu", 0.0}, {"sigma", 1.0}}, 60,
                   json::array({{{"x", 0.3}, {"direction", "less_than_zero"}}}));

        auto rd = [](double w, double sigma, int members) {
            return json{{"problem", {{"kind", "reaction_diffusion"}, {"D", 0.01}, {"kappa", 0.7}, {"w", w}}},
                        {"architecture", {1, 50, 50, 50, 1}},
                        {"init", {{"kind", "truncated_normal"}, {"mu", 0.0}, {"sigma", sigma}}},
                        {"ensemble", {{"members", members}, {"base_seed", 2024}}},
                        {"schedule",
                         {{{"iterations", 15000}, {"learning_rate", 1e-3}},
                          {{"iterations", 5000}, {"learning_rate", 1e-4}}}},
                        {"collocation", {{"residual_points", 201}}},
                        {"probes", {{"locations", {-0.8}}, {"stride", 10}}},
                        {"clustering", {{"method", "distance"}, {"tol", 0.5}, {"mesh_nodes", 201}}},
                        {"refine", {{"intervals", 6400}, {"tolerance", 1e-10}}},
                        {"output_dir", "out"}};
        };
        m["rd-w6-sigma1"] = rd(6.0, 1.0, 300);
        m["rd-w6-sigma0.5"] = rd(6.0, 0.5, 150);
        m["rd-w6-sigma0.2"] = rd(6.0, 0.2, 150);
        m["rd-w10-sigma1"] = rd(10.0, 1.0, 300);
        m["rd-w10-sigma0.5"] = rd(10.0, 0.5, 150);
        m["rd-w10-sigma0.2"] = rd(10.0, 0.2, 150);

        m["rd-w6-multihead"] = json{
            {"problem", {{"kind", "reaction_diffusion"}, {"D", 0.01}, {"kappa", 0.7}, {"w", 6.0}}},
            {"architecture", {1, 50, 50, 50, 1}},
            {"init", {{"kind", "truncated_normal"}, {"mu", 0.0}, {"sigma", 1.0}}},
            {"multihead", {{"body", {1, 50, 50}}, {"head", {50, 50, 1}}, {"heads", 100}}},
            {"schedule",
             {{{"iterations", 20000}, {"learning_rate", 1e-3}},
              {{"iterations", 10000}, {"learning_rate", 1e-4}}}},
            {"collocation", {{"residual_points", 201}}},
            {"probes", {{"locations", {-0.8}}, {"stride", 10}}},
            {"clustering", {{"method", "distance"}, {"tol", 0.5}, {"mesh_nodes", 201}}},
            {"refine", {{"intervals", 6400}, {"tolerance", 1e-10}}},
            {"output_dir", "out"}};

        m["allen-cahn-eps0.01"] = json{
            {"problem", {{"kind", "allen_cahn"}, {"eps", 0.01}}},
            {"architecture", {2, 50, 50, 50, 1}},
            {"init", {{"kind", "truncated_normal"}, {"mu", 0.0}, {"sigma", 0.1}}},
            {"ensemble", {{"members", 50}, {"base_seed", 2024}}},
            {"schedule",
             {{{"iterations", 15000}, {"learning_rate", 1e-3}},
              {{"iterations", 5000}, {"learning_rate", 1e-4}}}},
            {"collocation", {{"residual_points", 3000}, {"boundary_per_edge", 99}, {"sampling_seed", 7}}},
            {"probes", {{"locations", {0.25}}, {"locations_y", {0.25}}, {"stride", 100}}},
            {"clustering", {{"method", "distance"}, {"tol", 0.5}, {"mesh_nodes", 101}}},
            {"refine", {{"grid", 128}, {"tolerance", 1e-9}}},
            {"stability", {{"dt", 0.01}, {"time", 50.0}, {"drift_tol", 0.05}}},
            {"continuation", {{"eps_sequence", {0.001}}, {"tolerance", 1e-9}}},
            {"output_dir", "out"}};

        m["poisson2d-s800"] = json{
            {"problem", {{"kind", "poisson2d"}, {"s", 800.0}}},
            {"architecture", {2, 50, 50, 50, 1}},
            {"init", {{"kind", "truncated_normal"}, {"mu", 0.0}, {"sigma", 3.0}}},
            {"ensemble", {{"members", 200}, {"base_seed", 2024}}},
            {"schedule",
             {{{"iterations", 8000}, {"learning_rate", 1e-3}},
              {{"iterations", 2000}, {"learning_rate", 1e-4}}}},
            {"collocation", {{"residual_points", 1000}, {"boundary_per_edge", 99}, {"sampling_seed", 7}}},
            {"probes", {{"locations", {0.25}}, {"locations_y", {0.25}}, {"stride", 100}}},
            {"clustering", {{"method", "distance"}, {"tol", 2.0}, {"mesh_nodes", 101}}},
            {"refine", {{"grid", 128}, {"tolerance", 1e-9}}},
            {"symmetry_completion", true},
            {"output_dir", "out"}};

        return m;
    }();
    return catalog;
}

} // namespace multisol
