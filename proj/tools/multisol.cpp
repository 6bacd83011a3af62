// multisol: discover multiple solutions of nonlinear ODEs/PDEs by training
// ensembles of randomly initialized physics-informed networks, clustering
// the trained solutions, and refining representatives with finite-
// difference Newton solvers.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "multisol/harness.hpp"
#include "oracle_checks.hpp"

using namespace multisol;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFlagged = 2;
constexpr int kExitInternal = 3;

int thread_count(int cli_threads) {
    if (cli_threads > 0) return cli_threads;
    if (const char* env = std::getenv("MULTISOL_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

ExperimentConfig resolve_config(const std::string& config_path, const std::string& preset,
                                std::optional<std::uint64_t> seed_override,
                                const std::string& out_override) {
    if (config_path.empty() && preset.empty())
        throw std::runtime_error("either --config or --preset is required");
    ExperimentConfig cfg = !config_path.empty() ? load_config(config_path) : preset_config(preset);
    if (seed_override) {
        cfg.base_seed = *seed_override;
        cfg.canonical["ensemble"]["base_seed"] = *seed_override;
    }
    if (!out_override.empty()) {
        cfg.output_dir = out_override;
        cfg.canonical["output_dir"] = out_override;
    }
    return cfg;
}

json member_to_json(const MemberResult& m) {
    json j;
    j["seed"] = m.seed;
    j["final_loss"] = m.diverged ? json() : json(m.final_loss);
    j["diverged"] = m.diverged;
    j["iterations_run"] = m.iterations_run;
    j["params"] = m.final_params;
    json probe_end = json::array();
    for (const auto& s : m.probe_history)
        if (!s.empty()) probe_end.push_back(s.back());
    j["probe_end"] = probe_end;
    return j;
}

MemberResult member_from_json(const json& j) {
    MemberResult m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.diverged = j.at("diverged").get<bool>();
    if (!j.at("final_loss").is_null()) m.final_loss = j.at("final_loss").get<double>();
    m.iterations_run = j.at("iterations_run").get<long>();
    m.final_params = j.at("params").get<std::vector<double>>();
    for (const auto& v : j.at("probe_end")) m.probe_history.push_back({v.get<double>()});
    return m;
}

int cmd_run(const ExperimentConfig& cfg, int threads) {
    PipelineResult r = run_pipeline(cfg, threads);
    emit_reports(r, cfg.output_dir);
    std::printf("pipeline complete: %d members, %d clusters, %zu refined solutions\n",
                static_cast<int>(r.members.size()), r.clusters.n_clusters(), r.refined.size());
    std::printf("manifest: %s (hash %s)\n", (fs::path(cfg.output_dir) / "manifest.json").c_str(),
                r.manifest.hash.c_str());
    if (r.manifest.any_flagged) {
        std::printf("flagged: %d diverged member(s), non-converged refinements: %s\n",
                    r.manifest.doc["flags"]["diverged_members"].get<int>(),
                    r.manifest.doc["flags"]["nonconverged_refinements"].get<bool>() ? "yes" : "no");
        return kExitFlagged;
    }
    return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, int threads) {
    CollocationSet colloc =
        cfg.problem.is_2d()
            ? colloc_random_2d(cfg.problem, cfg.residual_points, cfg.boundary_per_edge, cfg.sampling_seed)
            : colloc_even_1d(cfg.problem, cfg.residual_points);
    colloc.w_f = cfg.w_f;
    colloc.w_b = cfg.w_b;
    std::vector<MemberResult> members;
    if (cfg.multihead)
        members = train_multihead(cfg.problem, *cfg.multihead, cfg.init, cfg.base_seed, cfg.schedule,
                                  colloc, cfg.probes);
    else
        members = train_ensemble(cfg.problem, cfg.architecture, cfg.init, cfg.base_seed, cfg.members,
                                 cfg.schedule, colloc, cfg.probes, cfg.constraints, threads);
    json doc;
    doc["config"] = cfg.canonical;
    doc["members"] = json::array();
    for (const auto& m : members) doc["members"].push_back(member_to_json(m));
    write_text_file(fs::path(cfg.output_dir) / "members.json", doc.dump() + "\n");
    for (std::size_t i = 0; i < members.size(); ++i)
        if (!members[i].probe_history.empty())
            write_text_file(fs::path(cfg.output_dir) / "probes" / ("member_" + std::to_string(i) + ".csv"),
                            probes_to_csv(members[i], cfg.probes.stride));
    int diverged = 0;
    for (const auto& m : members) diverged += m.diverged;
    std::printf("trained %zu members (%d diverged) -> %s\n", members.size(), diverged,
                (fs::path(cfg.output_dir) / "members.json").c_str());
    return diverged > 0 ? kExitFlagged : kExitOk;
}

std::pair<ExperimentConfig, std::vector<MemberResult>> load_members(const std::string& out_dir) {
    std::ifstream in(fs::path(out_dir) / "members.json");
    if (!in) throw std::runtime_error("missing members.json under " + out_dir + " (run `train` first)");
    json doc = json::parse(in);
    ExperimentConfig cfg = config_from_json(doc.at("config"));
    std::vector<MemberResult> members;
    for (const auto& m : doc.at("members")) members.push_back(member_from_json(m));
    return {std::move(cfg), std::move(members)};
}

int cmd_cluster(const std::string& out_dir) {
    auto [cfg, members] = load_members(out_dir);
    const NetworkSpec spec = cfg.multihead ? cfg.multihead->standalone_spec() : cfg.architecture;
    const int mesh_n = cfg.cluster_mesh_nodes - 1;
    std::vector<SolutionField> fields(members.size());
    std::vector<char> diverged(members.size(), 0);
    int first_ok = -1;
    for (std::size_t i = 0; i < members.size(); ++i) {
        diverged[i] = members[i].diverged;
        if (!members[i].diverged) {
            fields[i] = sample_field(members[i].final_params, spec, cfg.problem, mesh_n,
                                     cfg.problem.is_2d() ? mesh_n : 0);
            if (first_ok < 0) first_ok = static_cast<int>(i);
        }
    }
    for (std::size_t i = 0; i < members.size(); ++i)
        if (members[i].diverged && first_ok >= 0) fields[i] = fields[first_ok];

    ClusterReport rep;
    if (cfg.cluster_method == ExperimentConfig::ClusterMethod::Probe)
        rep = cluster_by_probe(members, cfg.probe_index, cfg.thresholds);
    else
        rep = cluster_by_distance(fields, cfg.distance_tol, diverged);
    std::vector<double> losses;
    for (const auto& m : members) losses.push_back(m.final_loss);
    rep.representatives = select_representative(rep, losses, cfg.representative, cfg.representative_seed);

    json doc;
    doc["labels"] = rep.labels;
    doc["counts"] = rep.counts;
    doc["representatives"] = rep.representatives;
    write_text_file(fs::path(out_dir) / "clusters.json", doc.dump() + "\n");
    for (int c = 0; c < rep.n_clusters(); ++c)
        write_text_file(fs::path(out_dir) / "fields" / ("cluster_" + std::to_string(c) + "_pinn.csv"),
                        field_to_csv(fields[rep.representatives[c]]));
    std::printf("%d clusters over %zu members -> %s\n", rep.n_clusters(), members.size(),
                (fs::path(out_dir) / "clusters.json").c_str());
    return kExitOk;
}

int cmd_refine(const std::string& out_dir, const std::string& field_csv) {
    if (!field_csv.empty()) {
        // standalone mode: refine one field file against the stage config
        auto [cfg, members] = load_members(out_dir);
        (void)members;
        std::ifstream in(field_csv);
        if (!in) throw std::runtime_error("cannot open field file: " + field_csv);
        std::stringstream ss;
        ss << in.rdbuf();
        SolutionField f = field_from_csv(ss.str());
        NewtonOptions opts{cfg.refine_tol, cfg.refine_max_iter, 20};
        RefineResult r = f.dim == 1 ? newton_solve_1d(cfg.problem,
                                                      Mesh1D{f.xmin, f.xmax, f.nx}, f, opts)
                                    : newton_solve_2d(cfg.problem, Grid2D{f.nx, f.ny}, f, opts);
        const fs::path out = fs::path(out_dir) / "fields" / (fs::path(field_csv).stem().string() + "_refined.csv");
        write_text_file(out, field_to_csv(r.field));
        std::printf("refined %s: converged=%d iters=%d max_residual=%.3e -> %s\n", field_csv.c_str(),
                    (int)r.converged, r.iterations, max_residual(cfg.problem, r.field), out.c_str());
        return r.converged ? kExitOk : kExitFlagged;
    }
    auto [cfg, members] = load_members(out_dir);
    std::ifstream in(fs::path(out_dir) / "clusters.json");
    if (!in) throw std::runtime_error("missing clusters.json under " + out_dir + " (run `cluster` first)");
    json cdoc = json::parse(in);
    const NetworkSpec spec = cfg.multihead ? cfg.multihead->standalone_spec() : cfg.architecture;
    NewtonOptions opts{cfg.refine_tol, cfg.refine_max_iter, 20};
    std::string res_csv = "solution,converged,newton_iterations,max_residual\n";
    bool all_ok = true;
    int k = 0;
    for (int repidx : cdoc.at("representatives").get<std::vector<int>>()) {
        SolutionField guess =
            cfg.problem.is_2d()
                ? sample_field(members[repidx].final_params, spec, cfg.problem, cfg.refine_grid, cfg.refine_grid)
                : sample_field(members[repidx].final_params, spec, cfg.problem, cfg.refine_intervals);
        RefineResult r = cfg.problem.is_2d()
                             ? newton_solve_2d(cfg.problem, Grid2D{cfg.refine_grid, cfg.refine_grid}, guess, opts)
                             : newton_solve_1d(cfg.problem,
                                               Mesh1D::for_problem(cfg.problem, cfg.refine_intervals), guess, opts);
        write_text_file(fs::path(out_dir) / "fields" / ("solution_" + std::to_string(k) + "_refined.csv"),
                        field_to_csv(r.field));
        const double res = max_residual(cfg.problem, r.field);
        res_csv += std::to_string(k) + "," + (r.converged ? "1" : "0") + "," +
                   std::to_string(r.iterations) + "," + format_double(res) + "\n";
        std::printf("solution %d: converged=%d iters=%d max_residual=%.3e\n", k, (int)r.converged,
                    r.iterations, res);
        all_ok &= r.converged;
        ++k;
    }
    write_text_file(fs::path(out_dir) / "tables" / "residuals.csv", res_csv);
    return all_ok ? kExitOk : kExitFlagged;
}

int cmd_report(const std::string& out_dir) {
    std::ifstream in(fs::path(out_dir) / "manifest.json");
    if (!in) throw std::runtime_error("missing manifest.json under " + out_dir);
    json doc = json::parse(in);
    std::printf("config hash:   %s\n", doc["config_hash"].get<std::string>().c_str());
    std::printf("manifest hash: %s\n", doc["manifest_hash"].get<std::string>().c_str());
    std::printf("members:       %zu (%d diverged)\n", doc["members"].size(),
                doc["flags"]["diverged_members"].get<int>());
    std::printf("clusters:      %zu\n", doc["clusters"].size());
    for (const auto& c : doc["clusters"])
        std::printf("  cluster %d: %d members, representative %d\n", c["id"].get<int>(),
                    c["count"].get<int>(), c["representative"].get<int>());
    for (const auto& r : doc["refinements"])
        std::printf("  solution %d: converged=%s newton_iters=%d max_residual=%.3e\n",
                    r["solution"].get<int>(), r["converged"].get<bool>() ? "yes" : "no",
                    r["newton_iterations"].get<int>(), r["max_residual"].get<double>());
    if (doc.contains("ratio_above_threshold"))
        std::printf("ratio above threshold: %.3f\n", doc["ratio_above_threshold"].get<double>());
    if (doc.contains("stability"))
        for (const auto& s : doc["stability"])
            std::printf("  stability: solution %d %s (drift %.3g, reached %d)\n",
                        s["solution"].get<int>(), s["stable"].get<bool>() ? "stable" : "UNSTABLE",
                        s["drift"].get<double>(), s["reached_state"].get<int>());
    if (doc.contains("continuation"))
        for (const auto& s : doc["continuation"])
            std::printf("  continuation: solution %d eps=%g converged=%s max_residual=%.3e\n",
                        s["solution"].get<int>(), s["eps"].get<double>(),
                        s["converged"].get<bool>() ? "yes" : "no", s["max_residual"].get<double>());
    std::printf("timings: train %.1fs, cluster %.1fs, refine %.1fs, total %.1fs\n",
                doc["timings"]["train_s"].get<double>(), doc["timings"]["cluster_s"].get<double>(),
                doc["timings"]["refine_s"].get<double>(), doc["timings"]["total_s"].get<double>());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiple-solution discovery for nonlinear ODEs/PDEs via ensemble PINNs + Newton refinement"};
    app.require_subcommand(1);

    std::string config_path, preset, out_dir, field_csv;
    int threads = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub, bool needs_cfg) {
        if (needs_cfg) {
            sub->add_option("--config", config_path, "JSON config file");
            sub->add_option("--preset", preset, "named preset (see `reproduce --list`)");
            sub->add_option("--seed", seed, "override ensemble.base_seed")->each([&](std::string) {
                seed_set = true;
            });
        }
        sub->add_option("--threads", threads, "worker threads (default: MULTISOL_THREADS or 1)");
        sub->add_option("--out", out_dir, "output directory");
    };

    auto* c_check = app.add_subcommand("check", "run the built-in numeric self-tests");
    auto* c_run = app.add_subcommand("run", "full pipeline: train, cluster, refine, verify, report");
    add_common(c_run, true);
    auto* c_train = app.add_subcommand("train", "train the ensemble and store members.json");
    add_common(c_train, true);
    auto* c_cluster = app.add_subcommand("cluster", "cluster a trained ensemble (reads members.json)");
    add_common(c_cluster, false);
    auto* c_refine = app.add_subcommand("refine", "refine cluster representatives (reads clusters.json)");
    add_common(c_refine, false);
    c_refine->add_option("--field", field_csv, "refine one field CSV instead of the cluster output");
    auto* c_repro = app.add_subcommand("reproduce", "run a named preset end to end");
    std::string repro_name;
    bool repro_list = false;
    c_repro->add_option("name", repro_name, "preset id");
    c_repro->add_flag("--list", repro_list, "list available presets");
    add_common(c_repro, false);
    auto* c_report = app.add_subcommand("report", "summarize a manifest.json");
    add_common(c_report, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (c_check->parsed()) return run_oracle_checks() ? kExitOk : kExitInternal;
        if (c_run->parsed()) {
            auto cfg = resolve_config(config_path, preset,
                                      seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt, out_dir);
            return cmd_run(cfg, thread_count(threads));
        }
        if (c_train->parsed()) {
            auto cfg = resolve_config(config_path, preset,
                                      seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt, out_dir);
            return cmd_train(cfg, thread_count(threads));
        }
        if (c_cluster->parsed()) {
            if (out_dir.empty()) throw std::runtime_error("cluster requires --out");
            return cmd_cluster(out_dir);
        }
        if (c_refine->parsed()) {
            if (out_dir.empty()) throw std::runtime_error("refine requires --out");
            return cmd_refine(out_dir, field_csv);
        }
        if (c_repro->parsed()) {
            if (repro_list) {
                for (const auto& [name, j] : preset_catalog()) std::printf("%s\n", name.c_str());
                return kExitOk;
            }
            if (repro_name.empty()) throw std::runtime_error("reproduce requires a preset name (or --list)");
            PipelineResult r = reproduce(repro_name, thread_count(threads),
                                         out_dir.empty() ? std::nullopt : std::optional<std::string>(out_dir));
            std::printf("reproduced %s: %d clusters, %zu refined solutions (manifest hash %s)\n",
                        repro_name.c_str(), r.clusters.n_clusters(), r.refined.size(),
                        r.manifest.hash.c_str());
            return r.manifest.any_flagged ? kExitFlagged : kExitOk;
        }
        if (c_report->parsed()) {
            if (out_dir.empty()) throw std::runtime_error("report requires --out");
            return cmd_report(out_dir);
        }
    } catch (const std::runtime_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
    return kExitUsage;
}
