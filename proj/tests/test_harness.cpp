#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "multisol/harness.hpp"

using namespace multisol;
namespace fs = std::filesystem;

namespace {

json tiny_bratu_config() {
    return json{{"problem", {{"kind", "bratu"}, {"lambda", 1.0}}},
                {"architecture", {1, 20, 20, 1}},
                {"init", {{"kind", "normal"}, {"sigma", 2.0}}},
                {"ensemble", {{"members", 4}, {"base_seed", 11}}},
                {"schedule", {{{"iterations", 400}, {"learning_rate", 1e-3}}}},
                {"collocation", {{"residual_points", 41}}},
                {"probes", {{"locations", {0.5}}, {"stride", 10}}},
                {"clustering", {{"method", "probe"}, {"thresholds", {3.0}}, {"mesh_nodes", 101}}},
                {"refine", {{"intervals", 200}, {"tolerance", 1e-8}}},
                {"output_dir", "out"}};
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("multisol_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

} // namespace

TEST_CASE("config: empty object reports the missing problem key") {
    try {
        config_from_json(json::object());
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("missing required key: problem") != std::string::npos);
    }
}

TEST_CASE("config: empty file is a parse error with diagnostics") {
    TempDir tmp;
    const auto p = tmp.path / "empty.json";
    std::ofstream(p).close();
    try {
        load_config(p);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("parse error") != std::string::npos);
    }
}

TEST_CASE("config: unknown keys are rejected and named") {
    json j = tiny_bratu_config();
    j["bogus_key"] = 1;
    try {
        config_from_json(j);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("bogus_key") != std::string::npos);
    }
    json k = tiny_bratu_config();
    k["clustering"]["nope"] = true;
    REQUIRE_THROWS(config_from_json(k));
}

TEST_CASE("config: zero members rejected before any training") {
    json j = tiny_bratu_config();
    j["ensemble"]["members"] = 0;
    REQUIRE_THROWS(config_from_json(j));
}

TEST_CASE("config: canonical form is a fixed point of load/serialize") {
    auto cfg = config_from_json(tiny_bratu_config());
    auto cfg2 = config_from_json(cfg.canonical);
    REQUIRE(cfg2.canonical == cfg.canonical);
    REQUIRE(cfg2.canonical.dump() == cfg.canonical.dump());
}

TEST_CASE("preset: bratu-lambda1 fills the benchmark protocol values") {
    auto cfg = preset_config("bratu-lambda1");
    REQUIRE(cfg.architecture.layer_widths == std::vector<int>{1, 50, 50, 1});
    REQUIRE(cfg.residual_points == 101);
    REQUIRE(cfg.members == 100);
    REQUIRE(cfg.schedule.stages.size() == 1);
    REQUIRE(cfg.schedule.stages[0].iterations == 20000);
    REQUIRE(cfg.schedule.stages[0].learning_rate == 1e-3);
    REQUIRE(cfg.init.kind == InitScheme::Kind::Normal);
    REQUIRE(cfg.init.sigma == 2.0);
    REQUIRE(cfg.refine_intervals == 1600);
    REQUIRE(std::get<Bratu>(cfg.problem.eq).lambda == 1.0);
}

TEST_CASE("preset: unknown name lists the catalog") {
    try {
        preset_config("nope");
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("unknown preset") != std::string::npos);
        REQUIRE(msg.find("bratu-lambda1") != std::string::npos);
    }
}

TEST_CASE("field CSV round trip is bit-exact") {
    SolutionField f;
    f.dim = 1;
    f.xmin = -0.5;
    f.xmax = 0.5;
    f.nx = 7;
    Rng rng(5);
    for (int i = 0; i <= 7; ++i) f.values.push_back(rng.normal(1.7));
    auto g = field_from_csv(field_to_csv(f));
    REQUIRE(g.dim == 1);
    REQUIRE(g.nx == 7);
    REQUIRE(g.values == f.values);

    SolutionField h2;
    h2.dim = 2;
    h2.nx = 4;
    h2.ny = 3;
    for (int i = 0; i < 5 * 4; ++i) h2.values.push_back(rng.uniform_sym(3.0));
    auto g2 = field_from_csv(field_to_csv(h2));
    REQUIRE(g2.dim == 2);
    REQUIRE(g2.nx == 4);
    REQUIRE(g2.ny == 3);
    REQUIRE(g2.values == h2.values);
}

TEST_CASE("pipeline: tiny bratu run produces two clusters and refines them") {
    auto cfg = config_from_json(tiny_bratu_config());
    auto r = run_pipeline(cfg);
    REQUIRE(r.members.size() == 4);
    REQUIRE(r.clusters.n_clusters() >= 1);
    REQUIRE(r.refined.size() == r.clusters.representatives.size());
    for (const auto& ref : r.refinements) REQUIRE(ref.converged);
    REQUIRE(r.manifest.doc.contains("ratio_above_threshold"));
}

TEST_CASE("pipeline: identical configs give identical manifest hashes") {
    auto cfg = config_from_json(tiny_bratu_config());
    auto a = run_pipeline(cfg);
    auto b = run_pipeline(cfg);
    REQUIRE(a.manifest.hash == b.manifest.hash);
    REQUIRE(a.manifest.doc["config_hash"] == b.manifest.doc["config_hash"]);
}

TEST_CASE("pipeline: manifest hash reacts to config changes") {
    auto a = run_pipeline(config_from_json(tiny_bratu_config()));
    json j = tiny_bratu_config();
    j["ensemble"]["base_seed"] = 12;
    auto b = run_pipeline(config_from_json(j));
    REQUIRE(a.manifest.hash != b.manifest.hash);
}

TEST_CASE("emit_reports: artifacts land and the residual table matches the field") {
    TempDir tmp;
    auto cfg = config_from_json(tiny_bratu_config());
    auto r = run_pipeline(cfg);
    emit_reports(r, tmp.path);
    REQUIRE(fs::exists(tmp.path / "manifest.json"));
    REQUIRE(fs::exists(tmp.path / "tables" / "residuals.csv"));
    REQUIRE(fs::exists(tmp.path / "probes" / "member_0.csv"));

    // report/field consistency: the manifest's residual equals the value
    // recomputed from the emitted CSV (round trip is bit-exact)
    for (std::size_t k = 0; k < r.refined.size(); ++k) {
        std::ifstream in(tmp.path / "fields" / ("solution_" + std::to_string(k) + "_refined.csv"));
        REQUIRE(in.good());
        std::stringstream ss;
        ss << in.rdbuf();
        auto f = field_from_csv(ss.str());
        const double from_csv = max_residual(cfg.problem, f);
        const double from_doc = r.manifest.doc["refinements"][k]["max_residual"].get<double>();
        REQUIRE(from_csv == from_doc);
    }

    // manifest.json reloads and its stored hash matches the recomputation
    std::ifstream min(tmp.path / "manifest.json");
    json doc = json::parse(min);
    json stripped = doc;
    stripped.erase("timings");
    stripped.erase("manifest_hash");
    REQUIRE(doc["manifest_hash"].get<std::string>() == hash_hex(stripped.dump()));
}

TEST_CASE("pipeline: diverged members are isolated, the rest proceed") {
    json j = tiny_bratu_config();
    j["init"] = {{"kind", "normal"}, {"sigma", 40.0}}; // exp(u) overflow fodder
    j["ensemble"]["members"] = 6;
    j["schedule"] = {{{"iterations", 50}, {"learning_rate", 1e-3}}};
    auto r = run_pipeline(config_from_json(j));
    int diverged = 0;
    for (const auto& m : r.members) diverged += m.diverged;
    // every diverged member is labeled -1 and excluded; manifest still builds
    for (std::size_t i = 0; i < r.members.size(); ++i)
        if (r.members[i].diverged) REQUIRE(r.clusters.labels[i] == -1);
    REQUIRE(r.manifest.doc["flags"]["diverged_members"].get<int>() == diverged);
    if (diverged > 0) REQUIRE(r.manifest.any_flagged);
}

TEST_CASE("pipeline: multihead config path trains per-head members") {
    json j = tiny_bratu_config();
    j.erase("ensemble");
    j["multihead"] = {{"body", {1, 20}}, {"head", {20, 20, 1}}, {"heads", 5}};
    auto r = run_pipeline(config_from_json(j));
    REQUIRE(r.members.size() == 5);
    REQUIRE(r.clusters.n_clusters() >= 1);
}
