#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "voxmesh/pipeline.hpp"

using namespace voxmesh;

namespace {

namespace fs = std::filesystem;

std::string fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    return p.string();
}

// Small but complete configuration that runs in a few seconds.
RunConfig tiny_config(const std::string& out_dir, uint64_t seed = 1) {
    RunConfig cfg;
    cfg.scene = "sphere";
    cfg.out_dir = out_dir;
    cfg.seed = seed;
    cfg.n_train = 6;
    cfg.n_val = 2;
    cfg.n_test = 2;
    cfg.resolution = 32;
    cfg.stage1.iters = 400;
    cfg.stage1.lr = 0.08;  // aggressive: densities must saturate in few steps
    cfg.stage1.batch_rays = 512;
    cfg.stage1.n_samples = 32;
    cfg.field_resolution = 16;
    cfg.conversion_eps = 2.0;
    cfg.n_candidates = 4;
    cfg.stage2.iters = 6;
    cfg.stage2.batch_views = 2;
    cfg.stage2.val_views = 2;
    cfg.sdf_resolution = 16;
    cfg.bandit_m = 2;
    cfg.bandit_k = 3;
    cfg.strategy = Strategy::None;
    cfg.checkpoint_every = 0;
    cfg.eval_every = 0;
    cfg.stage1.seed = cfg.stage2.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("strategy names round trip") {
    for (Strategy s : {Strategy::Ucb, Strategy::Random, Strategy::Greedy, Strategy::None})
        CHECK(strategy_from_string(to_string(s)) == s);
    CHECK_THROWS(strategy_from_string("thompson"));
}

TEST_CASE("config JSON round trip preserves every field") {
    RunConfig cfg = tiny_config("/tmp/unused", 42);
    cfg.strategy = Strategy::Greedy;
    cfg.commit = CommitPolicy::BetterOfTwo;
    cfg.stage2.lambda_tv = 0.05;
    cfg.bandit_c = 2.5;
    RunConfig back = config_from_json(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK(back.seed == 42);
    CHECK(back.strategy == Strategy::Greedy);
    CHECK(back.commit == CommitPolicy::BetterOfTwo);
    CHECK(back.stage2.lambda_tv == 0.05);
    CHECK(back.bandit_c == 2.5);
    // Stage seeds are derived from the run seed.
    CHECK(back.stage1.seed == 42);
    CHECK(back.stage2.seed == 42);
}

TEST_CASE("config schema rejects unknown keys and bad values") {
    nlohmann::json base = to_json(tiny_config("/tmp/unused"));

    nlohmann::json top = base;
    top["surprise"] = 1;
    CHECK_THROWS_WITH(config_from_json(top), Catch::Matchers::ContainsSubstring("surprise"));

    nlohmann::json nested = base;
    nested["stage1"]["momentum"] = 0.9;
    CHECK_THROWS_WITH(config_from_json(nested), Catch::Matchers::ContainsSubstring("momentum"));

    nlohmann::json bad = base;
    bad["conversion_eps"] = -1.0;
    CHECK_THROWS(config_from_json(bad));
    bad = base;
    bad["bandit"]["strategy"] = "dqn";
    CHECK_THROWS(config_from_json(bad));
    bad = base;
    bad["bandit"]["commit"] = "both";
    CHECK_THROWS(config_from_json(bad));
    bad = base;
    bad["dataset"]["n_train"] = 0;
    CHECK_THROWS(config_from_json(bad));
    bad = base;
    bad["bandit"]["m"] = 99;  // exceeds n_candidates
    CHECK_THROWS(config_from_json(bad));
}

TEST_CASE("config file load and persistence") {
    std::string dir = fresh_dir("voxmesh_cfg_test");
    RunConfig cfg = tiny_config(dir, 7);
    persist_config(cfg);
    RunConfig back = load_config(dir + "/config.json");
    CHECK(to_json(back) == to_json(cfg));
    CHECK_THROWS(load_config(dir + "/nope.json"));
    fs::remove_all(dir);
}

TEST_CASE("mesh hash is deterministic and sensitive") {
    AnalyticScene s = AnalyticScene::make("sphere");
    SdfGrid g = grid_from_function(16, s.bounds, [&](const Vec3& p) { return sdf_eval(s, p); });
    TriangleMesh a = extract_mesh(g), b = extract_mesh(g);
    CHECK(mesh_hash(a) == mesh_hash(b));
    b.vertices[0].x += 1e-12;  // any bit change alters the hash
    CHECK(mesh_hash(a) != mesh_hash(b));
}

TEST_CASE("ground-truth mesh matches a finer extraction closely") {
    AnalyticScene s = AnalyticScene::make("sphere");
    TriangleMesh lo = groundtruth_mesh(s, 48);
    TriangleMesh hi = groundtruth_mesh(s, 96);
    CHECK(chamfer_distance(lo, hi, {4000, 0}) < 1e-3);
}

TEST_CASE("full pipeline produces the documented run directory") {
    std::string dir = fresh_dir("voxmesh_pipe_test");
    RunConfig cfg = tiny_config(dir);

    run_gen_scene(cfg);
    CHECK(fs::exists(dir + "/config.json"));
    CHECK(fs::exists(dir + "/dataset/train/manifest.json"));
    CHECK(fs::exists(dir + "/dataset/val/manifest.json"));
    CHECK(fs::exists(dir + "/dataset/test/manifest.json"));

    run_stage1(cfg);
    CHECK(fs::exists(dir + "/checkpoints/stage1.ckpt"));
    CHECK(fs::exists(dir + "/trace_stage1.csv"));
    CHECK(fs::exists(dir + "/candidates/manifest.json"));

    run_extract_sdf(cfg);
    CHECK(fs::exists(dir + "/meshes/coarse.obj"));

    run_stage2(cfg);
    CHECK(fs::exists(dir + "/checkpoints/stage2.ckpt"));
    CHECK(fs::exists(dir + "/trace.csv"));
    CHECK(fs::exists(dir + "/bandit.csv"));
    CHECK(fs::exists(dir + "/meshes/final.obj"));
    CHECK(fs::exists(dir + "/meshes/final.ply"));

    RunMetrics m = run_eval(cfg, 64);
    CHECK(fs::exists(dir + "/metrics.json"));
    CHECK(m.psnr > 0);
    CHECK(m.cd >= 0);
    CHECK(std::isfinite(m.cd));

    // Exported meshes import back with identical topology.
    TriangleMesh obj = import_mesh(dir + "/meshes/final.obj");
    TriangleMesh ply = import_mesh(dir + "/meshes/final.ply");
    CHECK(obj.faces == ply.faces);
    CHECK(obj.vertices.size() == ply.vertices.size());
    CHECK(obj.colors.size() == obj.vertices.size());

    // With strategy none, no candidate ever enters a batch.
    std::ifstream trace(dir + "/trace.csv");
    std::string line;
    std::getline(trace, line);  // header
    while (std::getline(trace, line)) {
        auto first = line.find(',');
        auto second = line.find(',', first + 1);
        auto third = line.find(',', second + 1);
        CHECK(line.substr(second + 1, third - second - 1) == "0");
    }
    // And the bandit log stays empty (header only).
    std::ifstream blog(dir + "/bandit.csv");
    int blines = 0;
    while (std::getline(blog, line)) ++blines;
    CHECK(blines == 1);

    fs::remove_all(dir);
}

TEST_CASE("identical config and seed reproduce the final mesh hash") {
    std::string d1 = fresh_dir("voxmesh_det_a");
    std::string d2 = fresh_dir("voxmesh_det_b");
    auto run = [](const RunConfig& cfg) {
        run_gen_scene(cfg);
        run_stage1(cfg);
        run_extract_sdf(cfg);
        run_stage2(cfg);
        Stage2Checkpoint ck = load_stage2(cfg.out_dir + "/checkpoints/stage2.ckpt");
        return mesh_hash(extract_mesh(ck.grid));
    };
    uint64_t h1 = run(tiny_config(d1, 5));
    uint64_t h2 = run(tiny_config(d2, 5));
    CHECK(h1 == h2);
    // A different seed gives a different mesh.
    std::string d3 = fresh_dir("voxmesh_det_c");
    uint64_t h3 = run(tiny_config(d3, 6));
    CHECK(h3 != h1);
    fs::remove_all(d1);
    fs::remove_all(d2);
    fs::remove_all(d3);
}

TEST_CASE("interrupted stages resume to a bit-identical result") {
    std::string full_dir = fresh_dir("voxmesh_res_full");
    std::string split_dir = fresh_dir("voxmesh_res_split");

    RunConfig full = tiny_config(full_dir, 3);
    run_gen_scene(full);
    run_stage1(full);
    run_extract_sdf(full);
    run_stage2(full);

    // Same run interrupted mid-stage-1 and mid-stage-2, then resumed: the
    // drivers pick up from the checkpoint iteration with the config unchanged.
    RunConfig part = tiny_config(split_dir, 3);
    run_gen_scene(part);
    run_stage1(part, /*stop_after=*/73);
    run_stage1(part);  // resumes from iteration 73 and renders candidates
    run_extract_sdf(part);
    run_stage2(part, /*stop_after=*/2);
    run_stage2(part);  // resumes from iteration 2

    Stage2Checkpoint a = load_stage2(full_dir + "/checkpoints/stage2.ckpt");
    Stage2Checkpoint b = load_stage2(split_dir + "/checkpoints/stage2.ckpt");
    CHECK(a.iteration == b.iteration);
    CHECK(a.grid.sdf == b.grid.sdf);
    CHECK(a.grid.weight_raw == b.grid.weight_raw);
    CHECK(a.appearance.diffuse_raw == b.appearance.diffuse_raw);
    CHECK(a.appearance.spec_coeffs == b.appearance.spec_coeffs);
    CHECK(mesh_hash(extract_mesh(a.grid)) == mesh_hash(extract_mesh(b.grid)));
    fs::remove_all(full_dir);
    fs::remove_all(split_dir);
}

TEST_CASE("bandit strategies log enhancement records") {
    std::string dir = fresh_dir("voxmesh_strat_test");
    RunConfig cfg = tiny_config(dir);
    cfg.strategy = Strategy::Ucb;
    run_gen_scene(cfg);
    run_stage1(cfg);
    run_extract_sdf(cfg);
    run_stage2(cfg);
    // Cadence 3 over 6 iterations: two enhancement records.
    std::ifstream blog(dir + "/bandit.csv");
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(blog, line)) lines.push_back(line);
    REQUIRE(lines.size() == 3);  // header + 2 records
    CHECK(lines[0] == "t,action,members,psnr_enh,psnr_orig,reward,count,mean");
    // Enhanced batches contain bandit_m candidate views.
    std::ifstream trace(dir + "/trace.csv");
    std::getline(trace, line);
    bool saw_candidates = false;
    while (std::getline(trace, line))
        if (line.find(",2,") != std::string::npos) saw_candidates = true;
    CHECK(saw_candidates);
    fs::remove_all(dir);
}

TEST_CASE("report aggregates metric files and lists absent runs") {
    std::string d1 = fresh_dir("voxmesh_rep_a");
    std::string d2 = fresh_dir("voxmesh_rep_b");
    fs::create_directories(d1);
    fs::create_directories(d2);
    auto write_metrics = [](const std::string& dir, uint64_t seed, double p) {
        nlohmann::json j{{"scene", "sphere"}, {"strategy", "none"}, {"seed", seed},
                         {"psnr", p},         {"ssim", 0.9},        {"cd", 0.001},
                         {"step", 10},        {"mesh_hash", 1}};
        std::ofstream out(dir + "/metrics.json");
        out << j.dump();
    };
    write_metrics(d1, 1, 20.0);
    write_metrics(d2, 2, 24.0);
    std::string table = report({d1, d2, "/nonexistent/run"});
    CHECK(table.find("sphere/none,2,22.0000,2.8284") != std::string::npos);  // mean, std
    CHECK(table.find("# absent: /nonexistent/run") != std::string::npos);

    // Empty input produces a header-only table.
    std::string empty = report({});
    CHECK(empty == "group,runs,psnr_mean,psnr_std,ssim_mean,ssim_std,cd_mean,cd_std\n");
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("mesh export and import round trip both formats") {
    AnalyticScene s = AnalyticScene::make("sphere");
    SdfGrid g = grid_from_function(12, s.bounds, [&](const Vec3& p) { return sdf_eval(s, p); });
    TriangleMesh mesh = extract_mesh(g);
    mesh.colors.assign(mesh.vertices.size(), Vec3{0.25, 0.5, 0.75});

    std::string obj = fs::temp_directory_path() / "voxmesh_io.obj";
    std::string ply = fs::temp_directory_path() / "voxmesh_io.ply";
    export_mesh(mesh, obj, MeshFormat::Obj);
    export_mesh(mesh, ply, MeshFormat::Ply);
    CHECK(mesh_format_for_path(ply) == MeshFormat::Ply);
    CHECK(mesh_format_for_path(obj) == MeshFormat::Obj);

    TriangleMesh from_obj = import_mesh(obj);
    TriangleMesh from_ply = import_mesh(ply);
    REQUIRE(from_obj.vertices.size() == mesh.vertices.size());
    REQUIRE(from_ply.vertices.size() == mesh.vertices.size());
    CHECK(from_obj.faces == mesh.faces);
    CHECK(from_ply.faces == mesh.faces);
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        CHECK((from_obj.vertices[i] - mesh.vertices[i]).norm() < 1e-6);
        CHECK((from_ply.vertices[i] - mesh.vertices[i]).norm() < 1e-6);
        // PLY colors are 8-bit quantized.
        CHECK((from_ply.colors[i] - mesh.colors[i]).cwise_abs().max_coeff() < 1.0 / 255.0);
    }
    fs::remove(obj);
    fs::remove(ply);
    CHECK_THROWS(import_mesh(obj));
}
