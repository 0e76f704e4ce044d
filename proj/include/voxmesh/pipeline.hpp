#pragma once

// Orchestration of the two-stage pipeline: run configuration with schema
// validation, stage drivers with checkpoint/resume, viewpoint-enhancement
// strategies, per-run metrics, and multi-run reports.

#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "voxmesh/checkpoint.hpp"
#include "voxmesh/mesh_io.hpp"
#include "voxmesh/metrics.hpp"
#include "voxmesh/refine.hpp"

namespace voxmesh {

enum class Strategy { Ucb, Random, Greedy, None };

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "ucb") return Strategy::Ucb;
    if (s == "random") return Strategy::Random;
    if (s == "greedy") return Strategy::Greedy;
    if (s == "none") return Strategy::None;
    throw std::runtime_error("unknown strategy: " + s);
}

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Ucb: return "ucb";
        case Strategy::Random: return "random";
        case Strategy::Greedy: return "greedy";
        case Strategy::None: return "none";
    }
    return "?";
}

struct RunConfig {
    std::string scene = "sphere";
    std::string out_dir = "runs/default";
    uint64_t seed = 0;

    int n_train = 64, n_val = 8, n_test = 8, resolution = 64;

    Stage1Config stage1;            // grid resolution below
    int field_resolution = 48;
    double conversion_eps = 4.0;    // density -> sdf offset, calibrated on the toy scenes
    int n_candidates = 128;

    Stage2Config stage2;
    int sdf_resolution = 48;

    int bandit_m = 3;
    double bandit_c = 1.0;
    int bandit_k = 1;               // enhancement cadence in iterations
    double bandit_init = 1e6;
    Strategy strategy = Strategy::Ucb;
    CommitPolicy commit = CommitPolicy::Enhanced;

    int checkpoint_every = 500;
    int eval_every = 100;

    void validate() const {
        if (n_train < 1 || n_val < 1 || n_test < 1) throw std::runtime_error("config: view counts must be >= 1");
        if (resolution < 16) throw std::runtime_error("config: resolution must be >= 16");
        if (field_resolution < 2 || sdf_resolution < 2) throw std::runtime_error("config: grid resolutions must be >= 2");
        if (stage1.iters < 0 || stage2.iters < 0) throw std::runtime_error("config: iteration counts must be >= 0");
        if (stage1.lr < 0 || stage2.lr < 0) throw std::runtime_error("config: learning rates must be >= 0");
        if (conversion_eps <= 0) throw std::runtime_error("config: conversion_eps must be positive");
        if (stage2.eps_c <= 0) throw std::runtime_error("config: eps_c must be positive");
        if (bandit_m < 1 || bandit_m > n_candidates) throw std::runtime_error("config: need 1 <= m <= n_candidates");
        if (bandit_k < 1) throw std::runtime_error("config: bandit cadence k must be >= 1");
    }
};

namespace cfgjson {

// Pulls a field, tracking consumed keys so unknown keys can be rejected.
template <typename T>
void get(const nlohmann::json& j, std::map<std::string, bool>& seen, const std::string& key, T& out) {
    seen[key] = true;
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline void check_unknown(const nlohmann::json& j, const std::map<std::string, bool>& seen,
                          const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!seen.count(it.key()))
            throw std::runtime_error("config: unknown key '" + it.key() + "' in " + scope);
}

}  // namespace cfgjson

inline nlohmann::json to_json(const RunConfig& c) {
    return nlohmann::json{
        {"scene", c.scene},
        {"out_dir", c.out_dir},
        {"seed", c.seed},
        {"dataset", {{"n_train", c.n_train}, {"n_val", c.n_val}, {"n_test", c.n_test}, {"resolution", c.resolution}}},
        {"stage1",
         {{"iters", c.stage1.iters},
          {"batch_rays", c.stage1.batch_rays},
          {"n_samples", c.stage1.n_samples},
          {"lr", c.stage1.lr},
          {"lambda_spec", c.stage1.lambda_spec},
          {"grid", c.field_resolution}}},
        {"conversion_eps", c.conversion_eps},
        {"n_candidates", c.n_candidates},
        {"stage2",
         {{"iters", c.stage2.iters},
          {"lr", c.stage2.lr},
          {"lr_appearance", c.stage2.lr_appearance},
          {"lambda_tv", c.stage2.lambda_tv},
          {"lambda_dev", c.stage2.lambda_dev},
          {"eps_c", c.stage2.eps_c},
          {"batch_views", c.stage2.batch_views},
          {"val_views", c.stage2.val_views},
          {"grid", c.sdf_resolution}}},
        {"bandit",
         {{"m", c.bandit_m},
          {"c", c.bandit_c},
          {"k", c.bandit_k},
          {"init_value", c.bandit_init},
          {"strategy", to_string(c.strategy)},
          {"commit", c.commit == CommitPolicy::Enhanced ? "enhanced" : "better"}}},
        {"checkpoint_every", c.checkpoint_every},
        {"eval_every", c.eval_every}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    std::map<std::string, bool> seen;
    cfgjson::get(j, seen, "scene", c.scene);
    cfgjson::get(j, seen, "out_dir", c.out_dir);
    cfgjson::get(j, seen, "seed", c.seed);
    seen["dataset"] = seen["stage1"] = seen["stage2"] = seen["bandit"] = true;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        std::map<std::string, bool> s2;
        cfgjson::get(d, s2, "n_train", c.n_train);
        cfgjson::get(d, s2, "n_val", c.n_val);
        cfgjson::get(d, s2, "n_test", c.n_test);
        cfgjson::get(d, s2, "resolution", c.resolution);
        cfgjson::check_unknown(d, s2, "dataset");
    }
    if (j.contains("stage1")) {
        const auto& d = j.at("stage1");
        std::map<std::string, bool> s2;
        cfgjson::get(d, s2, "iters", c.stage1.iters);
        cfgjson::get(d, s2, "batch_rays", c.stage1.batch_rays);
        cfgjson::get(d, s2, "n_samples", c.stage1.n_samples);
        cfgjson::get(d, s2, "lr", c.stage1.lr);
        cfgjson::get(d, s2, "lambda_spec", c.stage1.lambda_spec);
        cfgjson::get(d, s2, "grid", c.field_resolution);
        cfgjson::check_unknown(d, s2, "stage1");
    }
    cfgjson::get(j, seen, "conversion_eps", c.conversion_eps);
    cfgjson::get(j, seen, "n_candidates", c.n_candidates);
    if (j.contains("stage2")) {
        const auto& d = j.at("stage2");
        std::map<std::string, bool> s2;
        cfgjson::get(d, s2, "iters", c.stage2.iters);
        cfgjson::get(d, s2, "lr", c.stage2.lr);
        cfgjson::get(d, s2, "lr_appearance", c.stage2.lr_appearance);
        cfgjson::get(d, s2, "lambda_tv", c.stage2.lambda_tv);
        cfgjson::get(d, s2, "lambda_dev", c.stage2.lambda_dev);
        cfgjson::get(d, s2, "eps_c", c.stage2.eps_c);
        cfgjson::get(d, s2, "batch_views", c.stage2.batch_views);
        cfgjson::get(d, s2, "val_views", c.stage2.val_views);
        cfgjson::get(d, s2, "grid", c.sdf_resolution);
        cfgjson::check_unknown(d, s2, "stage2");
    }
    if (j.contains("bandit")) {
        const auto& d = j.at("bandit");
        std::map<std::string, bool> s2;
        cfgjson::get(d, s2, "m", c.bandit_m);
        cfgjson::get(d, s2, "c", c.bandit_c);
        cfgjson::get(d, s2, "k", c.bandit_k);
        cfgjson::get(d, s2, "init_value", c.bandit_init);
        std::string strat = to_string(c.strategy), commit = "enhanced";
        cfgjson::get(d, s2, "strategy", strat);
        cfgjson::get(d, s2, "commit", commit);
        c.strategy = strategy_from_string(strat);
        if (commit == "enhanced")
            c.commit = CommitPolicy::Enhanced;
        else if (commit == "better")
            c.commit = CommitPolicy::BetterOfTwo;
        else
            throw std::runtime_error("config: commit must be 'enhanced' or 'better'");
        cfgjson::check_unknown(d, s2, "bandit");
    }
    cfgjson::get(j, seen, "checkpoint_every", c.checkpoint_every);
    cfgjson::get(j, seen, "eval_every", c.eval_every);
    cfgjson::check_unknown(j, seen, "top level");
    c.stage1.seed = c.seed;
    c.stage2.seed = c.seed;
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

// Echoes the fully resolved config into the run directory.
inline void persist_config(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir + "/config.json");
    out << to_json(cfg).dump(1) << "\n";
}

// ---------------------------------------------------------------------------

inline uint64_t mesh_hash(const TriangleMesh& mesh) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    auto mix = [&](const void* data, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const Vec3& v : mesh.vertices) {
        mix(&v.x, 8);
        mix(&v.y, 8);
        mix(&v.z, 8);
    }
    for (const auto& f : mesh.faces) mix(f.data(), 12);
    return h;
}

// Ground-truth mesh: the analytic SDF triangulated by the same extraction
// kernel at high resolution with neutral attributes.
inline TriangleMesh groundtruth_mesh(const AnalyticScene& scene, int resolution = 256) {
    SdfGrid g = grid_from_function(resolution, scene.bounds,
                                   [&](const Vec3& p) { return sdf_eval(scene, p); });
    return extract_mesh(g);
}

inline void ensure_dirs(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir + "/checkpoints");
    fs::create_directories(cfg.out_dir + "/meshes");
    fs::create_directories(cfg.out_dir + "/candidates");
}

// Stage 0: dataset generation.
inline DatasetBundle run_gen_scene(const RunConfig& cfg) {
    persist_config(cfg);
    AnalyticScene scene = AnalyticScene::make(cfg.scene);
    return generate_dataset(scene, cfg.n_train, cfg.n_val, cfg.n_test, cfg.resolution, cfg.seed,
                            cfg.out_dir + "/dataset");
}

// Stage 1: field training with resume, then candidate rendering.
// stop_after >= 0 halts training at that iteration after writing the
// checkpoint, simulating an interruption; a later call resumes from it.
inline void run_stage1(const RunConfig& cfg, int stop_after = -1) {
    ensure_dirs(cfg);
    persist_config(cfg);
    Dataset train = load_dataset(cfg.out_dir + "/dataset/train");
    if (train.cameras.empty()) throw std::runtime_error("run_stage1: empty training dataset");

    std::string ckpt_path = cfg.out_dir + "/checkpoints/stage1.ckpt";
    Aabb bounds;
    RadianceGrid field(cfg.field_resolution, bounds);
    FieldOptimizer opt(field);
    int start_iter = 0;
    if (std::filesystem::exists(ckpt_path)) {
        Stage1Checkpoint ck = load_stage1(ckpt_path);
        field = std::move(ck.field);
        opt = std::move(ck.opt);
        start_iter = ck.iteration;
    }
    GradientBuffer grads;
    grads.resize_for(field);
    std::ofstream trace(cfg.out_dir + "/trace_stage1.csv",
                        start_iter == 0 ? std::ios::trunc : std::ios::app);
    if (start_iter == 0) trace << "iter,loss\n";
    int end_iter = stop_after >= 0 ? std::min(stop_after, cfg.stage1.iters) : cfg.stage1.iters;
    try {
        for (int it = start_iter; it < end_iter; ++it) {
            double loss = stage1_iteration(field, train, cfg.stage1, it, grads, opt);
            trace << it << "," << loss << "\n";
            if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0)
                save_stage1(ckpt_path, field, opt, it + 1);
        }
    } catch (...) {
        save_stage1(ckpt_path + ".partial", field, opt, end_iter);
        throw;
    }
    save_stage1(ckpt_path, field, opt, end_iter);
    if (end_iter < cfg.stage1.iters) return;  // interrupted: no candidate render

    Dataset candidates = render_candidate_views(field, cfg.n_candidates, cfg.resolution, cfg.seed,
                                                cfg.stage1.n_samples);
    save_dataset(candidates, cfg.out_dir + "/candidates");
}

// Density-to-SDF conversion; also exports the coarse (unrefined) mesh.
inline SdfGrid run_extract_sdf(const RunConfig& cfg) {
    Stage1Checkpoint ck = load_stage1(cfg.out_dir + "/checkpoints/stage1.ckpt");
    SdfGrid grid = density_to_sdf(ck.field, cfg.sdf_resolution, cfg.conversion_eps);
    TriangleMesh coarse = extract_mesh(grid);
    if (!coarse.empty()) {
        std::filesystem::create_directories(cfg.out_dir + "/meshes");
        export_mesh(coarse, cfg.out_dir + "/meshes/coarse.obj", MeshFormat::Obj);
    }
    return grid;
}

// Colors mesh vertices by the diffuse appearance channel.
inline void colorize_mesh(TriangleMesh& mesh, const RadianceGrid& appearance) {
    mesh.colors.resize(mesh.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        Vec3 p = mesh.vertices[i];
        for (int a = 0; a < 3; ++a)
            p[a] = clamp(p[a], appearance.bounds.lo[a], appearance.bounds.hi[a]);
        GridStencil st = appearance.stencil(p);
        Vec3 draw = appearance.interp_diffuse_raw(st);
        mesh.colors[i] = {sigmoid(draw.x), sigmoid(draw.y), sigmoid(draw.z)};
    }
}

// Stage 2: refinement loop with the selected viewpoint-enhancement strategy.
// stop_after works as in run_stage1.
inline void run_stage2(const RunConfig& cfg, int stop_after = -1) {
    ensure_dirs(cfg);
    persist_config(cfg);
    Dataset train = load_dataset(cfg.out_dir + "/dataset/train");
    Dataset val = load_dataset(cfg.out_dir + "/dataset/val");
    Dataset candidates = load_dataset(cfg.out_dir + "/candidates");

    std::string ckpt_path = cfg.out_dir + "/checkpoints/stage2.ckpt";
    Stage2Config s2 = cfg.stage2;
    s2.seed = cfg.seed;

    std::unique_ptr<Stage2Trainer> trainer;
    BanditState bandit;
    int start_iter = 0;
    if (std::filesystem::exists(ckpt_path)) {
        Stage2Checkpoint ck = load_stage2(ckpt_path);
        trainer = std::make_unique<Stage2Trainer>(std::move(ck.grid), std::move(ck.appearance),
                                                  &train, &candidates, &val, s2);
        trainer->opt_sdf() = std::move(ck.opt_sdf);
        trainer->opt_def() = std::move(ck.opt_def);
        trainer->opt_weight() = std::move(ck.opt_weight);
        trainer->opt_app().diffuse = std::move(ck.opt_app.diffuse);
        trainer->opt_app().spec = std::move(ck.opt_app.spec);
        trainer->set_iteration(ck.iteration);
        bandit = std::move(ck.bandit);
        start_iter = ck.iteration;
    } else {
        Stage1Checkpoint ck1 = load_stage1(cfg.out_dir + "/checkpoints/stage1.ckpt");
        SdfGrid grid = density_to_sdf(ck1.field, cfg.sdf_resolution, cfg.conversion_eps);
        trainer = std::make_unique<Stage2Trainer>(std::move(grid), std::move(ck1.field), &train,
                                                  &candidates, &val, s2);
        bandit = BanditState(train.cameras.size(), cfg.bandit_c, cfg.bandit_init);
    }

    std::vector<Vec3> train_centers, cand_centers;
    for (const Camera& c : train.cameras) train_centers.push_back(c.center());
    for (const Camera& c : candidates.cameras) cand_centers.push_back(c.center());
    auto actions = build_actions(train_centers, cand_centers, cfg.bandit_m);

    struct TrainerAdapter : BanditTrainer {
        Stage2Trainer* tr;
        double last_loss = 0;
        int last_candidates = 0;
        void save(int slot) override { tr->save(slot); }
        void load(int slot) override { tr->load(slot); }
        void step(const std::vector<int>& extra) override {
            last_loss = tr->step(extra).loss;
            last_candidates = int(extra.size());
        }
        double evaluate_psnr() override { return tr->evaluate_psnr(); }
    } adapter;
    adapter.tr = trainer.get();

    bool append = start_iter > 0;
    std::ofstream trace(cfg.out_dir + "/trace.csv", append ? std::ios::app : std::ios::trunc);
    if (!append) trace << "iter,loss,candidates_in_batch,psnr_val\n";
    std::ofstream blog(cfg.out_dir + "/bandit.csv", append ? std::ios::app : std::ios::trunc);
    if (!append) blog << "t,action,members,psnr_enh,psnr_orig,reward,count,mean\n";

    auto save_all = [&](const std::string& path) {
        save_stage2(path, trainer->grid(), trainer->appearance(), trainer->opt_sdf(),
                    trainer->opt_def(), trainer->opt_weight(), trainer->opt_app(), bandit,
                    trainer->iteration());
    };

    int end_iter = stop_after >= 0 ? std::min(stop_after, cfg.stage2.iters) : cfg.stage2.iters;
    try {
        for (int it = start_iter; it < end_iter; ++it) {
            bool enhance = cfg.strategy != Strategy::None && (it % cfg.bandit_k == 0) &&
                           !candidates.cameras.empty();
            double loss;
            int cands_in_batch = 0;
            if (enhance) {
                int chosen = -1;
                if (cfg.strategy == Strategy::Random) {
                    Rng r(cfg.seed, uint64_t(it), 31);
                    chosen = int(r.uniform_int(actions.size()));
                } else if (cfg.strategy == Strategy::Greedy) {
                    auto losses = trainer->per_view_losses();
                    chosen = int(std::max_element(losses.begin(), losses.end()) - losses.begin());
                }
                EnhancementRecord rec =
                    enhancement_step(adapter, bandit, actions, cfg.commit, chosen);
                loss = adapter.last_loss;
                cands_in_batch = int(rec.members.size());
                blog << rec.t << "," << rec.action << ",\"";
                for (size_t i = 0; i < rec.members.size(); ++i)
                    blog << (i ? " " : "") << rec.members[i];
                blog << "\"," << rec.psnr_enhanced << "," << rec.psnr_original << "," << rec.reward
                     << "," << rec.count_after << "," << rec.mean_after << "\n";
            } else {
                RefineResult r = trainer->step({});
                loss = r.loss;
            }
            trace << it << "," << loss << "," << cands_in_batch << ",";
            if (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0)
                trace << trainer->evaluate_psnr();
            trace << "\n";
            if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0)
                save_all(ckpt_path);
        }
    } catch (...) {
        save_all(ckpt_path + ".partial");
        throw;
    }
    save_all(ckpt_path);
    if (end_iter < cfg.stage2.iters) return;  // interrupted: no final export

    TriangleMesh final_mesh = extract_mesh(trainer->grid());
    if (!final_mesh.empty()) {
        colorize_mesh(final_mesh, trainer->appearance());
        export_mesh(final_mesh, cfg.out_dir + "/meshes/final.obj", MeshFormat::Obj);
        export_mesh(final_mesh, cfg.out_dir + "/meshes/final.ply", MeshFormat::Ply);
    }
}

struct RunMetrics {
    std::string scene, strategy;
    uint64_t seed = 0;
    double psnr = 0, ssim_v = 0, cd = 0;
    uint64_t final_mesh_hash = 0;
    int step = 0;
};

// Evaluates a finished run: test-split PSNR/SSIM of the refined mesh and
// Chamfer distance against the analytic ground-truth mesh.
inline RunMetrics run_eval(const RunConfig& cfg, int gt_resolution = 256) {
    Stage2Checkpoint ck = load_stage2(cfg.out_dir + "/checkpoints/stage2.ckpt");
    Dataset test = load_dataset(cfg.out_dir + "/dataset/test");
    RunMetrics m;
    m.scene = cfg.scene;
    m.strategy = to_string(cfg.strategy);
    m.seed = cfg.seed;
    m.step = ck.iteration;
    double psum = 0, ssum = 0;
    for (size_t i = 0; i < test.cameras.size(); ++i) {
        Image img = render_mesh_image(ck.grid, ck.appearance, test.cameras[i]);
        psum += psnr(img, test.images[i]);
        ssum += ssim(img, test.images[i]);
    }
    m.psnr = psum / double(test.cameras.size());
    m.ssim_v = ssum / double(test.cameras.size());

    TriangleMesh mesh = extract_mesh(ck.grid);
    m.final_mesh_hash = mesh_hash(mesh);
    AnalyticScene scene = AnalyticScene::make(cfg.scene);
    TriangleMesh gt = groundtruth_mesh(scene, gt_resolution);
    m.cd = mesh.empty() ? std::numeric_limits<double>::infinity()
                        : chamfer_distance(mesh, gt, {});

    nlohmann::json j{{"scene", m.scene},   {"strategy", m.strategy},
                     {"seed", m.seed},     {"psnr", m.psnr},
                     {"ssim", m.ssim_v},   {"cd", m.cd},
                     {"step", m.step},     {"mesh_hash", m.final_mesh_hash}};
    std::ofstream out(cfg.out_dir + "/metrics.json");
    out << j.dump(1) << "\n";
    return m;
}

// Aggregates metrics.json files from several run directories into one table
// (rows grouped by scene+strategy, mean and stddev over seeds). Missing runs
// are listed as absent; exit stays zero.
inline std::string report(const std::vector<std::string>& run_dirs) {
    struct Group {
        std::vector<double> psnr, ssim_v, cd;
    };
    std::map<std::string, Group> groups;
    std::vector<std::string> absent;
    for (const std::string& dir : run_dirs) {
        std::ifstream in(dir + "/metrics.json");
        if (!in) {
            absent.push_back(dir);
            continue;
        }
        nlohmann::json j;
        in >> j;
        std::string key = j.value("scene", "?") + "/" + j.value("strategy", "?");
        Group& g = groups[key];
        g.psnr.push_back(j.value("psnr", 0.0));
        g.ssim_v.push_back(j.value("ssim", 0.0));
        g.cd.push_back(j.value("cd", 0.0));
    }
    auto stats = [](const std::vector<double>& v) {
        double mean = 0, sd = 0;
        for (double x : v) mean += x;
        mean /= double(v.size());
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = v.size() > 1 ? std::sqrt(sd / double(v.size() - 1)) : 0.0;
        return std::make_pair(mean, sd);
    };
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "group,runs,psnr_mean,psnr_std,ssim_mean,ssim_std,cd_mean,cd_std\n";
    for (auto& [key, g] : groups) {
        auto [pm, ps] = stats(g.psnr);
        auto [sm, ss] = stats(g.ssim_v);
        auto [cm, cs] = stats(g.cd);
        os << key << "," << g.psnr.size() << "," << pm << "," << ps << "," << sm << "," << ss
           << "," << cm << "," << cs << "\n";
    }
    for (const std::string& a : absent) os << "# absent: " << a << "\n";
    return os.str();
}

}  // namespace voxmesh
