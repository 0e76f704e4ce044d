// Command-line driver for the two-stage mesh reconstruction pipeline.

#include <iostream>

#include <CLI11.hpp>

#include "voxmesh/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"voxmesh: voxel radiance field -> differentiable mesh pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "JSON run configuration")->required();
    };

    auto* gen = app.add_subcommand("gen-scene", "Render an analytic scene into train/val/test datasets");
    add_config(gen);
    auto* s1 = app.add_subcommand("train-stage1", "Train the voxel radiance field and render candidate views");
    add_config(s1);
    auto* ext = app.add_subcommand("extract-sdf", "Convert the trained density field to an SDF grid and export the coarse mesh");
    add_config(ext);
    auto* s2 = app.add_subcommand("train-stage2", "Refine the mesh with differentiable rasterization and viewpoint enhancement");
    add_config(s2);
    auto* ev = app.add_subcommand("eval", "Evaluate a finished run (PSNR/SSIM/Chamfer) into metrics.json");
    add_config(ev);
    int gt_res = 256;
    ev->add_option("--gt-resolution", gt_res, "grid resolution for the reference mesh");

    auto* ex = app.add_subcommand("export", "Export the refined mesh from a run's final checkpoint");
    add_config(ex);
    std::string out_path = "mesh.obj", format = "obj";
    ex->add_option("-o,--output", out_path, "output mesh path");
    ex->add_option("-f,--format", format, "obj or ply")->check(CLI::IsMember({"obj", "ply"}));

    auto* rep = app.add_subcommand("report", "Aggregate metrics across run directories");
    std::vector<std::string> run_dirs;
    rep->add_option("dirs", run_dirs, "run directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        using namespace voxmesh;
        if (rep->parsed()) {
            std::cout << report(run_dirs);
            return 0;
        }
        RunConfig cfg = load_config(config_path);
        if (gen->parsed()) {
            run_gen_scene(cfg);
            std::cout << "dataset written to " << cfg.out_dir << "/dataset\n";
        } else if (s1->parsed()) {
            run_stage1(cfg);
            std::cout << "stage-1 checkpoint and candidates written to " << cfg.out_dir << "\n";
        } else if (ext->parsed()) {
            SdfGrid g = run_extract_sdf(cfg);
            std::cout << "sdf grid " << g.resolution << "^3; coarse mesh in " << cfg.out_dir
                      << "/meshes\n";
        } else if (s2->parsed()) {
            run_stage2(cfg);
            std::cout << "stage-2 checkpoint and refined mesh written to " << cfg.out_dir << "\n";
        } else if (ev->parsed()) {
            RunMetrics m = run_eval(cfg, gt_res);
            std::cout << "psnr=" << m.psnr << " ssim=" << m.ssim_v << " cd=" << m.cd << "\n";
        } else if (ex->parsed()) {
            Stage2Checkpoint ck = load_stage2(cfg.out_dir + "/checkpoints/stage2.ckpt");
            TriangleMesh mesh = extract_mesh(ck.grid);
            if (mesh.empty()) {
                std::cerr << "refined grid produced an empty mesh\n";
                return 1;
            }
            colorize_mesh(mesh, ck.appearance);
            export_mesh(mesh, out_path, format == "obj" ? MeshFormat::Obj : MeshFormat::Ply);
            std::cout << "wrote " << out_path << " (" << mesh.vertices.size() << " vertices, "
                      << mesh.faces.size() << " faces)\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
