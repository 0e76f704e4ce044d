#pragma once

// Stage-2 refinement: differentiable extraction -> projection -> hard
// rasterization -> appearance shading -> silhouette antialiasing ->
// Charbonnier loss, with TV and attribute-deviation regularizers. One Adam
// step per refine step over {sdf, deformation, weight_raw, diffuse_raw,
// spec_coeffs}. Geometry gradients come solely from the silhouette blend;
// pixel-interior gradients flow to the appearance grids.

#include "voxmesh/metrics.hpp"
#include "voxmesh/raster.hpp"

namespace voxmesh {

struct Stage2Config {
    int iters = 1000;
    double lr = 3e-3;             // geometry tensors
    double lr_appearance = 1e-2;  // appearance tensors
    double lambda_tv = 0.01;
    double lambda_dev = 0.01;
    double lambda_def = 1.0;  // deformation term inside dev_reg
    double eps_c = 1e-3;
    int batch_views = 2;      // train views per refine step
    int val_views = 4;        // PSNR validation subset size
    double lr_floor = 0.1;    // cosine decay: final lr fraction over `iters`
    uint64_t seed = 0;

    // Cosine learning-rate decay toward lr_floor * lr, a function of the
    // iteration counter only so checkpoint resume reproduces the schedule.
    double lr_scale(int iteration) const {
        if (iters <= 0) return 1.0;
        double f = clamp(double(iteration) / double(iters), 0.0, 1.0);
        double cosw = 0.5 * (1.0 + std::cos(3.14159265358979323846 * f));
        return lr_floor + (1.0 - lr_floor) * cosw;
    }
};

struct RefineResult {
    double loss = 0;
    bool empty_mesh = false;  // geometry gradients skipped this step
};

// One refinement step on an explicit list of (dataset, frame) views.
struct ViewRef {
    const Dataset* set;
    size_t frame;
};

inline RefineResult refine_step(SdfGrid& grid, RadianceGrid& appearance,
                                const std::vector<ViewRef>& views, const Stage2Config& cfg,
                                AdamState& opt_sdf, AdamState& opt_def, AdamState& opt_weight,
                                FieldOptimizer& opt_app, GradientBuffer& app_grads) {
    RefineResult res;
    grid.enable_attributes();
    TriangleMesh mesh = extract_mesh(grid);
    SdfGradients geo_grads(grid.node_count());
    app_grads.clear();

    double char_sum = 0;
    if (!mesh.empty() && !views.empty()) {
        std::vector<Vec3> vert_grads(mesh.vertices.size());
        double inv_views = 1.0 / double(views.size());
        for (const ViewRef& vr : views) {
            const Camera& cam = vr.set->cameras[vr.frame];
            const Image& gt = vr.set->images[vr.frame];
            auto proj = project_vertices(cam, mesh);
            FragmentBuffer fb = rasterize(mesh, cam, proj);
            ShadeAux saux;
            Image shaded = shade(fb, appearance, cam, &saux);
            AntialiasAux aaux;
            Image final_img = antialias(shaded, fb, mesh, proj, &aaux);
            Image dchar;
            char_sum += inv_views * charbonnier_loss(final_img, gt, cfg.eps_c, &dchar);
            for (double& v : dchar.rgb) v *= inv_views;
            Image dshaded;
            std::vector<ScreenGrad> dproj(mesh.vertices.size());
            backward_antialias(shaded, aaux, dchar, dshaded, dproj);
            std::vector<Vec3> dpos(size_t(cam.width) * cam.height);
            backward_shade(appearance, saux, dshaded, app_grads, &dpos);
            backward_fragments(fb, mesh, proj, dpos, dproj, vert_grads);
            auto vg = screen_to_world_grads(cam, mesh, proj, dproj);
            for (size_t i = 0; i < vg.size(); ++i) vert_grads[i] += vg[i];
        }
        backward_extract(grid, mesh, vert_grads, geo_grads);
    } else {
        res.empty_mesh = mesh.empty();
    }

    double tv = tv_reg(grid, &geo_grads, cfg.lambda_tv);
    double dev = dev_reg(grid, cfg.lambda_def, &geo_grads, cfg.lambda_dev);
    res.loss = char_sum + cfg.lambda_tv * tv + cfg.lambda_dev * dev;

    adam_step_dense(grid.sdf, geo_grads.sdf, opt_sdf, cfg.lr);
    adam_step_dense(grid.weight_raw, geo_grads.weight_raw, opt_weight, cfg.lr);
    // Deformations as 3N scalars.
    {
        opt_def.step += 1;
        double c1 = 1.0 - std::pow(opt_def.beta1, double(opt_def.step));
        double c2 = 1.0 - std::pow(opt_def.beta2, double(opt_def.step));
        for (size_t i = 0; i < grid.deformation.size(); ++i)
            for (int a = 0; a < 3; ++a) {
                double g = geo_grads.deformation[i][a];
                if (!std::isfinite(g))
                    throw std::runtime_error("adam_step: non-finite gradient in deformation");
                size_t j = i * 3 + a;
                opt_def.m[j] = opt_def.beta1 * opt_def.m[j] + (1 - opt_def.beta1) * g;
                opt_def.v[j] = opt_def.beta2 * opt_def.v[j] + (1 - opt_def.beta2) * g * g;
                grid.deformation[i][a] -=
                    cfg.lr * (opt_def.m[j] / c1) / (std::sqrt(opt_def.v[j] / c2) + opt_def.eps);
            }
    }
    grid.clamp_deformations();

    // Density is not part of the stage-2 surface model; only the color
    // channels of the appearance grid are updated.
    adam_step(appearance.diffuse_raw, app_grads.diffuse_raw, opt_app.diffuse, cfg.lr_appearance);
    adam_step(appearance.spec_coeffs, app_grads.spec_coeffs, opt_app.spec, cfg.lr_appearance);
    return res;
}

// Renders the current mesh from a camera (shade + antialias), deterministic.
inline Image render_mesh_image(const SdfGrid& grid, const RadianceGrid& appearance,
                               const Camera& cam) {
    TriangleMesh mesh = extract_mesh(grid);
    if (mesh.empty()) return Image(cam.width, cam.height, 1.0);
    auto proj = project_vertices(cam, mesh);
    FragmentBuffer fb = rasterize(mesh, cam, proj);
    Image shaded = shade(fb, appearance, cam, nullptr);
    return antialias(shaded, fb, mesh, proj, nullptr);
}

// ---------------------------------------------------------------------------
// Trainer driving refine steps; exposes the snapshot/step/evaluate interface
// the bandit protocol needs.

inline Camera half_resolution(const Camera& cam) {
    Camera c = cam;
    c.width = cam.width / 2;
    c.height = cam.height / 2;
    c.fx = cam.fx * 0.5;
    c.fy = cam.fy * 0.5;
    c.cx = cam.cx * 0.5;
    c.cy = cam.cy * 0.5;
    return c;
}

inline Image downsample2(const Image& img) {
    Image out(img.width / 2, img.height / 2);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = 0.25 * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                          img.at(2 * x, 2 * y + 1, c) +
                                          img.at(2 * x + 1, 2 * y + 1, c));
    return out;
}

class Stage2Trainer {
  public:
    Stage2Trainer(SdfGrid grid, RadianceGrid appearance, const Dataset* train,
                  const Dataset* candidates, const Dataset* val, Stage2Config cfg)
        : grid_(std::move(grid)),
          appearance_(std::move(appearance)),
          train_(train),
          candidates_(candidates),
          val_(val),
          cfg_(cfg),
          opt_app_(appearance_) {
        grid_.enable_attributes();
        size_t n = grid_.node_count();
        opt_sdf_.resize(n);
        opt_sdf_.name = "sdf";
        opt_def_.resize(3 * n);
        opt_def_.name = "deformation";
        opt_weight_.resize(n);
        opt_weight_.name = "weight_raw";
        app_grads_.resize_for(appearance_);
        // Fixed validation subset at half resolution.
        size_t nval = std::min<size_t>(cfg.val_views, val->cameras.size());
        for (size_t i = 0; i < nval; ++i) {
            val_cams_.push_back(half_resolution(val->cameras[i]));
            val_images_.push_back(downsample2(val->images[i]));
        }
    }

    // One refine step: `extra_candidates` are candidate-frame indices added
    // to the randomly drawn training views.
    RefineResult step(const std::vector<int>& extra_candidates) {
        Rng pick(cfg_.seed, uint64_t(iteration_), 21);
        std::vector<ViewRef> views;
        for (int b = 0; b < cfg_.batch_views; ++b)
            views.push_back({train_, pick.uniform_int(train_->cameras.size())});
        for (int c : extra_candidates) views.push_back({candidates_, size_t(c)});
        Stage2Config decayed = cfg_;
        double s = cfg_.lr_scale(iteration_);
        decayed.lr *= s;
        decayed.lr_appearance *= s;
        RefineResult r = refine_step(grid_, appearance_, views, decayed, opt_sdf_, opt_def_,
                                     opt_weight_, opt_app_, app_grads_);
        last_batch_ = views;
        ++iteration_;
        return r;
    }

    double evaluate_psnr() const {
        TriangleMesh mesh = extract_mesh(grid_);
        double sum = 0;
        for (size_t i = 0; i < val_cams_.size(); ++i) {
            Image img;
            if (mesh.empty()) {
                img = Image(val_cams_[i].width, val_cams_[i].height, 1.0);
            } else {
                auto proj = project_vertices(val_cams_[i], mesh);
                FragmentBuffer fb = rasterize(mesh, val_cams_[i], proj);
                Image shaded = shade(fb, appearance_, val_cams_[i], nullptr);
                img = antialias(shaded, fb, mesh, proj, nullptr);
            }
            sum += psnr(img, val_images_[i]);
        }
        return val_cams_.empty() ? 0.0 : sum / double(val_cams_.size());
    }

    // Per-train-view Charbonnier loss at half resolution (greedy strategy).
    std::vector<double> per_view_losses() const {
        TriangleMesh mesh = extract_mesh(grid_);
        std::vector<double> out;
        out.reserve(train_->cameras.size());
        for (size_t i = 0; i < train_->cameras.size(); ++i) {
            Camera cam = half_resolution(train_->cameras[i]);
            Image gt = downsample2(train_->images[i]);
            Image img;
            if (mesh.empty()) {
                img = Image(cam.width, cam.height, 1.0);
            } else {
                auto proj = project_vertices(cam, mesh);
                FragmentBuffer fb = rasterize(mesh, cam, proj);
                Image shaded = shade(fb, appearance_, cam, nullptr);
                img = antialias(shaded, fb, mesh, proj, nullptr);
            }
            out.push_back(charbonnier_loss(img, gt, cfg_.eps_c, nullptr));
        }
        return out;
    }

    struct Snapshot {
        SdfGrid grid;
        std::vector<double> diffuse_raw, spec_coeffs;
        AdamState opt_sdf, opt_def, opt_weight, opt_diffuse, opt_spec;
        int iteration;
    };

    void save(int slot) {
        if (slot >= int(slots_.size())) slots_.resize(slot + 1);
        slots_[slot] = Snapshot{grid_,          appearance_.diffuse_raw, appearance_.spec_coeffs,
                                opt_sdf_,       opt_def_,               opt_weight_,
                                opt_app_.diffuse, opt_app_.spec,        iteration_};
    }

    void load(int slot) {
        const Snapshot& s = slots_.at(slot);
        grid_ = s.grid;
        appearance_.diffuse_raw = s.diffuse_raw;
        appearance_.spec_coeffs = s.spec_coeffs;
        opt_sdf_ = s.opt_sdf;
        opt_def_ = s.opt_def;
        opt_weight_ = s.opt_weight;
        opt_app_.diffuse = s.opt_diffuse;
        opt_app_.spec = s.opt_spec;
        iteration_ = s.iteration;
    }

    SdfGrid& grid() { return grid_; }
    const SdfGrid& grid() const { return grid_; }
    RadianceGrid& appearance() { return appearance_; }
    const RadianceGrid& appearance() const { return appearance_; }
    int iteration() const { return iteration_; }
    void set_iteration(int it) { iteration_ = it; }
    const Stage2Config& config() const { return cfg_; }
    const std::vector<ViewRef>& last_batch() const { return last_batch_; }
    const Dataset* train_set() const { return train_; }
    const Dataset* candidate_set() const { return candidates_; }

    AdamState& opt_sdf() { return opt_sdf_; }
    AdamState& opt_def() { return opt_def_; }
    AdamState& opt_weight() { return opt_weight_; }
    FieldOptimizer& opt_app() { return opt_app_; }

  private:
    SdfGrid grid_;
    RadianceGrid appearance_;
    const Dataset* train_;
    const Dataset* candidates_;
    const Dataset* val_;
    Stage2Config cfg_;
    AdamState opt_sdf_, opt_def_, opt_weight_;
    FieldOptimizer opt_app_;
    GradientBuffer app_grads_;
    int iteration_ = 0;
    std::vector<Camera> val_cams_;
    std::vector<Image> val_images_;
    std::vector<ViewRef> last_batch_;
    std::vector<Snapshot> slots_;
};

}  // namespace voxmesh
