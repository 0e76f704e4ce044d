#pragma once

// Analytic test scenes with exact signed distance functions, a sphere-traced
// ground-truth renderer, and multi-view dataset generation with a JSON
// manifest as the interchange format for every module that consumes views.

#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include <json.hpp>

#include "voxmesh/camera.hpp"
#include "voxmesh/image.hpp"

namespace voxmesh {

enum class ShapeKind { Sphere, Torus, Box, TwoSpheres };

struct AnalyticScene {
    ShapeKind kind = ShapeKind::Sphere;
    // Sphere
    double radius = 0.5;
    // Torus (axis z)
    double major = 0.5, minor = 0.2;
    // Box
    Vec3 half_extents{0.5, 0.5, 0.5};
    // Two spheres
    Vec3 center_a{-0.3, 0, 0}, center_b{0.3, 0, 0};
    double radius_a = 0.35, radius_b = 0.35;

    Aabb bounds;  // canonical [-1,1]^3

    // Positional albedo; default gives smooth RGB variation across the box.
    std::function<Vec3(const Vec3&)> albedo = [](const Vec3& p) {
        return Vec3{clamp(0.5 + 0.45 * p.x, 0.0, 1.0),
                    clamp(0.5 + 0.45 * p.y, 0.0, 1.0),
                    clamp(0.5 + 0.45 * p.z, 0.0, 1.0)};
    };

    static AnalyticScene make(const std::string& name) {
        AnalyticScene s;
        if (name == "sphere") {
            s.kind = ShapeKind::Sphere;
        } else if (name == "torus") {
            s.kind = ShapeKind::Torus;
        } else if (name == "box") {
            s.kind = ShapeKind::Box;
        } else if (name == "two_spheres") {
            s.kind = ShapeKind::TwoSpheres;
        } else {
            throw std::runtime_error("unknown scene shape: " + name);
        }
        return s;
    }
};

inline double sdf_eval(const AnalyticScene& s, const Vec3& p) {
    switch (s.kind) {
        case ShapeKind::Sphere:
            return p.norm() - s.radius;
        case ShapeKind::Torus: {
            double q = std::sqrt(p.x * p.x + p.y * p.y) - s.major;
            return std::sqrt(q * q + p.z * p.z) - s.minor;
        }
        case ShapeKind::Box: {
            Vec3 q = p.cwise_abs() - s.half_extents;
            Vec3 qp{std::fmax(q.x, 0.0), std::fmax(q.y, 0.0), std::fmax(q.z, 0.0)};
            return qp.norm() + std::fmin(q.max_coeff(), 0.0);
        }
        case ShapeKind::TwoSpheres:
            return std::fmin((p - s.center_a).norm() - s.radius_a,
                             (p - s.center_b).norm() - s.radius_b);
    }
    return 0;
}

inline Vec3 sdf_normal(const AnalyticScene& s, const Vec3& p) {
    const double h = 1e-5;
    Vec3 g{sdf_eval(s, {p.x + h, p.y, p.z}) - sdf_eval(s, {p.x - h, p.y, p.z}),
           sdf_eval(s, {p.x, p.y + h, p.z}) - sdf_eval(s, {p.x, p.y - h, p.z}),
           sdf_eval(s, {p.x, p.y, p.z + h}) - sdf_eval(s, {p.x, p.y, p.z - h})};
    double n = g.norm();
    return n > 0 ? g / n : Vec3{0, 0, 1};
}

// Fixed directional light for ground-truth shading.
inline Vec3 gt_light_dir() { return Vec3{1, 1, 1}.normalized(); }

// Diffuse shading used by the ground-truth renderer: albedo scaled by a
// Lambert term under one fixed light plus 0.2 ambient, clamped to [0,1].
inline Vec3 gt_shade(const AnalyticScene& s, const Vec3& p) {
    Vec3 n = sdf_normal(s, p);
    double lambert = std::fmax(0.0, n.dot(gt_light_dir()));
    double k = clamp(0.2 + lambert, 0.0, 1.0);
    Vec3 a = s.albedo(p);
    return {a.x * k, a.y * k, a.z * k};
}

// Sphere-traces one ray; returns true on a surface hit.
inline bool sphere_trace(const AnalyticScene& s, const Ray& ray, Vec3& hit) {
    double t0, t1;
    if (!s.bounds.intersect_ray(ray.origin, ray.direction, t0, t1)) return false;
    double t = std::fmax(t0, 0.0);
    for (int it = 0; it < 256 && t <= t1 + 1e-6; ++it) {
        Vec3 p = ray.origin + t * ray.direction;
        double d = sdf_eval(s, p);
        if (d < 1e-7) {
            hit = p;
            return true;
        }
        t += d;
    }
    return false;
}

inline Image groundtruth_render(const AnalyticScene& scene, const Camera& cam) {
    Image img(cam.width, cam.height, 1.0);  // white background
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            Ray ray = ray_for_pixel(cam, x, y);
            Vec3 hit;
            if (sphere_trace(scene, ray, hit)) img.set_pixel(x, y, gt_shade(scene, hit));
        }
    return img;
}

// ---------------------------------------------------------------------------
// Datasets and manifests

struct Dataset {
    std::vector<Camera> cameras;
    std::vector<Image> images;
    std::string split;  // train / val / test
};

inline nlohmann::json pose_to_json(const Mat4& m) {
    nlohmann::json a = nlohmann::json::array();
    for (double v : m.m) a.push_back(v);
    return a;
}

inline Mat4 pose_from_json(const nlohmann::json& a) {
    if (!a.is_array() || a.size() != 16)
        throw std::runtime_error("manifest: transform must be 16 row-major values");
    Mat4 m;
    for (int i = 0; i < 16; ++i) m.m[i] = a[i].get<double>();
    return m;
}

// Writes images as frame_####.png plus manifest.json into `dir`.
inline void save_dataset(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("save_dataset: cannot create " + dir);
    nlohmann::json man;
    if (!ds.cameras.empty()) {
        const Camera& c0 = ds.cameras.front();
        man["fx"] = c0.fx;
        man["fy"] = c0.fy;
        man["cx"] = c0.cx;
        man["cy"] = c0.cy;
        man["width"] = c0.width;
        man["height"] = c0.height;
    }
    man["frames"] = nlohmann::json::array();
    for (size_t i = 0; i < ds.cameras.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
        write_png(ds.images[i], dir + "/" + name);
        man["frames"].push_back({{"file_path", name}, {"transform", pose_to_json(ds.cameras[i].pose)}});
    }
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
    out << man.dump(1) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("load_dataset: missing manifest in " + dir);
    nlohmann::json man;
    in >> man;
    Dataset ds;
    for (const auto& fr : man["frames"]) {
        Camera cam;
        cam.fx = man["fx"].get<double>();
        cam.fy = man["fy"].get<double>();
        cam.cx = man["cx"].get<double>();
        cam.cy = man["cy"].get<double>();
        cam.width = man["width"].get<int>();
        cam.height = man["height"].get<int>();
        cam.pose = pose_from_json(fr["transform"]);
        ds.cameras.push_back(cam);
        ds.images.push_back(read_png(dir + "/" + fr["file_path"].get<std::string>()));
    }
    return ds;
}

// Camera centers on the upper hemisphere (z > 0) of a fixed-radius sphere via
// a Fibonacci lattice, jittered by seed. All cameras look at the origin.
inline std::vector<Camera> hemisphere_cameras(int n, int resolution, double radius,
                                              uint64_t seed, uint64_t stream = 0) {
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    std::vector<Camera> cams;
    cams.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(seed, uint64_t(i), 100 + stream);
        // z kept away from the pole so the up vector never degenerates.
        double z = 0.08 + 0.86 * (i + 0.5) / double(n);
        z = clamp(z + 0.02 * (rng.uniform() - 0.5), 0.05, 0.95);
        double phi = golden * i + 0.1 * rng.uniform();
        double rxy = std::sqrt(1.0 - z * z);
        Vec3 eye = radius * Vec3{rxy * std::cos(phi), rxy * std::sin(phi), z};
        Camera cam;
        cam.width = cam.height = resolution;
        cam.fx = cam.fy = 1.1 * resolution;  // ~49 deg vertical FOV
        cam.cx = cam.cy = resolution / 2.0;
        cam.pose = look_at(eye, {0, 0, 0}, {0, 0, 1});
        cams.push_back(cam);
    }
    return cams;
}

struct DatasetBundle {
    Dataset train, val, test;
};

constexpr double kCameraRadius = 2.5;

inline DatasetBundle generate_dataset(const AnalyticScene& scene, int n_train, int n_val,
                                      int n_test, int resolution, uint64_t seed,
                                      const std::string& out_dir) {
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw std::runtime_error("generate_dataset: counts must be >= 1");
    if (resolution < 16) throw std::runtime_error("generate_dataset: resolution must be >= 16");
    int total = n_train + n_val + n_test;
    auto cams = hemisphere_cameras(total, resolution, kCameraRadius, seed);
    DatasetBundle b;
    b.train.split = "train";
    b.val.split = "val";
    b.test.split = "test";
    for (int i = 0; i < total; ++i) {
        Dataset& ds = i < n_train ? b.train : (i < n_train + n_val ? b.val : b.test);
        Image img = groundtruth_render(scene, cams[i]);
        img.quantize8();
        ds.cameras.push_back(cams[i]);
        ds.images.push_back(std::move(img));
    }
    save_dataset(b.train, out_dir + "/train");
    save_dataset(b.val, out_dir + "/val");
    save_dataset(b.test, out_dir + "/test");
    return b;
}

}  // namespace voxmesh
