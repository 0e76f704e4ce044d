#pragma once

// Versioned binary checkpoints for both training stages: all parameter
// tensors plus optimizer and bandit state, bit-exact round trip.

#include <cstring>
#include <fstream>

#include "voxmesh/bandit.hpp"
#include "voxmesh/field.hpp"
#include "voxmesh/sdf_grid.hpp"

namespace voxmesh {

namespace ckpt {

constexpr uint32_t kMagic = 0x564d434bu;  // "VMCK"
constexpr uint32_t kVersion = 1;

inline void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
inline void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

inline void write_vec(std::ostream& os, const std::vector<double>& v) {
    write_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 8));
}
inline std::vector<double> read_vec(std::istream& is) {
    std::vector<double> v(read_u64(is));
    is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 8));
    return v;
}

inline void write_vec3s(std::ostream& os, const std::vector<Vec3>& v) {
    write_u64(os, v.size());
    for (const Vec3& p : v) {
        write_f64(os, p.x);
        write_f64(os, p.y);
        write_f64(os, p.z);
    }
}
inline std::vector<Vec3> read_vec3s(std::istream& is) {
    std::vector<Vec3> v(read_u64(is));
    for (Vec3& p : v) {
        p.x = read_f64(is);
        p.y = read_f64(is);
        p.z = read_f64(is);
    }
    return v;
}

inline void write_u32s(std::ostream& os, const std::vector<uint32_t>& v) {
    write_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 4));
}
inline std::vector<uint32_t> read_u32s(std::istream& is) {
    std::vector<uint32_t> v(read_u64(is));
    is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 4));
    return v;
}

inline void write_adam(std::ostream& os, const AdamState& st) {
    write_vec(os, st.m);
    write_vec(os, st.v);
    write_u64(os, uint64_t(st.step));
    write_u32s(os, st.active);
}
inline void read_adam(std::istream& is, AdamState& st) {
    st.m = read_vec(is);
    st.v = read_vec(is);
    st.step = int64_t(read_u64(is));
    st.active = read_u32s(is);
    st.ever.assign(st.m.size(), 0);
    for (uint32_t i : st.active) st.ever[i] = 1;
}

}  // namespace ckpt

struct Stage1Checkpoint {
    RadianceGrid field{2};
    FieldOptimizer opt{RadianceGrid{2}};
    int iteration = 0;

    Stage1Checkpoint(int resolution, Aabb bounds)
        : field(resolution, bounds), opt(field) {}
};

inline void save_stage1(const std::string& path, const RadianceGrid& field,
                        const FieldOptimizer& opt, int iteration) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_stage1: cannot open " + path);
    ckpt::write_u64(os, ckpt::kMagic);
    ckpt::write_u64(os, ckpt::kVersion);
    ckpt::write_u64(os, 1);  // stage
    ckpt::write_u64(os, uint64_t(field.resolution));
    ckpt::write_u64(os, uint64_t(iteration));
    ckpt::write_vec(os, field.density_raw);
    ckpt::write_vec(os, field.diffuse_raw);
    ckpt::write_vec(os, field.spec_coeffs);
    ckpt::write_adam(os, opt.density);
    ckpt::write_adam(os, opt.diffuse);
    ckpt::write_adam(os, opt.spec);
    if (!os) throw std::runtime_error("save_stage1: write failure for " + path);
}

inline Stage1Checkpoint load_stage1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_stage1: cannot open " + path);
    if (ckpt::read_u64(is) != ckpt::kMagic) throw std::runtime_error("load_stage1: bad magic in " + path);
    if (ckpt::read_u64(is) != ckpt::kVersion)
        throw std::runtime_error("load_stage1: unsupported version in " + path);
    if (ckpt::read_u64(is) != 1) throw std::runtime_error("load_stage1: not a stage-1 checkpoint");
    int res = int(ckpt::read_u64(is));
    Stage1Checkpoint out(res, Aabb{});
    out.iteration = int(ckpt::read_u64(is));
    out.field.density_raw = ckpt::read_vec(is);
    out.field.diffuse_raw = ckpt::read_vec(is);
    out.field.spec_coeffs = ckpt::read_vec(is);
    ckpt::read_adam(is, out.opt.density);
    ckpt::read_adam(is, out.opt.diffuse);
    ckpt::read_adam(is, out.opt.spec);
    if (!is) throw std::runtime_error("load_stage1: truncated file " + path);
    return out;
}

struct Stage2Checkpoint {
    SdfGrid grid;
    RadianceGrid appearance{2};
    AdamState opt_sdf, opt_def, opt_weight;
    FieldOptimizer opt_app{RadianceGrid{2}};
    BanditState bandit;
    int iteration = 0;
};

inline void save_stage2(const std::string& path, const SdfGrid& grid,
                        const RadianceGrid& appearance, const AdamState& opt_sdf,
                        const AdamState& opt_def, const AdamState& opt_weight,
                        const FieldOptimizer& opt_app, const BanditState& bandit, int iteration) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_stage2: cannot open " + path);
    ckpt::write_u64(os, ckpt::kMagic);
    ckpt::write_u64(os, ckpt::kVersion);
    ckpt::write_u64(os, 2);
    ckpt::write_u64(os, uint64_t(grid.resolution));
    ckpt::write_u64(os, uint64_t(appearance.resolution));
    ckpt::write_u64(os, uint64_t(iteration));
    ckpt::write_vec(os, grid.sdf);
    ckpt::write_vec3s(os, grid.deformation);
    ckpt::write_vec(os, grid.weight_raw);
    ckpt::write_vec(os, appearance.density_raw);
    ckpt::write_vec(os, appearance.diffuse_raw);
    ckpt::write_vec(os, appearance.spec_coeffs);
    ckpt::write_adam(os, opt_sdf);
    ckpt::write_adam(os, opt_def);
    ckpt::write_adam(os, opt_weight);
    ckpt::write_adam(os, opt_app.diffuse);
    ckpt::write_adam(os, opt_app.spec);
    ckpt::write_u64(os, bandit.size());
    for (size_t i = 0; i < bandit.size(); ++i) {
        ckpt::write_u64(os, uint64_t(bandit.counts[i]));
        ckpt::write_f64(os, bandit.means[i]);
    }
    ckpt::write_u64(os, uint64_t(bandit.t));
    ckpt::write_f64(os, bandit.c);
    ckpt::write_f64(os, bandit.init_value);
    if (!os) throw std::runtime_error("save_stage2: write failure for " + path);
}

inline Stage2Checkpoint load_stage2(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_stage2: cannot open " + path);
    if (ckpt::read_u64(is) != ckpt::kMagic) throw std::runtime_error("load_stage2: bad magic in " + path);
    if (ckpt::read_u64(is) != ckpt::kVersion)
        throw std::runtime_error("load_stage2: unsupported version in " + path);
    if (ckpt::read_u64(is) != 2) throw std::runtime_error("load_stage2: not a stage-2 checkpoint");
    Stage2Checkpoint out;
    int gres = int(ckpt::read_u64(is));
    int ares = int(ckpt::read_u64(is));
    out.iteration = int(ckpt::read_u64(is));
    out.grid = SdfGrid(gres);
    out.appearance = RadianceGrid(ares);
    out.opt_app = FieldOptimizer(out.appearance);
    out.grid.sdf = ckpt::read_vec(is);
    out.grid.deformation = ckpt::read_vec3s(is);
    out.grid.weight_raw = ckpt::read_vec(is);
    out.appearance.density_raw = ckpt::read_vec(is);
    out.appearance.diffuse_raw = ckpt::read_vec(is);
    out.appearance.spec_coeffs = ckpt::read_vec(is);
    ckpt::read_adam(is, out.opt_sdf);
    ckpt::read_adam(is, out.opt_def);
    ckpt::read_adam(is, out.opt_weight);
    ckpt::read_adam(is, out.opt_app.diffuse);
    ckpt::read_adam(is, out.opt_app.spec);
    size_t n = ckpt::read_u64(is);
    out.bandit = BanditState(n);
    for (size_t i = 0; i < n; ++i) {
        out.bandit.counts[i] = int64_t(ckpt::read_u64(is));
        out.bandit.means[i] = ckpt::read_f64(is);
    }
    out.bandit.t = int64_t(ckpt::read_u64(is));
    out.bandit.c = ckpt::read_f64(is);
    out.bandit.init_value = ckpt::read_f64(is);
    if (!is) throw std::runtime_error("load_stage2: truncated file " + path);
    return out;
}

}  // namespace voxmesh
