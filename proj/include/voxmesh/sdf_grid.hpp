#pragma once

// SDF grid with per-node weight and deformation attributes, differentiable
// iso-surface extraction on marching-cubes topology, and the geometric
// regularizers used during refinement.
//
// Vertex rule on a sign-change edge (a, b):
//   v = p_a + t (p_b - p_a),  t = w_a s_a / (w_a s_a - w_b s_b)
// with p = base + deformation and effective weight w = softplus(weight_raw)
// + 0.1. t is clamped to [0.01, 0.99]; gradients treat topology as fixed.

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "voxmesh/core.hpp"
#include "voxmesh/mc_tables.hpp"

namespace voxmesh {

// weight_raw value whose effective weight is exactly 1.
inline double neutral_weight_raw() { return std::log(std::expm1(0.9)); }

struct SdfGrid {
    int resolution = 0;  // nodes per axis, >= 2
    Aabb bounds;
    std::vector<double> sdf;          // N^3
    std::vector<Vec3> deformation;    // N^3, empty = all zero
    std::vector<double> weight_raw;   // N^3, empty = effective weight 1

    SdfGrid() = default;
    explicit SdfGrid(int n, Aabb b = {}) : resolution(n), bounds(b), sdf(size_t(n) * n * n, 1.0) {
        if (n < 2) throw std::runtime_error("SdfGrid: resolution must be >= 2");
    }

    size_t node_count() const { return size_t(resolution) * resolution * resolution; }
    size_t node_index(int x, int y, int z) const {
        return (size_t(z) * resolution + y) * resolution + x;
    }
    double cell_size(int axis) const { return bounds.extent()[axis] / (resolution - 1); }

    Vec3 base_position(int x, int y, int z) const {
        double n1 = resolution - 1;
        Vec3 e = bounds.extent();
        return {bounds.lo.x + e.x * x / n1, bounds.lo.y + e.y * y / n1,
                bounds.lo.z + e.z * z / n1};
    }
    Vec3 base_position(size_t idx) const {
        int n = resolution;
        int x = int(idx % n), y = int((idx / n) % n), z = int(idx / (size_t(n) * n));
        return base_position(x, y, z);
    }
    Vec3 node_position(size_t idx) const {
        Vec3 p = base_position(idx);
        if (!deformation.empty()) p += deformation[idx];
        return p;
    }
    double effective_weight(size_t idx) const {
        return weight_raw.empty() ? 1.0 : softplus(weight_raw[idx]) + 0.1;
    }

    // Allocates neutral attributes so they can be optimized.
    void enable_attributes() {
        if (deformation.empty()) deformation.assign(node_count(), Vec3{});
        if (weight_raw.empty()) weight_raw.assign(node_count(), neutral_weight_raw());
    }

    // Componentwise deformation clamp keeping cells from inverting.
    void clamp_deformations() {
        if (deformation.empty()) return;
        for (int a = 0; a < 3; ++a) {
            double lim = 0.45 * cell_size(a);
            for (Vec3& d : deformation) d[a] = clamp(d[a], -lim, lim);
        }
    }
};

struct VertexProvenance {
    uint32_t a = 0, b = 0;  // grid node indices, a < b
    double t = 0;           // interpolation parameter before clamping effects
    bool t_clamped = false;
};

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<uint32_t, 3>> faces;  // CCW seen from outside
    std::vector<VertexProvenance> provenance;    // parallel to vertices
    std::vector<Vec3> colors;                    // optional, parallel to vertices

    bool empty() const { return faces.empty(); }

    double face_area(size_t f) const {
        const auto& t = faces[f];
        Vec3 e1 = vertices[t[1]] - vertices[t[0]];
        Vec3 e2 = vertices[t[2]] - vertices[t[0]];
        return 0.5 * e1.cross(e2).norm();
    }
};

namespace detail {

struct EdgeVertex {
    uint32_t index;
};

inline double interp_param(double wa, double sa, double wb, double sb, bool& clamped) {
    double den = wa * sa - wb * sb;
    double t = den == 0 ? 0.5 : (wa * sa) / den;
    clamped = t < 0.01 || t > 0.99;
    return clamp(t, 0.01, 0.99);
}

}  // namespace detail

inline TriangleMesh extract_mesh(const SdfGrid& grid) {
    const int n = grid.resolution;
    TriangleMesh mesh;
    // Unique vertex per lattice edge: key = node_index * 3 + axis.
    std::unordered_map<uint64_t, uint32_t> edge_vertex;
    edge_vertex.reserve(1024);

    auto vertex_on_edge = [&](size_t na, size_t nb, int axis) -> uint32_t {
        uint64_t key = uint64_t(na) * 3 + axis;
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        double sa = grid.sdf[na], sb = grid.sdf[nb];
        double wa = grid.effective_weight(na), wb = grid.effective_weight(nb);
        bool clamped;
        double t = detail::interp_param(wa, sa, wb, sb, clamped);
        Vec3 pa = grid.node_position(na), pb = grid.node_position(nb);
        Vec3 v = pa + t * (pb - pa);
        uint32_t idx = uint32_t(mesh.vertices.size());
        mesh.vertices.push_back(v);
        mesh.provenance.push_back({uint32_t(na), uint32_t(nb), t, clamped});
        edge_vertex.emplace(key, idx);
        return idx;
    };

    // Corner offsets in Bourke order.
    static constexpr int off[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                      {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    for (int z = 0; z + 1 < n; ++z)
        for (int y = 0; y + 1 < n; ++y)
            for (int x = 0; x + 1 < n; ++x) {
                size_t corner[8];
                int cube = 0;
                for (int k = 0; k < 8; ++k) {
                    corner[k] = grid.node_index(x + off[k][0], y + off[k][1], z + off[k][2]);
                    if (grid.sdf[corner[k]] < 0) cube |= 1 << k;
                }
                if (kMcEdgeTable[cube] == 0) continue;
                uint32_t ev[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(kMcEdgeTable[cube] & (1 << e))) continue;
                    size_t na = corner[kMcEdgeCorners[e][0]];
                    size_t nb = corner[kMcEdgeCorners[e][1]];
                    // Canonical orientation: lower node index first. The
                    // interpolation formula is symmetric under swap.
                    int axis = e < 4 ? (e % 2 == 0 ? 0 : 1) : (e < 8 ? (e % 2 == 0 ? 0 : 1) : 2);
                    if (na > nb) std::swap(na, nb);
                    ev[e] = vertex_on_edge(na, nb, axis);
                }
                for (int i = 0; kMcTriTable[cube][i] != -1; i += 3) {
                    // Table order yields inward normals for sdf<0 = inside;
                    // swap two vertices for CCW seen from outside.
                    mesh.faces.push_back({ev[kMcTriTable[cube][i]], ev[kMcTriTable[cube][i + 2]],
                                          ev[kMcTriTable[cube][i + 1]]});
                }
            }

    // Drop degenerate faces; provenance of remaining vertices is untouched.
    std::vector<std::array<uint32_t, 3>> kept;
    kept.reserve(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f)
        if (mesh.face_area(f) > 1e-12) kept.push_back(mesh.faces[f]);
    mesh.faces = std::move(kept);
    return mesh;
}

struct SdfGradients {
    std::vector<double> sdf;
    std::vector<Vec3> deformation;
    std::vector<double> weight_raw;

    explicit SdfGradients(size_t n)
        : sdf(n, 0.0), deformation(n, Vec3{}), weight_raw(n, 0.0) {}
};

// Chain rule from per-vertex position gradients back to grid parameters.
// Topology is treated as fixed; vertices with clamped t get no gradient
// through t but keep the gradient through the node positions.
inline void backward_extract(const SdfGrid& grid, const TriangleMesh& mesh,
                             const std::vector<Vec3>& grad_vertices, SdfGradients& out) {
    for (size_t vi = 0; vi < mesh.vertices.size(); ++vi) {
        const Vec3& gv = grad_vertices[vi];
        if (gv.x == 0 && gv.y == 0 && gv.z == 0) continue;
        const VertexProvenance& pr = mesh.provenance[vi];
        double t = pr.t;
        out.deformation[pr.a] += (1.0 - t) * gv;
        out.deformation[pr.b] += t * gv;
        if (pr.t_clamped) continue;
        double sa = grid.sdf[pr.a], sb = grid.sdf[pr.b];
        double wa = grid.effective_weight(pr.a), wb = grid.effective_weight(pr.b);
        double den = wa * sa - wb * sb;
        if (den == 0) continue;
        Vec3 pa = grid.node_position(pr.a), pb = grid.node_position(pr.b);
        double gt = gv.dot(pb - pa);  // dL/dt
        double inv2 = 1.0 / (den * den);
        out.sdf[pr.a] += gt * (wa * (-wb * sb)) * inv2;
        out.sdf[pr.b] += gt * (wa * sa * wb) * inv2;
        if (!grid.weight_raw.empty()) {
            double dwa = gt * (sa * (-wb * sb)) * inv2;
            double dwb = gt * (wa * sa * sb) * inv2;
            out.weight_raw[pr.a] += dwa * softplus_deriv(grid.weight_raw[pr.a]);
            out.weight_raw[pr.b] += dwb * softplus_deriv(grid.weight_raw[pr.b]);
        }
    }
}

// Total variation on the sdf values: mean squared difference over all
// axis-adjacent node pairs.
inline double tv_reg(const SdfGrid& grid, SdfGradients* grad = nullptr, double scale = 1.0) {
    const int n = grid.resolution;
    size_t pairs = 3 * size_t(n) * n * (n - 1);
    double sum = 0;
    auto visit = [&](size_t i, size_t j) {
        double d = grid.sdf[i] - grid.sdf[j];
        sum += d * d;
        if (grad) {
            double g = scale * 2.0 * d / double(pairs);
            grad->sdf[i] += g;
            grad->sdf[j] -= g;
        }
    };
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                size_t i = grid.node_index(x, y, z);
                if (x + 1 < n) visit(i, grid.node_index(x + 1, y, z));
                if (y + 1 < n) visit(i, grid.node_index(x, y + 1, z));
                if (z + 1 < n) visit(i, grid.node_index(x, y, z + 1));
            }
    return sum / double(pairs);
}

// Attribute-deviation penalty: mean squared effective-weight difference over
// sign-change edges plus lambda_def times the mean squared deformation.
inline double dev_reg(const SdfGrid& grid, double lambda_def = 1.0,
                      SdfGradients* grad = nullptr, double scale = 1.0) {
    const int n = grid.resolution;
    double wsum = 0;
    size_t wcount = 0;
    auto visit = [&](size_t i, size_t j) {
        if ((grid.sdf[i] < 0) == (grid.sdf[j] < 0)) return;
        double d = grid.effective_weight(i) - grid.effective_weight(j);
        wsum += d * d;
        ++wcount;
    };
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                size_t i = grid.node_index(x, y, z);
                if (x + 1 < n) visit(i, grid.node_index(x + 1, y, z));
                if (y + 1 < n) visit(i, grid.node_index(x, y + 1, z));
                if (z + 1 < n) visit(i, grid.node_index(x, y, z + 1));
            }
    double wterm = wcount ? wsum / double(wcount) : 0.0;
    if (grad && wcount && !grid.weight_raw.empty()) {
        auto visit_grad = [&](size_t i, size_t j) {
            if ((grid.sdf[i] < 0) == (grid.sdf[j] < 0)) return;
            double d = grid.effective_weight(i) - grid.effective_weight(j);
            double g = scale * 2.0 * d / double(wcount);
            grad->weight_raw[i] += g * softplus_deriv(grid.weight_raw[i]);
            grad->weight_raw[j] -= g * softplus_deriv(grid.weight_raw[j]);
        };
        for (int z = 0; z < n; ++z)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    size_t i = grid.node_index(x, y, z);
                    if (x + 1 < n) visit_grad(i, grid.node_index(x + 1, y, z));
                    if (y + 1 < n) visit_grad(i, grid.node_index(x, y + 1, z));
                    if (z + 1 < n) visit_grad(i, grid.node_index(x, y, z + 1));
                }
    }
    double dsum = 0;
    size_t nn = grid.node_count();
    if (!grid.deformation.empty())
        for (const Vec3& d : grid.deformation) dsum += d.norm2();
    double dterm = dsum / double(nn);
    if (grad && !grid.deformation.empty())
        for (size_t i = 0; i < nn; ++i)
            grad->deformation[i] += scale * lambda_def * 2.0 / double(nn) * grid.deformation[i];
    return wterm + lambda_def * dterm;
}

// Extracts an analytic scene's SDF onto a grid (neutral attributes).
template <typename SdfFn>
inline SdfGrid grid_from_function(int resolution, const Aabb& bounds, SdfFn&& fn) {
    SdfGrid g(resolution, bounds);
    for (int z = 0; z < resolution; ++z)
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x)
                g.sdf[g.node_index(x, y, z)] = fn(g.base_position(x, y, z));
    return g;
}

}  // namespace voxmesh
