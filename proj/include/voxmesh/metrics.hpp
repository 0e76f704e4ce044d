#pragma once

// Evaluation: PSNR, single-scale SSIM, area-weighted surface sampling, exact
// nearest-neighbor search (kd-tree), and Chamfer distance.

#include <algorithm>
#include <numeric>
#include <vector>

#include "voxmesh/image.hpp"
#include "voxmesh/sdf_grid.hpp"

namespace voxmesh {

constexpr double kPsnrCap = 99.0;

inline double psnr(const Image& pred, const Image& gt) {
    double mse = image_mse(pred, gt);
    if (mse <= 0) return kPsnrCap;
    double v = -10.0 * std::log10(mse);  // form chosen so psnr(mse=0.01) is exactly 20
    return std::fmin(v, kPsnrCap);
}

// Single-scale SSIM: 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
// dynamic range 1. Grayscale by channel mean; mean over fully valid windows.
inline double ssim(const Image& pred, const Image& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::runtime_error("ssim: shape mismatch");
    const int win = 11, half = win / 2;
    if (pred.width < win || pred.height < win)
        throw std::runtime_error("ssim: image smaller than the 11x11 window");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double kernel[win];
    double ksum = 0;
    for (int i = 0; i < win; ++i) {
        double d = i - half;
        kernel[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        ksum += kernel[i];
    }
    for (int i = 0; i < win; ++i) kernel[i] /= ksum;

    auto gray = [](const Image& im, int x, int y) {
        return (im.at(x, y, 0) + im.at(x, y, 1) + im.at(x, y, 2)) / 3.0;
    };
    double total = 0;
    size_t count = 0;
    for (int y = half; y < pred.height - half; ++y)
        for (int x = half; x < pred.width - half; ++x) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int j = 0; j < win; ++j)
                for (int i = 0; i < win; ++i) {
                    double w = kernel[i] * kernel[j];
                    double a = gray(pred, x + i - half, y + j - half);
                    double b = gray(gt, x + i - half, y + j - half);
                    mx += w * a;
                    my += w * b;
                    sxx += w * a * a;
                    syy += w * b * b;
                    sxy += w * a * b;
                }
            double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
            double v = ((2 * mx * my + c1) * (2 * cov + c2)) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += v;
            ++count;
        }
    return total / double(count);
}

// ---------------------------------------------------------------------------

struct PointCloud {
    std::vector<Vec3> points;
    int source_mesh = 0;
};

// Area-weighted surface sampling, uniform barycentric within faces.
inline PointCloud sample_surface(const TriangleMesh& mesh, size_t n, uint64_t seed) {
    if (mesh.empty()) throw std::runtime_error("sample_surface: empty mesh");
    if (n < 1) throw std::runtime_error("sample_surface: n must be >= 1");
    std::vector<double> cum(mesh.faces.size());
    double acc = 0;
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        acc += mesh.face_area(f);
        cum[f] = acc;
    }
    if (acc <= 0) throw std::runtime_error("sample_surface: zero total area");
    PointCloud pc;
    pc.points.reserve(n);
    Rng rng(seed, 0, 11);
    for (size_t i = 0; i < n; ++i) {
        double u = rng.uniform() * acc;
        size_t f = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
        if (f >= mesh.faces.size()) f = mesh.faces.size() - 1;
        double r1 = std::sqrt(rng.uniform());
        double r2 = rng.uniform();
        double a = 1 - r1, b = r1 * (1 - r2), c = r1 * r2;
        const auto& tri = mesh.faces[f];
        pc.points.push_back(a * mesh.vertices[tri[0]] + b * mesh.vertices[tri[1]] +
                            c * mesh.vertices[tri[2]]);
    }
    return pc;
}

// ---------------------------------------------------------------------------
// Exact nearest neighbor via kd-tree; ties broken by lowest point index.

class KdTree {
  public:
    explicit KdTree(const std::vector<Vec3>& points) : pts_(points) {
        if (points.empty()) throw std::runtime_error("KdTree: empty point set");
        order_.resize(points.size());
        std::iota(order_.begin(), order_.end(), uint32_t(0));
        nodes_.reserve(points.size());
        root_ = build(0, points.size(), 0);
    }

    struct Result {
        size_t index;
        double distance;
    };

    Result nearest(const Vec3& q) const {
        size_t best = SIZE_MAX;
        double best_d2 = std::numeric_limits<double>::infinity();
        search(root_, q, best, best_d2);
        return {best, std::sqrt(best_d2)};
    }

  private:
    struct Node {
        uint32_t point;
        int axis;
        int32_t left = -1, right = -1;
    };

    int32_t build(size_t lo, size_t hi, int depth) {
        if (lo >= hi) return -1;
        int axis = depth % 3;
        size_t mid = (lo + hi) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                         [&](uint32_t a, uint32_t b) {
                             double va = pts_[a][axis], vb = pts_[b][axis];
                             return va < vb || (va == vb && a < b);
                         });
        int32_t id = int32_t(nodes_.size());
        nodes_.push_back({order_[mid], axis, -1, -1});
        nodes_[id].left = build(lo, mid, depth + 1);
        int32_t right = build(mid + 1, hi, depth + 1);
        nodes_[id].right = right;
        return id;
    }

    void search(int32_t ni, const Vec3& q, size_t& best, double& best_d2) const {
        if (ni < 0) return;
        const Node& nd = nodes_[ni];
        double d2 = (pts_[nd.point] - q).norm2();
        if (d2 < best_d2 || (d2 == best_d2 && nd.point < best)) {
            best_d2 = d2;
            best = nd.point;
        }
        double delta = q[nd.axis] - pts_[nd.point][nd.axis];
        int32_t near = delta < 0 ? nd.left : nd.right;
        int32_t far = delta < 0 ? nd.right : nd.left;
        search(near, q, best, best_d2);
        if (delta * delta <= best_d2) search(far, q, best, best_d2);
    }

    const std::vector<Vec3>& pts_;
    std::vector<uint32_t> order_;
    std::vector<Node> nodes_;
    int32_t root_ = -1;
};

inline std::vector<std::pair<size_t, double>> nearest_neighbor(const std::vector<Vec3>& points,
                                                               const std::vector<Vec3>& queries) {
    KdTree tree(points);
    std::vector<std::pair<size_t, double>> out;
    out.reserve(queries.size());
    for (const Vec3& q : queries) {
        auto r = tree.nearest(q);
        out.emplace_back(r.index, r.distance);
    }
    return out;
}

// Exact point-to-triangle distance (Ericson, Real-Time Collision Detection).
inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return (p - a).norm();
    Vec3 bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return (p - b).norm();
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + (d1 / (d1 - d3)) * ab)).norm();
    Vec3 cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return (p - c).norm();
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + (d2 / (d2 - d6)) * ac)).norm();
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + w * (c - b))).norm();
    }
    double denom = 1.0 / (va + vb + vc);
    return (p - (a + (vb * denom) * ab + (vc * denom) * ac)).norm();
}

// Median-split AABB tree over triangles for exact point-to-surface distance.
class MeshBvh {
  public:
    explicit MeshBvh(const TriangleMesh& mesh) : mesh_(mesh) {
        if (mesh.empty()) throw std::runtime_error("MeshBvh: empty mesh");
        tris_.resize(mesh.faces.size());
        std::iota(tris_.begin(), tris_.end(), uint32_t(0));
        nodes_.reserve(2 * mesh.faces.size());
        root_ = build(0, tris_.size());
    }

    double distance(const Vec3& p) const {
        double best = std::numeric_limits<double>::infinity();
        query(root_, p, best);
        return best;
    }

  private:
    struct Node {
        Vec3 lo, hi;
        int32_t left = -1, right = -1;
        uint32_t first = 0, count = 0;  // leaf triangle range
    };

    Vec3 centroid(uint32_t f) const {
        const auto& t = mesh_.faces[f];
        return (mesh_.vertices[t[0]] + mesh_.vertices[t[1]] + mesh_.vertices[t[2]]) * (1.0 / 3.0);
    }

    int32_t build(size_t lo, size_t hi) {
        Node nd;
        nd.lo = {1e30, 1e30, 1e30};
        nd.hi = {-1e30, -1e30, -1e30};
        for (size_t i = lo; i < hi; ++i)
            for (int k = 0; k < 3; ++k) {
                const Vec3& v = mesh_.vertices[mesh_.faces[tris_[i]][k]];
                for (int a = 0; a < 3; ++a) {
                    nd.lo[a] = std::fmin(nd.lo[a], v[a]);
                    nd.hi[a] = std::fmax(nd.hi[a], v[a]);
                }
            }
        int32_t id = int32_t(nodes_.size());
        nodes_.push_back(nd);
        if (hi - lo <= 4) {
            nodes_[id].first = uint32_t(lo);
            nodes_[id].count = uint32_t(hi - lo);
            return id;
        }
        int axis = 0;
        Vec3 ext = nd.hi - nd.lo;
        if (ext.y > ext.x) axis = 1;
        if (ext.z > ext[axis]) axis = 2;
        size_t mid = (lo + hi) / 2;
        std::nth_element(tris_.begin() + lo, tris_.begin() + mid, tris_.begin() + hi,
                         [&](uint32_t a, uint32_t b) {
                             double ca = centroid(a)[axis], cb = centroid(b)[axis];
                             return ca < cb || (ca == cb && a < b);
                         });
        nodes_[id].left = build(lo, mid);
        int32_t right = build(mid, hi);
        nodes_[id].right = right;
        return id;
    }

    double box_distance(const Node& nd, const Vec3& p) const {
        double d2 = 0;
        for (int a = 0; a < 3; ++a) {
            double d = std::fmax(std::fmax(nd.lo[a] - p[a], p[a] - nd.hi[a]), 0.0);
            d2 += d * d;
        }
        return std::sqrt(d2);
    }

    void query(int32_t ni, const Vec3& p, double& best) const {
        const Node& nd = nodes_[ni];
        if (box_distance(nd, p) >= best) return;
        if (nd.left < 0) {
            for (uint32_t i = 0; i < nd.count; ++i) {
                const auto& t = mesh_.faces[tris_[nd.first + i]];
                best = std::fmin(best, point_triangle_distance(p, mesh_.vertices[t[0]],
                                                               mesh_.vertices[t[1]],
                                                               mesh_.vertices[t[2]]));
            }
            return;
        }
        double dl = box_distance(nodes_[nd.left], p), dr = box_distance(nodes_[nd.right], p);
        if (dl <= dr) {
            query(nd.left, p, best);
            query(nd.right, p, best);
        } else {
            query(nd.right, p, best);
            query(nd.left, p, best);
        }
    }

    const TriangleMesh& mesh_;
    std::vector<uint32_t> tris_;
    std::vector<Node> nodes_;
    int32_t root_ = -1;
};

struct ChamferOptions {
    size_t n_samples = 10000;
    uint64_t seed = 0;
    bool squared = false;          // mean of squared distances instead of L2
    bool one_directional = false;  // A -> B only
};

// Symmetric Chamfer distance: points sampled on each surface measured against
// the other mesh's triangles exactly (no point-to-point sampling floor).
inline double chamfer_distance(const TriangleMesh& a, const TriangleMesh& b,
                               const ChamferOptions& opt = {}) {
    if (a.empty() || b.empty()) throw std::runtime_error("chamfer_distance: empty mesh");
    PointCloud pa = sample_surface(a, opt.n_samples, opt.seed);
    MeshBvh tb(b);
    auto mean_min = [&](const std::vector<Vec3>& from, const MeshBvh& to) {
        double s = 0;
        for (const Vec3& p : from) {
            double d = to.distance(p);
            s += opt.squared ? d * d : d;
        }
        return s / double(from.size());
    };
    double ab = mean_min(pa.points, tb);
    if (opt.one_directional) return ab;
    PointCloud pb = sample_surface(b, opt.n_samples, opt.seed);
    MeshBvh ta(a);
    double ba = mean_min(pb.points, ta);
    return 0.5 * (ab + ba);
}

}  // namespace voxmesh
