#pragma once

// Differentiable surface rendering of extracted meshes: pinhole projection,
// hard z-buffer rasterization with 2D edge functions, appearance shading
// from the shared radiance grid, and a single-pixel silhouette antialiasing
// pass that is the sole source of gradients w.r.t. projected vertices.

#include <optional>
#include <vector>

#include "voxmesh/field.hpp"
#include "voxmesh/sdf_grid.hpp"

namespace voxmesh {

struct ProjectedVertex {
    double sx = 0, sy = 0;  // continuous pixel coords
    double depth = 0;
    bool in_front = false;
};

inline std::vector<ProjectedVertex> project_vertices(const Camera& cam, const TriangleMesh& mesh) {
    std::vector<ProjectedVertex> out(mesh.vertices.size());
    Mat4 w2c = cam.pose.inverse_rigid();
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        Vec3 pc = w2c.transform_point(mesh.vertices[i]);
        double depth = -pc.z;
        ProjectedVertex& v = out[i];
        v.depth = depth;
        v.in_front = depth > 1e-9;
        if (v.in_front) {
            v.sx = cam.cx + cam.fx * pc.x / depth;
            v.sy = cam.cy - cam.fy * pc.y / depth;
        }
    }
    return out;
}

struct Fragment {
    int32_t face = -1;               // -1 = uncovered
    double u = 0, v = 0, w = 0;      // screen-space barycentrics
    double depth = 0;
    Vec3 position;                   // perspective-correct 3D position
};

struct FragmentBuffer {
    int width = 0, height = 0;
    std::vector<Fragment> frags;

    Fragment& at(int x, int y) { return frags[size_t(y) * width + x]; }
    const Fragment& at(int x, int y) const { return frags[size_t(y) * width + x]; }
};

// Hard rasterization: nearest-depth face per pixel, back-face culling off.
// Faces with any vertex behind the camera are skipped.
inline FragmentBuffer rasterize(const TriangleMesh& mesh, const Camera& cam,
                                const std::vector<ProjectedVertex>& proj) {
    FragmentBuffer fb;
    fb.width = cam.width;
    fb.height = cam.height;
    fb.frags.assign(size_t(cam.width) * cam.height, Fragment{});
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& tri = mesh.faces[f];
        const ProjectedVertex &A = proj[tri[0]], &B = proj[tri[1]], &C = proj[tri[2]];
        if (!A.in_front || !B.in_front || !C.in_front) continue;
        double area = (B.sx - A.sx) * (C.sy - A.sy) - (B.sy - A.sy) * (C.sx - A.sx);
        if (area == 0) continue;
        int x0 = std::max(0, int(std::floor(std::min({A.sx, B.sx, C.sx}) - 0.5)));
        int x1 = std::min(cam.width - 1, int(std::ceil(std::max({A.sx, B.sx, C.sx}) - 0.5)));
        int y0 = std::max(0, int(std::floor(std::min({A.sy, B.sy, C.sy}) - 0.5)));
        int y1 = std::min(cam.height - 1, int(std::ceil(std::max({A.sy, B.sy, C.sy}) - 0.5)));
        double inv_area = 1.0 / area;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double px = x + 0.5, py = y + 0.5;
                double w0 = ((B.sx - px) * (C.sy - py) - (B.sy - py) * (C.sx - px)) * inv_area;
                double w1 = ((C.sx - px) * (A.sy - py) - (C.sy - py) * (A.sx - px)) * inv_area;
                double w2 = 1.0 - w0 - w1;
                if (w0 < 0 || w1 < 0 || w2 < 0) continue;
                // Perspective-correct weights for depth and 3D position.
                double iz = w0 / A.depth + w1 / B.depth + w2 / C.depth;
                double depth = 1.0 / iz;
                Fragment& fr = fb.at(x, y);
                if (fr.face >= 0 && fr.depth <= depth) continue;
                double pu = w0 / A.depth * depth, pv = w1 / B.depth * depth,
                       pw = w2 / C.depth * depth;
                fr.face = int32_t(f);
                fr.u = w0;
                fr.v = w1;
                fr.w = w2;
                fr.depth = depth;
                fr.position = pu * mesh.vertices[tri[0]] + pv * mesh.vertices[tri[1]] +
                              pw * mesh.vertices[tri[2]];
            }
    }
    return fb;
}

inline FragmentBuffer rasterize(const TriangleMesh& mesh, const Camera& cam) {
    return rasterize(mesh, cam, project_vertices(cam, mesh));
}

// Per-pixel shading state kept for the backward pass.
struct ShadeAux {
    struct Pixel {
        int x, y;
        GridStencil stencil;
        Vec3 dwdp[8];  // spatial derivative of each stencil weight
        double basis[kShCoeffs];
        Vec3 diffuse_raw;
        Vec3 color_preclamp;
        Vec3 pos;           // sample position after bounds clamping
        Vec3 dir;           // view direction at the sample
        double range;       // |pos - eye|
        bool free_axis[3];  // false where the bounds clamp was active
    };
    std::vector<Pixel> pixels;
};

// Color per covered pixel: sigmoid(diffuse) + SH specular queried at the
// fragment position (clamped to bounds), view direction camera-to-point.
// Uncovered pixels are white.
inline Image shade(const FragmentBuffer& fb, const RadianceGrid& appearance, const Camera& cam,
                   ShadeAux* aux = nullptr) {
    Image img(fb.width, fb.height, 1.0);
    Vec3 eye = cam.center();
    for (int y = 0; y < fb.height; ++y)
        for (int x = 0; x < fb.width; ++x) {
            const Fragment& fr = fb.at(x, y);
            if (fr.face < 0) continue;
            Vec3 p = fr.position;
            bool free_axis[3];
            for (int a = 0; a < 3; ++a) {
                double c = clamp(p[a], appearance.bounds.lo[a], appearance.bounds.hi[a]);
                free_axis[a] = c == p[a];
                p[a] = c;
            }
            double range = (p - eye).norm();
            Vec3 dir = (p - eye) * (1.0 / range);
            double basis[kShCoeffs];
            sh_basis(dir, basis);
            Vec3 dwdp[8];
            GridStencil st = appearance.stencil_with_grad(p, dwdp);
            Vec3 draw = appearance.interp_diffuse_raw(st);
            Vec3 spec = appearance.interp_specular(st, basis);
            Vec3 cpre = Vec3{sigmoid(draw.x), sigmoid(draw.y), sigmoid(draw.z)} + spec;
            img.set_pixel(x, y, {clamp(cpre.x, 0, 1), clamp(cpre.y, 0, 1), clamp(cpre.z, 0, 1)});
            if (aux) {
                ShadeAux::Pixel px;
                px.x = x;
                px.y = y;
                px.stencil = st;
                std::copy(dwdp, dwdp + 8, px.dwdp);
                std::copy(basis, basis + kShCoeffs, px.basis);
                px.diffuse_raw = draw;
                px.color_preclamp = cpre;
                px.pos = p;
                px.dir = dir;
                px.range = range;
                std::copy(free_axis, free_axis + 3, px.free_axis);
                aux->pixels.push_back(px);
            }
        }
    return img;
}

// Routes per-pixel color gradients into the appearance grids and, when
// `dLdPos` is given (indexed y*width+x), into the fragment sample positions:
// color depends on position through the trilinear weights and through the
// view direction of the SH specular term.
inline void backward_shade(const RadianceGrid& appearance, const ShadeAux& aux, const Image& dLdI,
                           GradientBuffer& grads, std::vector<Vec3>* dLdPos = nullptr) {
    for (const auto& px : aux.pixels) {
        Vec3 g = dLdI.pixel(px.x, px.y);
        double gx = (px.color_preclamp.x >= 0 && px.color_preclamp.x <= 1) ? g.x : 0;
        double gy = (px.color_preclamp.y >= 0 && px.color_preclamp.y <= 1) ? g.y : 0;
        double gz = (px.color_preclamp.z >= 0 && px.color_preclamp.z <= 1) ? g.z : 0;
        if (gx == 0 && gy == 0 && gz == 0) continue;
        double dx = gx * sigmoid_deriv(px.diffuse_raw.x);
        double dy = gy * sigmoid_deriv(px.diffuse_raw.y);
        double dz = gz * sigmoid_deriv(px.diffuse_raw.z);
        Vec3 gpos{};                       // dL/d(sample position)
        double sinterp[kShCoeffs][3] = {}; // interpolated spec coefficients
        for (int k = 0; k < 8; ++k) {
            double wk = px.stencil.w[k];
            size_t base = px.stencil.node[k] * 3;
            grads.diffuse_raw.add(base + 0, wk * dx);
            grads.diffuse_raw.add(base + 1, wk * dy);
            grads.diffuse_raw.add(base + 2, wk * dz);
            size_t sbase = px.stencil.node[k] * kShCoeffs * 3;
            double node_val[3] = {0, 0, 0};  // g-weighted color at this node
            for (int b = 0; b < kShCoeffs; ++b) {
                double wb = wk * px.basis[b];
                const double* c = &appearance.spec_coeffs[sbase + b * 3];
                grads.spec_coeffs.add(sbase + b * 3 + 0, wb * gx);
                grads.spec_coeffs.add(sbase + b * 3 + 1, wb * gy);
                grads.spec_coeffs.add(sbase + b * 3 + 2, wb * gz);
                if (dLdPos) {
                    node_val[0] += px.basis[b] * c[0];
                    node_val[1] += px.basis[b] * c[1];
                    node_val[2] += px.basis[b] * c[2];
                    sinterp[b][0] += wk * c[0];
                    sinterp[b][1] += wk * c[1];
                    sinterp[b][2] += wk * c[2];
                }
            }
            if (dLdPos) {
                // Trilinear-weight route: diffuse + specular node values.
                double s = dx * appearance.diffuse_raw[base + 0] +
                           dy * appearance.diffuse_raw[base + 1] +
                           dz * appearance.diffuse_raw[base + 2] + gx * node_val[0] +
                           gy * node_val[1] + gz * node_val[2];
                gpos += s * px.dwdp[k];
            }
        }
        if (!dLdPos) continue;
        // View-direction route of the SH basis.
        Vec3 bgrad[kShCoeffs];
        sh_basis_grad(px.dir, bgrad);
        Vec3 gdir{};
        for (int b = 0; b < kShCoeffs; ++b)
            gdir += (gx * sinterp[b][0] + gy * sinterp[b][1] + gz * sinterp[b][2]) * bgrad[b];
        // dir = (p - eye)/range: J^T g = (g - dir (dir.g)) / range
        gpos += (gdir - px.dir * px.dir.dot(gdir)) * (1.0 / px.range);
        for (int a = 0; a < 3; ++a)
            if (!px.free_axis[a]) gpos[a] = 0;  // clamped axes are insensitive
        (*dLdPos)[size_t(px.y) * dLdI.width + px.x] += gpos;
    }
}

// ---------------------------------------------------------------------------
// Silhouette antialiasing. For each pair of adjacent pixels separated by a
// coverage or face discontinuity, find where the nearer face's edge crosses
// the segment between the pixel centers and blend the two sides by the
// overhang past the midpoint. The blend factor depends analytically on the
// projected edge endpoints.

struct BlendEvent {
    int dst_x, dst_y;      // pixel receiving the blended-in color
    int src_x, src_y;      // pixel whose color is blended in
    uint32_t va, vb;       // mesh vertex indices of the crossing edge
    double weight;         // amount of src color mixed into dst, in [0, 1]
    // d(weight)/d(projected endpoint coordinates)
    double dw_dax, dw_day, dw_dbx, dw_dby;
};

struct AntialiasAux {
    std::vector<BlendEvent> events;
};

namespace detail {

// Intersection parameter x of segment P+x(Q-P) with the line through A,B,
// plus derivatives of x w.r.t. A and B. Returns false when degenerate or
// the crossing lies outside the pixel-pair segment.
inline bool edge_crossing(double px, double py, double qx, double qy, double ax, double ay,
                          double bx, double by, double& x, double dxd[4]) {
    double ex = bx - ax, ey = by - ay;
    double dx = qx - px, dy = qy - py;
    double den = dx * ey - dy * ex;
    if (std::fabs(den) < 1e-12) return false;
    double num = (ax - px) * ey - (ay - py) * ex;
    x = num / den;
    if (x < 0.0 || x > 1.0) return false;
    // Crossing point must lie within the edge segment (with slack so that
    // silhouettes meeting at a vertex still blend).
    double s = std::fabs(ex) > std::fabs(ey) ? (px + x * dx - ax) / ex : (py + x * dy - ay) / ey;
    if (s < -0.2 || s > 1.2) return false;
    // x = num / den; num = (ax-px)(by-ay) - (ay-py)(bx-ax), both linear in
    // the endpoint coordinates.
    double n_ax = (by - ay) + (ay - py);
    double n_ay = -(ax - px) - (bx - ax);
    double n_bx = -(ay - py);
    double n_by = (ax - px);
    // den = dx(by-ay) - dy(bx-ax)
    double d_ax = dy;
    double d_ay = -dx;
    double d_bx = -dy;
    double d_by = dx;
    double inv = 1.0 / den;
    dxd[0] = (n_ax - x * d_ax) * inv;
    dxd[1] = (n_ay - x * d_ay) * inv;
    dxd[2] = (n_bx - x * d_bx) * inv;
    dxd[3] = (n_by - x * d_by) * inv;
    return true;
}

}  // namespace detail

// Blends silhouette pixels; returns the antialiased image. `aux` collects
// the gradient hooks for the backward pass.
inline Image antialias(const Image& img, const FragmentBuffer& fb, const TriangleMesh& mesh,
                       const std::vector<ProjectedVertex>& proj, AntialiasAux* aux = nullptr) {
    Image out = img;
    auto handle_pair = [&](int x0, int y0, int x1, int y1) {
        const Fragment &f0 = fb.at(x0, y0), &f1 = fb.at(x1, y1);
        if (f0.face == f1.face) return;
        // Nearer side provides the crossing edge.
        bool first_nearer;
        if (f0.face < 0)
            first_nearer = false;
        else if (f1.face < 0)
            first_nearer = true;
        else
            first_nearer = f0.depth < f1.depth;
        int cx = first_nearer ? x0 : x1, cy = first_nearer ? y0 : y1;
        int ox = first_nearer ? x1 : x0, oy = first_nearer ? y1 : y0;
        int face = fb.at(cx, cy).face;
        const auto& tri = mesh.faces[face];
        double pxc = cx + 0.5, pyc = cy + 0.5, pxo = ox + 0.5, pyo = oy + 0.5;
        double best_x = -1, best_d[4] = {0, 0, 0, 0};
        uint32_t best_a = 0, best_b = 0;
        for (int e = 0; e < 3; ++e) {
            uint32_t ia = tri[e], ib = tri[(e + 1) % 3];
            if (!proj[ia].in_front || !proj[ib].in_front) continue;
            double x, d[4];
            if (!detail::edge_crossing(pxc, pyc, pxo, pyo, proj[ia].sx, proj[ia].sy, proj[ib].sx,
                                       proj[ib].sy, x, d))
                continue;
            if (best_x < 0 || std::fabs(x - 0.5) < std::fabs(best_x - 0.5)) {
                best_x = x;
                best_a = ia;
                best_b = ib;
                std::copy(d, d + 4, best_d);
            }
        }
        if (best_x < 0) return;
        // The covered face extends from the covered pixel center to best_x.
        // Overhang past the midpoint blends covered color into the other
        // pixel; shortfall blends the other side into the covered pixel.
        BlendEvent ev{};
        ev.va = best_a;
        ev.vb = best_b;
        if (best_x > 0.5) {
            ev.dst_x = ox;
            ev.dst_y = oy;
            ev.src_x = cx;
            ev.src_y = cy;
            ev.weight = best_x - 0.5;
            ev.dw_dax = best_d[0];
            ev.dw_day = best_d[1];
            ev.dw_dbx = best_d[2];
            ev.dw_dby = best_d[3];
        } else {
            ev.dst_x = cx;
            ev.dst_y = cy;
            ev.src_x = ox;
            ev.src_y = oy;
            ev.weight = 0.5 - best_x;
            ev.dw_dax = -best_d[0];
            ev.dw_day = -best_d[1];
            ev.dw_dbx = -best_d[2];
            ev.dw_dby = -best_d[3];
        }
        // Additive first-order blend from the pre-AA image so that several
        // events on one destination pixel compose consistently with the
        // backward pass.
        Vec3 cd = img.pixel(ev.dst_x, ev.dst_y), cs = img.pixel(ev.src_x, ev.src_y);
        Vec3 blended = out.pixel(ev.dst_x, ev.dst_y) + ev.weight * (cs - cd);
        out.set_pixel(ev.dst_x, ev.dst_y, blended);
        if (aux) aux->events.push_back(ev);
    };
    for (int y = 0; y < fb.height; ++y)
        for (int x = 0; x < fb.width; ++x) {
            if (x + 1 < fb.width) handle_pair(x, y, x + 1, y);
            if (y + 1 < fb.height) handle_pair(x, y, x, y + 1);
        }
    return out;
}

// Backward through the antialiasing pass: gradients w.r.t. the pre-AA image
// and the projected vertex positions. Multiple blend events may write the
// same destination pixel; they are treated as independent first-order edits.
struct ScreenGrad {
    double x = 0, y = 0;
    double d = 0;  // gradient w.r.t. the projected depth
};

inline void backward_antialias(const Image& img, const AntialiasAux& aux, const Image& dLdOut,
                               Image& dLdImg, std::vector<ScreenGrad>& dLdProj) {
    dLdImg = dLdOut;
    for (const BlendEvent& ev : aux.events) {
        Vec3 g = dLdOut.pixel(ev.dst_x, ev.dst_y);
        Vec3 cd = img.pixel(ev.dst_x, ev.dst_y), cs = img.pixel(ev.src_x, ev.src_y);
        // d(blended)/d(weight) = cs - cd
        double gw = g.dot(cs - cd);
        dLdProj[ev.va].x += gw * ev.dw_dax;
        dLdProj[ev.va].y += gw * ev.dw_day;
        dLdProj[ev.vb].x += gw * ev.dw_dbx;
        dLdProj[ev.vb].y += gw * ev.dw_dby;
        // Color routing: dst pixel loses weight, src pixel gains it.
        for (int c = 0; c < 3; ++c) {
            dLdImg.at(ev.dst_x, ev.dst_y, c) -= ev.weight * dLdOut.at(ev.dst_x, ev.dst_y, c);
            dLdImg.at(ev.src_x, ev.src_y, c) += ev.weight * dLdOut.at(ev.dst_x, ev.dst_y, c);
        }
    }
}

// Backward through the hard rasterizer's fragment positions. The fragment
// position is the perspective-correct barycentric combination of the world
// vertices; it depends on the vertices directly, on the projected screen
// coordinates through the screen barycentrics, and on the vertex depths
// through the perspective correction. Visibility itself stays fixed.
inline void backward_fragments(const FragmentBuffer& fb, const TriangleMesh& mesh,
                               const std::vector<ProjectedVertex>& proj,
                               const std::vector<Vec3>& dLdPos,
                               std::vector<ScreenGrad>& dLdProj, std::vector<Vec3>& dLdVerts) {
    for (int y = 0; y < fb.height; ++y)
        for (int x = 0; x < fb.width; ++x) {
            const Fragment& fr = fb.at(x, y);
            if (fr.face < 0) continue;
            const Vec3& G = dLdPos[size_t(y) * fb.width + x];
            if (G.x == 0 && G.y == 0 && G.z == 0) continue;
            const auto& tri = mesh.faces[fr.face];
            const ProjectedVertex &A = proj[tri[0]], &B = proj[tri[1]], &C = proj[tri[2]];
            const Vec3 &VA = mesh.vertices[tri[0]], &VB = mesh.vertices[tri[1]],
                       &VC = mesh.vertices[tri[2]];
            double uvw[3] = {fr.u, fr.v, fr.w};
            double dep[3] = {A.depth, B.depth, C.depth};
            const Vec3* V[3] = {&VA, &VB, &VC};
            // a_i = u_i/d_i, S = sum a_i, alpha_i = a_i/S, p = sum alpha_i V_i
            double a[3], S = 0;
            for (int i = 0; i < 3; ++i) {
                a[i] = uvw[i] / dep[i];
                S += a[i];
            }
            double GdotP = G.dot(fr.position);
            double dLdu[3];
            for (int i = 0; i < 3; ++i) {
                double alpha = a[i] / S;
                dLdVerts[tri[i]] += alpha * G;
                double dLda = (G.dot(*V[i]) - GdotP) / S;
                dLdu[i] = dLda / dep[i];
                dLdProj[tri[i]].d += -dLda * uvw[i] / (dep[i] * dep[i]);
            }
            // Screen barycentric derivatives w.r.t. the projected vertices.
            // With q = s - A, e1 = B - A, e2 = C - A, D = e1 x e2 (z cross):
            //   v = (q x e2)/D (weight of B), w = (e1 x q)/D (weight of C).
            double sx = x + 0.5, sy = y + 0.5;
            double qx = sx - A.sx, qy = sy - A.sy;
            double e1x = B.sx - A.sx, e1y = B.sy - A.sy;
            double e2x = C.sx - A.sx, e2y = C.sy - A.sy;
            double D = e1x * e2y - e1y * e2x;
            if (D == 0) continue;
            double v = fr.v, w = fr.w;
            // Partials of the numerators and the denominator; theta ranges
            // over (Ax, Ay, Bx, By, Cx, Cy).
            double Nv_t[6] = {-e2y + qy, e2x - qx, 0, 0, -qy, qx};
            double Nw_t[6] = {-qy + e1y, qx - e1x, qy, -qx, 0, 0};
            double D_t[6] = {-e2y + e1y, e2x - e1x, e2y, -e2x, -e1y, e1x};
            double gu = dLdu[0], gv = dLdu[1], gw = dLdu[2];
            for (int t = 0; t < 6; ++t) {
                double dv = (Nv_t[t] - v * D_t[t]) / D;
                double dw = (Nw_t[t] - w * D_t[t]) / D;
                double du = -dv - dw;
                double g = gu * du + gv * dv + gw * dw;
                ScreenGrad& sg = dLdProj[tri[t / 2]];
                if (t % 2 == 0)
                    sg.x += g;
                else
                    sg.y += g;
            }
        }
}

// Chain from screen-space vertex gradients to 3D vertex gradients.
inline std::vector<Vec3> screen_to_world_grads(const Camera& cam, const TriangleMesh& mesh,
                                               const std::vector<ProjectedVertex>& proj,
                                               const std::vector<ScreenGrad>& dLdProj) {
    std::vector<Vec3> out(mesh.vertices.size());
    Mat4 w2c = cam.pose.inverse_rigid();
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        if (dLdProj[i].x == 0 && dLdProj[i].y == 0 && dLdProj[i].d == 0) continue;
        if (!proj[i].in_front) continue;
        Vec3 pc = w2c.transform_point(mesh.vertices[i]);
        double d = proj[i].depth;  // = -pc.z
        // sx = cx + fx*pc.x/d, sy = cy - fy*pc.y/d, d = -pc.z
        double gx = dLdProj[i].x, gy = dLdProj[i].y;
        Vec3 g_cam{gx * cam.fx / d, -gy * cam.fy / d,
                   gx * cam.fx * pc.x / (d * d) - gy * cam.fy * pc.y / (d * d) - dLdProj[i].d};
        // world gradient = R^T-chain: p_cam = R_wc p + t, dL/dp = R_wc^T g_cam
        Vec3 gw;
        for (int r = 0; r < 3; ++r)
            gw[r] = w2c(0, r) * g_cam.x + w2c(1, r) * g_cam.y + w2c(2, r) * g_cam.z;
        out[i] = gw;
    }
    return out;
}

// ---------------------------------------------------------------------------

inline double charbonnier_loss(const Image& pred, const Image& gt, double eps_c,
                               Image* grad = nullptr) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::runtime_error("charbonnier_loss: shape mismatch");
    if (eps_c <= 0) throw std::runtime_error("charbonnier_loss: eps must be positive");
    if (grad) *grad = Image(pred.width, pred.height, 0.0);
    double sum = 0;
    double inv = 1.0 / double(pred.rgb.size());
    for (size_t i = 0; i < pred.rgb.size(); ++i) {
        double r = pred.rgb[i] - gt.rgb[i];
        double v = std::sqrt(r * r + eps_c * eps_c);
        sum += v;
        if (grad) grad->rgb[i] = r / v * inv;
    }
    return sum * inv;
}

}  // namespace voxmesh
