#pragma once

// Pinhole camera model. Convention: the camera looks along its local -z axis,
// +x is image-right, +y is image-up; pixel (i, j) samples at (i + 0.5, j + 0.5)
// with j increasing downward in the image.

#include "voxmesh/core.hpp"

namespace voxmesh {

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
};

struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat4 pose = Mat4::identity();  // camera-to-world

    Vec3 center() const { return pose.translation(); }

    void validate() const {
        if (fx <= 0 || fy <= 0) throw std::runtime_error("camera: fx, fy must be positive");
        if (cx < 0 || cx >= width || cy < 0 || cy >= height)
            throw std::runtime_error("camera: principal point outside image");
        // Orthonormality of the rotation block.
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += pose(i, k) * pose(j, k);
                double want = i == j ? 1.0 : 0.0;
                if (std::fabs(s - want) > 1e-6)
                    throw std::runtime_error("camera: rotation block not orthonormal");
            }
    }
};

// Camera-to-world pose with -z forward, +y toward `up`.
inline Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    Vec3 fwd = target - eye;
    if (fwd.norm() < 1e-12) throw std::runtime_error("look_at: eye equals target");
    fwd = fwd.normalized();
    Vec3 right = fwd.cross(up);
    if (right.norm() < 1e-9) throw std::runtime_error("look_at: up parallel to view direction");
    right = right.normalized();
    Vec3 cam_up = right.cross(fwd);

    Mat4 m = Mat4::identity();
    // Columns are the camera axes in world space: x=right, y=up, z=-forward.
    for (int i = 0; i < 3; ++i) {
        m(i, 0) = right[i];
        m(i, 1) = cam_up[i];
        m(i, 2) = -fwd[i];
        m(i, 3) = eye[i];
    }
    return m;
}

// Ray through pixel center (px + 0.5, py + 0.5).
inline Ray ray_for_pixel(const Camera& cam, double px, double py) {
    double u = (px + 0.5 - cam.cx) / cam.fx;
    double v = (py + 0.5 - cam.cy) / cam.fy;
    Vec3 dir_cam{u, -v, -1.0};  // image y grows downward, camera y up
    Vec3 dir_world = cam.pose.transform_dir(dir_cam).normalized();
    return {cam.center(), dir_world};
}

// Projects a world point to continuous pixel coordinates (pixel centers at
// integer + 0.5). depth > 0 in front of the camera.
struct Projected {
    double sx = 0, sy = 0;  // continuous pixel coords
    double depth = 0;       // distance along -z in camera frame
    bool in_front = false;
};

inline Projected project_point(const Camera& cam, const Vec3& p_world) {
    Vec3 pc = cam.pose.inverse_rigid().transform_point(p_world);
    Projected out;
    out.depth = -pc.z;
    out.in_front = out.depth > 1e-9;
    if (out.in_front) {
        out.sx = cam.cx + cam.fx * pc.x / out.depth;
        out.sy = cam.cy - cam.fy * pc.y / out.depth;
    }
    return out;
}

}  // namespace voxmesh
