#pragma once

// ASCII OBJ / PLY mesh export and import. OBJ vertex colors use the common
// "v x y z r g b" extension; PLY stores uchar red/green/blue per vertex.

#include <fstream>
#include <sstream>

#include "voxmesh/sdf_grid.hpp"

namespace voxmesh {

enum class MeshFormat { Obj, Ply };

inline MeshFormat mesh_format_for_path(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply") return MeshFormat::Ply;
    return MeshFormat::Obj;
}

inline void export_mesh(const TriangleMesh& mesh, const std::string& path,
                        MeshFormat fmt) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_mesh: cannot open " + path);
    out.precision(9);
    bool colors = mesh.colors.size() == mesh.vertices.size();
    if (fmt == MeshFormat::Obj) {
        for (size_t i = 0; i < mesh.vertices.size(); ++i) {
            const Vec3& v = mesh.vertices[i];
            out << "v " << v.x << " " << v.y << " " << v.z;
            if (colors) {
                const Vec3& c = mesh.colors[i];
                out << " " << c.x << " " << c.y << " " << c.z;
            }
            out << "\n";
        }
        for (const auto& f : mesh.faces)
            out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    } else {
        out << "ply\nformat ascii 1.0\n";
        out << "element vertex " << mesh.vertices.size() << "\n";
        out << "property float x\nproperty float y\nproperty float z\n";
        if (colors)
            out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
        out << "element face " << mesh.faces.size() << "\n";
        out << "property list uchar int vertex_indices\nend_header\n";
        for (size_t i = 0; i < mesh.vertices.size(); ++i) {
            const Vec3& v = mesh.vertices[i];
            out << v.x << " " << v.y << " " << v.z;
            if (colors) {
                const Vec3& c = mesh.colors[i];
                out << " " << int(std::lround(clamp(c.x, 0, 1) * 255)) << " "
                    << int(std::lround(clamp(c.y, 0, 1) * 255)) << " "
                    << int(std::lround(clamp(c.z, 0, 1) * 255));
            }
            out << "\n";
        }
        for (const auto& f : mesh.faces)
            out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
    }
    if (!out) throw std::runtime_error("export_mesh: write failure for " + path);
}

inline TriangleMesh import_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("import_mesh: cannot open " + path);
    TriangleMesh mesh;
    if (mesh_format_for_path(path) == MeshFormat::Obj) {
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ss(line);
            std::string tag;
            ss >> tag;
            if (tag == "v") {
                Vec3 v, c;
                ss >> v.x >> v.y >> v.z;
                mesh.vertices.push_back(v);
                if (ss >> c.x >> c.y >> c.z) mesh.colors.push_back(c);
            } else if (tag == "f") {
                std::array<uint32_t, 3> f{};
                for (int k = 0; k < 3; ++k) {
                    std::string tok;
                    ss >> tok;
                    f[k] = uint32_t(std::stoul(tok.substr(0, tok.find('/')))) - 1;
                }
                mesh.faces.push_back(f);
            }
        }
    } else {
        std::string line;
        size_t n_verts = 0, n_faces = 0;
        bool has_color = false;
        while (std::getline(in, line) && line != "end_header") {
            std::istringstream ss(line);
            std::string a, b;
            ss >> a >> b;
            if (a == "element") {
                size_t count;
                ss >> count;
                if (b == "vertex") n_verts = count;
                if (b == "face") n_faces = count;
            } else if (a == "property" && b == "uchar") {
                std::string name;
                ss >> name;
                if (name == "red") has_color = true;
            }
        }
        for (size_t i = 0; i < n_verts; ++i) {
            std::getline(in, line);
            std::istringstream ss(line);
            Vec3 v;
            ss >> v.x >> v.y >> v.z;
            mesh.vertices.push_back(v);
            if (has_color) {
                int r, g, b;
                ss >> r >> g >> b;
                mesh.colors.push_back({r / 255.0, g / 255.0, b / 255.0});
            }
        }
        for (size_t i = 0; i < n_faces; ++i) {
            std::getline(in, line);
            std::istringstream ss(line);
            int cnt;
            std::array<uint32_t, 3> f{};
            ss >> cnt >> f[0] >> f[1] >> f[2];
            if (cnt != 3) throw std::runtime_error("import_mesh: non-triangle face in " + path);
            mesh.faces.push_back(f);
        }
    }
    if (!in && !in.eof()) throw std::runtime_error("import_mesh: read failure for " + path);
    return mesh;
}

}  // namespace voxmesh
