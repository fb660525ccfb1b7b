#pragma once

// Tetrahedral volume mesh with named triangle/node groups. Groups tag
// surfaces (pressure cavities, channel walls) and node sets (fixed faces,
// coupling points). Meshes are immutable after construction/validation and
// safe to share across threads.

#include "softarm/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace softarm {

struct MeshGroup {
    enum class Kind { Triangles, Nodes };

    Kind kind = Kind::Nodes;
    std::vector<std::array<int, 3>> triangles;  // Kind::Triangles
    std::vector<int> nodes;                     // Kind::Nodes
    // Winding convention for triangle groups that enclose a void: normals
    // point from the void into the surrounding material. Not persisted in
    // mesh files; set by the generator.
    bool into_solid = false;
};

struct TetMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 4>> tets;
    std::map<std::string, MeshGroup> groups;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_tets() const { return static_cast<int>(tets.size()); }

    bool has_group(const std::string& name) const { return groups.count(name) > 0; }

    const MeshGroup& group(const std::string& name) const {
        auto it = groups.find(name);
        if (it == groups.end()) throw Error("mesh group not found: '" + name + "'");
        return it->second;
    }

    const std::vector<std::array<int, 3>>& tri_group(const std::string& name) const {
        const MeshGroup& g = group(name);
        if (g.kind != MeshGroup::Kind::Triangles)
            throw Error("mesh group '" + name + "' is not a triangle group");
        return g.triangles;
    }

    const std::vector<int>& node_group(const std::string& name) const {
        const MeshGroup& g = group(name);
        if (g.kind != MeshGroup::Kind::Nodes)
            throw Error("mesh group '" + name + "' is not a node group");
        return g.nodes;
    }

    double signed_tet_volume(int t) const {
        const auto& k = tets[t];
        return tet_signed_volume(vertices[k[0]], vertices[k[1]], vertices[k[2]], vertices[k[3]]);
    }

    /// Rest positions flattened to a 3n state vector.
    VecX rest_positions() const {
        VecX q(3 * num_vertices());
        for (int i = 0; i < num_vertices(); ++i) q.segment<3>(3 * i) = vertices[i];
        return q;
    }

    void validate() const;
};

/// Sum of signed tet volumes.
inline double mesh_volume(const TetMesh& mesh) {
    double v = 0.0;
    for (int t = 0; t < mesh.num_tets(); ++t) v += mesh.signed_tet_volume(t);
    return v;
}

inline void TetMesh::validate() const {
    const int n = num_vertices();
    for (int i = 0; i < n; ++i) {
        if (!vertices[i].allFinite())
            throw Error("vertex " + std::to_string(i) + " has non-finite coordinates");
    }
    for (int t = 0; t < num_tets(); ++t) {
        const auto& k = tets[t];
        for (int j = 0; j < 4; ++j) {
            if (k[j] < 0 || k[j] >= n)
                throw Error("tet " + std::to_string(t) + " references node " +
                            std::to_string(k[j]) + " out of range [0, " + std::to_string(n) + ")");
        }
        const double vol = signed_tet_volume(t);
        if (!(vol > 0.0))
            throw Error("tet " + std::to_string(t) + " has non-positive volume " +
                        std::to_string(vol));
    }
    for (const auto& [name, g] : groups) {
        if (name.empty()) throw Error("empty group name");
        if (g.kind == MeshGroup::Kind::Triangles) {
            for (const auto& tri : g.triangles)
                for (int j = 0; j < 3; ++j)
                    if (tri[j] < 0 || tri[j] >= n)
                        throw Error("group '" + name + "' references node " +
                                    std::to_string(tri[j]) + " out of range");
        } else {
            for (int i : g.nodes)
                if (i < 0 || i >= n)
                    throw Error("group '" + name + "' references node " + std::to_string(i) +
                                " out of range");
        }
    }
}

struct ClosureReport {
    bool closed = false;       // every edge shared by exactly two triangles
    bool consistent = false;   // shared edges traversed in opposite directions
    std::string detail;
};

/// Checks that a triangle group forms a closed, consistently wound surface.
inline ClosureReport check_closed_surface(const std::vector<std::array<int, 3>>& tris) {
    // With consistent winding on a closed 2-manifold, every directed edge
    // appears exactly once and so does its reverse.
    std::map<std::pair<int, int>, int> directed;
    for (const auto& t : tris) {
        for (int j = 0; j < 3; ++j) {
            const int a = t[j], b = t[(j + 1) % 3];
            if (a == b) return {false, false, "degenerate edge in triangle"};
            directed[{a, b}] += 1;
        }
    }
    for (const auto& [e, c] : directed) {
        if (c != 1)
            return {false, false,
                    "directed edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                        ") appears " + std::to_string(c) + " times"};
        if (directed.count({e.second, e.first}) == 0)
            return {false, false,
                    "edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                        ") has no opposing twin"};
    }
    return {true, true, ""};
}

/// Sum of area-weighted normals over a triangle group; zero for closed surfaces.
inline Vec3 surface_area_vector(const TetMesh& mesh, const std::vector<std::array<int, 3>>& tris) {
    Vec3 s = Vec3::Zero();
    for (const auto& t : tris)
        s += triangle_area_vector(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    return s;
}

inline double surface_total_area(const TetMesh& mesh,
                                 const std::vector<std::array<int, 3>>& tris) {
    double a = 0.0;
    for (const auto& t : tris)
        a += triangle_area_vector(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]])
                 .norm();
    return a;
}

}  // namespace softarm
