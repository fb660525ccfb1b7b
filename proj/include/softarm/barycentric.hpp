#pragma once

// Barycentric mappings attach auxiliary points (tip markers, probes) to a
// tet mesh. Applying the map to a deformed state interpolates the points
// with the motion of their containing tets.

#include "softarm/tet_mesh.hpp"

#include <limits>
#include <vector>

namespace softarm {

struct BarycentricMap {
    struct Entry {
        std::array<int, 4> nodes;  // vertices of the containing tet
        Vec4 weights;              // sums to 1
        int tet = -1;
    };
    std::vector<Entry> entries;
};

/// Locates each point in the mesh (rest configuration) and stores the
/// containing tet plus barycentric weights. Points on shared faces go to the
/// lowest-index containing tet. Points farther than `tol` outside every tet
/// are an error.
inline BarycentricMap build_barycentric_map(const TetMesh& mesh, const std::vector<Vec3>& points,
                                            double tol = 1e-6) {
    BarycentricMap map;
    map.entries.reserve(points.size());

    struct TetGeom {
        Mat3 dm_inv;
        Vec3 v0;
        Vec3 lo, hi;
        double edge;
    };
    std::vector<TetGeom> geom(mesh.num_tets());
    for (int t = 0; t < mesh.num_tets(); ++t) {
        const auto& k = mesh.tets[t];
        const Vec3 v0 = mesh.vertices[k[0]];
        Mat3 dm;
        dm.col(0) = mesh.vertices[k[1]] - v0;
        dm.col(1) = mesh.vertices[k[2]] - v0;
        dm.col(2) = mesh.vertices[k[3]] - v0;
        TetGeom g;
        g.dm_inv = dm.inverse();
        g.v0 = v0;
        g.lo = v0.cwiseMin(mesh.vertices[k[1]]).cwiseMin(mesh.vertices[k[2]]).cwiseMin(mesh.vertices[k[3]]);
        g.hi = v0.cwiseMax(mesh.vertices[k[1]]).cwiseMax(mesh.vertices[k[2]]).cwiseMax(mesh.vertices[k[3]]);
        g.edge = dm.colwise().norm().maxCoeff();
        geom[t] = g;
    }

    for (const Vec3& pt : points) {
        int best_tet = -1;
        double best_minw = -std::numeric_limits<double>::infinity();
        Vec4 best_w = Vec4::Zero();
        for (int t = 0; t < mesh.num_tets(); ++t) {
            const TetGeom& g = geom[t];
            const double slack = tol + 1e-9 * g.edge;
            if ((pt.array() < g.lo.array() - slack).any() ||
                (pt.array() > g.hi.array() + slack).any())
                continue;
            const Vec3 b = g.dm_inv * (pt - g.v0);
            Vec4 w(1.0 - b.sum(), b.x(), b.y(), b.z());
            const double minw = w.minCoeff();
            if (minw >= -1e-9) {  // inside: first (lowest-index) tet wins
                best_tet = t;
                best_w = w;
                best_minw = minw;
                break;
            }
            if (minw > best_minw) {
                best_tet = t;
                best_w = w;
                best_minw = minw;
            }
        }
        if (best_tet < 0)
            throw Error("barycentric map: point outside mesh");
        if (best_minw < -1e-9) {
            // Slightly outside every tet; accept within the distance tolerance.
            const double dist_estimate = -best_minw * geom[best_tet].edge;
            if (dist_estimate > tol)
                throw Error("barycentric map: point outside mesh by ~" +
                            std::to_string(dist_estimate) + " m");
        }
        BarycentricMap::Entry e;
        e.tet = best_tet;
        e.nodes = mesh.tets[best_tet];
        e.weights = best_w;
        map.entries.push_back(e);
    }
    return map;
}

/// Interpolates mapped points from a state vector q (length 3n).
inline std::vector<Vec3> apply_map(const BarycentricMap& map, const VecX& q) {
    std::vector<Vec3> out;
    out.reserve(map.entries.size());
    for (const auto& e : map.entries) {
        Vec3 p = Vec3::Zero();
        for (int j = 0; j < 4; ++j) p += e.weights[j] * node_pos(q, e.nodes[j]);
        out.push_back(p);
    }
    return out;
}

}  // namespace softarm
