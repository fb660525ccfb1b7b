#pragma once

// Parametric generator for the two-body soft arm:
//
//   - SPA: rectangular beam along +x with four rectangular-prism pressure
//     cavities arranged in a 2x2 pattern about the beam axis and an axial
//     square channel through the core.
//   - spine: a thin beam that exactly fills the channel.
//
// Both bodies are meshed on one rectilinear grid (cells split into 6 tets
// each, Kuhn subdivision), so spine surface nodes coincide with SPA channel
// wall nodes; those shared locations become the coupling node groups.
//
// Cavity numbering matches the demand mapping used by the pressure
// controller: inflating a cavity bends the arm away from it, towards the
// diagonally opposite quadrant of the (y,z) plane.
//
//   cavity_p1 at (+y,+z)   drives the tip towards (-y,-z)
//   cavity_p2 at (-y,+z)   drives the tip towards (+y,-z)
//   cavity_p3 at (+y,-z)   drives the tip towards (-y,+z)
//   cavity_p4 at (-y,-z)   drives the tip towards (+y,+z)
//
// Left/right pairing for differential actuation: {p2,p4} on -y (left),
// {p1,p3} on +y (right).

#include "softarm/tet_mesh.hpp"

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace softarm {

struct ArmParams {
    double length = 0.12;           // beam length along x [m]
    double width = 0.03;            // cross-section extent in y [m]
    double height = 0.03;           // cross-section extent in z [m]
    double cavity_width = 0.007;    // cavity extent in y [m]
    double cavity_height = 0.007;   // cavity extent in z [m]
    double cavity_offset_y = 0.0085;  // |cavity center y| [m]
    double cavity_offset_z = 0.0085;  // |cavity center z| [m]
    double cavity_margin = 0.012;   // solid length at both beam ends [m]
    double spine_width = 0.006;     // spine/channel extent in y [m]
    double spine_height = 0.006;    // spine/channel extent in z [m]
    double element_size = 0.008;    // target cell size [m]

    static constexpr int cavity_count = 4;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) throw Error(std::string("arm params: ") + name + " must be > 0");
        };
        positive(length, "length");
        positive(width, "width");
        positive(height, "height");
        positive(cavity_width, "cavity_width");
        positive(cavity_height, "cavity_height");
        positive(cavity_offset_y, "cavity_offset_y");
        positive(cavity_offset_z, "cavity_offset_z");
        positive(cavity_margin, "cavity_margin");
        positive(spine_width, "spine_width");
        positive(spine_height, "spine_height");
        positive(element_size, "element_size");
        if (element_size >= length)
            throw Error("arm params: element_size >= length gives a degenerate mesh");
        if (2.0 * cavity_margin >= length)
            throw Error("arm params: cavity margins leave no room for cavities");
        if (spine_width >= width || spine_height >= height)
            throw Error("arm params: spine does not fit inside the cross-section");
        if (cavity_offset_y + cavity_width / 2.0 >= width / 2.0 ||
            cavity_offset_z + cavity_height / 2.0 >= height / 2.0)
            throw Error("arm params: cavity overlaps the outer wall");
        if (cavity_offset_y - cavity_width / 2.0 <= spine_width / 2.0 ||
            cavity_offset_z - cavity_height / 2.0 <= spine_height / 2.0)
            throw Error("arm params: cavity overlaps the spine channel");
    }
};

struct GeneratedArm {
    TetMesh spa;
    TetMesh spine;
    std::array<std::string, 4> cavity_groups{"cavity_p1", "cavity_p2", "cavity_p3", "cavity_p4"};
    std::string spa_fixed = "fixed";
    std::string spine_fixed = "fixed";
    // i-th node of spa coupling pairs with i-th node of spine coupling
    // (coincident rest positions).
    std::string spa_coupling = "coupling";
    std::string spine_coupling = "coupling";
    Vec3 tip = Vec3::Zero();  // distal end centroid
};

namespace detail {

// Axis breakpoints: the given segment boundaries, each span subdivided to
// the target cell size.
inline std::vector<double> refine_breaks(std::vector<double> marks, double h) {
    std::vector<double> out;
    for (size_t i = 0; i + 1 < marks.size(); ++i) {
        const double a = marks[i], b = marks[i + 1];
        const int cells = std::max(1, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
        for (int c = 0; c < cells; ++c) out.push_back(a + (b - a) * c / cells);
    }
    out.push_back(marks.back());
    return out;
}

struct Box2 {
    double y0, y1, z0, z1;
    bool contains(double y, double z) const { return y > y0 && y < y1 && z > z0 && z < z1; }
};

struct Box3 {
    double x0, x1, y0, y1, z0, z1;
    bool contains(const Vec3& p) const {
        return p.x() > x0 && p.x() < x1 && p.y() > y0 && p.y() < y1 && p.z() > z0 && p.z() < z1;
    }
};

// Per-cell region labels.
enum class CellRegion : int { Solid = -2, Channel = -1, Cavity0 = 0, Cavity1, Cavity2, Cavity3 };

class GridMesher {
public:
    GridMesher(std::vector<double> xs, std::vector<double> ys, std::vector<double> zs)
        : xs_(std::move(xs)), ys_(std::move(ys)), zs_(std::move(zs)) {}

    int nx() const { return static_cast<int>(xs_.size()) - 1; }
    int ny() const { return static_cast<int>(ys_.size()) - 1; }
    int nz() const { return static_cast<int>(zs_.size()) - 1; }

    Vec3 node(int i, int j, int k) const { return {xs_[i], ys_[j], zs_[k]}; }
    long node_id(int i, int j, int k) const {
        return (static_cast<long>(i) * (ny() + 1) + j) * (nz() + 1) + k;
    }
    Vec3 cell_center(int i, int j, int k) const {
        return {(xs_[i] + xs_[i + 1]) / 2, (ys_[j] + ys_[j + 1]) / 2, (zs_[k] + zs_[k + 1]) / 2};
    }
    double min_cell_extent() const {
        double h = xs_[1] - xs_[0];
        for (size_t i = 0; i + 1 < xs_.size(); ++i) h = std::min(h, xs_[i + 1] - xs_[i]);
        for (size_t j = 0; j + 1 < ys_.size(); ++j) h = std::min(h, ys_[j + 1] - ys_[j]);
        for (size_t k = 0; k + 1 < zs_.size(); ++k) h = std::min(h, zs_[k + 1] - zs_[k]);
        return h;
    }

    // Meshes all cells accepted by `take`, remapping grid nodes to a compact
    // index set in grid order. Returns local node ids per grid id.
    template <typename Pred>
    std::map<long, int> build(const Pred& take, TetMesh& mesh) const {
        std::map<long, int> local;
        auto local_id = [&](int i, int j, int k) {
            const long g = node_id(i, j, k);
            auto it = local.find(g);
            if (it != local.end()) return it->second;
            const int id = static_cast<int>(mesh.vertices.size());
            local.emplace(g, id);
            mesh.vertices.push_back(node(i, j, k));
            return id;
        };
        // Kuhn subdivision (six tets around a cell diagonal), with the
        // pattern mirrored per cell parity on each axis. Reflections keep
        // faces conforming across cells and cancel the shear bias a single
        // fixed diagonal direction would imprint on the whole mesh.
        static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                            {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        for (int i = 0; i < nx(); ++i)
            for (int j = 0; j < ny(); ++j)
                for (int k = 0; k < nz(); ++k) {
                    if (!take(i, j, k)) continue;
                    const int flip[3] = {i % 2, j % 2, k % 2};
                    auto corner = [&](const int d[3]) {
                        const int u[3] = {flip[0] ? 1 - d[0] : d[0], flip[1] ? 1 - d[1] : d[1],
                                          flip[2] ? 1 - d[2] : d[2]};
                        return local_id(i + u[0], j + u[1], k + u[2]);
                    };
                    for (const auto& p : perms) {
                        int d0[3] = {0, 0, 0};
                        int d1[3] = {0, 0, 0};
                        d1[p[0]] = 1;
                        int d2[3] = {d1[0], d1[1], d1[2]};
                        d2[p[1]] = 1;
                        int d3[3] = {1, 1, 1};
                        std::array<int, 4> t = {corner(d0), corner(d1), corner(d2), corner(d3)};
                        const double vol = tet_signed_volume(mesh.vertices[t[0]], mesh.vertices[t[1]],
                                                             mesh.vertices[t[2]], mesh.vertices[t[3]]);
                        if (vol < 0.0) std::swap(t[1], t[2]);
                        mesh.tets.push_back(t);
                    }
                }
        return local;
    }

    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ys() const { return ys_; }
    const std::vector<double>& zs() const { return zs_; }

private:
    std::vector<double> xs_, ys_, zs_;
};

// Boundary triangles of a tet mesh, wound so normals point out of the solid.
inline std::vector<std::array<int, 3>> boundary_triangles(const TetMesh& mesh) {
    std::map<std::array<int, 3>, std::pair<int, std::array<int, 3>>> faces;  // sorted -> (count, wound)
    for (const auto& t : mesh.tets) {
        for (int f = 0; f < 4; ++f) {
            std::array<int, 3> tri = {t[(f + 1) % 4], t[(f + 2) % 4], t[(f + 3) % 4]};
            const Vec3& opp = mesh.vertices[t[f]];
            const Vec3 n = triangle_area_vector(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                                                mesh.vertices[tri[2]]);
            if (n.dot(mesh.vertices[tri[0]] - opp) < 0.0) std::swap(tri[1], tri[2]);
            std::array<int, 3> key = tri;
            std::sort(key.begin(), key.end());
            auto it = faces.find(key);
            if (it == faces.end())
                faces.emplace(key, std::make_pair(1, tri));
            else
                it->second.first += 1;
        }
    }
    std::vector<std::array<int, 3>> out;
    for (const auto& [key, v] : faces)
        if (v.first == 1) out.push_back(v.second);
    return out;
}

}  // namespace detail

inline GeneratedArm generate_arm(const ArmParams& p) {
    p.validate();

    using detail::Box2;
    using detail::Box3;

    const double hw = p.width / 2.0, hh = p.height / 2.0;
    const double sy = p.spine_width / 2.0, sz = p.spine_height / 2.0;

    // The midplane breakpoint keeps the segment list (and with it the
    // reflected tet pattern) exactly mirror-symmetric about each axis.
    const std::vector<double> ys = detail::refine_breaks(
        {-hw, -p.cavity_offset_y - p.cavity_width / 2, -p.cavity_offset_y + p.cavity_width / 2,
         -sy, 0.0, sy, p.cavity_offset_y - p.cavity_width / 2,
         p.cavity_offset_y + p.cavity_width / 2, hw},
        p.element_size);
    const std::vector<double> zs = detail::refine_breaks(
        {-hh, -p.cavity_offset_z - p.cavity_height / 2, -p.cavity_offset_z + p.cavity_height / 2,
         -sz, 0.0, sz, p.cavity_offset_z - p.cavity_height / 2,
         p.cavity_offset_z + p.cavity_height / 2, hh},
        p.element_size);
    const std::vector<double> xs = detail::refine_breaks(
        {0.0, p.cavity_margin, p.length - p.cavity_margin, p.length}, p.element_size);

    detail::GridMesher grid(xs, ys, zs);

    const Box2 channel{-sy, sy, -sz, sz};
    // Quadrant placement, see header comment.
    const std::array<std::array<double, 2>, 4> signs = {{{+1, +1}, {-1, +1}, {+1, -1}, {-1, -1}}};
    std::array<Box3, 4> cavities;
    for (int c = 0; c < 4; ++c) {
        const double cy = signs[c][0] * p.cavity_offset_y;
        const double cz = signs[c][1] * p.cavity_offset_z;
        cavities[c] = Box3{p.cavity_margin,          p.length - p.cavity_margin,
                           cy - p.cavity_width / 2,  cy + p.cavity_width / 2,
                           cz - p.cavity_height / 2, cz + p.cavity_height / 2};
    }

    auto region = [&](int i, int j, int k) {
        const Vec3 c = grid.cell_center(i, j, k);
        if (channel.contains(c.y(), c.z())) return detail::CellRegion::Channel;
        for (int q = 0; q < 4; ++q)
            if (cavities[q].contains(c))
                return static_cast<detail::CellRegion>(q);
        return detail::CellRegion::Solid;
    };

    GeneratedArm arm;
    const auto spa_nodes = grid.build(
        [&](int i, int j, int k) { return region(i, j, k) == detail::CellRegion::Solid; },
        arm.spa);
    const auto spine_nodes = grid.build(
        [&](int i, int j, int k) { return region(i, j, k) == detail::CellRegion::Channel; },
        arm.spine);
    if (arm.spa.tets.empty() || arm.spine.tets.empty())
        throw Error("arm params: geometry produced an empty mesh");

    // Cavity surface groups from SPA boundary faces; probe just off the face
    // to find which void it borders. Winding flipped so normals point from
    // the cavity into the material (the direction pressure pushes the wall).
    const double probe_eps = 0.25 * grid.min_cell_extent();
    std::array<MeshGroup, 4> cavity_groups;
    MeshGroup channel_group;
    for (auto& g : cavity_groups) {
        g.kind = MeshGroup::Kind::Triangles;
        g.into_solid = true;
    }
    channel_group.kind = MeshGroup::Kind::Triangles;
    channel_group.into_solid = true;

    const Box3 channel3{-1e300, 1e300, -sy, sy, -sz, sz};
    for (const auto& tri : detail::boundary_triangles(arm.spa)) {
        const Vec3 a = arm.spa.vertices[tri[0]], b = arm.spa.vertices[tri[1]],
                   c = arm.spa.vertices[tri[2]];
        const Vec3 n = triangle_area_vector(a, b, c).normalized();
        const Vec3 probe = (a + b + c) / 3.0 + probe_eps * n;  // outside the solid
        const std::array<int, 3> flipped = {tri[0], tri[2], tri[1]};
        bool taken = false;
        for (int q = 0; q < 4 && !taken; ++q) {
            if (cavities[q].contains(probe)) {
                cavity_groups[q].triangles.push_back(flipped);
                taken = true;
            }
        }
        if (!taken && channel3.contains(probe)) channel_group.triangles.push_back(flipped);
    }
    for (int q = 0; q < 4; ++q) {
        const auto rep = check_closed_surface(cavity_groups[q].triangles);
        if (!rep.closed || !rep.consistent)
            throw Error("generated cavity " + arm.cavity_groups[q] + " is not closed: " +
                        rep.detail);
        arm.spa.groups.emplace(arm.cavity_groups[q], std::move(cavity_groups[q]));
    }
    arm.spa.groups.emplace("channel", std::move(channel_group));

    // Fixed faces: all nodes on the x = 0 plane of each body.
    auto fixed_nodes = [](const TetMesh& mesh) {
        MeshGroup g;
        g.kind = MeshGroup::Kind::Nodes;
        for (int i = 0; i < mesh.num_vertices(); ++i)
            if (std::abs(mesh.vertices[i].x()) < 1e-12) g.nodes.push_back(i);
        return g;
    };
    arm.spa.groups.emplace(arm.spa_fixed, fixed_nodes(arm.spa));
    arm.spine.groups.emplace(arm.spine_fixed, fixed_nodes(arm.spine));

    // Coupling: grid nodes used by both bodies (channel wall corners), in
    // matching order.
    MeshGroup couple_spa, couple_spine;
    couple_spa.kind = couple_spine.kind = MeshGroup::Kind::Nodes;
    for (const auto& [gid, sid] : spa_nodes) {
        auto it = spine_nodes.find(gid);
        if (it != spine_nodes.end()) {
            couple_spa.nodes.push_back(sid);
            couple_spine.nodes.push_back(it->second);
        }
    }
    if (couple_spa.nodes.empty()) throw Error("generated arm has no coupling nodes");
    arm.spa.groups.emplace(arm.spa_coupling, std::move(couple_spa));
    arm.spine.groups.emplace(arm.spine_coupling, std::move(couple_spine));

    arm.tip = Vec3(p.length, 0.0, 0.0);

    arm.spa.validate();
    arm.spine.validate();
    return arm;
}

/// Analytic solid volume of the arm (beam minus cavities minus channel).
inline double arm_analytic_spa_volume(const ArmParams& p) {
    const double beam = p.length * p.width * p.height;
    const double cav =
        4.0 * p.cavity_width * p.cavity_height * (p.length - 2.0 * p.cavity_margin);
    const double chan = p.spine_width * p.spine_height * p.length;
    return beam - cav - chan;
}

inline double arm_analytic_spine_volume(const ArmParams& p) {
    return p.spine_width * p.spine_height * p.length;
}

}  // namespace softarm
