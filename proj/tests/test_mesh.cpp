#include "softarm/arm_generator.hpp"
#include "softarm/barycentric.hpp"
#include "softarm/tmesh_io.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace softarm;

namespace {

TetMesh unit_tet_mesh() {
    TetMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    m.tets = {{0, 1, 2, 3}};
    return m;
}

const char* kUnitTetFile =
    "tmesh 1\n"
    "nodes 4\n"
    "0 0 0\n"
    "1 0 0\n"
    "0 1 0\n"
    "0 0 1\n"
    "tets 1\n"
    "0 1 2 3\n"
    "groups 0\n";

}  // namespace

// ---------------------------------------------------------------------------
// triangle_area_normal

TEST(TriangleAreaNormal, UnitRightTriangle) {
    const auto an = triangle_area_normal(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0));
    EXPECT_DOUBLE_EQ(an.area, 0.5);
    EXPECT_NEAR((an.normal - Vec3(0, 0, 1)).norm(), 0.0, 1e-15);
}

TEST(TriangleAreaNormal, ReversedWindingFlipsNormal) {
    const auto an = triangle_area_normal(Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(1, 0, 0));
    EXPECT_DOUBLE_EQ(an.area, 0.5);
    EXPECT_NEAR((an.normal - Vec3(0, 0, -1)).norm(), 0.0, 1e-15);
}

TEST(TriangleAreaNormal, ScalingIsHomogeneous) {
    const auto base = triangle_area_normal(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0));
    const auto scaled = triangle_area_normal(Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 2, 0));
    EXPECT_DOUBLE_EQ(scaled.area, 4.0 * base.area);
    EXPECT_NEAR((scaled.normal - base.normal).norm(), 0.0, 1e-15);
}

TEST(TriangleAreaNormal, DegenerateThrows) {
    EXPECT_THROW(triangle_area_normal(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)), Error);
}

// ---------------------------------------------------------------------------
// mesh_volume / validation

TEST(MeshVolume, UnitTet) { EXPECT_NEAR(mesh_volume(unit_tet_mesh()), 1.0 / 6.0, 1e-15); }

TEST(MeshVolume, TwoDisjointUnitTets) {
    TetMesh m = unit_tet_mesh();
    const int off = m.num_vertices();
    for (const auto& v : unit_tet_mesh().vertices) m.vertices.push_back(v + Vec3(5, 0, 0));
    m.tets.push_back({off, off + 1, off + 2, off + 3});
    EXPECT_NEAR(mesh_volume(m), 1.0 / 3.0, 1e-15);
}

TEST(TetMeshValidate, RejectsNegativeVolume) {
    TetMesh m = unit_tet_mesh();
    std::swap(m.tets[0][0], m.tets[0][1]);
    try {
        m.validate();
        FAIL() << "expected validation error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("tet 0"), std::string::npos);
    }
}

TEST(TetMeshValidate, RejectsOutOfRangeIndex) {
    TetMesh m = unit_tet_mesh();
    m.tets[0][3] = 99;
    EXPECT_THROW(m.validate(), Error);
}

// ---------------------------------------------------------------------------
// tmesh I/O

TEST(TmeshIO, LoadsSingleTetFile) {
    std::istringstream in(kUnitTetFile);
    const TetMesh m = read_mesh(in, "unit.tmesh");
    ASSERT_EQ(m.num_vertices(), 4);
    ASSERT_EQ(m.num_tets(), 1);
    EXPECT_NEAR(mesh_volume(m), 1.0 / 6.0, 1e-15);
}

TEST(TmeshIO, IndexOutOfRangeReportsError) {
    std::string text = kUnitTetFile;
    const auto pos = text.find("0 1 2 3");
    text.replace(pos, 7, "0 1 2 99");
    std::istringstream in(text);
    try {
        read_mesh(in, "bad.tmesh");
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("out of range"), std::string::npos);
    }
}

TEST(TmeshIO, ParseErrorCarriesLineNumber) {
    std::istringstream in("tmesh 1\nnodes 1\n0 0 oops\ntets 0\ngroups 0\n");
    try {
        read_mesh(in, "bad.tmesh");
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("bad.tmesh:3"), std::string::npos);
    }
}

TEST(TmeshIO, CommentsAndWhitespaceIgnored) {
    std::istringstream in(
        "# a comment\n tmesh 1\nnodes 4 # trailing\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
        "tets 1\n0 1 2 3\ngroups 1\ngroup fixed nodes 2\n0\n1\n");
    const TetMesh m = read_mesh(in, "c.tmesh");
    EXPECT_EQ(m.node_group("fixed").size(), 2u);
}

TEST(TmeshIO, GeneratedArmRoundTripsIdentically) {
    ArmParams p;
    p.length = 0.06;
    p.element_size = 0.02;
    const GeneratedArm arm = generate_arm(p);

    const std::string first = write_mesh_string(arm.spa);
    std::istringstream in(first);
    const TetMesh reread = read_mesh(in, "spa.tmesh");
    ASSERT_EQ(reread.num_vertices(), arm.spa.num_vertices());
    ASSERT_EQ(reread.num_tets(), arm.spa.num_tets());
    for (int i = 0; i < reread.num_vertices(); ++i)
        EXPECT_EQ(reread.vertices[i], arm.spa.vertices[i]);
    for (int t = 0; t < reread.num_tets(); ++t) EXPECT_EQ(reread.tets[t], arm.spa.tets[t]);

    // canonical files round-trip byte-identically
    EXPECT_EQ(write_mesh_string(reread), first);
}

// ---------------------------------------------------------------------------
// generate_arm

TEST(GenerateArm, DefaultDeskScaleParamsAreValid) {
    const ArmParams p;  // defaults: L=0.12, 0.03x0.03, element 0.008
    const GeneratedArm arm = generate_arm(p);
    arm.spa.validate();
    arm.spine.validate();
    for (const auto& name : arm.cavity_groups) {
        const auto rep = check_closed_surface(arm.spa.tri_group(name));
        EXPECT_TRUE(rep.closed) << name << ": " << rep.detail;
        EXPECT_TRUE(rep.consistent) << name << ": " << rep.detail;
    }
    EXPECT_FALSE(arm.spa.node_group("fixed").empty());
    EXPECT_FALSE(arm.spine.node_group("fixed").empty());
    EXPECT_EQ(arm.spa.node_group("coupling").size(), arm.spine.node_group("coupling").size());
    EXPECT_GT(arm.spa.node_group("coupling").size(), 0u);
}

TEST(GenerateArm, ElementSizeLargerThanLengthFails) {
    ArmParams p;
    p.element_size = p.length;
    EXPECT_THROW(generate_arm(p), Error);
}

TEST(GenerateArm, CavityOverlappingWallFails) {
    ArmParams p;
    p.cavity_offset_y = 0.013;  // 0.013 + 0.0035 > 0.015
    EXPECT_THROW(generate_arm(p), Error);
}

TEST(GenerateArm, CavityOverlappingSpineFails) {
    ArmParams p;
    p.cavity_offset_y = 0.006;  // 0.006 - 0.0035 < 0.003
    EXPECT_THROW(generate_arm(p), Error);
}

TEST(GenerateArm, MeshIsMirrorSymmetricInY) {
    const GeneratedArm arm = generate_arm(ArmParams{});
    std::vector<Vec3> mirrored;
    for (const auto& v : arm.spa.vertices) mirrored.emplace_back(v.x(), -v.y(), v.z());
    // every mirrored vertex must coincide with some original vertex
    for (const auto& mv : mirrored) {
        double best = 1e300;
        for (const auto& v : arm.spa.vertices) best = std::min(best, (v - mv).norm());
        EXPECT_LT(best, 1e-9);
    }
}

TEST(GenerateArm, VolumeMatchesAnalytic) {
    const ArmParams p;
    const GeneratedArm arm = generate_arm(p);
    // boxes align with the grid: the carved volume is exact
    EXPECT_NEAR(mesh_volume(arm.spa), arm_analytic_spa_volume(p),
                0.02 * arm_analytic_spa_volume(p));
    EXPECT_NEAR(mesh_volume(arm.spine), arm_analytic_spine_volume(p),
                0.02 * arm_analytic_spine_volume(p));
}

TEST(GenerateArm, CavityClosureForceCancels) {
    const GeneratedArm arm = generate_arm(ArmParams{});
    for (const auto& name : arm.cavity_groups) {
        const auto& tris = arm.spa.tri_group(name);
        const Vec3 s = surface_area_vector(arm.spa, tris);
        const double area = surface_total_area(arm.spa, tris);
        EXPECT_LT(s.norm(), 1e-12 * area) << name;
    }
}

TEST(GenerateArm, AllTetVolumesPositive) {
    const GeneratedArm arm = generate_arm(ArmParams{});
    for (int t = 0; t < arm.spa.num_tets(); ++t) EXPECT_GT(arm.spa.signed_tet_volume(t), 0.0);
    for (int t = 0; t < arm.spine.num_tets(); ++t)
        EXPECT_GT(arm.spine.signed_tet_volume(t), 0.0);
}

TEST(GenerateArm, CouplingNodesCoincide) {
    const GeneratedArm arm = generate_arm(ArmParams{});
    const auto& ca = arm.spa.node_group("coupling");
    const auto& cb = arm.spine.node_group("coupling");
    ASSERT_EQ(ca.size(), cb.size());
    for (size_t i = 0; i < ca.size(); ++i)
        EXPECT_LT((arm.spa.vertices[ca[i]] - arm.spine.vertices[cb[i]]).norm(), 1e-15);
}

// ---------------------------------------------------------------------------
// barycentric maps

TEST(Barycentric, VertexPointGetsUnitWeight) {
    const TetMesh m = unit_tet_mesh();
    const auto map = build_barycentric_map(m, {Vec3(0, 1, 0)});
    ASSERT_EQ(map.entries.size(), 1u);
    const auto& e = map.entries[0];
    EXPECT_NEAR(e.weights[2], 1.0, 1e-12);
    EXPECT_NEAR(e.weights[0], 0.0, 1e-12);
    EXPECT_NEAR(e.weights[1], 0.0, 1e-12);
    EXPECT_NEAR(e.weights[3], 0.0, 1e-12);
}

TEST(Barycentric, CentroidGetsQuarterWeights) {
    const TetMesh m = unit_tet_mesh();
    const auto map = build_barycentric_map(m, {Vec3(0.25, 0.25, 0.25)});
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(map.entries[0].weights[j], 0.25, 1e-12);
}

TEST(Barycentric, WeightsSumToOne) {
    const GeneratedArm arm = generate_arm(ArmParams{});
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> pick(0, arm.spa.num_tets() - 1);
    std::vector<Vec3> pts;
    for (int s = 0; s < 20; ++s) {
        const auto& t = arm.spa.tets[pick(rng)];
        pts.push_back(0.25 * (arm.spa.vertices[t[0]] + arm.spa.vertices[t[1]] +
                              arm.spa.vertices[t[2]] + arm.spa.vertices[t[3]]));
    }
    const auto map = build_barycentric_map(arm.spa, pts);
    for (const auto& e : map.entries) EXPECT_NEAR(e.weights.sum(), 1.0, 1e-12);
}

TEST(Barycentric, RandomInteriorPointReconstructs) {
    const GeneratedArm arm = generate_arm(ArmParams{});
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> pick(0, arm.spa.num_tets() - 1);
    std::uniform_real_distribution<double> u(0.1, 0.8);
    std::vector<Vec3> pts;
    for (int s = 0; s < 30; ++s) {
        const auto& t = arm.spa.tets[pick(rng)];
        Vec4 w(u(rng), u(rng), u(rng), u(rng));
        w /= w.sum();
        pts.push_back(w[0] * arm.spa.vertices[t[0]] + w[1] * arm.spa.vertices[t[1]] +
                      w[2] * arm.spa.vertices[t[2]] + w[3] * arm.spa.vertices[t[3]]);
    }
    const auto map = build_barycentric_map(arm.spa, pts);
    const auto mapped = apply_map(map, arm.spa.rest_positions());
    for (size_t i = 0; i < pts.size(); ++i) EXPECT_LT((mapped[i] - pts[i]).norm(), 1e-9);
}

TEST(Barycentric, TranslationMovesAllPoints) {
    const TetMesh m = unit_tet_mesh();
    const auto map = build_barycentric_map(m, {Vec3(0.2, 0.3, 0.1), Vec3(0.1, 0.1, 0.6)});
    const Vec3 t(0.5, -2.0, 1.0);
    VecX q = m.rest_positions();
    for (int i = 0; i < m.num_vertices(); ++i) q.segment<3>(3 * i) += t;
    const auto moved = apply_map(map, q);
    EXPECT_LT((moved[0] - (Vec3(0.2, 0.3, 0.1) + t)).norm(), 1e-14);
    EXPECT_LT((moved[1] - (Vec3(0.1, 0.1, 0.6) + t)).norm(), 1e-14);
}

TEST(Barycentric, PointFarOutsideThrows) {
    const TetMesh m = unit_tet_mesh();
    EXPECT_THROW(build_barycentric_map(m, {Vec3(10, 10, 10)}), Error);
}
