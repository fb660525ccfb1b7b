#include "softarm/dynamics.hpp"
#include "softarm/arm_generator.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace softarm;

namespace {

TetMesh unit_tet_mesh() {
    TetMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    m.tets = {{0, 1, 2, 3}};
    return m;
}

// Solid box beam meshed on a uniform grid (cantilever fixture).
TetMesh box_beam(int nx, int ny, int nz, double lx, double ly, double lz) {
    auto marks = [](double len, int n) {
        std::vector<double> v;
        for (int i = 0; i <= n; ++i) v.push_back(len * i / n);
        return v;
    };
    auto ymarks = [&](double len, int n) {
        std::vector<double> v;
        for (int i = 0; i <= n; ++i) v.push_back(-len / 2 + len * i / n);
        return v;
    };
    detail::GridMesher grid(marks(lx, nx), ymarks(ly, ny), ymarks(lz, nz));
    TetMesh mesh;
    grid.build([](int, int, int) { return true; }, mesh);
    MeshGroup fixed;
    fixed.kind = MeshGroup::Kind::Nodes;
    for (int i = 0; i < mesh.num_vertices(); ++i)
        if (std::abs(mesh.vertices[i].x()) < 1e-12) fixed.nodes.push_back(i);
    mesh.groups.emplace("fixed", std::move(fixed));
    mesh.validate();
    return mesh;
}

struct BeamSystem {
    SystemModel model;
    ConstraintSet constraints;
    VecX fixed_targets;
    MechanicalState state;
};

BeamSystem make_cantilever(const TetMesh& mesh, const MaterialModel& mat, double density) {
    BeamSystem sys;
    sys.model.add_body(mesh, mat, density);
    for (int n : mesh.node_group("fixed")) sys.constraints.fixed_nodes.push_back(n);
    sys.model.finalize();
    sys.state.q = sys.model.rest_positions();
    sys.state.v = VecX::Zero(sys.state.q.size());
    sys.fixed_targets.resize(3 * sys.constraints.fixed_nodes.size());
    for (size_t i = 0; i < sys.constraints.fixed_nodes.size(); ++i)
        sys.fixed_targets.segment<3>(3 * i) = node_pos(sys.state.q, sys.constraints.fixed_nodes[i]);
    return sys;
}

}  // namespace

// ---------------------------------------------------------------------------
// lump_mass

TEST(LumpMass, UnitTetQuarters) {
    const MassModel m = lump_mass(unit_tet_mesh(), 6.0);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(m.node_mass[i], 0.25, 1e-15);
}

TEST(LumpMass, TotalEqualsDensityTimesVolume) {
    const GeneratedArm arm = generate_arm(ArmParams{});
    const MassModel m = lump_mass(arm.spa, 123.0);
    EXPECT_NEAR(m.total(), 123.0 * mesh_volume(arm.spa), 1e-12 * m.total());
}

TEST(LumpMass, SharedNodesAccumulate) {
    TetMesh mesh;
    mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 1, 1)};
    mesh.tets = {{0, 1, 2, 3}, {1, 2, 3, 4}};
    const double v0 = mesh.signed_tet_volume(0), v1 = mesh.signed_tet_volume(1);
    const MassModel m = lump_mass(mesh, 4.0);
    EXPECT_NEAR(m.node_mass[0], 4.0 * v0 / 4.0, 1e-15);
    EXPECT_NEAR(m.node_mass[1], 4.0 * (v0 + v1) / 4.0, 1e-15);
    EXPECT_NEAR(m.node_mass[4], 4.0 * v1 / 4.0, 1e-15);
}

// ---------------------------------------------------------------------------
// assemble_system

TEST(AssembleSystem, PointMassFreeFall) {
    SystemModel model;
    VecX p0(3);
    p0 << 0, 0, 0;
    const double m = 2.5;
    model.add_free_nodes(1, m, p0);
    model.finalize();
    model.update(p0);

    IntegratorConfig cfg;
    cfg.rayleigh_alpha = 0.0;
    cfg.rayleigh_beta = 0.0;
    MechanicalState s{p0, VecX::Zero(3)};
    const VecX f_ext = model.gravity_forces(cfg.gravity);
    const LinearSystem sys = assemble_system(model, s, f_ext, cfg);

    EXPECT_NEAR(sys.A.coeff(0, 0), m, 1e-15);
    EXPECT_NEAR(sys.A.coeff(2, 2), m, 1e-15);
    const VecX dv = linear_solve(sys.A, sys.b);
    EXPECT_LT((dv - cfg.dt * VecX(cfg.gravity)).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(AssembleSystem, RestNoLoadsGivesZeroRhs) {
    const TetMesh mesh = box_beam(2, 1, 1, 0.2, 0.1, 0.1);
    SystemModel model;
    model.add_body(mesh, LinearElasticParams{1e5, 0.3}, 100.0);
    model.finalize();
    MechanicalState s{model.rest_positions(), VecX::Zero(3 * model.total_nodes())};
    model.update(s.q);
    IntegratorConfig cfg;
    cfg.rayleigh_alpha = 0.0;
    cfg.rayleigh_beta = 0.0;
    const LinearSystem sys = assemble_system(model, s, VecX::Zero(s.q.size()), cfg);
    EXPECT_LT(sys.b.lpNorm<Eigen::Infinity>(), 1e-10);
    const VecX dv = linear_solve(sys.A, sys.b);
    EXPECT_LT(dv.lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(AssembleSystem, MatrixIsSymmetric) {
    const TetMesh mesh = box_beam(2, 2, 1, 0.2, 0.1, 0.05);
    SystemModel model;
    model.add_body(mesh, StableNeoHookeanParams{2e4, 1e4}, 50.0);
    model.finalize();
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    VecX q = model.rest_positions();
    VecX v = VecX::Zero(q.size());
    for (int i = 0; i < q.size(); ++i) {
        q[i] += u(rng);
        v[i] = u(rng);
    }
    model.update(q);
    const LinearSystem sys = assemble_system(model, {q, v}, VecX::Zero(q.size()),
                                             IntegratorConfig{});
    const Eigen::MatrixXd a(sys.A);
    EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-10 * a.cwiseAbs().maxCoeff());
}

// ---------------------------------------------------------------------------
// constrained solves

TEST(SolveConstrained, NoConstraintsReducesToPlainSolve) {
    SpMat a(3, 3);
    a.insert(0, 0) = 4.0;
    a.insert(1, 1) = 2.0;
    a.insert(2, 2) = 1.0;
    a.makeCompressed();
    VecX b(3);
    b << 1, 2, 3;
    const auto sol = solve_constrained(a, b, ConstraintSet{}, VecX::Zero(3), VecX::Zero(3),
                                       VecX(), 0.01);
    EXPECT_LT((VecX(a * sol.dv) - b).norm(), 1e-10);
    EXPECT_EQ(sol.lambda.size(), 0);
}

TEST(SolveConstrained, AllFixedTetReactionBalancesGravity) {
    const TetMesh mesh = unit_tet_mesh();
    const double density = 8.0;
    SystemModel model;
    model.add_body(mesh, StableNeoHookeanParams{1e3, 0.0}, density);
    model.finalize();
    MechanicalState s{model.rest_positions(), VecX::Zero(12)};
    model.update(s.q);

    IntegratorConfig cfg;
    const VecX f_ext = model.gravity_forces(cfg.gravity);
    const LinearSystem sys = assemble_system(model, s, f_ext, cfg);

    ConstraintSet cs;
    cs.fixed_nodes = {0, 1, 2, 3};
    VecX targets = s.q;
    const auto sol = solve_constrained(sys.A, sys.b, cs, s.q, s.v, targets, cfg.dt);

    EXPECT_LT(sol.dv.lpNorm<Eigen::Infinity>(), 1e-12);
    const double node_weight = density * (1.0 / 6.0) / 4.0 * 9.81;
    for (int i = 0; i < 4; ++i) {
        const Vec3 reaction = sol.lambda.segment<3>(3 * i);
        EXPECT_NEAR(reaction.z(), node_weight, 1e-9 * node_weight);
        EXPECT_NEAR(reaction.x(), 0.0, 1e-12);
        EXPECT_NEAR(reaction.y(), 0.0, 1e-12);
    }
}

TEST(SolveConstrained, BilateralPairClosesGapAfterOneStep) {
    // two single-tet bodies with coincident nodes: A node 3 and B node 0
    SystemModel model;
    const TetMesh a = unit_tet_mesh();
    TetMesh b = unit_tet_mesh();
    for (auto& v : b.vertices) v += Vec3(0, 0, 1);  // b node 0 at (0,0,1) = a node 3
    model.add_body(a, StableNeoHookeanParams{1e3, 0.0}, 10.0);
    model.add_body(b, StableNeoHookeanParams{1e3, 0.0}, 10.0);
    model.finalize();

    ConstraintSet cs;
    cs.fixed_nodes = {0, 1, 2};  // body a base
    cs.bilateral_pairs = {{3, 4}};
    MechanicalState s{model.rest_positions(), VecX::Zero(3 * model.total_nodes())};
    // introduce an initial gap
    s.q.segment<3>(3 * 4) += Vec3(0.002, -0.001, 0.003);

    VecX targets(9);
    for (int i = 0; i < 3; ++i) targets.segment<3>(3 * i) = node_pos(s.q, i);
    IntegratorConfig cfg;
    model.update(s.q);
    const VecX f_ext = model.gravity_forces(cfg.gravity);
    const LinearSystem sys = assemble_system(model, s, f_ext, cfg);
    const auto sol = solve_constrained(sys.A, sys.b, cs, s.q, s.v, targets, cfg.dt);

    const VecX v_next = s.v + sol.dv;
    const VecX q_next = s.q + cfg.dt * v_next;
    EXPECT_LT((node_pos(q_next, 3) - node_pos(q_next, 4)).norm(), 1e-8);
}

TEST(SolveConstrained, DuplicateConstraintsAreDeduplicated) {
    ConstraintSet cs;
    cs.fixed_nodes = {2, 2, 1};
    cs.bilateral_pairs = {{3, 4}, {4, 3}, {3, 4}, {5, 5}};
    const ConstraintSet clean = cs.sanitized();
    EXPECT_EQ(clean.fixed_nodes.size(), 2u);
    EXPECT_EQ(clean.bilateral_pairs.size(), 1u);
}

TEST(SolveConstrained, PairTouchingFixedNodeDropped) {
    ConstraintSet cs;
    cs.fixed_nodes = {0};
    cs.bilateral_pairs = {{0, 4}, {2, 3}};
    const ConstraintSet clean = cs.sanitized();
    EXPECT_EQ(clean.bilateral_pairs.size(), 1u);
    EXPECT_EQ(clean.bilateral_pairs[0], std::make_pair(2, 3));
}

// ---------------------------------------------------------------------------
// linear_solve

TEST(LinearSolve, IdentityReturnsRhs) {
    SpMat a(4, 4);
    for (int i = 0; i < 4; ++i) a.insert(i, i) = 1.0;
    a.makeCompressed();
    VecX b(4);
    b << 1, -2, 3, -4;
    EXPECT_LT((linear_solve(a, b) - b).norm(), 1e-14);
}

TEST(LinearSolve, RandomSpdMatchesDenseOracle) {
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = 50;
    Eigen::MatrixXd r(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) r(i, j) = u(rng);
    const Eigen::MatrixXd ad = r.transpose() * r + 0.5 * Eigen::MatrixXd::Identity(n, n);
    VecX b(n);
    for (int i = 0; i < n; ++i) b[i] = u(rng);

    const SpMat a = ad.sparseView();
    const VecX x_dense = ad.llt().solve(b);  // dense factorization oracle
    for (auto method :
         {IntegratorConfig::Solver::Direct, IntegratorConfig::Solver::ConjugateGradient}) {
        const VecX x = linear_solve(a, b, method, 1e-12);
        EXPECT_LT((x - x_dense).norm(), 1e-8 * x_dense.norm());
    }
}

TEST(LinearSolve, SingularSystemThrows) {
    SpMat a(3, 3);
    a.insert(0, 0) = 1.0;  // rows 1,2 empty
    a.makeCompressed();
    VecX b(3);
    b << 1, 1, 1;
    EXPECT_THROW(linear_solve(a, b), Error);
}

// ---------------------------------------------------------------------------
// step

TEST(Step, FreePointMassMatchesClosedForm) {
    SystemModel model;
    VecX p0(3);
    p0 << 0.1, 0.2, 0.3;
    model.add_free_nodes(1, 1.25, p0);
    model.finalize();
    IntegratorConfig cfg;
    cfg.dt = 0.005;
    cfg.rayleigh_alpha = 0.0;
    cfg.rayleigh_beta = 0.0;

    MechanicalState s{p0, VecX::Zero(3)};
    model.update(s.q);
    SaddleSolver solver;
    ConstraintSet none;
    solver.init(model.stiffness(), none);
    const VecX f_ext = model.gravity_forces(cfg.gravity);

    Vec3 q_ref = p0, v_ref = Vec3::Zero();
    for (int k = 1; k <= 1000; ++k) {
        auto res = step(model, s, none, VecX(), f_ext, cfg, &solver);
        s = std::move(res.state);
        v_ref = (k * cfg.dt) * cfg.gravity;  // v_k = k dt g
        q_ref += cfg.dt * v_ref;             // cumulative sum
        ASSERT_LT((Vec3(s.v) - v_ref).lpNorm<Eigen::Infinity>(), 1e-12);
        ASSERT_LT((Vec3(s.q) - q_ref).lpNorm<Eigen::Infinity>(), 1e-12);
    }
}

TEST(Step, FixedNodesDoNotDrift) {
    const TetMesh mesh = box_beam(4, 2, 2, 0.08, 0.02, 0.02);
    BeamSystem sys = make_cantilever(mesh, LinearElasticParams{5e5, 0.3}, 1000.0);
    IntegratorConfig cfg;
    SaddleSolver solver;
    solver.init(sys.model.stiffness(), sys.constraints);
    const VecX f_ext = sys.model.gravity_forces(cfg.gravity);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        auto res = step(sys.model, sys.state, sys.constraints, sys.fixed_targets, f_ext, cfg,
                        &solver);
        sys.state = std::move(res.state);
        for (size_t i = 0; i < sys.constraints.fixed_nodes.size(); ++i)
            worst = std::max(worst, (node_pos(sys.state.q, sys.constraints.fixed_nodes[i]) -
                                     Vec3(sys.fixed_targets.segment<3>(3 * i)))
                                        .norm());
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(Step, CantileverSagConvergesUnderDtRefinement) {
    const TetMesh mesh = box_beam(6, 2, 2, 0.06, 0.02, 0.02);
    const MaterialModel mat = LinearElasticParams{5e5, 0.3};

    auto settle = [&](double dt) {
        BeamSystem sys = make_cantilever(mesh, mat, 1000.0);
        IntegratorConfig cfg;
        cfg.dt = dt;
        SaddleSolver solver;
        solver.init(sys.model.stiffness(), sys.constraints);
        const VecX f_ext = sys.model.gravity_forces(cfg.gravity);
        const int steps = static_cast<int>(std::lround(8.0 / dt));
        for (int k = 0; k < steps; ++k) {
            auto res = step(sys.model, sys.state, sys.constraints, sys.fixed_targets, f_ext, cfg,
                            &solver);
            sys.state = std::move(res.state);
        }
        EXPECT_LT(sys.state.v.lpNorm<Eigen::Infinity>(), 1e-4);
        // tip: max-x nodes, mean z displacement
        double sag = 0.0;
        int count = 0;
        for (int i = 0; i < mesh.num_vertices(); ++i)
            if (std::abs(mesh.vertices[i].x() - 0.06) < 1e-12) {
                sag += sys.state.q[3 * i + 2] - mesh.vertices[i].z();
                ++count;
            }
        return sag / count;
    };

    const double coarse = settle(0.01);
    const double fine = settle(0.001);
    EXPECT_LT(std::abs(coarse), 0.06);  // sane magnitude
    EXPECT_GT(std::abs(fine), 1e-5);    // actually sagged
    EXPECT_LT(std::abs(coarse - fine), 0.02 * std::abs(fine));
}

// ---------------------------------------------------------------------------
// invariants

TEST(Invariants, DampedFreeVibrationDissipatesEnergy) {
    const TetMesh mesh = box_beam(2, 1, 1, 0.2, 0.1, 0.1);
    SystemModel model;
    model.add_body(mesh, StableNeoHookeanParams{1e4, 5e3}, 100.0);
    model.finalize();
    IntegratorConfig cfg;
    cfg.gravity = Vec3::Zero();

    MechanicalState s;
    s.q = model.rest_positions() * 1.15;  // stretched start
    s.v = VecX::Zero(s.q.size());
    SaddleSolver solver;
    model.update(s.q);
    ConstraintSet none;
    solver.init(model.stiffness(), none);
    const VecX f_ext = VecX::Zero(s.q.size());

    const double e0 = model.elastic_energy(s.q) + model.kinetic_energy(s.v);
    double prev = e0;
    for (int k = 0; k < 200; ++k) {
        auto res = step(model, s, none, VecX(), f_ext, cfg, &solver);
        s = std::move(res.state);
        const double e = model.elastic_energy(s.q) + model.kinetic_energy(s.v);
        ASSERT_LE(e, prev * (1.0 + 1e-10) + 1e-14 * e0);  // noise floor at full damping
        prev = e;
    }
}

TEST(Invariants, UniformVelocityTranslatesRigidly) {
    const TetMesh mesh = box_beam(2, 2, 2, 0.1, 0.1, 0.1);
    SystemModel model;
    model.add_body(mesh, StableNeoHookeanParams{1e4, 0.0}, 200.0);
    model.finalize();
    IntegratorConfig cfg;
    cfg.gravity = Vec3::Zero();

    MechanicalState s;
    s.q = model.rest_positions();
    s.v.resize(s.q.size());
    const Vec3 v0(0.3, -0.2, 0.5);
    for (int i = 0; i < model.total_nodes(); ++i) s.v.segment<3>(3 * i) = v0;
    SaddleSolver solver;
    model.update(s.q);
    ConstraintSet none;
    solver.init(model.stiffness(), none);
    const VecX f_ext = VecX::Zero(s.q.size());

    for (int k = 0; k < 50; ++k) {
        auto res = step(model, s, none, VecX(), f_ext, cfg, &solver);
        s = std::move(res.state);
        model.update(s.q);
        EXPECT_LT(model.internal_forces().lpNorm<Eigen::Infinity>(), 1e-10);
        // rigid translation: all nodal velocities equal
        const Vec3 mean = s.v.segment<3>(0);
        for (int i = 1; i < model.total_nodes(); ++i)
            EXPECT_LT((Vec3(s.v.segment<3>(3 * i)) - mean).norm(), 1e-10);
    }
}

TEST(Invariants, NewtonRefinementStaysConsistent) {
    const TetMesh mesh = box_beam(3, 2, 2, 0.06, 0.02, 0.02);
    const MaterialModel mat = StableNeoHookeanParams{1e5, 0.0};
    auto run = [&](int iters) {
        BeamSystem sys = make_cantilever(mesh, mat, 500.0);
        IntegratorConfig cfg;
        cfg.newton_iters = iters;
        SaddleSolver solver;
        solver.init(sys.model.stiffness(), sys.constraints);
        const VecX f_ext = sys.model.gravity_forces(cfg.gravity);
        for (int k = 0; k < 300; ++k) {
            auto res = step(sys.model, sys.state, sys.constraints, sys.fixed_targets, f_ext, cfg,
                            &solver);
            sys.state = std::move(res.state);
        }
        return sys.state.q;
    };
    const VecX q1 = run(1);
    const VecX q3 = run(3);
    // both settle to the same static equilibrium
    EXPECT_LT((q1 - q3).lpNorm<Eigen::Infinity>(), 1e-6);
}
