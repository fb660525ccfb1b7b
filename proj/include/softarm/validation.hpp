#pragma once

// Self-contained numerical checks runnable from the CLI (`softarm
// validate`): finite-difference gradient checks for both materials, cavity
// load consistency, a step-by-step controller reference, integrator sanity
// against closed forms, mapping reconstruction, and run determinism.
//
// Each check reports a measured value against its tolerance. Several checks
// take fault-injection parameters so the tests can verify they actually
// catch broken inputs.

#include "softarm/experiments.hpp"

#include <random>
#include <vector>

namespace softarm {

struct ValidationCheck {
    std::string module;
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    bool all_pass = true;

    void add(ValidationCheck c) {
        all_pass = all_pass && c.pass;
        checks.push_back(std::move(c));
    }
};

namespace validation {

inline ValidationCheck make_check(std::string module, std::string name, double measured,
                                  double tol) {
    return {std::move(module), std::move(name), measured, tol, measured <= tol};
}

// A mildly irregular rest tet plus a random deformation, O(1) scale.
inline void random_element(std::mt19937& rng, std::array<Vec3, 4>& rest,
                           std::array<Vec3, 4>& deformed) {
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    while (true) {
        rest = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
        for (auto& v : rest) v += Vec3(u(rng), u(rng), u(rng));
        if (tet_signed_volume(rest[0], rest[1], rest[2], rest[3]) > 0.02) break;
    }
    deformed = rest;
    for (auto& v : deformed) v += Vec3(u(rng), u(rng), u(rng));
}

/// Max relative error of element forces against central differences of the
/// element energy (h = 1e-6 per coordinate).
inline double force_fd_max_rel_error(const MaterialModel& material, unsigned seed, int samples) {
    std::mt19937 rng(seed);
    const double h = 1e-6;
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        std::array<Vec3, 4> rest, x;
        random_element(rng, rest, x);
        const ElementBasis basis = make_element_basis(rest[0], rest[1], rest[2], rest[3]);
        const auto f = element_forces(basis, x[0], x[1], x[2], x[3], material);
        double fscale = 0.0;
        for (const auto& v : f) fscale = std::max(fscale, v.lpNorm<Eigen::Infinity>());
        fscale = std::max(fscale, 1e-6);
        for (int node = 0; node < 4; ++node)
            for (int a = 0; a < 3; ++a) {
                auto xp = x, xm = x;
                xp[node][a] += h;
                xm[node][a] -= h;
                const double ep = element_energy(basis, xp[0], xp[1], xp[2], xp[3], material);
                const double em = element_energy(basis, xm[0], xm[1], xm[2], xm[3], material);
                const double fd = -(ep - em) / (2.0 * h);
                worst = std::max(worst, std::abs(f[node][a] - fd) / fscale);
            }
    }
    return worst;
}

/// Max relative error of the element stiffness against central differences
/// of element forces. `tangent_perturbation` (fault injection) adds that
/// multiple of the identity to the analytic tangent before comparing.
inline double stiffness_fd_max_rel_error(const MaterialModel& material, unsigned seed,
                                         int samples, double tangent_perturbation = 0.0) {
    std::mt19937 rng(seed);
    const double h = 1e-6;
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        std::array<Vec3, 4> rest, x;
        random_element(rng, rest, x);
        const ElementBasis basis = make_element_basis(rest[0], rest[1], rest[2], rest[3]);
        Mat12 k = element_stiffness(basis, x[0], x[1], x[2], x[3], material);
        k += tangent_perturbation * Mat12::Identity();
        const double kscale = std::max(k.cwiseAbs().maxCoeff(), 1e-6);
        for (int node = 0; node < 4; ++node)
            for (int a = 0; a < 3; ++a) {
                auto xp = x, xm = x;
                xp[node][a] += h;
                xm[node][a] -= h;
                const auto fp = element_forces(basis, xp[0], xp[1], xp[2], xp[3], material);
                const auto fm = element_forces(basis, xm[0], xm[1], xm[2], xm[3], material);
                for (int nb = 0; nb < 4; ++nb)
                    for (int c = 0; c < 3; ++c) {
                        const double fd = -(fp[nb][c] - fm[nb][c]) / (2.0 * h);
                        worst = std::max(
                            worst, std::abs(k(3 * nb + c, 3 * node + a) - fd) / kscale);
                    }
            }
    }
    return worst;
}

/// Circular-arc bend about the y axis (curvature kappa), used to probe
/// deformed-configuration properties without running dynamics.
inline VecX bend_positions(const VecX& q, double kappa) {
    VecX out = q;
    const double r = 1.0 / kappa;
    for (int i = 0; i < q.size() / 3; ++i) {
        const Vec3 p = node_pos(q, i);
        out.segment<3>(3 * i) =
            Vec3((r - p.z()) * std::sin(kappa * p.x()), p.y(),
                 r - (r - p.z()) * std::cos(kappa * p.x()));
    }
    return out;
}

/// Net force and torque residuals of a closed pressurized cavity, relative
/// to pressure * total area (and * diameter for the torque).
inline std::pair<double, double> cavity_load_residuals(
    const std::vector<std::array<int, 3>>& tris, const VecX& q, double pressure) {
    VecX f = pressure_forces(tris, q, pressure);
    Vec3 net = Vec3::Zero(), torque = Vec3::Zero();
    Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
    double area = 0.0;
    for (const auto& t : tris) {
        for (int j = 0; j < 3; ++j) {
            lo = lo.cwiseMin(node_pos(q, t[j]));
            hi = hi.cwiseMax(node_pos(q, t[j]));
        }
        area += triangle_area_vector(node_pos(q, t[0]), node_pos(q, t[1]), node_pos(q, t[2]))
                    .norm();
    }
    const Vec3 center = 0.5 * (lo + hi);
    for (int i = 0; i < q.size() / 3; ++i) {
        const Vec3 fi = f.segment<3>(3 * i);
        net += fi;
        torque += (node_pos(q, i) - center).cross(fi);
    }
    const double diam = std::max((hi - lo).norm(), 1e-300);
    const double scale = std::max(std::abs(pressure) * area, 1e-300);
    return {net.norm() / scale, torque.norm() / (scale * diam)};
}

// Straight-line reference of the discrete controller chain, written
// independently of controller.hpp (scalar arithmetic only, no anti-windup).
struct ReferenceController {
    double I = 0.0;
    double P1 = 0.0, P2 = 0.0, P3 = 0.0, P4 = 0.0;

    void step(double tx, double ty, double tz, double px, double py, double pz, double kp,
              double ki, double delta, double pmin, double pmax, double dt, double unit) {
        const double ex = (tx - px) / unit;
        const double ey = (ty - py) / unit;
        const double ez = (tz - pz) / unit;
        double d1 = ex - ey - ez;
        double d2 = ex + ey - ez;
        double d3 = ex - ey + ez;
        double d4 = ex + ey + ez;
        if (std::abs(d1) < delta) d1 = 0.0;
        if (std::abs(d2) < delta) d2 = 0.0;
        if (std::abs(d3) < delta) d3 = 0.0;
        if (std::abs(d4) < delta) d4 = 0.0;
        const double ek = std::sqrt(d1 * d1 + d2 * d2 + d3 * d3 + d4 * d4);
        I = I + ek * dt;
        const double u = kp * ek + ki * I;
        const double alpha = std::abs(d1) + std::abs(d2) + std::abs(d3) + std::abs(d4);
        double dp1 = 0.0, dp2 = 0.0, dp3 = 0.0, dp4 = 0.0;
        if (alpha > 0.0) {
            dp1 = u * d1 / alpha;
            dp2 = u * d2 / alpha;
            dp3 = u * d3 / alpha;
            dp4 = u * d4 / alpha;
        }
        P1 = std::min(std::max(P1 + dp1, pmin), pmax);
        P2 = std::min(std::max(P2 + dp2, pmin), pmax);
        P3 = std::min(std::max(P3 + dp3, pmin), pmax);
        P4 = std::min(std::max(P4 + dp4, pmin), pmax);
    }
};

/// Synthetic tip trajectory: an exponential approach to the target with a
/// superimposed wiggle, exercising deadband, distribution and clipping.
inline Vec3 synthetic_tip(double t, const Vec3& target) {
    const double s = 1.0 - std::exp(-t / 2.0);
    Vec3 p = s * target;
    p.x() += 0.002 * std::sin(3.0 * t);
    p.y() += 0.001 * std::sin(5.0 * t);
    p.z() += 0.0015 * std::cos(4.0 * t);
    return p;
}

inline double controller_oracle_max_error(int steps, const ControllerConfig& cfg_in) {
    ControllerConfig cfg = cfg_in;
    cfg.anti_windup = AntiWindup::Off;  // reference implements the plain chain
    ControllerState state;
    ReferenceController ref;
    const Vec3 target(0.0, 0.015, 0.010);
    double worst = 0.0;
    for (int k = 0; k < steps; ++k) {
        const Vec3 tip = synthetic_tip(k * cfg.dt, target);
        controller_step(target, tip, state, cfg);
        ref.step(target.x(), target.y(), target.z(), tip.x(), tip.y(), tip.z(), cfg.kp, cfg.ki,
                 cfg.deadband, cfg.pressure_min, cfg.pressure_max, cfg.dt, cfg.working_unit);
        worst = std::max(worst, std::abs(state.integral - ref.I));
        worst = std::max(worst, std::abs(state.pressures[0] - ref.P1));
        worst = std::max(worst, std::abs(state.pressures[1] - ref.P2));
        worst = std::max(worst, std::abs(state.pressures[2] - ref.P3));
        worst = std::max(worst, std::abs(state.pressures[3] - ref.P4));
    }
    return worst;
}

/// Implicit Euler free fall against the closed-form recursion
/// v_k = k dt g, q_k = q_0 + dt sum v_i.
inline double free_fall_max_error(int steps = 1000, double dt = 0.005) {
    SystemModel model;
    VecX pos0(3);
    pos0 << 0.2, -0.1, 0.4;
    model.add_free_nodes(1, 1.25, pos0);
    model.finalize();

    IntegratorConfig cfg;
    cfg.dt = dt;
    cfg.rayleigh_alpha = 0.0;
    cfg.rayleigh_beta = 0.0;
    const Vec3 g = cfg.gravity;

    MechanicalState s{pos0, VecX::Zero(3)};
    ConstraintSet none;
    SaddleSolver solver;
    model.update(s.q);
    solver.init(model.stiffness(), none);

    Vec3 q_ref = pos0, v_ref = Vec3::Zero();
    double worst = 0.0;
    const VecX f_ext = model.gravity_forces(g);
    for (int k = 1; k <= steps; ++k) {
        auto res = step(model, s, none, VecX(), f_ext, cfg, &solver);
        s = std::move(res.state);
        v_ref = (k * dt) * g;
        q_ref += dt * v_ref;
        worst = std::max(worst, (Vec3(s.v) - v_ref).lpNorm<Eigen::Infinity>());
        worst = std::max(worst, (Vec3(s.q) - q_ref).lpNorm<Eigen::Infinity>());
    }
    return worst;
}

inline ArmParams small_arm_params() {
    ArmParams p;
    p.length = 0.06;
    p.element_size = 0.02;
    return p;
}

inline SceneConfig small_scene_config(ActuationMode mode) {
    SceneConfig cfg = SceneConfig::defaults(mode);
    cfg.geometry = small_arm_params();
    cfg.integrator.dt = 0.01;
    return cfg;
}

inline double fixed_drift_after_steps(int steps = 100) {
    SceneConfig cfg = small_scene_config(ActuationMode::None);
    Scene scene(cfg);
    for (int k = 0; k < steps; ++k) scene.advance();
    return scene.max_fixed_drift();
}

/// Tip y displacement after inflating the +y cavity pair (p1, p3) only.
/// Correct orientation pushes the tip towards -y, away from the
/// pressurized side.
inline double single_pair_tip_y(double pressure = 0.4, int steps = 200) {
    SceneConfig cfg = small_scene_config(ActuationMode::None);
    Scene scene(cfg);
    scene.set_cavity_pressures({pressure, 0.0, pressure, 0.0});
    for (int k = 0; k < steps; ++k) scene.advance();
    return scene.tip_position().y() - scene.rest_tip().y();
}

inline double barycentric_reconstruction_error(const TetMesh& mesh, unsigned seed = 7,
                                               int samples = 50) {
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> pick(0, mesh.num_tets() - 1);
    std::uniform_real_distribution<double> u(0.05, 0.9);
    std::vector<Vec3> points;
    for (int s = 0; s < samples; ++s) {
        const auto& t = mesh.tets[pick(rng)];
        double w0 = u(rng), w1 = u(rng), w2 = u(rng), w3 = u(rng);
        const double sum = w0 + w1 + w2 + w3;
        w0 /= sum; w1 /= sum; w2 /= sum; w3 /= sum;
        points.push_back(w0 * mesh.vertices[t[0]] + w1 * mesh.vertices[t[1]] +
                         w2 * mesh.vertices[t[2]] + w3 * mesh.vertices[t[3]]);
    }
    const BarycentricMap map = build_barycentric_map(mesh, points);
    const auto mapped = apply_map(map, mesh.rest_positions());
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) worst = std::max(worst, (mapped[s] - points[s]).norm());
    return worst;
}

inline bool determinism_check(int steps = 50) {
    auto run = [&] {
        SceneConfig cfg = small_scene_config(ActuationMode::Periodic);
        cfg.duration = steps * cfg.integrator.dt;
        cfg.log_stride = 5;
        return csv_string(run_periodic(cfg).log);
    };
    return run() == run();
}

}  // namespace validation

inline ValidationReport validate() {
    using namespace validation;
    ValidationReport rep;
    const MaterialModel snh = StableNeoHookeanParams{1.0, 0.7};
    const MaterialModel lin = LinearElasticParams{1.0, 0.3};

    rep.add(make_check("materials", "snh_force_vs_fd", force_fd_max_rel_error(snh, 11, 20), 1e-4));
    rep.add(make_check("materials", "snh_stiffness_vs_fd",
                       stiffness_fd_max_rel_error(snh, 12, 20), 1e-3));
    rep.add(make_check("materials", "linear_force_vs_fd", force_fd_max_rel_error(lin, 13, 20),
                       1e-4));
    rep.add(make_check("materials", "linear_stiffness_vs_fd",
                       stiffness_fd_max_rel_error(lin, 14, 20), 1e-3));

    {
        const GeneratedArm arm = generate_arm(small_arm_params());
        const VecX rest = arm.spa.rest_positions();
        const VecX bent = bend_positions(rest, 4.0);
        double worst_f = 0.0, worst_t = 0.0;
        for (const auto& name : arm.cavity_groups) {
            for (const VecX* q : {&rest, &bent}) {
                const auto [rf, rt] = cavity_load_residuals(arm.spa.tri_group(name), *q, 0.8);
                worst_f = std::max(worst_f, rf);
                worst_t = std::max(worst_t, rt);
            }
        }
        rep.add(make_check("actuation", "cavity_net_force", worst_f, 1e-12));
        rep.add(make_check("actuation", "cavity_net_torque", worst_t, 1e-12));
        rep.add(make_check("mesh", "barycentric_reconstruction",
                           barycentric_reconstruction_error(arm.spa), 1e-9));
    }

    rep.add(make_check("controller", "reference_chain",
                       controller_oracle_max_error(500, ControllerConfig{}), 1e-12));
    rep.add(make_check("dynamics", "free_fall_closed_form", free_fall_max_error(), 1e-12));
    rep.add(make_check("dynamics", "fixed_node_drift", fixed_drift_after_steps(), 1e-10));

    {
        const double ty = single_pair_tip_y();
        // pass when the tip moved clearly towards -y
        rep.add(make_check("actuation", "pressure_orientation", ty, -1e-5));
    }
    rep.add(make_check("scene", "run_determinism", determinism_check() ? 0.0 : 1.0, 0.5));
    return rep;
}

}  // namespace softarm
