#pragma once

// Scene assembly and the per-step animation loop: two coupled bodies (SPA +
// spine), fixed proximal faces, bilateral spine-SPA couplings, four pressure
// cavities, a tip marker mapping, and optional periodic or closed-loop
// actuation.
//
// Step order (fixed): read tip -> evaluate actuation from the pre-step state
// -> pressure nodal forces -> constrained implicit-Euler solve -> state
// update -> mapping propagation. The simulation clock is step_count * dt.

#include "softarm/actuation.hpp"
#include "softarm/arm_generator.hpp"
#include "softarm/barycentric.hpp"
#include "softarm/config_file.hpp"
#include "softarm/controller.hpp"
#include "softarm/dynamics.hpp"
#include "softarm/tmesh_io.hpp"

#include <array>
#include <optional>
#include <string>

namespace softarm {

enum class ActuationMode { None, Periodic, Controller };

inline std::string to_string(ActuationMode m) {
    switch (m) {
        case ActuationMode::None: return "none";
        case ActuationMode::Periodic: return "periodic";
        case ActuationMode::Controller: return "controller";
    }
    throw Error("bad actuation mode");
}

inline ActuationMode actuation_mode_from_string(const std::string& s) {
    if (s == "none") return ActuationMode::None;
    if (s == "periodic") return ActuationMode::Periodic;
    if (s == "controller") return ActuationMode::Controller;
    throw Error("unknown actuation mode '" + s + "' (none|periodic|controller)");
}

struct SceneConfig {
    ArmParams geometry;
    std::string mesh_dir;  // when set, load <dir>/spa.tmesh and <dir>/spine.tmesh

    // Material parameters are physical data sheet values; stiffness_scale
    // brings them to the scene's pressure scale (sub-Pa actuation bounds)
    // without rewriting them.
    StableNeoHookeanParams spa_material{242030.0, 0.0};
    double spa_density = 0.02;  // [kg/m^3] scene units, see README
    // The stable Neo-Hookean energy behaves like a linear material with
    // Lame constants (mu, lambda - mu) near the rest state, so feeding the
    // configured lambda straight in would give the arm a negative bulk
    // modulus. The default mapping shifts the model parameter by +mu so the
    // small-strain response has exactly the configured (mu, lambda).
    bool spa_stable_lame_mapping = true;
    LinearElasticParams spine_material{75e6, 0.45};
    double spine_density = 0.02;
    double stiffness_scale = 4.5e-6;

    IntegratorConfig integrator;

    ActuationMode mode = ActuationMode::None;
    PeriodicSignalConfig periodic;
    ControllerConfig controller;
    Vec3 target{0.0, -0.015, -0.010};  // tip displacement target [m], controller mode

    double duration = 40.0;
    int log_stride = 10;
    double stop_epsilon = -1.0;  // <0: converged when e_k drops below the deadband

    void validate() const {
        geometry.validate();
        spa_material.validate();
        spine_material.validate();
        if (!(spa_density > 0.0) || !(spine_density > 0.0))
            throw Error("scene config: densities must be > 0");
        if (!(stiffness_scale > 0.0)) throw Error("scene config: stiffness_scale must be > 0");
        integrator.validate();
        if (mode == ActuationMode::Periodic) periodic.validate();
        if (mode == ActuationMode::Controller) controller.validate();
        if (!(duration > 0.0)) throw Error("scene config: duration must be > 0");
        if (log_stride < 1) throw Error("scene config: log_stride must be >= 1");
    }

    double stop_threshold() const {
        return stop_epsilon >= 0.0 ? stop_epsilon : controller.deadband;
    }

    StableNeoHookeanParams scaled_spa_material() const {
        const double lambda_model =
            spa_material.lambda + (spa_stable_lame_mapping ? spa_material.mu : 0.0);
        return {spa_material.mu * stiffness_scale, lambda_model * stiffness_scale};
    }
    LinearElasticParams scaled_spine_material() const {
        return {spine_material.youngs * stiffness_scale, spine_material.poisson};
    }

    static SceneConfig defaults(ActuationMode m) {
        SceneConfig cfg;
        cfg.mode = m;
        switch (m) {
            case ActuationMode::Periodic:
                // stiff enough that the 1.3 Pa side pressure bends a few cm
                cfg.stiffness_scale = 1.2e-5;
                cfg.integrator.dt = 0.01;
                cfg.duration = 40.0;
                cfg.log_stride = 10;
                break;
            case ActuationMode::Controller:
                // softer arm so the paper's per-step gains reach the targets
                // within the duration cap
                cfg.stiffness_scale = 1.5e-6;
                cfg.geometry.element_size = 0.012;
                cfg.integrator.dt = 0.05;
                cfg.duration = 1500.0;
                cfg.log_stride = 20;
                cfg.controller.dt = cfg.integrator.dt;
                break;
            case ActuationMode::None:
                cfg.integrator.dt = 0.01;
                cfg.duration = 5.0;
                cfg.log_stride = 10;
                break;
        }
        return cfg;
    }

    static SceneConfig from_config(const ConfigMap& c) {
        const std::string mode_str = c.get_string("actuation.mode", "none");
        SceneConfig cfg = defaults(actuation_mode_from_string(mode_str));

        ArmParams& g = cfg.geometry;
        g.length = c.get_double("geometry.length", g.length);
        g.width = c.get_double("geometry.width", g.width);
        g.height = c.get_double("geometry.height", g.height);
        g.cavity_width = c.get_double("geometry.cavity_width", g.cavity_width);
        g.cavity_height = c.get_double("geometry.cavity_height", g.cavity_height);
        g.cavity_offset_y = c.get_double("geometry.cavity_offset_y", g.cavity_offset_y);
        g.cavity_offset_z = c.get_double("geometry.cavity_offset_z", g.cavity_offset_z);
        g.cavity_margin = c.get_double("geometry.cavity_margin", g.cavity_margin);
        g.spine_width = c.get_double("geometry.spine_width", g.spine_width);
        g.spine_height = c.get_double("geometry.spine_height", g.spine_height);
        g.element_size = c.get_double("geometry.element_size", g.element_size);
        cfg.mesh_dir = c.get_string("geometry.mesh_dir", cfg.mesh_dir);

        cfg.spa_material.mu = c.get_double("material_spa.mu", cfg.spa_material.mu);
        cfg.spa_material.lambda = c.get_double("material_spa.lambda", cfg.spa_material.lambda);
        cfg.spa_density = c.get_double("material_spa.density", cfg.spa_density);
        cfg.spa_stable_lame_mapping =
            c.get_bool("material_spa.stable_lame_mapping", cfg.spa_stable_lame_mapping);
        cfg.spine_material.youngs = c.get_double("material_spine.youngs", cfg.spine_material.youngs);
        cfg.spine_material.poisson =
            c.get_double("material_spine.poisson", cfg.spine_material.poisson);
        cfg.spine_density = c.get_double("material_spine.density", cfg.spine_density);

        IntegratorConfig& s = cfg.integrator;
        cfg.stiffness_scale = c.get_double("simulation.stiffness_scale", cfg.stiffness_scale);
        s.dt = c.get_double("simulation.dt", s.dt);
        s.rayleigh_alpha = c.get_double("simulation.rayleigh_alpha", s.rayleigh_alpha);
        s.rayleigh_beta = c.get_double("simulation.rayleigh_beta", s.rayleigh_beta);
        s.newton_iters = c.get_int("simulation.newton_iters", s.newton_iters);
        const std::string solver = c.get_string(
            "simulation.solver", s.solver == IntegratorConfig::Solver::Direct ? "direct" : "cg");
        if (solver == "direct")
            s.solver = IntegratorConfig::Solver::Direct;
        else if (solver == "cg")
            s.solver = IntegratorConfig::Solver::ConjugateGradient;
        else
            throw Error("unknown solver '" + solver + "' (direct|cg)");
        s.solver_tol = c.get_double("simulation.solver_tol", s.solver_tol);
        s.gravity = c.get_vec3("simulation.gravity", s.gravity);

        PeriodicSignalConfig& p = cfg.periodic;
        p.offset = c.get_double("periodic.offset", p.offset);
        p.amplitude = c.get_double("periodic.amplitude", p.amplitude);
        p.frequency = c.get_double("periodic.frequency", p.frequency);
        p.phase = c.get_double("periodic.phase", p.phase);

        ControllerConfig& k = cfg.controller;
        k.kp = c.get_double("controller.kp", k.kp);
        k.ki = c.get_double("controller.ki", k.ki);
        k.deadband = c.get_double("controller.deadband", k.deadband);
        k.pressure_min = c.get_double("controller.pressure_min", k.pressure_min);
        k.pressure_max = c.get_double("controller.pressure_max", k.pressure_max);
        k.working_unit = c.get_double("controller.working_unit", k.working_unit);
        const std::string aw = c.get_string("controller.anti_windup", "upper");
        if (aw == "upper")
            k.anti_windup = AntiWindup::UpperOnly;
        else if (aw == "full")
            k.anti_windup = AntiWindup::Full;
        else if (aw == "off")
            k.anti_windup = AntiWindup::Off;
        else
            throw Error("unknown anti_windup mode '" + aw + "' (upper|full|off)");
        cfg.target = c.get_vec3("controller.target", cfg.target);

        cfg.duration = c.get_double("experiment.duration", cfg.duration);
        cfg.log_stride = c.get_int("experiment.log_stride", cfg.log_stride);
        cfg.stop_epsilon = c.get_double("experiment.stop_epsilon", cfg.stop_epsilon);

        k.dt = s.dt;  // controller rate equals simulation rate

        const auto unused = c.unused_keys();
        if (!unused.empty()) {
            std::string msg = c.origin() + ": unknown config keys:";
            for (const auto& k2 : unused) msg += " " + k2;
            throw Error(msg);
        }
        cfg.validate();
        return cfg;
    }

    static SceneConfig from_file(const std::string& path) {
        return from_config(ConfigMap::from_file(path));
    }

    std::string dump() const;
};

inline std::string SceneConfig::dump() const {
    auto d = [](double v) { return detail::format_double(v); };
    std::ostringstream out;
    out << "# softarm scene configuration\n";
    out << "\n[geometry]\n";
    out << "length = " << d(geometry.length) << "\n";
    out << "width = " << d(geometry.width) << "\n";
    out << "height = " << d(geometry.height) << "\n";
    out << "cavity_width = " << d(geometry.cavity_width) << "\n";
    out << "cavity_height = " << d(geometry.cavity_height) << "\n";
    out << "cavity_offset_y = " << d(geometry.cavity_offset_y) << "\n";
    out << "cavity_offset_z = " << d(geometry.cavity_offset_z) << "\n";
    out << "cavity_margin = " << d(geometry.cavity_margin) << "\n";
    out << "spine_width = " << d(geometry.spine_width) << "\n";
    out << "spine_height = " << d(geometry.spine_height) << "\n";
    out << "element_size = " << d(geometry.element_size) << "\n";
    if (!mesh_dir.empty()) out << "mesh_dir = " << mesh_dir << "\n";
    out << "\n[material_spa]\n";
    out << "mu = " << d(spa_material.mu) << "\n";
    out << "lambda = " << d(spa_material.lambda) << "\n";
    out << "density = " << d(spa_density) << "\n";
    out << "stable_lame_mapping = " << (spa_stable_lame_mapping ? "true" : "false") << "\n";
    out << "\n[material_spine]\n";
    out << "youngs = " << d(spine_material.youngs) << "\n";
    out << "poisson = " << d(spine_material.poisson) << "\n";
    out << "density = " << d(spine_density) << "\n";
    out << "\n[simulation]\n";
    out << "stiffness_scale = " << d(stiffness_scale) << "\n";
    out << "dt = " << d(integrator.dt) << "\n";
    out << "rayleigh_alpha = " << d(integrator.rayleigh_alpha) << "\n";
    out << "rayleigh_beta = " << d(integrator.rayleigh_beta) << "\n";
    out << "newton_iters = " << integrator.newton_iters << "\n";
    out << "solver = "
        << (integrator.solver == IntegratorConfig::Solver::Direct ? "direct" : "cg") << "\n";
    out << "solver_tol = " << d(integrator.solver_tol) << "\n";
    out << "gravity = " << d(integrator.gravity.x()) << "," << d(integrator.gravity.y()) << ","
        << d(integrator.gravity.z()) << "\n";
    out << "\n[actuation]\n";
    out << "mode = " << to_string(mode) << "\n";
    out << "\n[periodic]\n";
    out << "offset = " << d(periodic.offset) << "\n";
    out << "amplitude = " << d(periodic.amplitude) << "\n";
    out << "frequency = " << d(periodic.frequency) << "\n";
    out << "phase = " << d(periodic.phase) << "\n";
    out << "\n[controller]\n";
    out << "kp = " << d(controller.kp) << "\n";
    out << "ki = " << d(controller.ki) << "\n";
    out << "deadband = " << d(controller.deadband) << "\n";
    out << "pressure_min = " << d(controller.pressure_min) << "\n";
    out << "pressure_max = " << d(controller.pressure_max) << "\n";
    out << "working_unit = " << d(controller.working_unit) << "\n";
    out << "anti_windup = "
        << (controller.anti_windup == AntiWindup::UpperOnly
                ? "upper"
                : controller.anti_windup == AntiWindup::Full ? "full" : "off")
        << "\n";
    out << "target = " << d(target.x()) << "," << d(target.y()) << "," << d(target.z()) << "\n";
    out << "\n[experiment]\n";
    out << "duration = " << d(duration) << "\n";
    out << "log_stride = " << log_stride << "\n";
    out << "stop_epsilon = " << d(stop_epsilon) << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------

class Scene {
public:
    struct Record {
        double t = 0.0;
        std::array<double, 4> pressures{};
        Vec3 tip = Vec3::Zero();  // absolute position [m]
        bool has_controller = false;
        double e_k = 0.0;  // [working units]
        double u_k = 0.0;  // [Pa]
    };

    explicit Scene(const SceneConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        if (cfg_.mesh_dir.empty()) {
            GeneratedArm arm = generate_arm(cfg_.geometry);
            spa_ = std::move(arm.spa);
            spine_ = std::move(arm.spine);
            tip_point_ = arm.tip;
        } else {
            spa_ = load_mesh(cfg_.mesh_dir + "/spa.tmesh");
            spine_ = load_mesh(cfg_.mesh_dir + "/spine.tmesh");
            tip_point_ = Vec3(cfg_.geometry.length, 0.0, 0.0);
        }

        spa_body_ = model_.add_body(spa_, cfg_.scaled_spa_material(), cfg_.spa_density);
        spine_body_ = model_.add_body(spine_, cfg_.scaled_spine_material(), cfg_.spine_density);
        spa_offset_ = model_.body(spa_body_).node_offset;
        spine_offset_ = model_.body(spine_body_).node_offset;

        // Fixed proximal faces of both bodies.
        ConstraintSet cs;
        for (int n : spa_.node_group("fixed")) cs.fixed_nodes.push_back(n + spa_offset_);
        for (int n : spine_.node_group("fixed")) cs.fixed_nodes.push_back(n + spine_offset_);

        // Bilateral spine-SPA couplings (coincident rest points, pairwise).
        const auto& cpl_spa = spa_.node_group("coupling");
        const auto& cpl_spine = spine_.node_group("coupling");
        if (cpl_spa.size() != cpl_spine.size())
            throw Error("scene: coupling groups have mismatched sizes");
        for (size_t i = 0; i < cpl_spa.size(); ++i) {
            const Vec3 a = spa_.vertices[cpl_spa[i]];
            const Vec3 b = spine_.vertices[cpl_spine[i]];
            if ((a - b).norm() > 1e-9)
                throw Error("scene: coupling pair " + std::to_string(i) +
                            " is not coincident at rest");
            cs.bilateral_pairs.emplace_back(cpl_spa[i] + spa_offset_, cpl_spine[i] + spine_offset_);
        }
        constraints_ = cs.sanitized();
        if (constraints_.fixed_nodes.empty()) throw Error("scene: no fixed nodes");
        if (constraints_.bilateral_pairs.empty()) throw Error("scene: no coupling pairs");

        model_.finalize();
        state_.q = model_.rest_positions();
        state_.v = VecX::Zero(state_.q.size());

        fixed_targets_.resize(3 * constraints_.fixed_nodes.size());
        for (size_t i = 0; i < constraints_.fixed_nodes.size(); ++i)
            fixed_targets_.segment<3>(3 * i) = node_pos(state_.q, constraints_.fixed_nodes[i]);

        // Cavities (on the SPA body), closure-checked.
        for (int i = 0; i < 4; ++i) {
            const std::string name = "cavity_p" + std::to_string(i + 1);
            const auto& tris = spa_.tri_group(name);  // throws naming the group
            const auto closure = check_closed_surface(tris);
            if (!closure.closed || !closure.consistent)
                throw Error("scene: cavity group '" + name + "' is not a closed surface: " +
                            closure.detail);
            cavities_[i].group = name;
            cavities_[i].body = spa_body_;
            cavity_tris_[i].clear();
            for (const auto& t : tris)
                cavity_tris_[i].push_back(
                    {t[0] + spa_offset_, t[1] + spa_offset_, t[2] + spa_offset_});
        }

        // Tip marker map, bound to whichever body contains the tip point
        // (the SPA core is hollow, so this is normally the spine).
        try {
            tip_map_ = build_barycentric_map(spa_, {tip_point_});
            tip_offset_ = spa_offset_;
        } catch (const Error&) {
            tip_map_ = build_barycentric_map(spine_, {tip_point_});
            tip_offset_ = spine_offset_;
        }
        for (auto& e : tip_map_.entries)
            for (auto& n : e.nodes) n += tip_offset_;
        rest_tip_ = tip_position();
        controller_origin_ = rest_tip_;

        if (cfg_.mode == ActuationMode::Periodic) {
            const auto [pl, pr] = periodic_pressures(0.0, cfg_.periodic);
            set_cavity_pressures(merge_cavities(pl, pr));
        }
        if (cfg_.mode == ActuationMode::Controller) {
            ctrl_ = ControllerState{};
            ControllerConfig kc = cfg_.controller;
            kc.dt = cfg_.integrator.dt;
            ctrl_cfg_ = kc;
        }

        solver_.init(model_.stiffness(), constraints_);
        gravity_force_ = model_.gravity_forces(cfg_.integrator.gravity);
    }

    /// Evaluates actuation from the current (pre-step) state and returns the
    /// log record for this instant. In controller mode this advances the
    /// controller state (integral + pressures).
    Record evaluate_actuation() {
        Record rec;
        rec.t = time();
        rec.tip = tip_position();
        switch (cfg_.mode) {
            case ActuationMode::None:
                break;
            case ActuationMode::Periodic: {
                const auto [pl, pr] = periodic_pressures(rec.t, cfg_.periodic);
                set_cavity_pressures(merge_cavities(pl, pr));
                break;
            }
            case ActuationMode::Controller: {
                const Vec3 p_rel = rec.tip - controller_origin_;
                last_diag_ = controller_step(cfg_.target, p_rel, ctrl_, ctrl_cfg_);
                set_cavity_pressures(ctrl_.pressures);
                rec.has_controller = true;
                rec.e_k = last_diag_.e_k;
                rec.u_k = last_diag_.u_k;
                break;
            }
        }
        for (int i = 0; i < 4; ++i) rec.pressures[i] = cavities_[i].pressure;
        return rec;
    }

    /// Advances dynamics by one dt using the currently set cavity pressures.
    void advance() {
        VecX f_ext = gravity_force_;
        for (int i = 0; i < 4; ++i)
            accumulate_pressure_forces(cavity_tris_[i], state_.q, cavities_[i].pressure, f_ext,
                                       &cavities_[i].degenerate_skips);
        auto result = step(model_, state_, constraints_, fixed_targets_, f_ext, cfg_.integrator,
                           &solver_);
        state_ = std::move(result.state);
        ++step_count_;
        track_constraint_errors();
    }

    /// evaluate_actuation() + advance(): one full animation-loop iteration.
    Record animation_step() {
        Record rec = evaluate_actuation();
        advance();
        return rec;
    }

    Vec3 tip_position() const { return apply_map(tip_map_, state_.q)[0]; }
    const Vec3& rest_tip() const { return rest_tip_; }
    double time() const { return static_cast<double>(step_count_) * cfg_.integrator.dt; }
    long step_count() const { return step_count_; }

    /// Origin for the controller's tip error (defaults to the rest tip; the
    /// quadrant experiment re-bases it on the gravity-settled tip).
    const Vec3& controller_origin() const { return controller_origin_; }
    void set_controller_origin(const Vec3& origin) { controller_origin_ = origin; }

    /// Advances without actuation until the body is quiescent, then rewinds
    /// the clock, leaving a statically settled starting state.
    void settle(double v_tol = 1e-6, long max_steps = 4000) {
        const std::array<double, 4> saved = {cavities_[0].pressure, cavities_[1].pressure,
                                             cavities_[2].pressure, cavities_[3].pressure};
        set_cavity_pressures({0.0, 0.0, 0.0, 0.0});
        for (long k = 0; k < max_steps; ++k) {
            advance();
            if (k % 25 == 24 && state_.v.lpNorm<Eigen::Infinity>() < v_tol) break;
        }
        set_cavity_pressures(saved);
        step_count_ = 0;
    }

    const SceneConfig& config() const { return cfg_; }
    const MechanicalState& state() const { return state_; }
    const TetMesh& spa() const { return spa_; }
    const TetMesh& spine() const { return spine_; }
    const ConstraintSet& constraints() const { return constraints_; }
    const std::array<PressureCavity, 4>& cavities() const { return cavities_; }
    const ControllerState& controller_state() const { return ctrl_; }
    const ControllerDiagnostics& last_controller() const { return last_diag_; }
    SystemModel& model() { return model_; }
    int spa_node_offset() const { return spa_offset_; }
    int spine_node_offset() const { return spine_offset_; }

    double max_bilateral_gap() const { return max_gap_; }
    double max_fixed_drift() const { return max_drift_; }

    void set_cavity_pressures(const std::array<double, 4>& p) {
        for (int i = 0; i < 4; ++i) cavities_[i].pressure = p[i];
    }

private:
    void track_constraint_errors() {
        for (const auto& [a, b] : constraints_.bilateral_pairs)
            max_gap_ = std::max(max_gap_, (node_pos(state_.q, a) - node_pos(state_.q, b)).norm());
        for (size_t i = 0; i < constraints_.fixed_nodes.size(); ++i)
            max_drift_ = std::max(
                max_drift_, (node_pos(state_.q, constraints_.fixed_nodes[i]) -
                             Vec3(fixed_targets_.segment<3>(3 * i)))
                                .norm());
    }

    SceneConfig cfg_;
    TetMesh spa_, spine_;
    Vec3 tip_point_ = Vec3::Zero();
    SystemModel model_;
    int spa_body_ = 0, spine_body_ = 0;
    int spa_offset_ = 0, spine_offset_ = 0;
    ConstraintSet constraints_;
    VecX fixed_targets_;
    std::array<PressureCavity, 4> cavities_;
    std::array<std::vector<std::array<int, 3>>, 4> cavity_tris_;  // global node ids
    BarycentricMap tip_map_;
    int tip_offset_ = 0;
    Vec3 rest_tip_ = Vec3::Zero();
    Vec3 controller_origin_ = Vec3::Zero();
    MechanicalState state_;
    SaddleSolver solver_;
    ControllerState ctrl_;
    ControllerConfig ctrl_cfg_;
    ControllerDiagnostics last_diag_;
    VecX gravity_force_;
    long step_count_ = 0;
    double max_gap_ = 0.0, max_drift_ = 0.0;
};

}  // namespace softarm
