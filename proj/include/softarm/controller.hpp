#pragma once

// Error-based cavity pressure controller. Per control step:
//
//   e   = p* - p                        Cartesian tip error
//   d   = A e                           cavity demands, A = [1 -1 -1
//                                                            1  1 -1
//                                                            1 -1  1
//                                                            1  1  1]
//   d~  = deadband(d)                   |d_i| < delta zeroed
//   e_k = |d~|_2                        scalar error
//   I_k = I_{k-1} + e_k dt              integral (see anti-windup modes)
//   u_k = kp e_k + ki I_k               PI magnitude
//   dP  = u_k d~ / |d~|_1               signed L1 distribution
//   P   = clip(P + dP, P_min, P_max)
//
// Demands are evaluated in a configurable working length unit (default cm)
// so the dimensionless gains and deadband keep their intended magnitudes.

#include "softarm/geometry.hpp"

#include <array>
#include <cmath>

namespace softarm {

enum class AntiWindup {
    Off,       // plain integrator
    UpperOnly, // hold the integral while a cavity pinned at P_max still demands more
    Full,      // hold while any cavity pinned at either bound demands past it
};

struct ControllerConfig {
    double kp = 2e-6;            // [Pa per working unit]
    double ki = 2e-8;            // [Pa per working unit second]
    double deadband = 0.05;      // [working units]
    double pressure_min = 0.0;   // [Pa]
    double pressure_max = 1.3;   // [Pa]
    double dt = 0.01;            // control period [s]
    double working_unit = 0.01;  // meters per demand unit (0.01 = cm)
    AntiWindup anti_windup = AntiWindup::UpperOnly;

    void validate() const {
        if (kp < 0.0 || ki < 0.0) throw Error("controller: gains must be >= 0");
        if (deadband < 0.0) throw Error("controller: deadband must be >= 0");
        if (!(pressure_min < pressure_max))
            throw Error("controller: pressure_min must be < pressure_max");
        if (!(dt > 0.0)) throw Error("controller: dt must be > 0");
        if (!(working_unit > 0.0)) throw Error("controller: working_unit must be > 0");
    }
};

struct ControllerState {
    double integral = 0.0;  // [working unit * s]
    std::array<double, 4> pressures{0.0, 0.0, 0.0, 0.0};
};

inline Vec3 tracking_error(const Vec3& p_star, const Vec3& p) { return p_star - p; }

inline std::array<double, 4> demand(const Vec3& e) {
    return {e.x() - e.y() - e.z(), e.x() + e.y() - e.z(), e.x() - e.y() + e.z(),
            e.x() + e.y() + e.z()};
}

/// Components with |d_i| < delta are zeroed (strict inequality).
inline std::array<double, 4> apply_deadband(const std::array<double, 4>& d, double delta) {
    std::array<double, 4> out;
    for (int i = 0; i < 4; ++i) out[i] = (std::abs(d[i]) < delta) ? 0.0 : d[i];
    return out;
}

inline double scalar_error(const std::array<double, 4>& d) {
    return std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]);
}

/// Accumulates the integral (unless held) and returns u_k >= 0.
inline double pi_update(ControllerState& state, double e_k, const ControllerConfig& cfg,
                        bool hold_integral = false) {
    if (!hold_integral) state.integral += e_k * cfg.dt;
    return cfg.kp * e_k + cfg.ki * state.integral;
}

/// Distributes u proportionally to the signed demands; sum of |dP| equals u
/// whenever any demand survives the deadband.
inline std::array<double, 4> distribute(double u, const std::array<double, 4>& d) {
    const double alpha = std::abs(d[0]) + std::abs(d[1]) + std::abs(d[2]) + std::abs(d[3]);
    if (alpha <= 0.0) return {0.0, 0.0, 0.0, 0.0};
    return {u * d[0] / alpha, u * d[1] / alpha, u * d[2] / alpha, u * d[3] / alpha};
}

inline double clip(double x, double a, double b) { return std::min(std::max(x, a), b); }

inline std::array<double, 4> clip_pressures(const std::array<double, 4>& p,
                                            const std::array<double, 4>& dp,
                                            const ControllerConfig& cfg) {
    std::array<double, 4> out;
    for (int i = 0; i < 4; ++i) out[i] = clip(p[i] + dp[i], cfg.pressure_min, cfg.pressure_max);
    return out;
}

struct ControllerDiagnostics {
    double e_k = 0.0;  // scalar error [working units]
    double u_k = 0.0;  // PI output [Pa]
    std::array<double, 4> demands{};
    bool integral_held = false;
};

/// Full chain: error -> demand -> deadband -> PI -> distribute -> clip.
/// Positions are in meters; demands are formed in working units.
inline ControllerDiagnostics controller_step(const Vec3& p_star, const Vec3& p_tip,
                                             ControllerState& state,
                                             const ControllerConfig& cfg) {
    cfg.validate();
    const Vec3 e = tracking_error(p_star, p_tip) / cfg.working_unit;
    const std::array<double, 4> d_tilde = apply_deadband(demand(e), cfg.deadband);
    const double e_k = scalar_error(d_tilde);

    bool hold = false;
    if (cfg.anti_windup != AntiWindup::Off) {
        for (int i = 0; i < 4; ++i) {
            const bool at_max = state.pressures[i] >= cfg.pressure_max && d_tilde[i] > 0.0;
            const bool at_min = state.pressures[i] <= cfg.pressure_min && d_tilde[i] < 0.0;
            if (at_max || (cfg.anti_windup == AntiWindup::Full && at_min)) {
                hold = true;
                break;
            }
        }
    }

    const double u_k = pi_update(state, e_k, cfg, hold);
    state.pressures = clip_pressures(state.pressures, distribute(u_k, d_tilde), cfg);

    ControllerDiagnostics diag;
    diag.e_k = e_k;
    diag.u_k = u_k;
    diag.demands = d_tilde;
    diag.integral_held = hold;
    return diag;
}

}  // namespace softarm
