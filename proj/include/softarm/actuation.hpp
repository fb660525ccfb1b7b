#pragma once

// Pneumatic cavity actuation. A cavity is a closed triangle surface inside a
// body; uniform pressure on it becomes nodal follower loads computed from
// the deformed geometry. Includes the sinusoidal two-sided signal and the
// merge of the four cavities into left/right pairs.

#include "softarm/tet_mesh.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace softarm {

struct PressureCavity {
    std::string group;      // triangle group, wound so normals point into the solid
    int body = 0;           // body index in the scene
    double pressure = 0.0;  // [Pa]
    int degenerate_skips = 0;
};

/// Accumulates P * A * n / 3 onto each node of every triangle, using
/// deformed areas and normals (follower load). Triangle normals follow the
/// group winding: into the solid, so positive pressure pushes the cavity
/// wall outward. Degenerate triangles are skipped and counted.
inline void accumulate_pressure_forces(const std::vector<std::array<int, 3>>& tris, const VecX& q,
                                       double pressure, VecX& forces,
                                       int* degenerate_skips = nullptr) {
    for (const auto& t : tris) {
        const Vec3 a = node_pos(q, t[0]), b = node_pos(q, t[1]), c = node_pos(q, t[2]);
        const Vec3 area_n = triangle_area_vector(a, b, c);
        const double area = area_n.norm();
        const double edge = std::max({(b - a).norm(), (c - a).norm(), (c - b).norm()});
        if (!(area > 1e-14 * edge * edge)) {
            if (degenerate_skips) ++(*degenerate_skips);
            continue;
        }
        const Vec3 f = (pressure / 3.0) * area_n;
        forces.segment<3>(3 * t[0]) += f;
        forces.segment<3>(3 * t[1]) += f;
        forces.segment<3>(3 * t[2]) += f;
    }
}

inline VecX pressure_forces(const std::vector<std::array<int, 3>>& tris, const VecX& q,
                            double pressure, int* degenerate_skips = nullptr) {
    VecX f = VecX::Zero(q.size());
    accumulate_pressure_forces(tris, q, pressure, f, degenerate_skips);
    return f;
}

// ---------------------------------------------------------------------------
// Periodic two-sided signal
//
//   P_left(t)  = P0 + A sin(2 pi f t)
//   P_right(t) = P0 - A sin(2 pi f t)

struct PeriodicSignalConfig {
    double offset = 0.65;     // P0 [Pa]
    double amplitude = 0.65;  // A [Pa]
    double frequency = 0.05;  // f [Hz]
    double phase = 0.0;       // [rad]

    void validate() const {
        if (!(frequency > 0.0)) throw Error("periodic signal: frequency must be > 0");
        if (amplitude < 0.0) throw Error("periodic signal: amplitude must be >= 0");
        if (offset - amplitude < -1e-12)
            throw Error("periodic signal: P0 - A < 0 would drive pressures negative");
    }
};

/// Signal evaluated at phase u measured in half-periods (u = 2 f t). Using
/// the half-period parity keeps sin(pi (u+1)) = -sin(pi u) exact, so
/// advancing u by 1 swaps the two sides bit-for-bit. The larger side is
/// computed first and the other as the exact complement to 2 P0.
inline std::pair<double, double> pressures_at_phase(double u, const PeriodicSignalConfig& cfg) {
    const double k = std::floor(u);
    double s = std::sin(std::numbers::pi * (u - k) + cfg.phase);
    if (static_cast<long long>(k) % 2 != 0) s = -s;
    const double two_p0 = 2.0 * cfg.offset;
    if (s >= 0.0) {
        const double left = cfg.offset + cfg.amplitude * s;
        return {left, two_p0 - left};
    }
    const double right = cfg.offset - cfg.amplitude * s;
    return {two_p0 - right, right};
}

/// (P_left, P_right) at time t; both lie in [P0 - A, P0 + A] and sum to
/// exactly 2 P0.
inline std::pair<double, double> periodic_pressures(double t, const PeriodicSignalConfig& cfg) {
    cfg.validate();
    if (t < 0.0) throw Error("periodic signal: t must be >= 0");
    return pressures_at_phase(2.0 * cfg.frequency * t, cfg);
}

/// Splits the merged side pressures back onto the four cavities:
/// P2 = P4 = P_left / 2 and P1 = P3 = P_right / 2, so the pair sums
/// reproduce the side pressures identically.
inline std::array<double, 4> merge_cavities(double p_left, double p_right) {
    if (p_left < 0.0 || p_right < 0.0) throw Error("merge_cavities: negative side pressure");
    const double half_left = p_left / 2.0;
    const double half_right = p_right / 2.0;
    return {half_right, half_left, half_right, half_left};
}

}  // namespace softarm
