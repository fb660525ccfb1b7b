#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>

namespace softarm {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline Vec3 node_pos(const VecX& q, int node) { return q.segment<3>(3 * node); }

/// Signed volume of tet (a,b,c,d); positive when (b-a, c-a, d-a) is right-handed.
inline double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    return (b - a).cross(c - a).dot(d - a) / 6.0;
}

/// Area-weighted normal (b-a)x(c-a)/2. Safe for degenerate triangles (returns 0).
inline Vec3 triangle_area_vector(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a);
}

struct AreaNormal {
    double area = 0.0;
    Vec3 normal = Vec3::Zero();
};

/// Area and unit normal of a triangle; orientation follows the winding.
/// Throws on (near-)zero area, where the normal direction is meaningless.
inline AreaNormal triangle_area_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 av = triangle_area_vector(a, b, c);
    const double area = av.norm();
    const double edge = std::max({(b - a).norm(), (c - a).norm(), (c - b).norm()});
    if (!(area > 1e-12 * edge * edge)) {
        throw Error("triangle_area_normal: zero-area triangle");
    }
    return {area, av / area};
}

inline AreaNormal triangle_area_normal(const VecX& q, const std::array<int, 3>& tri) {
    return triangle_area_normal(node_pos(q, tri[0]), node_pos(q, tri[1]), node_pos(q, tri[2]));
}

}  // namespace softarm
