#pragma once

// Constitutive models for linear tetrahedra:
//
//   - Stable Neo-Hookean (inversion-robust hyperelasticity):
//       Psi = mu/2 (I_C - 3) - mu (J - 1) + lambda/2 (J - 1)^2
//     with I_C = tr(F^T F), J = det F. Stress-free and zero-energy at rest
//     and under any rotation; well-defined for J <= 0.
//
//   - Small-strain linear elasticity:
//       eps = (F + F^T)/2 - I,  sigma = 2 mu_L eps + lambda_L tr(eps) I
//       Psi = mu_L tr(eps^2) + lambda_L/2 tr(eps)^2
//
// Element forces are the negative energy gradient; element stiffness the
// (analytic) energy Hessian. Finite-difference oracles in the test suite
// check both.

#include "softarm/tet_mesh.hpp"

#include <Eigen/Sparse>

#include <variant>
#include <vector>

namespace softarm {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat9x12 = Eigen::Matrix<double, 9, 12>;
using SpMat = Eigen::SparseMatrix<double>;

struct StableNeoHookeanParams {
    double mu = 0.0;      // shear-like modulus [Pa]
    double lambda = 0.0;  // volumetric modulus [Pa]

    void validate() const {
        if (!(mu > 0.0)) throw Error("stable neo-hookean: mu must be > 0");
        if (lambda < 0.0) throw Error("stable neo-hookean: lambda must be >= 0");
    }
};

struct LinearElasticParams {
    double youngs = 0.0;   // E [Pa]
    double poisson = 0.0;  // nu

    double lame_mu() const { return youngs / (2.0 * (1.0 + poisson)); }
    double lame_lambda() const {
        return youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    }
    void validate() const {
        if (!(youngs > 0.0)) throw Error("linear elastic: E must be > 0");
        if (!(poisson > -1.0 && poisson < 0.5))
            throw Error("linear elastic: nu must lie in (-1, 0.5)");
    }
};

using MaterialModel = std::variant<StableNeoHookeanParams, LinearElasticParams>;

// ---------------------------------------------------------------------------
// Element kinematics

struct ElementBasis {
    Mat3 dm_inv = Mat3::Identity();  // inverse rest shape matrix
    double volume = 0.0;             // rest volume [m^3]
};

inline ElementBasis make_element_basis(const Vec3& x0, const Vec3& x1, const Vec3& x2,
                                       const Vec3& x3) {
    Mat3 dm;
    dm.col(0) = x1 - x0;
    dm.col(1) = x2 - x0;
    dm.col(2) = x3 - x0;
    const double vol = dm.determinant() / 6.0;
    if (!(vol > 0.0)) throw Error("element basis: non-positive rest volume");
    ElementBasis basis;
    basis.dm_inv = dm.inverse();
    basis.volume = vol;
    return basis;
}

inline std::vector<ElementBasis> make_element_bases(const TetMesh& mesh) {
    std::vector<ElementBasis> bases;
    bases.reserve(mesh.tets.size());
    for (const auto& t : mesh.tets)
        bases.push_back(make_element_basis(mesh.vertices[t[0]], mesh.vertices[t[1]],
                                           mesh.vertices[t[2]], mesh.vertices[t[3]]));
    return bases;
}

inline Mat3 deformation_gradient(const ElementBasis& basis, const Vec3& x0, const Vec3& x1,
                                 const Vec3& x2, const Vec3& x3) {
    Mat3 ds;
    ds.col(0) = x1 - x0;
    ds.col(1) = x2 - x0;
    ds.col(2) = x3 - x0;
    return ds * basis.dm_inv;
}

/// Cofactor matrix of F (= dJ/dF).
inline Mat3 cofactor(const Mat3& f) {
    Mat3 c;
    c.col(0) = f.col(1).cross(f.col(2));
    c.col(1) = f.col(2).cross(f.col(0));
    c.col(2) = f.col(0).cross(f.col(1));
    return c;
}

// ---------------------------------------------------------------------------
// Stable Neo-Hookean

inline double snh_energy_density(const Mat3& f, const StableNeoHookeanParams& p) {
    const double ic = f.squaredNorm();
    const double j = f.determinant();
    return 0.5 * p.mu * (ic - 3.0) - p.mu * (j - 1.0) + 0.5 * p.lambda * (j - 1.0) * (j - 1.0);
}

inline Mat3 snh_first_piola(const Mat3& f, const StableNeoHookeanParams& p) {
    const double j = f.determinant();
    return p.mu * f + (p.lambda * (j - 1.0) - p.mu) * cofactor(f);
}

namespace detail {

inline Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return s;
}

// d vec(cof F) / d vec(F) (column-major vec), built from the cross-product
// structure of the cofactor columns.
inline Mat9 cofactor_derivative(const Mat3& f) {
    const Mat3 h0 = skew(f.col(0)), h1 = skew(f.col(1)), h2 = skew(f.col(2));
    Mat9 d = Mat9::Zero();
    d.block<3, 3>(0, 3) = -h2;
    d.block<3, 3>(0, 6) = h1;
    d.block<3, 3>(3, 0) = h2;
    d.block<3, 3>(3, 6) = -h0;
    d.block<3, 3>(6, 0) = -h1;
    d.block<3, 3>(6, 3) = h0;
    return d;
}

inline Vec9 vec(const Mat3& m) {
    Vec9 v;
    v << m.col(0), m.col(1), m.col(2);
    return v;
}

}  // namespace detail

/// d vec(P) / d vec(F) for the stable Neo-Hookean stress (symmetric).
inline Mat9 snh_piola_derivative(const Mat3& f, const StableNeoHookeanParams& p) {
    const double j = f.determinant();
    const Vec9 g = detail::vec(cofactor(f));
    Mat9 d = p.mu * Mat9::Identity();
    d += p.lambda * g * g.transpose();
    d += (p.lambda * (j - 1.0) - p.mu) * detail::cofactor_derivative(f);
    return d;
}

// ---------------------------------------------------------------------------
// Linear elasticity

inline double linear_energy_density(const Mat3& f, const LinearElasticParams& p) {
    const Mat3 eps = 0.5 * (f + f.transpose()) - Mat3::Identity();
    const double tr = eps.trace();
    return p.lame_mu() * (eps * eps).trace() + 0.5 * p.lame_lambda() * tr * tr;
}

/// Small-strain Cauchy stress (equals the first Piola stress in this model).
inline Mat3 linear_stress(const Mat3& f, const LinearElasticParams& p) {
    const Mat3 eps = 0.5 * (f + f.transpose()) - Mat3::Identity();
    return 2.0 * p.lame_mu() * eps + p.lame_lambda() * eps.trace() * Mat3::Identity();
}

inline Mat9 linear_piola_derivative(const LinearElasticParams& p) {
    Mat9 d = Mat9::Zero();
    const double mu = p.lame_mu(), la = p.lame_lambda();
    // mu (dF + dF^T) + lambda tr(dF) I
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 3; ++r) {
            d(3 * c + r, 3 * c + r) += mu;
            d(3 * c + r, 3 * r + c) += mu;
        }
    const Vec9 id = detail::vec(Mat3::Identity());
    d += la * id * id.transpose();
    return d;
}

// ---------------------------------------------------------------------------
// Unified evaluators

inline double energy_density(const Mat3& f, const MaterialModel& m) {
    return std::visit(
        [&](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, StableNeoHookeanParams>)
                return snh_energy_density(f, p);
            else
                return linear_energy_density(f, p);
        },
        m);
}

inline Mat3 first_piola(const Mat3& f, const MaterialModel& m) {
    return std::visit(
        [&](const auto& p) -> Mat3 {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, StableNeoHookeanParams>)
                return snh_first_piola(f, p);
            else
                return linear_stress(f, p);
        },
        m);
}

inline Mat9 piola_derivative(const Mat3& f, const MaterialModel& m) {
    return std::visit(
        [&](const auto& p) -> Mat9 {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, StableNeoHookeanParams>)
                return snh_piola_derivative(f, p);
            else
                return linear_piola_derivative(p);
        },
        m);
}

// ---------------------------------------------------------------------------
// Element force and stiffness

inline double element_energy(const ElementBasis& basis, const Vec3& x0, const Vec3& x1,
                             const Vec3& x2, const Vec3& x3, const MaterialModel& m) {
    return basis.volume * energy_density(deformation_gradient(basis, x0, x1, x2, x3), m);
}

/// Nodal forces f = -d(W Psi)/dx. Nodes 1..3 come from -W P Dm^-T; node 0
/// balances them (translation invariance).
inline std::array<Vec3, 4> element_forces(const ElementBasis& basis, const Vec3& x0,
                                          const Vec3& x1, const Vec3& x2, const Vec3& x3,
                                          const MaterialModel& m) {
    const Mat3 f = deformation_gradient(basis, x0, x1, x2, x3);
    const Mat3 grad = basis.volume * first_piola(f, m) * basis.dm_inv.transpose();
    std::array<Vec3, 4> out;
    out[1] = -grad.col(0);
    out[2] = -grad.col(1);
    out[3] = -grad.col(2);
    out[0] = grad.col(0) + grad.col(1) + grad.col(2);
    return out;
}

/// vec(F) = B x with x the stacked nodal coordinates (12).
inline Mat9x12 deformation_gradient_jacobian(const ElementBasis& basis) {
    Mat9x12 b = Mat9x12::Zero();
    for (int col = 0; col < 3; ++col) {   // F column
        for (int node = 1; node <= 3; ++node) {
            const double w = basis.dm_inv(node - 1, col);
            for (int a = 0; a < 3; ++a) {
                b(3 * col + a, 3 * node + a) = w;
                b(3 * col + a, a) -= w;
            }
        }
    }
    return b;
}

/// Element stiffness K = -df/dx = W B^T (dP/dF) B (12x12, symmetric).
inline Mat12 element_stiffness(const ElementBasis& basis, const Vec3& x0, const Vec3& x1,
                               const Vec3& x2, const Vec3& x3, const MaterialModel& m) {
    const Mat3 f = deformation_gradient(basis, x0, x1, x2, x3);
    const Mat9x12 b = deformation_gradient_jacobian(basis);
    return basis.volume * b.transpose() * piola_derivative(f, m) * b;
}

// ---------------------------------------------------------------------------
// Global assembly (reference path; the dynamics module has a faster
// pattern-reusing assembler for the stepping loop)

inline void assemble(const TetMesh& mesh, const std::vector<ElementBasis>& bases, const VecX& q,
                     const MaterialModel& m, VecX& forces, SpMat& stiffness) {
    const int n = mesh.num_vertices();
    if (q.size() != 3 * n) throw Error("assemble: state size mismatch");
    forces = VecX::Zero(3 * n);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(mesh.tets.size() * 144);
    for (size_t t = 0; t < mesh.tets.size(); ++t) {
        const auto& k = mesh.tets[t];
        const Vec3 x0 = node_pos(q, k[0]), x1 = node_pos(q, k[1]), x2 = node_pos(q, k[2]),
                   x3 = node_pos(q, k[3]);
        const auto fe = element_forces(bases[t], x0, x1, x2, x3, m);
        for (int i = 0; i < 4; ++i) forces.segment<3>(3 * k[i]) += fe[i];
        const Mat12 ke = element_stiffness(bases[t], x0, x1, x2, x3, m);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                for (int a = 0; a < 3; ++a)
                    for (int c = 0; c < 3; ++c)
                        trips.emplace_back(3 * k[i] + a, 3 * k[j] + c, ke(3 * i + a, 3 * j + c));
    }
    stiffness.resize(3 * n, 3 * n);
    stiffness.setFromTriplets(trips.begin(), trips.end());
}

}  // namespace softarm
