#pragma once

// Time integration of the constrained equations of motion
//
//   M dv/dt = f_ext - f_int(q, v) + H^T lambda
//
// with lumped mass, Rayleigh damping C = alpha M + beta K, and implicit
// Euler linearized once per step (optional extra Newton refinements):
//
//   (M + dt C + dt^2 K) dv = dt (f_ext + f_int(q) - C v) - dt^2 K v
//
// where K = -d f_int / dq at the current state. Constraints (pinned nodes,
// node-node bilateral couplings) are enforced at the velocity level with
// position drift correction and solved together with the momentum equation
// as one sparse saddle-point system.

#include "softarm/materials.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

namespace softarm {

struct MechanicalState {
    VecX q;  // positions, 3n
    VecX v;  // velocities, 3n

    void validate() const {
        if (q.size() != v.size()) throw Error("mechanical state: q/v size mismatch");
        if (!q.allFinite() || !v.allFinite()) throw Error("mechanical state: non-finite entries");
    }
};

struct MassModel {
    VecX node_mass;  // per node [kg]
    double density = 0.0;

    double total() const { return node_mass.sum(); }
};

/// Each tet spreads rho * W / 4 to its four nodes.
inline MassModel lump_mass(const TetMesh& mesh, double density) {
    if (!(density > 0.0)) throw Error("lump_mass: density must be > 0");
    MassModel m;
    m.density = density;
    m.node_mass = VecX::Zero(mesh.num_vertices());
    for (int t = 0; t < mesh.num_tets(); ++t) {
        const double w = density * mesh.signed_tet_volume(t) / 4.0;
        for (int j = 0; j < 4; ++j) m.node_mass[mesh.tets[t][j]] += w;
    }
    return m;
}

struct ConstraintSet {
    std::vector<int> fixed_nodes;                     // global node ids, all 3 dofs pinned
    std::vector<std::pair<int, int>> bilateral_pairs; // (a, b): q_a == q_b

    int rows() const {
        return 3 * static_cast<int>(fixed_nodes.size() + bilateral_pairs.size());
    }

    /// Removes duplicate constraints and bilateral pairs that touch a fixed
    /// node (those rows would be linearly dependent on the fixed rows).
    ConstraintSet sanitized() const {
        ConstraintSet out;
        std::set<int> fixed(fixed_nodes.begin(), fixed_nodes.end());
        out.fixed_nodes.assign(fixed.begin(), fixed.end());
        std::set<std::pair<int, int>> seen;
        for (auto [a, b] : bilateral_pairs) {
            if (a == b) continue;
            if (fixed.count(a) || fixed.count(b)) continue;
            const auto key = std::minmax(a, b);
            if (!seen.insert(key).second) continue;
            out.bilateral_pairs.emplace_back(a, b);
        }
        return out;
    }
};

struct IntegratorConfig {
    double dt = 0.01;             // [s]
    double rayleigh_alpha = 0.1;  // mass damping [1/s]
    double rayleigh_beta = 0.1;   // stiffness damping [s]
    int newton_iters = 1;
    enum class Solver { Direct, ConjugateGradient } solver = Solver::Direct;
    double solver_tol = 1e-10;
    Vec3 gravity{0.0, 0.0, -9.81};

    void validate() const {
        if (!(dt > 0.0)) throw Error("integrator: dt must be > 0");
        if (rayleigh_alpha < 0.0 || rayleigh_beta < 0.0)
            throw Error("integrator: rayleigh coefficients must be >= 0");
        if (newton_iters < 1) throw Error("integrator: newton_iters must be >= 1");
        if (!(solver_tol > 0.0)) throw Error("integrator: solver tolerance must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Multi-body FEM system with pattern-reusing assembly

class SystemModel {
public:
    struct Body {
        std::vector<std::array<int, 4>> tets;  // global node ids
        std::vector<ElementBasis> bases;
        MaterialModel material;
        int node_offset = 0;
        int node_count = 0;
    };

    int add_body(const TetMesh& mesh, const MaterialModel& material, double density) {
        if (finalized_) throw Error("system model: cannot add bodies after finalize");
        Body body;
        body.material = material;
        body.node_offset = total_nodes_;
        body.node_count = mesh.num_vertices();
        body.bases = make_element_bases(mesh);
        body.tets.reserve(mesh.tets.size());
        for (const auto& t : mesh.tets)
            body.tets.push_back({t[0] + total_nodes_, t[1] + total_nodes_, t[2] + total_nodes_,
                                 t[3] + total_nodes_});
        const MassModel mm = lump_mass(mesh, density);
        node_mass_.conservativeResize(total_nodes_ + body.node_count);
        node_mass_.tail(body.node_count) = mm.node_mass;
        rest_.conservativeResize(3 * (total_nodes_ + body.node_count));
        rest_.tail(3 * body.node_count) = mesh.rest_positions();
        total_nodes_ += body.node_count;
        bodies_.push_back(std::move(body));
        return static_cast<int>(bodies_.size()) - 1;
    }

    /// Nodes with mass but no elements (point-mass systems in tests).
    int add_free_nodes(int count, double mass_each, const VecX& positions) {
        if (finalized_) throw Error("system model: cannot add nodes after finalize");
        if (positions.size() != 3 * count) throw Error("add_free_nodes: size mismatch");
        node_mass_.conservativeResize(total_nodes_ + count);
        node_mass_.tail(count).setConstant(mass_each);
        rest_.conservativeResize(3 * (total_nodes_ + count));
        rest_.tail(3 * count) = positions;
        const int first = total_nodes_;
        total_nodes_ += count;
        return first;
    }

    void finalize() {
        if (finalized_) return;
        const int n3 = 3 * total_nodes_;
        std::vector<Eigen::Triplet<double>> trips;
        for (int d = 0; d < n3; ++d) trips.emplace_back(d, d, 0.0);
        for (const auto& body : bodies_)
            for (const auto& t : body.tets)
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j)
                        for (int a = 0; a < 3; ++a)
                            for (int c = 0; c < 3; ++c)
                                trips.emplace_back(3 * t[i] + a, 3 * t[j] + c, 0.0);
        stiffness_.resize(n3, n3);
        stiffness_.setFromTriplets(trips.begin(), trips.end());
        stiffness_.makeCompressed();

        // nnz scatter table per element (4x4 blocks of 3x3)
        scatter_.clear();
        for (const auto& body : bodies_) {
            for (const auto& t : body.tets) {
                std::array<int, 144> idx;
                int s = 0;
                for (int j = 0; j < 4; ++j)
                    for (int c = 0; c < 3; ++c) {
                        const int col = 3 * t[j] + c;
                        for (int i = 0; i < 4; ++i)
                            for (int a = 0; a < 3; ++a) idx[s++] = nnz_index(3 * t[i] + a, col);
                    }
                scatter_.push_back(idx);
            }
        }
        diag_nnz_.resize(n3);
        for (int d = 0; d < n3; ++d) diag_nnz_[d] = nnz_index(d, d);
        f_int_ = VecX::Zero(n3);
        finalized_ = true;
    }

    int total_nodes() const { return total_nodes_; }
    int num_bodies() const { return static_cast<int>(bodies_.size()); }
    const Body& body(int i) const { return bodies_[i]; }
    const VecX& rest_positions() const { return rest_; }
    const VecX& node_mass() const { return node_mass_; }

    VecX mass3() const {
        VecX m(3 * total_nodes_);
        for (int i = 0; i < total_nodes_; ++i) m.segment<3>(3 * i).setConstant(node_mass_[i]);
        return m;
    }

    VecX gravity_forces(const Vec3& g) const {
        VecX f(3 * total_nodes_);
        for (int i = 0; i < total_nodes_; ++i) f.segment<3>(3 * i) = node_mass_[i] * g;
        return f;
    }

    /// Assembles internal forces and tangent stiffness at q.
    void update(const VecX& q) {
        require_finalized();
        if (q.size() != 3 * total_nodes_) throw Error("system model: state size mismatch");
        f_int_.setZero();
        double* kv = stiffness_.valuePtr();
        std::fill(kv, kv + stiffness_.nonZeros(), 0.0);
        size_t elem = 0;
        for (const auto& body : bodies_) {
            for (size_t t = 0; t < body.tets.size(); ++t, ++elem) {
                const auto& k = body.tets[t];
                const Vec3 x0 = node_pos(q, k[0]), x1 = node_pos(q, k[1]),
                           x2 = node_pos(q, k[2]), x3 = node_pos(q, k[3]);
                const auto fe = element_forces(body.bases[t], x0, x1, x2, x3, body.material);
                for (int i = 0; i < 4; ++i) f_int_.segment<3>(3 * k[i]) += fe[i];
                const Mat12 ke =
                    element_stiffness(body.bases[t], x0, x1, x2, x3, body.material);
                const auto& idx = scatter_[elem];
                int s = 0;
                for (int j = 0; j < 4; ++j)
                    for (int c = 0; c < 3; ++c)
                        for (int i = 0; i < 4; ++i)
                            for (int a = 0; a < 3; ++a) kv[idx[s++]] += ke(3 * i + a, 3 * j + c);
            }
        }
    }

    const VecX& internal_forces() const { return f_int_; }
    const SpMat& stiffness() const { return stiffness_; }
    const std::vector<int>& diag_nnz() const { return diag_nnz_; }

    double elastic_energy(const VecX& q) const {
        double e = 0.0;
        for (const auto& body : bodies_)
            for (size_t t = 0; t < body.tets.size(); ++t) {
                const auto& k = body.tets[t];
                e += element_energy(body.bases[t], node_pos(q, k[0]), node_pos(q, k[1]),
                                    node_pos(q, k[2]), node_pos(q, k[3]), body.material);
            }
        return e;
    }

    double kinetic_energy(const VecX& v) const {
        double e = 0.0;
        for (int i = 0; i < total_nodes_; ++i) e += 0.5 * node_mass_[i] * v.segment<3>(3 * i).squaredNorm();
        return e;
    }

private:
    void require_finalized() const {
        if (!finalized_) throw Error("system model: finalize() not called");
    }

    int nnz_index(int row, int col) const {
        const int* outer = stiffness_.outerIndexPtr();
        const int* inner = stiffness_.innerIndexPtr();
        const int* lo = inner + outer[col];
        const int* hi = inner + outer[col + 1];
        const int* it = std::lower_bound(lo, hi, row);
        if (it == hi || *it != row) throw Error("system model: entry missing from pattern");
        return static_cast<int>(it - inner);
    }

    std::vector<Body> bodies_;
    int total_nodes_ = 0;
    VecX node_mass_;  // per node
    VecX rest_;
    SpMat stiffness_;
    std::vector<std::array<int, 144>> scatter_;
    std::vector<int> diag_nnz_;
    VecX f_int_;
    bool finalized_ = false;
};

// ---------------------------------------------------------------------------
// Implicit Euler system assembly

struct LinearSystem {
    SpMat A;  // (1 + dt a) M + (dt b + dt^2) K, symmetric
    VecX b;   // dt (f_ext + f_int - a M v) - (dt b + dt^2) K v
};

/// Builds the implicit-Euler velocity-increment system at the model's
/// current assembly point (call model.update(q) first).
inline LinearSystem assemble_system(const SystemModel& model, const MechanicalState& state,
                                    const VecX& f_ext, const IntegratorConfig& cfg) {
    cfg.validate();
    const double dt = cfg.dt;
    const double kscale = cfg.rayleigh_beta * dt + dt * dt;
    const double mscale = 1.0 + cfg.rayleigh_alpha * dt;

    LinearSystem sys;
    sys.A = model.stiffness();
    double* av = sys.A.valuePtr();
    for (Eigen::Index i = 0; i < sys.A.nonZeros(); ++i) av[i] *= kscale;
    const VecX m3 = model.mass3();
    for (int d = 0; d < 3 * model.total_nodes(); ++d) av[model.diag_nnz()[d]] += mscale * m3[d];

    sys.b = dt * (f_ext + model.internal_forces() -
                  cfg.rayleigh_alpha * m3.cwiseProduct(state.v)) -
            kscale * (model.stiffness() * state.v);
    return sys;
}

// ---------------------------------------------------------------------------
// Constrained saddle-point solve
//
// [ A   H^T ] [ dv ]   [ b ]
// [ H  -e I ] [ mu ] = [ c ]
//
// The tiny -e I block makes the system quasi-definite so an unpivoted sparse
// LDLT applies; the induced constraint violation is O(e |mu|), far below the
// gap tolerances used here. Reported multipliers are the constraint forces
// lambda = -mu / dt in the momentum equation.

class SaddleSolver {
public:
    void init(const SpMat& a_pattern, const ConstraintSet& constraints) {
        cs_ = constraints;
        n3_ = static_cast<int>(a_pattern.rows());
        m_ = cs_.rows();
        const int nfix = static_cast<int>(cs_.fixed_nodes.size());
        const int n = n3_ + m_;

        // Unpivoted LDLT on the quasi-definite KKT matrix is stable as long
        // as a constraint row is eliminated after the dofs it touches: its
        // pivot is then a Schur-complement value of the already-factored
        // (positive definite) dof block. Order dofs by AMD and splice each
        // constraint row in right after its last dof; leaving all constraint
        // rows to the end instead would make them accumulate the fill of the
        // whole factor.
        Eigen::AMDOrdering<int> amd;
        Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
        {
            SpMat pattern = a_pattern;
            amd(pattern.selfadjointView<Eigen::Lower>(), perm);
        }
        std::vector<int> dof_rank(n3_);
        for (int d = 0; d < n3_; ++d) dof_rank[perm.indices()[d]] = d;

        struct HEntry {
            int row;
            int dof;
            double coeff;
        };
        std::vector<HEntry> h_entries;
        for (int i = 0; i < nfix; ++i)
            for (int a = 0; a < 3; ++a)
                h_entries.push_back({3 * i + a, 3 * cs_.fixed_nodes[i] + a, 1.0});
        for (size_t p = 0; p < cs_.bilateral_pairs.size(); ++p)
            for (int a = 0; a < 3; ++a) {
                const int row = 3 * (nfix + static_cast<int>(p)) + a;
                h_entries.push_back({row, 3 * cs_.bilateral_pairs[p].first + a, 1.0});
                h_entries.push_back({row, 3 * cs_.bilateral_pairs[p].second + a, -1.0});
            }

        std::vector<int> row_rank(m_, 0);
        for (const auto& e : h_entries)
            row_rank[e.row] = std::max(row_rank[e.row], dof_rank[e.dof]);

        // final positions: sort (rank, is_constraint, index)
        std::vector<std::tuple<int, int, int>> order;
        order.reserve(n);
        for (int d = 0; d < n3_; ++d) order.emplace_back(dof_rank[d], 0, d);
        for (int r = 0; r < m_; ++r) order.emplace_back(row_rank[r], 1, r);
        std::sort(order.begin(), order.end());
        dof_pos_.resize(n3_);
        con_pos_.resize(m_);
        for (int pos = 0; pos < n; ++pos) {
            const auto [rank, is_con, idx] = order[pos];
            if (is_con)
                con_pos_[idx] = pos;
            else
                dof_pos_[idx] = pos;
        }

        std::vector<Eigen::Triplet<double>> trips;
        for (int col = 0; col < n3_; ++col)
            for (SpMat::InnerIterator it(a_pattern, col); it; ++it) {
                const int pr = dof_pos_[it.row()], pc = dof_pos_[col];
                if (pr >= pc) trips.emplace_back(pr, pc, 0.0);
            }
        for (const auto& e : h_entries)
            trips.emplace_back(con_pos_[e.row], dof_pos_[e.dof], 0.0);
        for (int r = 0; r < m_; ++r) trips.emplace_back(con_pos_[r], con_pos_[r], 0.0);

        aug_.resize(n, n);
        aug_.setFromTriplets(trips.begin(), trips.end());
        aug_.makeCompressed();

        const int* outer = aug_.outerIndexPtr();
        const int* inner = aug_.innerIndexPtr();
        auto find = [&](int row, int col) {
            const int* lo = inner + outer[col];
            const int* hi = inner + outer[col + 1];
            const int* it = std::lower_bound(lo, hi, row);
            if (it == hi || *it != row) throw Error("saddle solver: missing pattern entry");
            return static_cast<int>(it - inner);
        };

        // A's full pattern -> augmented lower triangle (each unordered pair
        // lands exactly once)
        a_to_aug_.assign(a_pattern.nonZeros(), -1);
        int nz = 0;
        for (int col = 0; col < n3_; ++col)
            for (SpMat::InnerIterator it(a_pattern, col); it; ++it, ++nz) {
                const int pr = dof_pos_[it.row()], pc = dof_pos_[col];
                if (pr >= pc) a_to_aug_[nz] = find(pr, pc);
            }
        h_nnz_.clear();
        h_coeff_.clear();
        for (const auto& e : h_entries) {
            h_nnz_.push_back(find(con_pos_[e.row], dof_pos_[e.dof]));
            h_coeff_.push_back(e.coeff);
        }
        a_diag_nnz_.resize(n3_);
        for (int d = 0; d < n3_; ++d) a_diag_nnz_[d] = find(dof_pos_[d], dof_pos_[d]);
        reg_nnz_.clear();
        for (int r = 0; r < m_; ++r) reg_nnz_.push_back(find(con_pos_[r], con_pos_[r]));
        analyzed_ = false;
        have_factor_ = false;
    }

    int rows() const { return m_; }
    const ConstraintSet& constraints() const { return cs_; }

    struct Result {
        VecX dv;
        VecX lambda;  // constraint forces [N], fixed rows first then pairs
        int refinement_iters = 0;
        bool refactorized = false;
    };

    /// Solves the KKT system for the current A values. The factorization is
    /// reused across calls as a preconditioner for iterative refinement and
    /// recomputed only when refinement stops converging, which keeps the
    /// per-step cost low while the matrix drifts slowly.
    Result solve(const SpMat& A, const VecX& b, const VecX& c, double dt,
                 double tol = 1e-10) {
        if (c.size() != m_) throw Error("saddle solver: constraint rhs size mismatch");
        const int n = n3_ + m_;
        double* gv = aug_.valuePtr();
        const double* av = A.valuePtr();
        for (Eigen::Index i = 0; i < A.nonZeros(); ++i)
            if (a_to_aug_[i] >= 0) gv[a_to_aug_[i]] = av[i];

        // scale constraint rows to the dof-block magnitude so the trailing
        // pivots stay balanced
        double diag_scale = 0.0;
        for (int d = 0; d < n3_; ++d) diag_scale += gv[a_diag_nnz_[d]];
        diag_scale = std::max(diag_scale / std::max(1, n3_), 1e-300);
        const double s = diag_scale;
        for (size_t i = 0; i < h_nnz_.size(); ++i) gv[h_nnz_[i]] = s * h_coeff_[i];
        const double eps = 1e-10 * s;
        for (int idx : reg_nnz_) gv[idx] = -eps;

        VecX rhs(n);
        for (int d = 0; d < n3_; ++d) rhs[dof_pos_[d]] = b[d];
        for (int r = 0; r < m_; ++r) rhs[con_pos_[r]] = s * c[r];
        const double rhs_norm = std::max(rhs.norm(), 1e-300);

        const auto sym = aug_.selfadjointView<Eigen::Lower>();
        VecX x = VecX::Zero(n);
        VecX residual = rhs;
        int iters = 0;
        bool refactorized = false;
        bool converged = false;
        if (have_factor_) {
            for (; iters < max_refine_; ++iters) {
                x += ldlt_.solve(residual);
                residual = rhs - sym * x;
                if (residual.norm() <= tol * rhs_norm) {
                    converged = true;
                    break;
                }
                if (!residual.allFinite()) break;
            }
        }
        if (!converged) {
            if (!analyzed_) {
                ldlt_.analyzePattern(aug_);
                analyzed_ = true;
            }
            ldlt_.factorize(aug_);
            if (ldlt_.info() != Eigen::Success)
                throw Error("saddle solver: factorization failed (singular KKT system)");
            have_factor_ = true;
            refactorized = true;
            x = ldlt_.solve(rhs);
            residual = rhs - sym * x;
            x += ldlt_.solve(residual);  // one refinement pass
            residual = rhs - sym * x;
            if (!x.allFinite() || !(residual.norm() <= std::max(tol, 1e-8) * rhs_norm))
                throw Error("saddle solver: residual " + std::to_string(residual.norm()) +
                            " of " + std::to_string(rhs_norm) + " (singular KKT system)");
        }

        Result res;
        res.dv.resize(n3_);
        for (int d = 0; d < n3_; ++d) res.dv[d] = x[dof_pos_[d]];
        res.lambda.resize(m_);
        for (int r = 0; r < m_; ++r) res.lambda[r] = -(s / dt) * x[con_pos_[r]];
        res.refinement_iters = iters;
        res.refactorized = refactorized;
        return res;
    }

private:
    ConstraintSet cs_;
    int n3_ = 0, m_ = 0;
    static constexpr int max_refine_ = 6;
    SpMat aug_;
    std::vector<int> dof_pos_;  // dof -> permuted position
    std::vector<int> con_pos_;  // constraint row -> permuted position
    std::vector<int> a_to_aug_;
    std::vector<int> h_nnz_;
    std::vector<double> h_coeff_;
    std::vector<int> a_diag_nnz_;
    std::vector<int> reg_nnz_;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>> ldlt_;
    bool analyzed_ = false;
    bool have_factor_ = false;
};

/// Velocity-level constraint targets with position drift correction:
/// rows demand H v_next = -err/dt so post-step positions satisfy the
/// constraints exactly. `fixed_targets` holds the pinned position per fixed
/// node (3 entries each), usually the rest positions.
inline VecX constraint_targets(const ConstraintSet& cs, const VecX& q, const VecX& fixed_targets,
                               double dt) {
    VecX c(cs.rows());
    const int nfix = static_cast<int>(cs.fixed_nodes.size());
    if (fixed_targets.size() != 3 * nfix)
        throw Error("constraint_targets: fixed target size mismatch");
    for (int i = 0; i < nfix; ++i)
        c.segment<3>(3 * i) =
            -(node_pos(q, cs.fixed_nodes[i]) - fixed_targets.segment<3>(3 * i)) / dt;
    for (size_t p = 0; p < cs.bilateral_pairs.size(); ++p)
        c.segment<3>(3 * (nfix + static_cast<int>(p))) =
            -(node_pos(q, cs.bilateral_pairs[p].first) -
              node_pos(q, cs.bilateral_pairs[p].second)) /
            dt;
    return c;
}

/// H v for the same row layout (to turn velocity targets into dv targets).
inline VecX constraint_velocity(const ConstraintSet& cs, const VecX& v) {
    VecX hv(cs.rows());
    const int nfix = static_cast<int>(cs.fixed_nodes.size());
    for (int i = 0; i < nfix; ++i) hv.segment<3>(3 * i) = node_pos(v, cs.fixed_nodes[i]);
    for (size_t p = 0; p < cs.bilateral_pairs.size(); ++p)
        hv.segment<3>(3 * (nfix + static_cast<int>(p))) =
            node_pos(v, cs.bilateral_pairs[p].first) - node_pos(v, cs.bilateral_pairs[p].second);
    return hv;
}

struct ConstrainedSolve {
    VecX dv;
    VecX lambda;
};

/// One-shot KKT solve (fresh factorization). The stepping loop reuses a
/// SaddleSolver instead.
inline ConstrainedSolve solve_constrained(const SpMat& A, const VecX& b,
                                          const ConstraintSet& constraints, const VecX& q,
                                          const VecX& v, const VecX& fixed_targets, double dt) {
    const ConstraintSet cs = constraints.sanitized();
    SaddleSolver solver;
    solver.init(A, cs);
    const VecX c = constraint_targets(cs, q, fixed_targets, dt) - constraint_velocity(cs, v);
    auto res = solver.solve(A, b, c, dt);
    return {std::move(res.dv), std::move(res.lambda)};
}

// ---------------------------------------------------------------------------
// Plain sparse solve (SPD or mildly indefinite), with residual check.

inline VecX linear_solve(const SpMat& A, const VecX& b,
                         IntegratorConfig::Solver method = IntegratorConfig::Solver::Direct,
                         double tol = 1e-10) {
    VecX x;
    if (method == IntegratorConfig::Solver::ConjugateGradient) {
        Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
        cg.setTolerance(tol);
        cg.compute(A);
        x = cg.solve(b);
        if (cg.info() != Eigen::Success)
            throw Error("linear solve: CG did not converge (residual " +
                        std::to_string(cg.error()) + ")");
    } else {
        Eigen::SimplicialLDLT<SpMat> ldlt(A);
        if (ldlt.info() == Eigen::Success) {
            x = ldlt.solve(b);
        } else {
            Eigen::SparseLU<SpMat> lu(A);
            if (lu.info() != Eigen::Success) throw Error("linear solve: singular system");
            x = lu.solve(b);
        }
    }
    if (!x.allFinite()) throw Error("linear solve: singular system (non-finite solution)");
    const double bn = b.norm();
    const double res = (A * x - b).norm();
    if (!(res <= tol * std::max(bn, 1e-300)) && !(res <= 1e-14 * std::max(1.0, bn)))
        throw Error("linear solve: residual " + std::to_string(res) + " exceeds tolerance");
    return x;
}

// ---------------------------------------------------------------------------
// Time stepping

struct StepResult {
    MechanicalState state;
    VecX lambda;
};

/// Advances one implicit Euler step. `f_ext` is held fixed over the step
/// (external loads are evaluated from the pre-step state by the caller).
/// With newton_iters > 1 the backward-Euler residual is re-linearized at the
/// updated trial state.
inline StepResult step(SystemModel& model, const MechanicalState& state,
                       const ConstraintSet& constraints, const VecX& fixed_targets,
                       const VecX& f_ext, const IntegratorConfig& cfg,
                       SaddleSolver* reuse = nullptr) {
    cfg.validate();
    state.validate();
    const double dt = cfg.dt;

    SaddleSolver local;
    SaddleSolver* solver = reuse;
    if (!solver) {
        model.finalize();
        local.init(model.stiffness(), constraints);
        solver = &local;
    }

    const VecX c_vel = constraint_targets(constraints, state.q, fixed_targets, dt);

    model.update(state.q);
    LinearSystem sys = assemble_system(model, state, f_ext, cfg);
    auto sol = solver->solve(sys.A, sys.b, c_vel - constraint_velocity(constraints, state.v), dt);
    VecX v_next = state.v + sol.dv;
    VecX lambda = sol.lambda;

    const VecX m3 = model.mass3();
    for (int it = 1; it < cfg.newton_iters; ++it) {
        const VecX q_trial = state.q + dt * v_next;
        model.update(q_trial);
        const SpMat& K = model.stiffness();
        const VecX damping = cfg.rayleigh_alpha * m3.cwiseProduct(v_next) +
                             cfg.rayleigh_beta * (K * v_next);
        const VecX residual =
            m3.cwiseProduct(v_next - state.v) - dt * (f_ext + model.internal_forces() - damping);
        MechanicalState trial{q_trial, v_next};
        LinearSystem sys_i = assemble_system(model, trial, f_ext, cfg);
        auto ref = solver->solve(sys_i.A, -residual, c_vel - constraint_velocity(constraints, v_next), dt);
        v_next += ref.dv;
        lambda = ref.lambda;
    }

    StepResult out;
    out.state.v = std::move(v_next);
    out.state.q = state.q + dt * out.state.v;
    out.lambda = std::move(lambda);
    return out;
}

}  // namespace softarm
