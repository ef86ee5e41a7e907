#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <unsupported/Eigen/SparseExtra>

#include "fwi/error.hpp"
#include "fwi/mesh.hpp"
#include "fwi/quadrature.hpp"

namespace fwi {

using NodalVector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// One value per triangle.
struct DG0Field {
    Eigen::VectorXd values;

    DG0Field() = default;
    explicit DG0Field(Eigen::VectorXd v) : values(std::move(v)) {}
    static DG0Field constant(std::size_t n, double c) { return DG0Field(Eigen::VectorXd::Constant(Eigen::Index(n), c)); }
    std::size_t size() const { return std::size_t(values.size()); }
    double operator[](std::size_t t) const { return values[Eigen::Index(t)]; }
    double& operator[](std::size_t t) { return values[Eigen::Index(t)]; }
};

/// One 2-vector per triangle (row t).
struct DG0VecField {
    Eigen::Matrix<double, Eigen::Dynamic, 2> values;

    DG0VecField() = default;
    explicit DG0VecField(std::size_t n) : values(Eigen::Index(n), 2) { values.setZero(); }
    std::size_t size() const { return std::size_t(values.rows()); }
};

/// Pointwise-evaluable scalar field; the gradient is optional and only
/// needed where H1 pairings of closed-form data are formed.
struct ScalarFunction {
    std::function<double(const Point&)> value;
    std::function<Eigen::Vector2d(const Point&)> gradient;

    static ScalarFunction constant(double c) {
        return {[c](const Point&) { return c; }, [](const Point&) { return Eigen::Vector2d::Zero().eval(); }};
    }
    static ScalarFunction zero() { return constant(0.0); }
    bool has_gradient() const { return bool(gradient); }
};

/// Sparse matrix plus the symmetry flag it was assembled with.
struct SparseOperator {
    SparseMatrix matrix;
    bool symmetric = false;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
    NodalVector operator*(const NodalVector& x) const { return matrix * x; }

    /// Largest |A_ij - A_ji| relative to the largest |A_ij|.
    double asymmetry() const {
        const SparseMatrix diff = matrix - SparseMatrix(matrix.transpose());
        const double scale = matrix.coeffs().size() ? matrix.coeffs().cwiseAbs().maxCoeff() : 0.0;
        const double d = diff.coeffs().size() ? diff.coeffs().cwiseAbs().maxCoeff() : 0.0;
        return scale > 0 ? d / scale : d;
    }
};

inline void save_matrix_market(const SparseOperator& op, const std::string& path) {
    if (!Eigen::saveMarket(op.matrix, path, op.symmetric ? Eigen::Symmetric : 0)) {
        throw Error("cannot write matrix market file '" + path + "'");
    }
}

// ---------------------------------------------------------------------------

/// Worker count for assembly loops, capped by FWI_THREADS when set.
inline unsigned worker_count() {
    unsigned n = 1;
    if (const char* env = std::getenv("FWI_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = unsigned(v);
    }
    return std::max(1u, std::min(n, std::max(1u, std::thread::hardware_concurrency())));
}

namespace detail {

using Triplets = std::vector<Eigen::Triplet<double>>;

/// Runs `fill(begin, end, triplets)` over contiguous triangle chunks and
/// concatenates the per-chunk buffers in chunk order, so the result does not
/// depend on the worker count.
template <typename Fill>
SparseMatrix assemble_by_triangles(std::size_t n_triangles, Eigen::Index rows, Eigen::Index cols, Fill&& fill) {
    const unsigned workers = (n_triangles > 4096) ? worker_count() : 1u;
    std::vector<Triplets> buffers(workers);
    const std::size_t chunk = (n_triangles + workers - 1) / workers;
    if (workers == 1) {
        fill(std::size_t(0), n_triangles, buffers[0]);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            const std::size_t b = std::min(n_triangles, w * chunk), e = std::min(n_triangles, b + chunk);
            pool.emplace_back([&, w, b, e] { fill(b, e, buffers[w]); });
        }
        for (auto& th : pool) th.join();
    }
    Triplets all;
    for (auto& buf : buffers) all.insert(all.end(), buf.begin(), buf.end());
    SparseMatrix m(rows, cols);
    m.setFromTriplets(all.begin(), all.end());
    m.makeCompressed();
    return m;
}

}  // namespace detail

/// Continuous piecewise-linear space on a mesh. Vertices on Dirichlet-tagged
/// edges are constrained to zero.
class P1Space {
public:
    explicit P1Space(const TriMesh& mesh) : mesh_(&mesh), dirichlet_(mesh.vertex_count(), false) {
        for (const auto& e : mesh.boundary_edges()) {
            if (e.tag == BoundaryTag::Dirichlet) dirichlet_[e.v[0]] = dirichlet_[e.v[1]] = true;
        }
        for (std::size_t i = 0; i < dirichlet_.size(); ++i) {
            if (!dirichlet_[i]) free_.push_back(int(i));
        }
    }

    const TriMesh& mesh() const noexcept { return *mesh_; }
    std::size_t dof_count() const noexcept { return dirichlet_.size(); }
    const std::vector<bool>& dirichlet_mask() const noexcept { return dirichlet_; }
    const std::vector<int>& free_dofs() const noexcept { return free_; }
    bool is_dirichlet(std::size_t i) const { return dirichlet_[i]; }
    bool has_dirichlet() const noexcept { return free_.size() != dirichlet_.size(); }

    /// Zeroes the constrained entries in place.
    void zero_dirichlet(NodalVector& v) const {
        for (std::size_t i = 0; i < dirichlet_.size(); ++i) {
            if (dirichlet_[i]) v[Eigen::Index(i)] = 0.0;
        }
    }

    /// Copy of `a` with Dirichlet rows and columns replaced by the identity,
    /// so that solving with a right-hand side zeroed on Dirichlet dofs yields
    /// the restricted solution extended by zero.
    SparseMatrix constrain(const SparseMatrix& a) const {
        if (!has_dirichlet()) return a;
        SparseMatrix out = a;
        for (int k = 0; k < out.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(out, k); it; ++it) {
                if (dirichlet_[std::size_t(it.row())] || dirichlet_[std::size_t(it.col())]) {
                    it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
                }
            }
        }
        out.prune(0.0);
        // Dirichlet diagonals always exist in assembled P1 patterns, but make sure.
        for (std::size_t i = 0; i < dirichlet_.size(); ++i) {
            if (dirichlet_[i]) out.coeffRef(Eigen::Index(i), Eigen::Index(i)) = 1.0;
        }
        out.makeCompressed();
        return out;
    }

private:
    const TriMesh* mesh_;
    std::vector<bool> dirichlet_;
    std::vector<int> free_;
};

// ---------------------------------------------------------------------------
// Assembly

/// Consistent mass weighted by a piecewise-constant coefficient:
/// entry (i,j) = sum_T w_T |T| (1 + delta_ij) / 12.
inline SparseOperator assemble_weighted_mass(const P1Space& space, const DG0Field& weight) {
    const TriMesh& mesh = space.mesh();
    check_dimension(weight.size(), mesh.triangle_count(), "assemble_weighted_mass weight");
    const auto n = Eigen::Index(space.dof_count());
    auto m = detail::assemble_by_triangles(mesh.triangle_count(), n, n,
                                           [&](std::size_t b, std::size_t e, detail::Triplets& out) {
        out.reserve((e - b) * 9);
        for (std::size_t t = b; t < e; ++t) {
            const double c = weight[t] * mesh.area(t) / 12.0;
            const auto& tri = mesh.triangle(t);
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) out.emplace_back(tri[i], tri[j], i == j ? 2.0 * c : c);
            }
        }
    });
    return {std::move(m), true};
}

inline SparseOperator assemble_weighted_mass(const P1Space& space, double weight) {
    return assemble_weighted_mass(space, DG0Field::constant(space.mesh().triangle_count(), weight));
}

inline SparseOperator assemble_mass(const P1Space& space) { return assemble_weighted_mass(space, 1.0); }

/// Entry (i,j) = sum_T |T| grad(lambda_i) . grad(lambda_j).
inline SparseOperator assemble_stiffness(const P1Space& space) {
    const TriMesh& mesh = space.mesh();
    const auto n = Eigen::Index(space.dof_count());
    auto k = detail::assemble_by_triangles(mesh.triangle_count(), n, n,
                                           [&](std::size_t b, std::size_t e, detail::Triplets& out) {
        out.reserve((e - b) * 9);
        for (std::size_t t = b; t < e; ++t) {
            const auto& g = mesh.basis_gradients(t);
            const Eigen::Matrix3d local = mesh.area(t) * g * g.transpose();
            const auto& tri = mesh.triangle(t);
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) out.emplace_back(tri[i], tri[j], local(i, j));
            }
        }
    });
    return {std::move(k), true};
}

/// Elementwise gradient of the P1 function with nodal values p.
inline DG0VecField p1_gradient(const P1Space& space, const NodalVector& p) {
    const TriMesh& mesh = space.mesh();
    check_dimension(std::size_t(p.size()), space.dof_count(), "p1_gradient");
    DG0VecField g(mesh.triangle_count());
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangle(t);
        const Eigen::Vector3d local(p[tri[0]], p[tri[1]], p[tri[2]]);
        g.values.row(Eigen::Index(t)) = local.transpose() * mesh.basis_gradients(t);
    }
    return g;
}

/// Transpose of p1_gradient in the plain Euclidean pairing:
/// (sum_T w_T . grad(lambda_i)|_T)_i.
inline NodalVector gradient_transpose(const P1Space& space, const DG0VecField& w) {
    const TriMesh& mesh = space.mesh();
    check_dimension(w.size(), mesh.triangle_count(), "gradient_transpose");
    NodalVector r = NodalVector::Zero(Eigen::Index(space.dof_count()));
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangle(t);
        const Eigen::Vector3d local = mesh.basis_gradients(t) * w.values.row(Eigen::Index(t)).transpose();
        for (int i = 0; i < 3; ++i) r[tri[i]] += local[i];
    }
    return r;
}

/// Nodal vector (int_Omega u . grad(phi_i))_i for a piecewise-constant vector
/// field u; the transpose of p1_gradient in the area-weighted DG0 pairing.
inline NodalVector flux_pairing(const P1Space& space, const DG0VecField& u) {
    const TriMesh& mesh = space.mesh();
    check_dimension(u.size(), mesh.triangle_count(), "flux_pairing");
    NodalVector r = NodalVector::Zero(Eigen::Index(space.dof_count()));
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangle(t);
        const Eigen::Vector3d local = mesh.area(t) * (mesh.basis_gradients(t) * u.values.row(Eigen::Index(t)).transpose());
        for (int i = 0; i < 3; ++i) r[tri[i]] += local[i];
    }
    return r;
}

/// I_h: nodal values of a pointwise-evaluable function.
inline NodalVector nodal_interpolate(const P1Space& space, const std::function<double(const Point&)>& fn) {
    NodalVector v(Eigen::Index(space.dof_count()));
    for (std::size_t i = 0; i < space.dof_count(); ++i) v[Eigen::Index(i)] = fn(space.mesh().vertex(i));
    return v;
}

/// (int_Omega fn * phi_i)_i by the degree-4 rule.
inline NodalVector load_vector(const P1Space& space, const std::function<double(const Point&)>& fn) {
    const TriMesh& mesh = space.mesh();
    const auto& rule = degree4_rule();
    NodalVector r = NodalVector::Zero(Eigen::Index(space.dof_count()));
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangle(t);
        Eigen::Vector3d local = Eigen::Vector3d::Zero();
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            local += rule.weights[q] * fn(map_to_triangle(mesh, t, rule.points[q])) * rule.points[q];
        }
        local *= mesh.area(t);
        for (int i = 0; i < 3; ++i) r[tri[i]] += local[i];
    }
    return r;
}

/// Per-triangle local loads (int_T fn * lambda_i), i = 0..2, by the degree-4 rule.
inline std::vector<Eigen::Vector3d> local_loads(const TriMesh& mesh, const std::function<double(const Point&)>& fn) {
    const auto& rule = degree4_rule();
    std::vector<Eigen::Vector3d> out(mesh.triangle_count());
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        Eigen::Vector3d local = Eigen::Vector3d::Zero();
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            local += rule.weights[q] * fn(map_to_triangle(mesh, t, rule.points[q])) * rule.points[q];
        }
        out[t] = mesh.area(t) * local;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear solves

/// Symmetric positive-definite solver: sparse LDLT factorization, refined by
/// preconditioned CG when the direct residual misses the tolerance.
class SpdSolver {
public:
    SpdSolver() = default;
    explicit SpdSolver(SparseMatrix a, double rel_tol = 1e-12) { factorize(std::move(a), rel_tol); }

    void factorize(SparseMatrix a, double rel_tol = 1e-12) {
        a_ = std::move(a);
        tol_ = rel_tol;
        ldlt_.compute(a_);
        direct_ok_ = ldlt_.info() == Eigen::Success;
    }

    Eigen::Index size() const { return a_.rows(); }
    const SparseMatrix& matrix() const { return a_; }

    NodalVector solve(const NodalVector& b) const {
        const double bnorm = b.norm();
        if (bnorm == 0.0) return NodalVector::Zero(b.size());
        NodalVector x;
        double rel = 1.0;
        if (direct_ok_) {
            x = ldlt_.solve(b);
            rel = (a_ * x - b).norm() / bnorm;
            if (std::isfinite(rel) && rel <= tol_) return x;
        } else {
            x = NodalVector::Zero(b.size());
        }
        Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
        cg.setTolerance(tol_ * 0.5);
        cg.setMaxIterations(std::max<Eigen::Index>(1000, 10 * a_.rows()));
        cg.compute(a_);
        x = cg.solveWithGuess(b, x);
        rel = (a_ * x - b).norm() / bnorm;
        if (!std::isfinite(rel) || rel > tol_) {
            throw SolverError("SPD solve: relative residual " + std::to_string(rel) + " exceeds tolerance");
        }
        return x;
    }

private:
    SparseMatrix a_;
    double tol_ = 1e-12;
    bool direct_ok_ = false;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

// ---------------------------------------------------------------------------
// Projections

/// Psi_h: H1 projection of p0 onto the constrained P1 space,
/// (grad y, grad phi) + (y, phi) = (grad p0, grad phi) + (p0, phi).
/// Without a gradient callback p0 is treated as its own nodal interpolant.
inline NodalVector psi_projection(const P1Space& space, const ScalarFunction& p0) {
    const TriMesh& mesh = space.mesh();
    const SparseOperator k = assemble_stiffness(space);
    const SparseOperator m = assemble_mass(space);
    NodalVector rhs;
    if (p0.has_gradient()) {
        rhs = load_vector(space, p0.value);
        const auto& rule = degree4_rule();
        for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
            Eigen::Vector2d mean_grad = Eigen::Vector2d::Zero();
            for (std::size_t q = 0; q < rule.points.size(); ++q) {
                mean_grad += rule.weights[q] * p0.gradient(map_to_triangle(mesh, t, rule.points[q]));
            }
            const Eigen::Vector3d local = mesh.area(t) * (mesh.basis_gradients(t) * mean_grad);
            const auto& tri = mesh.triangle(t);
            for (int i = 0; i < 3; ++i) rhs[tri[i]] += local[i];
        }
    } else {
        const NodalVector interp = nodal_interpolate(space, p0.value);
        rhs = k.matrix * interp + m.matrix * interp;
    }
    space.zero_dirichlet(rhs);
    SpdSolver solver(space.constrain(k.matrix + m.matrix));
    return solver.solve(rhs);
}

/// Psi_h of a function already given by nodal values on this mesh.
inline NodalVector psi_projection(const P1Space& space, const NodalVector& p0) {
    check_dimension(std::size_t(p0.size()), space.dof_count(), "psi_projection");
    const SparseMatrix a = assemble_stiffness(space).matrix + assemble_mass(space).matrix;
    NodalVector rhs = a * p0;
    space.zero_dirichlet(rhs);
    return SpdSolver(space.constrain(a)).solve(rhs);
}

/// Q_h: cell averages of a closed-form function under `rule`.
inline DG0Field q_projection(const TriMesh& mesh, const std::function<double(const Point&)>& v,
                             const TriangleRule& rule = degree4_rule()) {
    DG0Field out(Eigen::VectorXd(Eigen::Index(mesh.triangle_count())));
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        double s = 0.0;
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            s += rule.weights[q] * v(map_to_triangle(mesh, t, rule.points[q]));
        }
        out[t] = s;
    }
    return out;
}

/// Q_h of a P1 field: the cell average of a linear function is its centroid value.
inline DG0Field q_projection(const TriMesh& mesh, const NodalVector& v) {
    check_dimension(std::size_t(v.size()), mesh.vertex_count(), "q_projection");
    DG0Field out(Eigen::VectorXd(Eigen::Index(mesh.triangle_count())));
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangle(t);
        out[t] = (v[tri[0]] + v[tri[1]] + v[tri[2]]) / 3.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Norms

inline double l2_norm(const SparseOperator& mass, const NodalVector& v) {
    return std::sqrt(std::max(0.0, v.dot(mass.matrix * v)));
}

inline double l2_norm(const TriMesh& mesh, const DG0Field& f) {
    double s = 0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) s += mesh.area(t) * f[t] * f[t];
    return std::sqrt(s);
}

inline double l2_norm(const TriMesh& mesh, const DG0VecField& f) {
    double s = 0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) s += mesh.area(t) * f.values.row(Eigen::Index(t)).squaredNorm();
    return std::sqrt(s);
}

inline double l2_inner(const TriMesh& mesh, const DG0Field& a, const DG0Field& b) {
    double s = 0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) s += mesh.area(t) * a[t] * b[t];
    return s;
}

// ---------------------------------------------------------------------------
// Inverse estimate

struct InverseEstimate {
    double c_inv = 0;
    double lambda_max = 0;  ///< largest generalized eigenvalue of (stiffness, mass) on free dofs
    NodalVector extremal;   ///< corresponding (approximate) eigenvector, M-normalized
    int iterations = 0;
};

struct PowerIterationOptions {
    double rel_tol = 1e-8;
    int max_iterations = 50000;
    std::uint64_t seed = 12345;
};

/// c_inv = h * sqrt(lambda_max) where lambda_max is the largest eigenvalue of
/// K x = lambda M x on the constrained space, found by power iteration with
/// mass-inverse applications. Any p in the space then satisfies
/// ||grad p|| <= (c_inv / h) ||p||, with equality for the extremal vector.
inline InverseEstimate estimate_cinv(const P1Space& space, const PowerIterationOptions& opts = {}) {
    if (space.free_dofs().empty()) throw PreconditionError("estimate_cinv: no free degrees of freedom");
    const SparseOperator k = assemble_stiffness(space);
    const SparseOperator m = assemble_mass(space);
    const SpdSolver mass_solver(space.constrain(m.matrix));

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    NodalVector x(Eigen::Index(space.dof_count()));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = dist(rng);
    space.zero_dirichlet(x);
    x /= l2_norm(m, x);

    double lambda = x.dot(k.matrix * x);
    InverseEstimate est;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        NodalVector kx = k.matrix * x;
        space.zero_dirichlet(kx);
        NodalVector y = mass_solver.solve(kx);
        const double ny = l2_norm(m, y);
        if (!(ny > 0)) throw SolverError("estimate_cinv: power iteration collapsed");
        x = y / ny;
        const double next = x.dot(k.matrix * x);
        const bool done = std::abs(next - lambda) <= opts.rel_tol * std::abs(next);
        lambda = next;
        if (done) {
            est.iterations = it;
            est.lambda_max = lambda;
            est.c_inv = space.mesh().h() * std::sqrt(lambda);
            est.extremal = std::move(x);
            return est;
        }
    }
    throw SolverError("estimate_cinv: power iteration stagnated after " + std::to_string(opts.max_iterations) +
                      " iterations");
}

}  // namespace fwi
