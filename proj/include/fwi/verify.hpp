#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "fwi/error.hpp"
#include "fwi/fem.hpp"
#include "fwi/forward.hpp"
#include "fwi/inverse.hpp"
#include "fwi/mesh.hpp"
#include "fwi/scenario.hpp"

namespace fwi {

// ---------------------------------------------------------------------------
// Dense reference implementation of the leapfrog recursion

inline constexpr std::size_t kDenseOracleMaxDofs = 200;

struct DenseOracleOptions {
    /// Gauss-Legendre points for the source time integrals (exact for degree 2n-1).
    int time_points = 5;
};

namespace detail {

/// Seven-point rule exact for degree 5 (barycentric points, weights sum to 1).
struct Degree5Rule {
    std::vector<Eigen::Vector3d> points;
    std::vector<double> weights;
    Degree5Rule() {
        const double s15 = std::sqrt(15.0);
        const double a = (6.0 - s15) / 21.0, b = (6.0 + s15) / 21.0;
        const double wa = (155.0 - s15) / 1200.0, wb = (155.0 + s15) / 1200.0;
        points.emplace_back(1.0 / 3, 1.0 / 3, 1.0 / 3);
        weights.push_back(9.0 / 40.0);
        for (auto [c, w] : {std::pair{a, wa}, std::pair{b, wb}}) {
            points.emplace_back(1 - 2 * c, c, c);
            points.emplace_back(c, 1 - 2 * c, c);
            points.emplace_back(c, c, 1 - 2 * c);
            weights.insert(weights.end(), {w, w, w});
        }
    }
};

/// Affine P1 element computed from the vertex coordinates alone: the basis
/// coefficients are the columns of the inverse Vandermonde matrix.
struct DenseElement {
    Eigen::Matrix3d coeff;  // phi_i(x, y) = coeff(0,i) + coeff(1,i) x + coeff(2,i) y
    Eigen::Matrix<double, 3, 2> corners;
    double area = 0;

    explicit DenseElement(const std::array<Point, 3>& v) {
        Eigen::Matrix3d vand;
        for (int i = 0; i < 3; ++i) {
            vand.row(i) << 1.0, v[i].x(), v[i].y();
            corners.row(i) = v[i].transpose();
        }
        area = 0.5 * std::abs(vand.determinant());
        coeff = vand.inverse();
    }
    Eigen::Vector2d grad(int i) const { return {coeff(1, i), coeff(2, i)}; }
    Point at(const Eigen::Vector3d& bary) const { return corners.transpose() * bary; }
    Eigen::Vector3d basis(const Point& x) const {
        return coeff.transpose() * Eigen::Vector3d(1.0, x.x(), x.y());
    }
};

inline std::vector<std::pair<double, double>> gauss_legendre(int n) {
    // Newton iteration on P_n from the Chebyshev-like initial guess.
    std::vector<std::pair<double, double>> out;
    for (int i = 1; i <= n; ++i) {
        double x = std::cos(M_PI * (i - 0.25) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1;
            dp = n * (x * p1 - p0) / (x * x - 1);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        out.emplace_back(x, 2.0 / ((1 - x * x) * dp * dp));
    }
    return out;
}

}  // namespace detail

/// Independent dense re-implementation of the fully discrete scheme: its own
/// element geometry, quadrature, Dirichlet elimination (free-dof submatrices),
/// Neumann lift (Lagrange multiplier) and dense factorizations. Data must be
/// polynomial of low degree for both implementations to integrate it exactly.
inline Trajectory dense_oracle_forward(const P1Space& space, const Scenario& sc, const ParamField& nu, std::size_t n_steps,
                                       const DenseOracleOptions& opts = {}) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const TriMesh& mesh = space.mesh();
    const std::size_t n = mesh.vertex_count();
    if (n > kDenseOracleMaxDofs) throw PreconditionError("dense oracle: more than 200 degrees of freedom");
    if (n_steps == 0) throw PreconditionError("dense oracle: N must be at least 1");
    check_dimension(nu.size(), mesh.triangle_count(), "parameter field");
    sc.validate();
    const double tau = sc.T / double(n_steps);
    const detail::Degree5Rule rule;

    std::vector<bool> dirichlet(n, false);
    for (const auto& e : mesh.boundary_edges()) {
        if (e.tag == BoundaryTag::Dirichlet) dirichlet[std::size_t(e.v[0])] = dirichlet[std::size_t(e.v[1])] = true;
    }
    std::vector<Eigen::Index> free;
    for (std::size_t i = 0; i < n; ++i) {
        if (!dirichlet[i]) free.push_back(Eigen::Index(i));
    }
    const auto nf = Eigen::Index(free.size());
    auto restrict_mat = [&](const MatrixXd& a) {
        MatrixXd out(nf, nf);
        for (Eigen::Index i = 0; i < nf; ++i)
            for (Eigen::Index j = 0; j < nf; ++j) out(i, j) = a(free[i], free[j]);
        return out;
    };
    auto restrict_vec = [&](const VectorXd& v) {
        VectorXd out(nf);
        for (Eigen::Index i = 0; i < nf; ++i) out[i] = v[free[i]];
        return out;
    };
    auto extend = [&](const VectorXd& v) {
        VectorXd out = VectorXd::Zero(Eigen::Index(n));
        for (Eigen::Index i = 0; i < nf; ++i) out[free[i]] = v[i];
        return out;
    };

    std::vector<detail::DenseElement> elems;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangle(t);
        elems.emplace_back(std::array<Point, 3>{mesh.vertex(std::size_t(tri[0])), mesh.vertex(std::size_t(tri[1])),
                                                mesh.vertex(std::size_t(tri[2]))});
    }
    auto integrate = [&](std::size_t t, const std::function<double(const Point&)>& f) {
        double s = 0;
        for (std::size_t q = 0; q < rule.points.size(); ++q) s += rule.weights[q] * f(elems[t].at(rule.points[q]));
        return s * elems[t].area;
    };

    MatrixXd mass = MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
    MatrixXd m_nu = mass, m_eta = mass, stiff = mass;
    std::vector<double> eta(mesh.triangle_count());
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& e = elems[t];
        const auto& tri = mesh.triangle(t);
        eta[t] = integrate(t, sc.eta) / e.area;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                const double mij = integrate(t, [&](const Point& x) {
                    const Eigen::Vector3d phi = e.basis(x);
                    return phi[i] * phi[j];
                });
                mass(tri[i], tri[j]) += mij;
                m_nu(tri[i], tri[j]) += nu[t] * mij;
                m_eta(tri[i], tri[j]) += eta[t] * mij;
                stiff(tri[i], tri[j]) += e.area * e.grad(i).dot(e.grad(j));
            }
        }
    }
    auto load = [&](const std::function<double(const Point&)>& f, const std::function<double(std::size_t)>& scale) {
        VectorXd r = VectorXd::Zero(Eigen::Index(n));
        for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
            const auto& tri = mesh.triangle(t);
            for (int i = 0; i < 3; ++i) {
                r[tri[i]] += scale(t) * integrate(t, [&](const Point& x) { return f(x) * elems[t].basis(x)[i]; });
            }
        }
        return r;
    };
    auto one = [](std::size_t) { return 1.0; };

    // H1 projection of p0 on the free dofs.
    VectorXd p;
    {
        const MatrixXd a = stiff + mass;
        VectorXd rhs;
        if (sc.p0.has_gradient()) {
            rhs = load(sc.p0.value, one);
            for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
                const auto& tri = mesh.triangle(t);
                for (int i = 0; i < 3; ++i) {
                    rhs[tri[i]] += integrate(t, [&](const Point& x) { return sc.p0.gradient(x).dot(elems[t].grad(i)); });
                }
            }
        } else {
            VectorXd interp = VectorXd::Zero(Eigen::Index(n));
            for (std::size_t i = 0; i < n; ++i) interp[Eigen::Index(i)] = sc.p0.value(mesh.vertex(i));
            rhs = a * interp;
        }
        p = extend(restrict_mat(a).ldlt().solve(restrict_vec(rhs)));
    }

    // Lift: K y = (eta p0 + nu p1, phi).
    VectorXd y;
    {
        const VectorXd r = load(sc.p0.value, [&](std::size_t t) { return eta[t]; }) +
                           load(sc.p1.value, [&](std::size_t t) { return nu[t]; });
        if (nf == Eigen::Index(n)) {
            // Pure Neumann: [K m; m^T 0] [y; mu] = [r; 0] with m = M 1.
            const VectorXd m = mass * VectorXd::Ones(Eigen::Index(n));
            MatrixXd bordered = MatrixXd::Zero(Eigen::Index(n) + 1, Eigen::Index(n) + 1);
            bordered.topLeftCorner(Eigen::Index(n), Eigen::Index(n)) = stiff;
            bordered.col(Eigen::Index(n)).head(Eigen::Index(n)) = m;
            bordered.row(Eigen::Index(n)).head(Eigen::Index(n)) = m.transpose();
            VectorXd rhs = VectorXd::Zero(Eigen::Index(n) + 1);
            rhs.head(Eigen::Index(n)) = r;
            y = bordered.fullPivLu().solve(rhs).head(Eigen::Index(n));
        } else {
            y = extend(restrict_mat(stiff).ldlt().solve(restrict_vec(r)));
        }
    }
    Eigen::Matrix<double, Eigen::Dynamic, 2> u(Eigen::Index(mesh.triangle_count()), 2);
    auto grad_of = [&](const VectorXd& v, Eigen::Matrix<double, Eigen::Dynamic, 2>& out) {
        for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
            const auto& tri = mesh.triangle(t);
            Eigen::Vector2d g = Eigen::Vector2d::Zero();
            for (int i = 0; i < 3; ++i) g += v[tri[i]] * elems[t].grad(i);
            out.row(Eigen::Index(t)) = g.transpose();
        }
    };
    grad_of(y, u);

    // Sources: W(t) = int_0^t pulse by Gauss-Legendre.
    const auto gl = detail::gauss_legendre(opts.time_points);
    std::vector<VectorXd> src_loads;
    for (const auto& s : sc.sources) src_loads.push_back(load(s.spatial, one));
    auto source_at = [&](double t) {
        VectorXd f = VectorXd::Zero(Eigen::Index(n));
        for (std::size_t k = 0; k < sc.sources.size(); ++k) {
            double w = 0;
            for (auto [x, wt] : gl) w += 0.5 * t * wt * sc.sources[k].pulse(0.5 * t * (x + 1));
            f += w * src_loads[k];
        }
        return f;
    };

    const MatrixXd a = m_nu / tau + 0.5 * m_eta;
    const MatrixXd c = m_nu / tau - 0.5 * m_eta;
    const Eigen::LDLT<MatrixXd> step_solver(restrict_mat(a));

    Trajectory traj(space, n_steps, tau);
    traj.push_pressure(p);
    DG0VecField flux(mesh.triangle_count());
    flux.values = u;
    traj.push_flux(flux);
    for (std::size_t l = 0; l < n_steps; ++l) {
        VectorXd rhs = c * p + source_at((double(l) + 0.5) * tau);
        for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
            const auto& tri = mesh.triangle(t);
            const Eigen::Vector2d ut = u.row(Eigen::Index(t)).transpose();
            for (int i = 0; i < 3; ++i) rhs[tri[i]] += elems[t].area * ut.dot(elems[t].grad(i));
        }
        p = extend(step_solver.solve(restrict_vec(rhs)));
        traj.push_pressure(p);
        if (l + 1 < n_steps) {
            Eigen::Matrix<double, Eigen::Dynamic, 2> gp(u.rows(), 2);
            grad_of(p, gp);
            u -= tau * gp;
            flux.values = u;
            traj.push_flux(flux);
        }
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle

/// Central differences of J_h per element, one-sided where nu +- eps leaves
/// the box. `elements` restricts the probe set; unprobed entries are NaN.
inline DG0Field fd_gradient_oracle(const DiscreteProblem& problem, const ParamField& nu, double eps,
                                   const std::vector<std::size_t>& elements = {}) {
    if (!(eps > 0)) throw PreconditionError("fd_gradient_oracle: eps must be positive");
    const double lo = problem.scenario().nu_lo, hi = problem.scenario().nu_hi;
    std::vector<std::size_t> probe = elements;
    if (probe.empty()) {
        for (std::size_t t = 0; t < nu.size(); ++t) probe.push_back(t);
    }
    DG0Field out = DG0Field::constant(nu.size(), std::numeric_limits<double>::quiet_NaN());
    auto value_at = [&](std::size_t t, double v) {
        DG0Field f = nu.values();
        f[t] = v;
        return objective(problem, ParamField(std::move(f), lo, hi)).total;
    };
    const double base = objective(problem, nu).total;
    for (std::size_t t : probe) {
        if (t >= nu.size()) throw DimensionError("fd_gradient_oracle: element index out of range");
        const bool up = nu[t] + eps <= hi, down = nu[t] - eps >= lo;
        if (up && down) {
            out[t] = (value_at(t, nu[t] + eps) - value_at(t, nu[t] - eps)) / (2 * eps);
        } else if (up) {
            out[t] = (value_at(t, nu[t] + eps) - base) / eps;
        } else if (down) {
            out[t] = (base - value_at(t, nu[t] - eps)) / eps;
        } else {
            throw PreconditionError("fd_gradient_oracle: box narrower than eps on triangle " + std::to_string(t));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Refinement sweeps

struct SweepLevel {
    double h = 0;
    std::size_t N = 0;
    double tau = 0;
    double c_inv = 0;
    /// sup_t ||X^p_h(t) - Lambda^p_ref(t)|| on the reference mesh, X = Lambda, Theta, Pi.
    double err_lambda_p = 0;
    double err_theta_p = 0;
    double err_pi_p = 0;
    /// sup_t ||Lambda^p_h - Theta^p_h|| and sup_t ||Lambda^u_h - Pi^u_h|| on the level itself.
    double gap_lambda_theta_p = 0;
    double gap_lambda_pi_u = 0;
    StabilityReport stability;
    double J = 0;
    /// |J_ref(Q_ref nu_bar) - J_h(Q_h nu_bar)|
    double J_diff = 0;
    /// ||Q_h nu_bar - nu_bar||
    double projection_error = 0;
    double wall_seconds = 0;
};

struct SweepResult {
    std::vector<SweepLevel> levels;  ///< ordered by decreasing h
    SweepLevel reference;
    double cfl_ratio = 0;
    double c_cfl = 0;  ///< smallest c_cfl over all levels, used for the common tau/h
};

struct StudyConfig {
    TriMesh base;
    Scenario scenario;
    std::function<double(const Point&)> nu_bar = [](const Point&) { return 1.0; };
    std::size_t levels = 3;
    double cfl_ratio = 0.9;
    /// Optional fixed c_inv for every level instead of measuring it.
    std::optional<double> c_inv{};
    /// Time samples per finest-level step for the sup-norms.
    std::size_t samples_per_step = 4;
    bool interpolant_errors = true;
};

namespace detail {

struct Hierarchy {
    std::vector<std::unique_ptr<TriMesh>> meshes;
    std::vector<std::unique_ptr<P1Space>> spaces;
    std::vector<Refinement> transfers;  // transfers[k]: level k -> k+1
};

inline Hierarchy build_hierarchy(const TriMesh& base, std::size_t count) {
    Hierarchy h;
    h.meshes.push_back(std::make_unique<TriMesh>(base));
    for (std::size_t k = 1; k < count; ++k) {
        h.transfers.push_back(refine_uniform_with_transfer(*h.meshes.back()));
        h.meshes.push_back(std::make_unique<TriMesh>(h.transfers.back().mesh));
    }
    for (const auto& m : h.meshes) h.spaces.push_back(std::make_unique<P1Space>(*m));
    return h;
}

inline NodalVector prolongate_to(const Hierarchy& h, std::size_t from, NodalVector v) {
    for (std::size_t k = from; k + 1 < h.meshes.size(); ++k) v = prolongate(h.transfers[k], v);
    return v;
}

inline double projection_error(const TriMesh& mesh, const DG0Field& q, const std::function<double(const Point&)>& f) {
    const TriangleRule rule = subdivision_rule(8);
    double s = 0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        double local = 0;
        for (std::size_t i = 0; i < rule.points.size(); ++i) {
            const double d = q[t] - f(map_to_triangle(mesh, t, rule.points[i]));
            local += rule.weights[i] * d * d;
        }
        s += local * mesh.area(t);
    }
    return std::sqrt(s);
}

}  // namespace detail

/// Runs every level of the hierarchy on a common tau/h and fills the
/// per-level records; shared by both studies.
inline SweepResult run_sweep(const StudyConfig& cfg) {
    if (cfg.levels < 3) throw PreconditionError("sweep: at least 3 levels are required");
    if (!(cfg.cfl_ratio > 0) || cfg.cfl_ratio > 1) throw PreconditionError("sweep: cfl_ratio must lie in (0, 1]");
    if (cfg.samples_per_step == 0) throw PreconditionError("sweep: samples_per_step must be positive");
    const Scenario& sc = cfg.scenario;
    sc.validate();
    const std::size_t count = cfg.levels + 1;
    const detail::Hierarchy hier = detail::build_hierarchy(cfg.base, count);

    std::vector<double> cinv(count);
    double c_cfl = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count; ++k) {
        cinv[k] = cfg.c_inv ? *cfg.c_inv : estimate_cinv(*hier.spaces[k]).c_inv;
        c_cfl = std::min(c_cfl, std::sqrt(sc.nu_lo) / (std::sqrt(2.0) * cinv[k]));
    }
    const double h0 = hier.meshes[0]->h();
    const auto n0 = std::size_t(std::ceil(sc.T / (cfg.cfl_ratio * c_cfl * h0) - 1e-9));

    SweepResult result;
    result.cfl_ratio = cfg.cfl_ratio;
    result.c_cfl = c_cfl;

    struct LevelRun {
        std::unique_ptr<DiscreteProblem> problem;
        std::unique_ptr<Trajectory> traj;
    };
    std::vector<LevelRun> runs(count);
    std::vector<SweepLevel> records(count);
    double ratio0 = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const auto start = std::chrono::steady_clock::now();
        const TriMesh& mesh = *hier.meshes[k];
        const std::size_t n = n0 << k;
        ForwardOptions fo;
        fo.c_inv = cinv[k];
        runs[k].problem = std::make_unique<DiscreteProblem>(*hier.spaces[k], sc, n, fo);
        const DG0Field q = q_projection(mesh, cfg.nu_bar);
        const ParamField nu(q, sc.nu_lo, sc.nu_hi);
        runs[k].traj = std::make_unique<Trajectory>(runs[k].problem->run(nu));

        SweepLevel& rec = records[k];
        rec.h = mesh.h();
        rec.N = n;
        rec.tau = runs[k].problem->tau();
        rec.c_inv = cinv[k];
        rec.stability = stability_report(*runs[k].traj);
        rec.J = objective_of(*runs[k].problem, nu, *runs[k].traj).total;
        rec.projection_error = detail::projection_error(mesh, q, cfg.nu_bar);

        const double ratio = rec.tau / rec.h;
        if (k == 0) ratio0 = ratio;
        if (std::abs(ratio - ratio0) > 1e-12 * ratio0) {
            throw ConsistencyError("sweep: tau/h differs across levels (" + std::to_string(ratio) + " vs " +
                                   std::to_string(ratio0) + ")");
        }

        // Interpolant gaps on the level itself, at the level's own breakpoints and midpoints.
        const InterpolantBundle b(*runs[k].traj, *runs[k].problem);
        const SparseOperator& m = runs[k].problem->mass();
        for (std::size_t s = 0; s <= 2 * n; ++s) {
            const double t = std::min(sc.T, double(s) * rec.tau / 2);
            rec.gap_lambda_theta_p = std::max(rec.gap_lambda_theta_p, l2_norm(m, b.lambda_p(t) - b.theta_p(t)));
            DG0VecField du = b.lambda_u(t);
            du.values -= b.pi_u(t).values;
            rec.gap_lambda_pi_u = std::max(rec.gap_lambda_pi_u, l2_norm(mesh, du));
        }
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }

    const std::size_t ref = count - 1;
    for (std::size_t k = 0; k < count; ++k) records[k].J_diff = std::abs(records[ref].J - records[k].J);

    if (cfg.interpolant_errors) {
        const std::size_t n_fine = records[ref - 1].N;
        const std::size_t samples = cfg.samples_per_step * n_fine;
        const InterpolantBundle rb(*runs[ref].traj, *runs[ref].problem);
        std::vector<InterpolantBundle> bundles;
        for (std::size_t k = 0; k < ref; ++k) bundles.emplace_back(*runs[k].traj, *runs[k].problem);
        const SparseOperator& mref = runs[ref].problem->mass();
        for (std::size_t s = 0; s <= samples; ++s) {
            const double t = (s == samples) ? sc.T : sc.T * double(s) / double(samples);
            const NodalVector exact = rb.lambda_p(t);
            for (std::size_t k = 0; k < ref; ++k) {
                SweepLevel& rec = records[k];
                const auto err = [&](const NodalVector& v) {
                    return l2_norm(mref, detail::prolongate_to(hier, k, v) - exact);
                };
                rec.err_lambda_p = std::max(rec.err_lambda_p, err(bundles[k].lambda_p(t)));
                rec.err_theta_p = std::max(rec.err_theta_p, err(bundles[k].theta_p(t)));
                rec.err_pi_p = std::max(rec.err_pi_p, err(bundles[k].pi_p(t)));
            }
        }
    }

    result.reference = records[ref];
    records.pop_back();
    result.levels = std::move(records);
    return result;
}

/// Interpolant convergence against a one-level-finer reference.
inline SweepResult convergence_study(const StudyConfig& cfg) { return run_sweep(cfg); }

/// |J_ref(nu_bar) - J_h(Q_h nu_bar)| per level; interpolant errors skipped.
inline SweepResult objective_consistency_study(StudyConfig cfg) {
    cfg.interpolant_errors = false;
    return run_sweep(cfg);
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
    out << "level,h,N,tau,c_inv,err_lambda_p,err_theta_p,err_pi_p,gap_lambda_theta_p,gap_lambda_pi_u,"
           "max_dp,max_du,max_gradp,max_p,max_u,J,J_diff,projection_error\n"
        << std::setprecision(17);
    auto row = [&](const std::string& label, const SweepLevel& l) {
        out << label << ',' << l.h << ',' << l.N << ',' << l.tau << ',' << l.c_inv << ',' << l.err_lambda_p << ','
            << l.err_theta_p << ',' << l.err_pi_p << ',' << l.gap_lambda_theta_p << ',' << l.gap_lambda_pi_u << ','
            << l.stability.max_dp << ',' << l.stability.max_du << ',' << l.stability.max_gradp << ','
            << l.stability.max_p << ',' << l.stability.max_u << ',' << l.J << ',' << l.J_diff << ','
            << l.projection_error << '\n';
    };
    for (std::size_t k = 0; k < r.levels.size(); ++k) row(std::to_string(k), r.levels[k]);
    row("ref", r.reference);
}

/// Largest relative spread (max - min) / max of a positive sequence.
inline double relative_spread(const std::vector<double>& v) {
    if (v.empty()) return 0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi > 0 ? (*hi - *lo) / *hi : 0.0;
}

inline bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] < v[i - 1])) return false;
    }
    return true;
}

}  // namespace fwi
