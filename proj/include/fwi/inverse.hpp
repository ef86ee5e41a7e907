#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fwi/error.hpp"
#include "fwi/fem.hpp"
#include "fwi/forward.hpp"
#include "fwi/scenario.hpp"

namespace fwi {

struct ObjectiveBreakdown {
    double misfit = 0;  ///< (tau/2) sum_i sum_l int a_i(t_{l+1/2}) (p^{l+1/2} - p_ob_i(t_{l+1/2}))^2
    double reg = 0;     ///< (lambda/2) ||nu||^2
    double total = 0;
};

namespace detail {

inline double regularization(const DiscreteProblem& problem, const DG0Field& nu) {
    const double n2 = l2_inner(problem.mesh(), nu, nu);
    return 0.5 * problem.scenario().lambda * n2;
}

/// Residual p^{l+1/2} - p_ob_i(t_{l+1/2}).
inline NodalVector midpoint_residual(const DiscreteProblem& problem, const Trajectory& traj, std::size_t i, std::size_t l) {
    return traj.p_mid(l) - problem.observation(i, l);
}

}  // namespace detail

/// Midpoint-rule objective of an already computed trajectory.
inline ObjectiveBreakdown objective_of(const DiscreteProblem& problem, const ParamField& nu, const Trajectory& traj) {
    if (traj.aborted()) throw PreconditionError("objective of an aborted trajectory");
    ObjectiveBreakdown out;
    const double tau = problem.tau();
    for (std::size_t i = 0; i < problem.receiver_count(); ++i) {
        const SparseMatrix& w = problem.receiver_mass(i).matrix;
        for (std::size_t l = 0; l < problem.steps(); ++l) {
            const double window = problem.receiver_window(i, l);
            if (window == 0.0) continue;
            const NodalVector e = detail::midpoint_residual(problem, traj, i, l);
            out.misfit += 0.5 * tau * window * e.dot(w * e);
        }
    }
    out.reg = detail::regularization(problem, nu.values());
    out.total = out.misfit + out.reg;
    return out;
}

/// J_h(nu): forward run followed by the midpoint-rule objective.
inline ObjectiveBreakdown objective(const DiscreteProblem& problem, const ParamField& nu) {
    return objective_of(problem, nu, problem.run(nu));
}

struct GradientResult {
    ObjectiveBreakdown value;
    DG0Field partials;  ///< dJ_h / dnu_T
    DG0Field riesz;     ///< partials / |T|, the DG0 L2 representative
};

/// Exact gradient of J_h by the discrete adjoint of the leapfrog recursion.
///
/// Forward step l:   A p^{l+1} = C p^l + B^T u^{l+1/2} + F^{l+1/2},
///                   u^{l+3/2} = u^{l+1/2} - tau G p^{l+1},
/// with A = M_nu/tau + M_eta/2, C = M_nu/tau - M_eta/2, and u^{1/2} = G y,
/// K y = r(nu). The reverse sweep only needs the stored pressures.
inline GradientResult gradient(const DiscreteProblem& problem, const ParamField& nu,
                               const Trajectory* precomputed = nullptr) {
    std::optional<Trajectory> own;
    if (!precomputed) own.emplace(problem.run(nu));
    const Trajectory& traj = precomputed ? *precomputed : *own;
    if (traj.aborted()) throw PreconditionError("gradient of an aborted trajectory");

    const P1Space& space = problem.space();
    const TriMesh& mesh = space.mesh();
    const std::size_t n = problem.steps();
    const double tau = problem.tau();
    const auto n_dofs = Eigen::Index(space.dof_count());
    const auto ops = problem.step_operators(nu.values());

    GradientResult out;
    out.value = objective_of(problem, nu, traj);

    // Direct partials of the misfit with respect to each p^l.
    std::vector<NodalVector> pbar(n + 1, NodalVector::Zero(n_dofs));
    for (std::size_t i = 0; i < problem.receiver_count(); ++i) {
        const SparseMatrix& w = problem.receiver_mass(i).matrix;
        for (std::size_t l = 0; l < n; ++l) {
            const double window = problem.receiver_window(i, l);
            if (window == 0.0) continue;
            const NodalVector g = (0.5 * tau * window) * (w * detail::midpoint_residual(problem, traj, i, l));
            pbar[l] += g;
            pbar[l + 1] += g;
        }
    }

    DG0Field nubar = DG0Field::constant(mesh.triangle_count(), 0.0);
    DG0VecField ubar_upper(mesh.triangle_count());  // adjoint of u^{l+3/2}
    for (std::size_t l = n; l-- > 0;) {
        DG0VecField ubar(mesh.triangle_count());  // adjoint of u^{l+1/2}
        if (l + 1 < n) {
            ubar.values = ubar_upper.values;
            pbar[l + 1] -= tau * gradient_transpose(space, ubar_upper);
        }
        NodalVector rhs = pbar[l + 1];
        space.zero_dirichlet(rhs);
        NodalVector mu = ops.lhs.solve(rhs);
        space.zero_dirichlet(mu);

        pbar[l] += ops.rhs * mu;
        const DG0VecField gmu = p1_gradient(space, mu);
        ubar.values += problem.areas().asDiagonal() * gmu.values;

        const NodalVector dp = traj.dp(l);
        for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
            const auto& tri = mesh.triangle(t);
            const Eigen::Vector3d m(mu[tri[0]], mu[tri[1]], mu[tri[2]]);
            const Eigen::Vector3d d(dp[tri[0]], dp[tri[1]], dp[tri[2]]);
            // m^T M_T d with M_T = |T|/12 (1 + delta_ij)
            nubar[t] -= mesh.area(t) / 12.0 * (m.dot(d) + m.sum() * d.sum());
        }
        ubar_upper = std::move(ubar);
    }

    // Lift u^{1/2} = G y(nu).
    const NodalVector z = problem.lift_potential_adjoint(gradient_transpose(space, ubar_upper));
    const auto& p1_local = problem.p1_local_loads();
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangle(t);
        nubar[t] += z[tri[0]] * p1_local[t][0] + z[tri[1]] * p1_local[t][1] + z[tri[2]] * p1_local[t][2];
    }

    const double lambda = problem.scenario().lambda;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) nubar[t] += lambda * mesh.area(t) * nu[t];

    out.riesz = nubar;
    out.riesz.values.array() /= problem.areas().array();
    out.partials = std::move(nubar);
    return out;
}

/// Directional derivative <dJ_h(nu), d> by a forward tangent sweep of the
/// linearized recursion; independent of the adjoint path.
inline double tangent_derivative(const DiscreteProblem& problem, const ParamField& nu, const DG0Field& direction) {
    const P1Space& space = problem.space();
    const TriMesh& mesh = space.mesh();
    check_dimension(direction.size(), mesh.triangle_count(), "tangent direction");
    const Trajectory traj = problem.run(nu);
    const std::size_t n = problem.steps();
    const double tau = problem.tau();
    const auto ops = problem.step_operators(nu.values());
    const SparseMatrix m_dir = assemble_weighted_mass(space, direction).matrix;

    // r(nu) = fixed + sum_T nu_T r_T, so the lift's tangent right-hand side is sum_T d_T r_T.
    NodalVector dr = NodalVector::Zero(Eigen::Index(space.dof_count()));
    const auto& p1_local = problem.p1_local_loads();
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangle(t);
        for (int i = 0; i < 3; ++i) dr[tri[i]] += direction[t] * p1_local[t][i];
    }
    DG0VecField du = p1_gradient(space, problem.lift_potential(dr));

    std::vector<NodalVector> dp(n + 1, NodalVector::Zero(Eigen::Index(space.dof_count())));
    for (std::size_t l = 0; l < n; ++l) {
        NodalVector rhs = ops.rhs * dp[l] + flux_pairing(space, du) - m_dir * traj.dp(l);
        space.zero_dirichlet(rhs);
        dp[l + 1] = ops.lhs.solve(rhs);
        if (l + 1 < n) Trajectory::advance_flux(space, du, dp[l + 1], tau);
    }

    double dj = 0;
    for (std::size_t i = 0; i < problem.receiver_count(); ++i) {
        const SparseMatrix& w = problem.receiver_mass(i).matrix;
        for (std::size_t l = 0; l < n; ++l) {
            const double window = problem.receiver_window(i, l);
            if (window == 0.0) continue;
            const NodalVector e = detail::midpoint_residual(problem, traj, i, l);
            dj += tau * window * e.dot(w * (0.5 * (dp[l] + dp[l + 1])));
        }
    }
    dj += problem.scenario().lambda * l2_inner(mesh, nu.values(), direction);
    return dj;
}

// ---------------------------------------------------------------------------
// Feasible-set projections

/// Optional L2 ball constraint ||nu - center|| <= radius intersected with the box.
struct TrustRegion {
    DG0Field center;
    double radius = 0;
};

/// Exact L2 projection onto box ∩ ball: nu(mu) = clamp((w + mu c)/(1 + mu)),
/// with mu >= 0 found by bisection so that the ball constraint is active.
inline ParamField project_box_ball(const TriMesh& mesh, const DG0Field& w, double lo, double hi,
                                   const TrustRegion& region) {
    ParamField boxed = project_box(w, lo, hi);
    auto dist = [&](const DG0Field& v) {
        DG0Field d = v;
        d.values -= region.center.values;
        return l2_norm(mesh, d);
    };
    if (dist(boxed.values()) <= region.radius) return boxed;
    auto at = [&](double mu) {
        DG0Field v = w;
        v.values = (w.values + mu * region.center.values) / (1.0 + mu);
        return project_box(v, lo, hi);
    };
    double a = 0, b = 1;
    while (dist(at(b).values()) > region.radius && b < 1e300) b *= 2;
    for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, b); ++it) {
        const double m = 0.5 * (a + b);
        (dist(at(m).values()) > region.radius ? a : b) = m;
    }
    return at(b);
}

// ---------------------------------------------------------------------------
// Projected gradient

struct OptimizerOptions {
    std::size_t max_iterations = 200;
    /// Stop when the stationarity measure falls below rel_tol times its initial value.
    double rel_tol = 1e-8;
    double abs_tol = 0.0;
    double armijo = 1e-4;
    double backtrack = 0.5;
    std::size_t max_backtracks = 40;
    /// First trial step; defaults to 0.1 (nu_hi - nu_lo) / max|riesz gradient|.
    std::optional<double> initial_step;
    std::optional<TrustRegion> trust_region;
};

struct OptimizerRecord {
    std::size_t iteration = 0;
    ObjectiveBreakdown value;
    double pg_norm = 0;  ///< ||nu - P(nu - g)||, g the Riesz gradient
    double step = 0;     ///< accepted step length (0 for the initial record)
    bool feasible = true;
};

struct OptimizerTrace {
    std::vector<OptimizerRecord> records;
    bool converged = false;
    bool line_search_failed = false;
};

struct OptimizerResult {
    ParamField nu;
    OptimizerTrace trace;
};

/// Projected-gradient minimization of J_h over the admissible box with
/// Barzilai-Borwein trial steps and Armijo backtracking.
inline OptimizerResult minimize(const DiscreteProblem& problem, const ParamField& nu0, const OptimizerOptions& opts = {}) {
    const Scenario& sc = problem.scenario();
    const TriMesh& mesh = problem.mesh();
    problem.check_parameter(nu0);
    const double lo = sc.nu_lo, hi = sc.nu_hi;

    auto project = [&](const DG0Field& w) {
        return opts.trust_region ? project_box_ball(mesh, w, lo, hi, *opts.trust_region) : project_box(w, lo, hi);
    };
    auto feasible = [&](const ParamField& v) {
        for (std::size_t t = 0; t < v.size(); ++t) {
            if (!(v[t] >= lo && v[t] <= hi)) return false;
        }
        return true;
    };
    auto stationarity = [&](const ParamField& v, const DG0Field& g) {
        DG0Field w = v.values();
        w.values -= g.values;
        DG0Field d = project(w).values();
        d.values -= v.values().values;
        return l2_norm(mesh, d);
    };

    ParamField nu = opts.trust_region ? project(nu0.values()) : nu0;
    Trajectory traj = problem.run(nu);
    GradientResult g = gradient(problem, nu, &traj);
    double measure = stationarity(nu, g.riesz);
    const double target = std::max(opts.rel_tol * measure, opts.abs_tol);

    OptimizerTrace trace;
    trace.records.push_back({0, g.value, measure, 0.0, feasible(nu)});

    double step;
    if (opts.initial_step) {
        step = *opts.initial_step;
    } else {
        const double gmax = g.riesz.values.cwiseAbs().maxCoeff();
        step = gmax > 0 ? 0.1 * std::max(hi - lo, 1e-3 * hi) / gmax : 1.0;
    }

    for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
        if (measure <= target) {
            trace.converged = true;
            break;
        }
        bool accepted = false;
        for (std::size_t bt = 0; bt <= opts.max_backtracks; ++bt) {
            DG0Field w = nu.values();
            w.values -= step * g.riesz.values;
            ParamField trial = project(w);
            DG0Field s = trial.values();
            s.values -= nu.values().values;
            const double decrease = l2_inner(mesh, g.riesz, s);  // = <partials, s>
            if (decrease >= 0) {
                step *= opts.backtrack;
                continue;
            }
            Trajectory trial_traj = problem.run(trial);
            const ObjectiveBreakdown value = objective_of(problem, trial, trial_traj);
            if (value.total <= g.value.total + opts.armijo * decrease) {
                GradientResult g_new = gradient(problem, trial, &trial_traj);
                DG0Field y = g_new.riesz;
                y.values -= g.riesz.values;
                const double sy = l2_inner(mesh, s, y), ss = l2_inner(mesh, s, s);
                const double accepted_step = step;
                step = (sy > 0) ? ss / sy : 2.0 * step;
                nu = std::move(trial);
                traj = std::move(trial_traj);
                g = std::move(g_new);
                measure = stationarity(nu, g.riesz);
                trace.records.push_back({it, g.value, measure, accepted_step, feasible(nu)});
                accepted = true;
                break;
            }
            step *= opts.backtrack;
        }
        if (!accepted) {
            trace.line_search_failed = true;
            break;
        }
        if (it == opts.max_iterations && measure <= target) trace.converged = true;
    }
    return {std::move(nu), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Export

inline void write_trace_csv(std::ostream& out, const OptimizerTrace& trace) {
    out << "iter,J,misfit,reg,pg_norm,step\n" << std::setprecision(17);
    for (const auto& r : trace.records) {
        out << r.iteration << ',' << r.value.total << ',' << r.value.misfit << ',' << r.value.reg << ',' << r.pg_norm
            << ',' << r.step << '\n';
    }
}

/// One line "triangle value" per element.
inline void write_dg0(std::ostream& out, const DG0Field& f) {
    out << std::setprecision(17);
    for (std::size_t t = 0; t < f.size(); ++t) out << t << ' ' << f[t] << '\n';
}

}  // namespace fwi
