#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fwi/error.hpp"
#include "fwi/fem.hpp"
#include "fwi/scenario.hpp"

namespace fwi {

// ---------------------------------------------------------------------------
// CFL gate

struct CflResult {
    bool admissible = false;
    double c_cfl = 0;      ///< sqrt(nu_lo) / (sqrt(2) c_inv)
    double tau_max = 0;    ///< c_cfl * h
    std::size_t min_steps = 0;  ///< smallest N with T/N <= tau_max
};

/// Checks tau/h <= c_cfl with tau = T/N. A relative slack of 1e-12 absorbs
/// rounding in the ratio so that the boundary case counts as admissible.
inline CflResult cfl_check(double h, std::size_t n_steps, double T, double nu_lo, double c_inv) {
    if (!(h > 0) || n_steps == 0 || !(T > 0) || !(nu_lo > 0) || !(c_inv > 0)) {
        throw PreconditionError("cfl_check: all inputs must be positive");
    }
    CflResult r;
    r.c_cfl = std::sqrt(nu_lo) / (std::sqrt(2.0) * c_inv);
    r.tau_max = r.c_cfl * h;
    auto ok = [&](std::size_t n) { return (T / double(n)) / h <= r.c_cfl * (1.0 + 1e-12); };
    r.admissible = ok(n_steps);
    std::size_t n = std::max<std::size_t>(1, std::size_t(std::ceil(T / r.tau_max)));
    while (n > 1 && ok(n - 1)) --n;
    while (!ok(n)) ++n;
    r.min_steps = n;
    return r;
}

// ---------------------------------------------------------------------------
// Trajectory

/// Leapfrog output: p^0..p^N (nodal) and u^{1/2}..u^{N-1/2} (DG0 vectors).
/// In checkpointed mode only every `stride`-th flux is kept; the others are
/// regenerated from p by the exact update u^{k+1/2} = u^{k-1/2} - tau grad p^k.
class Trajectory {
public:
    Trajectory(const P1Space& space, std::size_t n_steps, double tau, std::size_t checkpoint_stride = 0)
        : space_(&space), n_(n_steps), tau_(tau), stride_(checkpoint_stride) {}

    const P1Space& space() const { return *space_; }
    std::size_t steps() const noexcept { return n_; }
    double tau() const noexcept { return tau_; }
    /// True when the run stopped early on a non-finite or overflowing state.
    bool aborted() const noexcept { return aborted_; }
    std::size_t abort_step() const noexcept { return abort_step_; }
    bool checkpointed() const noexcept { return stride_ > 0; }

    /// Number of stored pressure states (N + 1 for complete runs).
    std::size_t pressure_count() const noexcept { return p_.size(); }
    /// Number of available flux states (N for complete runs).
    std::size_t flux_count() const noexcept { return flux_count_; }

    const NodalVector& p(std::size_t l) const { return p_.at(l); }
    const std::vector<NodalVector>& pressures() const noexcept { return p_; }

    /// u^{k+1/2}.
    DG0VecField u(std::size_t k) const {
        if (k >= flux_count_) throw DimensionError("Trajectory::u: index out of range");
        if (!checkpointed()) return u_[k];
        const std::size_t c = k / stride_;
        DG0VecField out = u_[c];
        for (std::size_t m = c * stride_ + 1; m <= k; ++m) advance_flux(*space_, out, p_[m], tau_);
        return out;
    }

    /// p^{l+1/2} = (p^l + p^{l+1}) / 2.
    NodalVector p_mid(std::size_t l) const { return 0.5 * (p_.at(l) + p_.at(l + 1)); }
    /// delta p^{l+1/2} = (p^{l+1} - p^l) / tau.
    NodalVector dp(std::size_t l) const { return (p_.at(l + 1) - p_.at(l)) / tau_; }

    /// u^{k+3/2} = u^{k+1/2} - tau grad p^{k+1}, the update shared by the
    /// stepper and the regeneration path.
    static void advance_flux(const P1Space& space, DG0VecField& u, const NodalVector& p_next, double tau) {
        u.values -= tau * p1_gradient(space, p_next).values;
    }

    /// Rebuilds every flux from its predecessor and compares: checkpoints must
    /// be reproduced bit for bit, stored full histories to 1e-13 relative.
    void verify_flux_consistency() const {
        if (flux_count_ == 0) return;
        if (checkpointed()) {
            for (std::size_t c = 1; c < u_.size(); ++c) {
                DG0VecField regen = u_[c - 1];
                for (std::size_t m = (c - 1) * stride_ + 1; m <= c * stride_; ++m) advance_flux(*space_, regen, p_[m], tau_);
                if (regen.values != u_[c].values) {
                    throw ConsistencyError("checkpoint " + std::to_string(c) + " does not match regenerated flux");
                }
            }
            return;
        }
        for (std::size_t k = 1; k < flux_count_; ++k) {
            DG0VecField regen = u_[k - 1];
            advance_flux(*space_, regen, p_[k], tau_);
            const double scale = std::max({u_[k].values.cwiseAbs().maxCoeff(), u_[k - 1].values.cwiseAbs().maxCoeff(),
                                           std::numeric_limits<double>::min()});
            if ((regen.values - u_[k].values).cwiseAbs().maxCoeff() > 1e-13 * scale) {
                throw ConsistencyError("flux " + std::to_string(k) + " violates the leapfrog update");
            }
        }
    }

    // Builders used by the steppers.
    void push_pressure(NodalVector p) { p_.push_back(std::move(p)); }
    void push_flux(const DG0VecField& u) {
        if (!checkpointed()) {
            u_.push_back(u);
        } else if (flux_count_ % stride_ == 0) {
            u_.push_back(u);
        }
        ++flux_count_;
    }
    void mark_aborted(std::size_t step) {
        aborted_ = true;
        abort_step_ = step;
    }

private:
    const P1Space* space_;
    std::size_t n_;
    double tau_;
    std::size_t stride_;
    std::vector<NodalVector> p_;
    std::vector<DG0VecField> u_;
    std::size_t flux_count_ = 0;
    bool aborted_ = false;
    std::size_t abort_step_ = 0;
};

// ---------------------------------------------------------------------------
// Discrete problem

struct ForwardOptions {
    /// Inverse-estimate constant for the CFL gate; measured when absent and
    /// the gate is enforced.
    std::optional<double> c_inv;
    /// Multiplies the measured c_inv before it enters the CFL bound.
    double cinv_safety = 1.0;
    bool enforce_cfl = true;
    /// With no Dirichlet boundary the lift's Poisson problem is solved on
    /// mean-zero functions after subtracting the mean of its right-hand side.
    bool neumann_mean_correction = true;
};

struct RunOptions {
    /// Skip the CFL gate (instability demonstrations).
    bool allow_unstable = false;
    /// Throw InstabilityError on blow-up; otherwise return the truncated run.
    bool throw_on_blowup = true;
    /// Keep only every k-th flux (0: keep all). Use checkpoint_stride_for(N) for ceil(sqrt(N)).
    std::size_t checkpoint_stride = 0;
};

inline std::size_t checkpoint_stride_for(std::size_t n_steps) {
    return std::max<std::size_t>(1, std::size_t(std::ceil(std::sqrt(double(n_steps)))));
}

/// Magnitude beyond which a state counts as overflowing.
inline constexpr double kBlowupThreshold = 1e100;

/// A Scenario discretized on a P1 space with N time steps: every
/// parameter-independent operator and data vector of the leapfrog scheme is
/// assembled once here.
class DiscreteProblem {
public:
    DiscreteProblem(const P1Space& space, Scenario scenario, std::size_t n_steps, ForwardOptions options = {})
        : space_(&space), scenario_(std::move(scenario)), n_(n_steps), options_(options) {
        scenario_.validate();
        if (n_ == 0) throw PreconditionError("DiscreteProblem: N must be at least 1");
        tau_ = scenario_.T / double(n_);
        const TriMesh& mesh = space.mesh();

        mass_ = assemble_mass(space);
        stiffness_ = assemble_stiffness(space);
        area_ = Eigen::Map<const Eigen::VectorXd>(mesh.areas().data(), Eigen::Index(mesh.triangle_count()));

        eta_ = q_projection(mesh, scenario_.eta);
        for (std::size_t t = 0; t < eta_.size(); ++t) {
            if (eta_[t] < 0) throw PreconditionError("damping must be nonnegative");
        }
        eta_mass_ = assemble_weighted_mass(space, eta_);

        p_init_ = psi_projection(space, scenario_.p0);

        // Lift right-hand side: eta p0 part (fixed) and per-triangle p1 loads (scaled by nu).
        {
            const auto& p0 = scenario_.p0.value;
            const DG0Field& eta = eta_;
            std::vector<Eigen::Vector3d> eta_p0(mesh.triangle_count());
            const auto& rule = degree4_rule();
            for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
                Eigen::Vector3d local = Eigen::Vector3d::Zero();
                for (std::size_t q = 0; q < rule.points.size(); ++q) {
                    local += rule.weights[q] * p0(map_to_triangle(mesh, t, rule.points[q])) * rule.points[q];
                }
                eta_p0[t] = eta[t] * mesh.area(t) * local;
            }
            lift_fixed_ = NodalVector::Zero(Eigen::Index(space.dof_count()));
            for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
                const auto& tri = mesh.triangle(t);
                for (int i = 0; i < 3; ++i) lift_fixed_[tri[i]] += eta_p0[t][i];
            }
            p1_local_ = local_loads(mesh, scenario_.p1.value);
        }
        lift_mass_row_ = mass_.matrix * NodalVector::Ones(Eigen::Index(space.dof_count()));
        setup_lift_solver();

        // Sources: F^{l+1/2} = sum_k W_k(t_{l+1/2}) * load_k.
        for (const auto& s : scenario_.sources) {
            source_loads_.push_back(load_vector(space, s.spatial));
            std::vector<double> coeff(n_);
            if (s.integral) {
                for (std::size_t l = 0; l < n_; ++l) coeff[l] = s.integral(midpoint(l));
            } else {
                coeff = midpoint_integrals(s.pulse, tau_, n_);
            }
            source_coeff_.push_back(std::move(coeff));
        }

        // Receivers.
        for (std::size_t i = 0; i < scenario_.receivers.size(); ++i) {
            const Receiver& r = scenario_.receivers[i];
            DG0Field w = r.discontinuous_weight ? q_projection(mesh, r.weight, subdivision_rule(8))
                                                : q_projection(mesh, r.weight);
            for (std::size_t t = 0; t < w.size(); ++t) {
                if (w[t] < 0) throw PreconditionError("receiver weight must be nonnegative");
            }
            ReceiverData data;
            data.mass = assemble_weighted_mass(space, w);
            data.weight = std::move(w);
            data.window.resize(n_);
            for (std::size_t l = 0; l < n_; ++l) {
                data.window[l] = r.window(midpoint(l));
                if (data.window[l] < 0) throw PreconditionError("receiver window must be nonnegative");
            }
            if (std::holds_alternative<ObservationFunction>(r.observation)) {
                const auto& fn = std::get<ObservationFunction>(r.observation);
                data.observed.reserve(n_);
                for (std::size_t l = 0; l < n_; ++l) {
                    const double t = midpoint(l);
                    data.observed.push_back(nodal_interpolate(space, [&](const Point& x) { return fn(t, x); }));
                }
                data.observed_at_zero = nodal_interpolate(space, [&](const Point& x) { return fn(0.0, x); });
            } else {
                const auto& sampled = std::get<SampledObservations>(r.observation);
                check_dimension(sampled.size(), n_, "sampled observations (one per step)");
                for (const auto& v : sampled) check_dimension(std::size_t(v.size()), space.dof_count(), "observation");
                data.observed = sampled;
                data.observed_at_zero = sampled.front();
            }
            receivers_.push_back(std::move(data));
        }

        if (options_.enforce_cfl && !options_.c_inv) options_.c_inv = estimate_cinv(space).c_inv;
    }

    const P1Space& space() const { return *space_; }
    const TriMesh& mesh() const { return space_->mesh(); }
    const Scenario& scenario() const { return scenario_; }
    std::size_t steps() const noexcept { return n_; }
    double tau() const noexcept { return tau_; }
    double midpoint(std::size_t l) const { return (double(l) + 0.5) * tau_; }
    const SparseOperator& mass() const { return mass_; }
    const SparseOperator& stiffness() const { return stiffness_; }
    const SparseOperator& eta_mass() const { return eta_mass_; }
    const DG0Field& eta() const { return eta_; }
    const Eigen::VectorXd& areas() const { return area_; }
    const NodalVector& initial_pressure() const { return p_init_; }
    const ForwardOptions& options() const { return options_; }
    std::optional<double> c_inv() const { return options_.c_inv; }

    /// Load vector of F^{l+1/2}, i.e. (int F(t_{l+1/2}) phi_i)_i (unconstrained).
    NodalVector source_load(std::size_t l) const {
        NodalVector f = NodalVector::Zero(Eigen::Index(space_->dof_count()));
        for (std::size_t k = 0; k < source_loads_.size(); ++k) f += source_coeff_[k][l] * source_loads_[k];
        return f;
    }

    std::size_t receiver_count() const { return receivers_.size(); }
    const SparseOperator& receiver_mass(std::size_t i) const { return receivers_.at(i).mass; }
    const DG0Field& receiver_weight(std::size_t i) const { return receivers_.at(i).weight; }
    double receiver_window(std::size_t i, std::size_t l) const { return receivers_.at(i).window.at(l); }
    const NodalVector& observation(std::size_t i, std::size_t l) const { return receivers_.at(i).observed.at(l); }
    const NodalVector& observation_at_zero(std::size_t i) const { return receivers_.at(i).observed_at_zero; }

    CflResult cfl() const {
        if (!options_.c_inv) throw PreconditionError("CFL check requested without an inverse-estimate constant");
        return cfl_check(mesh().h(), n_, scenario_.T, scenario_.nu_lo, *options_.c_inv * options_.cinv_safety);
    }

    void check_parameter(const ParamField& nu) const {
        check_dimension(nu.size(), mesh().triangle_count(), "parameter field");
        for (std::size_t t = 0; t < nu.size(); ++t) {
            if (nu[t] < scenario_.nu_lo || nu[t] > scenario_.nu_hi) {
                throw PreconditionError("parameter outside the admissible box on triangle " + std::to_string(t));
            }
        }
    }

    /// Right-hand side (eta p0 + nu p1, phi_i) of the lift problem (unconstrained).
    NodalVector lift_rhs(const DG0Field& nu) const {
        NodalVector r = lift_fixed_;
        const TriMesh& m = mesh();
        for (std::size_t t = 0; t < m.triangle_count(); ++t) {
            const auto& tri = m.triangle(t);
            for (int i = 0; i < 3; ++i) r[tri[i]] += nu[t] * p1_local_[t][i];
        }
        return r;
    }
    const std::vector<Eigen::Vector3d>& p1_local_loads() const { return p1_local_; }

    /// Solves the lift's Poisson problem for a given right-hand side and returns
    /// y (mean-zero when there is no Dirichlet boundary).
    NodalVector lift_potential(const NodalVector& rhs_in) const {
        NodalVector rhs = rhs_in;
        if (!space_->has_dirichlet()) {
            const double total = rhs.sum();
            if (options_.neumann_mean_correction) {
                rhs -= (total / mesh().total_area()) * lift_mass_row_;
            } else if (std::abs(total) > 1e-12 * std::max(1.0, rhs.cwiseAbs().sum())) {
                throw PreconditionError("lift: incompatible right-hand side for the pure Neumann problem");
            }
            rhs[pin_] = 0.0;
            NodalVector y = lift_solver_.solve(rhs);
            y.array() -= lift_mass_row_.dot(y) / mesh().total_area();
            return y;
        }
        space_->zero_dirichlet(rhs);
        return lift_solver_.solve(rhs);
    }

    /// Transpose of rhs -> y as implemented by lift_potential, applied to a
    /// vector orthogonal to constants (pure Neumann) or arbitrary (Dirichlet).
    NodalVector lift_potential_adjoint(const NodalVector& ybar) const {
        if (!space_->has_dirichlet()) {
            NodalVector g = ybar;
            // mean shift y -> y - (m.y/|O|) 1 transposed (vanishes when ybar is orthogonal to constants)
            g -= (ybar.sum() / mesh().total_area()) * lift_mass_row_;
            g[pin_] = 0.0;
            NodalVector z = lift_solver_.solve(g);
            z[pin_] = 0.0;
            // mean-correction of the right-hand side transposed
            if (options_.neumann_mean_correction) {
                z.array() -= lift_mass_row_.dot(z) / mesh().total_area();
            }
            return z;
        }
        NodalVector g = ybar;
        space_->zero_dirichlet(g);
        NodalVector z = lift_solver_.solve(g);
        space_->zero_dirichlet(z);
        return z;
    }

    /// Phi_h(nu): elementwise gradient of the lift potential.
    DG0VecField lift(const DG0Field& nu) const { return p1_gradient(*space_, lift_potential(lift_rhs(nu))); }

    /// Step matrices M_nu/tau + M_eta/2 (constrained) and M_nu/tau - M_eta/2.
    struct StepOperators {
        SpdSolver lhs;
        SparseMatrix rhs;
    };

    StepOperators step_operators(const DG0Field& nu) const {
        const SparseMatrix m_nu = assemble_weighted_mass(*space_, nu).matrix;
        SparseMatrix a = m_nu / tau_ + 0.5 * eta_mass_.matrix;
        SparseMatrix c = m_nu / tau_ - 0.5 * eta_mass_.matrix;
        return {SpdSolver(space_->constrain(a)), std::move(c)};
    }

    /// Leapfrog run for parameter nu.
    Trajectory run(const ParamField& nu, const RunOptions& opts = {}) const {
        check_parameter(nu);
        if (!opts.allow_unstable && options_.enforce_cfl) {
            const CflResult c = cfl();
            if (!c.admissible) {
                throw PreconditionError("CFL condition violated: tau/h = " + std::to_string(tau_ / mesh().h()) +
                                        " > c_cfl = " + std::to_string(c.c_cfl) + " (need N >= " +
                                        std::to_string(c.min_steps) + ")");
            }
        }
        const StepOperators ops = step_operators(nu.values());
        Trajectory traj(*space_, n_, tau_, opts.checkpoint_stride);
        traj.push_pressure(p_init_);
        DG0VecField u = lift(nu.values());
        traj.push_flux(u);

        NodalVector p = p_init_;
        for (std::size_t l = 0; l < n_; ++l) {
            NodalVector rhs = ops.rhs * p + flux_pairing(*space_, u) + source_load(l);
            space_->zero_dirichlet(rhs);
            NodalVector next = ops.lhs.solve(rhs);
            if (!next.allFinite() || next.cwiseAbs().maxCoeff() > kBlowupThreshold) {
                if (opts.throw_on_blowup) throw InstabilityError("non-finite or overflowing pressure", l + 1);
                traj.mark_aborted(l + 1);
                return traj;
            }
            traj.push_pressure(next);
            p = std::move(next);
            if (l + 1 < n_) {
                Trajectory::advance_flux(*space_, u, p, tau_);
                if (!u.values.allFinite() || u.values.cwiseAbs().maxCoeff() > kBlowupThreshold) {
                    if (opts.throw_on_blowup) throw InstabilityError("non-finite or overflowing flux", l + 1);
                    traj.mark_aborted(l + 1);
                    return traj;
                }
                traj.push_flux(u);
            }
        }
        return traj;
    }

private:
    struct ReceiverData {
        DG0Field weight;
        SparseOperator mass;
        std::vector<double> window;
        std::vector<NodalVector> observed;
        NodalVector observed_at_zero;
    };

    void setup_lift_solver() {
        if (space_->has_dirichlet()) {
            lift_solver_.factorize(space_->constrain(stiffness_.matrix));
            return;
        }
        pin_ = 0;
        SparseMatrix k = stiffness_.matrix;
        for (int c = 0; c < k.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(k, c); it; ++it) {
                if (it.row() == pin_ || it.col() == pin_) it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
            }
        }
        k.prune(0.0);
        lift_solver_.factorize(std::move(k));
    }

    const P1Space* space_;
    Scenario scenario_;
    std::size_t n_;
    double tau_ = 0;
    ForwardOptions options_;

    SparseOperator mass_, stiffness_, eta_mass_;
    Eigen::VectorXd area_;
    DG0Field eta_;
    NodalVector p_init_;
    NodalVector lift_fixed_;
    NodalVector lift_mass_row_;
    std::vector<Eigen::Vector3d> p1_local_;
    SpdSolver lift_solver_;
    Eigen::Index pin_ = 0;
    std::vector<NodalVector> source_loads_;
    std::vector<std::vector<double>> source_coeff_;
    std::vector<ReceiverData> receivers_;
};

// ---------------------------------------------------------------------------
// Free-function entry points

inline DG0VecField phi_h(const P1Space& space, const Scenario& scenario, const ParamField& nu) {
    ForwardOptions opts;
    opts.enforce_cfl = false;
    const DiscreteProblem problem(space, scenario, 1, opts);
    problem.check_parameter(nu);
    return problem.lift(nu.values());
}

inline Trajectory run_forward(const DiscreteProblem& problem, const ParamField& nu, const RunOptions& opts = {}) {
    return problem.run(nu, opts);
}

// ---------------------------------------------------------------------------
// Stability report

struct StabilityReport {
    double max_dp = 0;     ///< max_{l=0..N-1} ||delta p^{l+1/2}||
    double max_du = 0;     ///< max_{l=1..N-1} ||delta u^l||
    double max_gradp = 0;  ///< max_{l=1..N-1} ||grad p^l||
    double max_p = 0;      ///< max_{l=0..N} ||p^l||
    double max_u = 0;      ///< max_{l=0..N-1} ||u^{l+1/2}||
};

/// L2 maxima over a (possibly truncated) trajectory.
inline StabilityReport stability_report(const Trajectory& traj) {
    const P1Space& space = traj.space();
    const TriMesh& mesh = space.mesh();
    const SparseOperator m = assemble_mass(space);
    StabilityReport r;
    for (std::size_t l = 0; l < traj.pressure_count(); ++l) {
        r.max_p = std::max(r.max_p, l2_norm(m, traj.p(l)));
        if (l + 1 < traj.pressure_count()) r.max_dp = std::max(r.max_dp, l2_norm(m, traj.dp(l)));
        if (l >= 1 && l < traj.steps()) r.max_gradp = std::max(r.max_gradp, l2_norm(mesh, p1_gradient(space, traj.p(l))));
    }
    std::optional<DG0VecField> prev;
    for (std::size_t k = 0; k < traj.flux_count(); ++k) {
        DG0VecField u = traj.u(k);
        r.max_u = std::max(r.max_u, l2_norm(mesh, u));
        if (prev) {
            DG0VecField du(mesh.triangle_count());
            du.values = (u.values - prev->values) / traj.tau();
            r.max_du = std::max(r.max_du, l2_norm(mesh, du));
        }
        prev = std::move(u);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Time interpolants

/// Piecewise-in-time views of a trajectory: on (t_l, t_{l+1}] the pressure
/// interpolants are affine (Lambda^p), midpoint-average (Pi^p) and left value
/// (Theta^p); the flux interpolants are Lambda^u (affine from u^{l-1/2} to
/// u^{l+1/2}) and Pi^u = u^{l+1/2}; data interpolants take their value at
/// t_{l+1/2}. Every view returns its explicit anchor at t = 0.
///
/// On the first interval Lambda^u uses u^{-1/2} := u^{1/2}, so it is constant
/// there and continuous at t = 0.
class InterpolantBundle {
public:
    InterpolantBundle(const Trajectory& traj, const DiscreteProblem& problem) : traj_(&traj), problem_(&problem) {
        if (traj.aborted() || traj.pressure_count() != traj.steps() + 1) {
            throw PreconditionError("interpolants need a complete trajectory");
        }
    }

    double final_time() const { return traj_->tau() * double(traj_->steps()); }

    /// Index l with t in (t_l, t_{l+1}]; t = 0 maps to the anchor (returns npos).
    std::size_t interval(double t) const {
        const double T = final_time();
        if (t < 0 || t > T * (1 + 1e-14)) throw PreconditionError("interpolant evaluated outside [0, T]");
        if (t == 0.0) return npos;
        const double s = t / traj_->tau();
        auto l = std::size_t(std::max(0.0, std::ceil(s - 1e-9) - 1));
        return std::min(l, traj_->steps() - 1);
    }

    NodalVector lambda_p(double t) const {
        const std::size_t l = interval(t);
        if (l == npos) return traj_->p(0);
        return traj_->p(l) + (t - t_at(l)) * traj_->dp(l);
    }
    /// Time derivative of Lambda^p (delta p^{l+1/2} on (t_l, t_{l+1}]).
    NodalVector lambda_p_rate(double t) const {
        std::size_t l = interval(t);
        if (l == npos) l = 0;
        return traj_->dp(l);
    }
    NodalVector pi_p(double t) const {
        const std::size_t l = interval(t);
        if (l == npos) return traj_->p(0);
        return traj_->p_mid(l);
    }
    NodalVector theta_p(double t) const {
        const std::size_t l = interval(t);
        if (l == npos) return traj_->p(0);
        return traj_->p(l);
    }
    DG0VecField lambda_u(double t) const {
        const std::size_t l = interval(t);
        if (l == npos || l == 0) return traj_->u(0);
        DG0VecField lo = traj_->u(l - 1);
        const DG0VecField hi = traj_->u(l);
        lo.values += ((t - t_at(l)) / traj_->tau()) * (hi.values - lo.values);
        return lo;
    }
    DG0VecField pi_u(double t) const {
        const std::size_t l = interval(t);
        return traj_->u(l == npos ? 0 : l);
    }
    /// Load vector of F_{N,h}(t); F(0) = 0.
    NodalVector source_load(double t) const {
        const std::size_t l = interval(t);
        if (l == npos) return NodalVector::Zero(Eigen::Index(traj_->space().dof_count()));
        return problem_->source_load(l);
    }
    NodalVector observation(std::size_t i, double t) const {
        const std::size_t l = interval(t);
        if (l == npos) return problem_->observation_at_zero(i);
        return problem_->observation(i, l);
    }
    /// Spatial weight of a_{i,N,h}(t) as a DG0 field.
    DG0Field receiver_weight(std::size_t i, double t) const {
        const std::size_t l = interval(t);
        const double w = (l == npos) ? problem_->scenario().receivers.at(i).window(0.0) : problem_->receiver_window(i, l);
        DG0Field out = problem_->receiver_weight(i);
        out.values *= w;
        return out;
    }

    static constexpr std::size_t npos = std::size_t(-1);

private:
    double t_at(std::size_t l) const { return double(l) * traj_->tau(); }

    const Trajectory* traj_;
    const DiscreteProblem* problem_;
};

// ---------------------------------------------------------------------------
// Export

/// Binary trajectory record, little-endian:
///   char[8] "FWITRAJ1"; u64 N; f64 tau; u64 nodal dofs; u64 triangles;
///   u64 completed steps S; u64 stored fluxes F;
///   then for l = 0..S: p^l (dofs doubles), followed by u^{l+1/2}
///   (2*triangles doubles, x/y interleaved per triangle) whenever l < F.
inline void write_trajectory(std::ostream& out, const Trajectory& traj) {
    static_assert(std::endian::native == std::endian::little, "trajectory export assumes a little-endian host");
    auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    auto put_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    const std::size_t dofs = traj.space().dof_count(), tris = traj.space().mesh().triangle_count();
    out.write("FWITRAJ1", 8);
    put_u64(traj.steps());
    put_f64(traj.tau());
    put_u64(dofs);
    put_u64(tris);
    put_u64(traj.pressure_count() ? traj.pressure_count() - 1 : 0);
    put_u64(traj.flux_count());
    for (std::size_t l = 0; l < traj.pressure_count(); ++l) {
        out.write(reinterpret_cast<const char*>(traj.p(l).data()), std::streamsize(dofs * sizeof(double)));
        if (l < traj.flux_count()) {
            const DG0VecField u = traj.u(l);
            for (std::size_t t = 0; t < tris; ++t) {
                put_f64(u.values(Eigen::Index(t), 0));
                put_f64(u.values(Eigen::Index(t), 1));
            }
        }
    }
}

/// Pressures p^0..p^S of a record written by write_trajectory.
struct TrajectoryRecord {
    std::size_t steps = 0;
    double tau = 0;
    std::size_t dofs = 0;
    std::size_t triangles = 0;
    std::vector<NodalVector> pressures;
};

inline TrajectoryRecord read_trajectory(std::istream& in) {
    auto get = [&](auto& v) {
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw ParseError("trajectory record truncated");
    };
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "FWITRAJ1", 8) != 0) throw ParseError("not a trajectory record");
    std::uint64_t n, dofs, tris, completed, fluxes;
    double tau;
    get(n);
    get(tau);
    get(dofs);
    get(tris);
    get(completed);
    get(fluxes);
    if (completed > n || fluxes > completed + 1 || dofs == 0 || dofs > (1u << 28) || tris > (1u << 28)) throw ParseError("corrupt trajectory header");
    TrajectoryRecord r{std::size_t(n), tau, std::size_t(dofs), std::size_t(tris), {}};
    std::vector<double> skip(2 * tris);
    for (std::uint64_t l = 0; l <= completed; ++l) {
        NodalVector p(Eigen::Index(dofs), 1);
        in.read(reinterpret_cast<char*>(p.data()), std::streamsize(dofs * sizeof(double)));
        if (!in) throw ParseError("trajectory record truncated");
        r.pressures.push_back(std::move(p));
        if (l < fluxes && tris > 0) {
            in.read(reinterpret_cast<char*>(skip.data()), std::streamsize(skip.size() * sizeof(double)));
            if (!in) throw ParseError("trajectory record truncated");
        }
    }
    return r;
}

inline void write_stability_csv(std::ostream& out, const StabilityReport& r, bool header = true) {
    if (header) out << "max_dp,max_du,max_gradp,max_p,max_u\n";
    out << std::setprecision(17) << r.max_dp << ',' << r.max_du << ',' << r.max_gradp << ',' << r.max_p << ','
        << r.max_u << '\n';
}

}  // namespace fwi
