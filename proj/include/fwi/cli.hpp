#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fwi/config.hpp"
#include "fwi/error.hpp"
#include "fwi/forward.hpp"
#include "fwi/inverse.hpp"
#include "fwi/verify.hpp"

namespace fwi::cli {

enum ExitCode : int { kOk = 0, kError = 1, kConfigError = 2, kUnstable = 3, kThresholdFailed = 4 };

struct CommandOptions {
    bool allow_unstable = false;
    std::optional<std::filesystem::path> output_dir;
    std::ostream* log = &std::cout;
};

/// Mesh, space, scenario and parameter fields realized from a RunConfig. The
/// cheap checks (files, bounds, feasibility of the parameters) all run in the
/// constructor, before any solver work.
class Case {
public:
    explicit Case(RunConfig cfg) : cfg_(std::move(cfg)) {
        mesh_ = std::make_unique<TriMesh>(build_mesh(cfg_));
        space_ = std::make_unique<P1Space>(*mesh_);
        nu_values_ = param_values(cfg_.nu, *mesh_);
        if (!cfg_.bounds_given) {
            cfg_.nu_lo = nu_values_.values.minCoeff();
            cfg_.nu_hi = nu_values_.values.maxCoeff();
            if (!(cfg_.nu_lo > 0)) throw ParseError("config [scenario]: nu must be positive");
        }
        scenario_ = build_scenario(cfg_);
        scenario_.validate();
        nu0_values_ = param_values(cfg_.nu0, *mesh_);
        check_box(nu_values_, "scenario nu");
        check_box(nu0_values_, "optimizer nu0");
    }

    const RunConfig& config() const { return cfg_; }
    const TriMesh& mesh() const { return *mesh_; }
    const P1Space& space() const { return *space_; }
    const Scenario& scenario() const { return scenario_; }
    ParamField nu() const { return {nu_values_, cfg_.nu_lo, cfg_.nu_hi}; }
    ParamField nu0() const { return {nu0_values_, cfg_.nu_lo, cfg_.nu_hi}; }

    double c_inv() const {
        if (!c_inv_) c_inv_ = cfg_.c_inv ? *cfg_.c_inv : estimate_cinv(*space_).c_inv;
        return *c_inv_;
    }
    std::size_t steps() const { return resolve_steps(cfg_, mesh_->h(), c_inv()); }

    /// Problem with the configured observations (twin data generated from nu),
    /// or with zero observations when `observations` is false.
    std::unique_ptr<DiscreteProblem> problem(bool observations = true) const {
        ForwardOptions fo;
        fo.c_inv = c_inv();
        const std::size_t n = steps();
        Scenario sc = scenario_;
        if (observations && !sc.receivers.empty() && cfg_.observations != "zero") {
            SampledObservations obs;
            if (cfg_.observations == "twin") {
                const DiscreteProblem truth(*space_, scenario_, n, fo);
                const Trajectory traj = truth.run(nu());
                for (std::size_t l = 0; l < n; ++l) obs.push_back(traj.p_mid(l));
            } else {
                std::ifstream in(cfg_.observations_file, std::ios::binary);
                const TrajectoryRecord rec = read_trajectory(in);
                if (rec.dofs != space_->dof_count() || rec.pressures.size() != n + 1) {
                    throw ParseError("observation trajectory does not match the mesh and step count");
                }
                for (std::size_t l = 0; l < n; ++l) obs.push_back(0.5 * (rec.pressures[l] + rec.pressures[l + 1]));
            }
            for (auto& r : sc.receivers) r.observation = obs;
        }
        return std::make_unique<DiscreteProblem>(*space_, std::move(sc), n, fo);
    }

private:
    void check_box(const DG0Field& f, const std::string& what) const {
        for (std::size_t t = 0; t < f.size(); ++t) {
            if (!(f[t] >= cfg_.nu_lo && f[t] <= cfg_.nu_hi)) {
                throw ParseError("config: " + what + " value " + std::to_string(f[t]) + " on triangle " +
                                 std::to_string(t) + " lies outside [nu_lo, nu_hi]");
            }
        }
    }

    RunConfig cfg_;
    std::unique_ptr<TriMesh> mesh_;
    std::unique_ptr<P1Space> space_;
    Scenario scenario_;
    DG0Field nu_values_, nu0_values_;
    mutable std::optional<double> c_inv_;
};

namespace detail {

inline std::filesystem::path output_dir(const RunConfig& cfg, const CommandOptions& opts) {
    const auto dir = opts.output_dir ? *opts.output_dir : cfg.output_dir;
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    out << std::setw(2) << j << '\n';
}

/// Receiver averages (int w_i p^{l+1/2}) / (int w_i) at every midpoint.
inline void write_receiver_csv(std::ostream& out, const DiscreteProblem& problem, const Trajectory& traj) {
    out << "step,t";
    for (std::size_t i = 0; i < problem.receiver_count(); ++i) out << ",r" << i;
    out << '\n' << std::setprecision(17);
    std::vector<double> wsum;
    for (std::size_t i = 0; i < problem.receiver_count(); ++i) {
        wsum.push_back(problem.receiver_weight(i).values.dot(problem.areas()));
    }
    const std::size_t steps = traj.pressure_count() ? traj.pressure_count() - 1 : 0;
    for (std::size_t l = 0; l < steps; ++l) {
        const NodalVector pm = traj.p_mid(l);
        out << l << ',' << problem.midpoint(l);
        for (std::size_t i = 0; i < problem.receiver_count(); ++i) {
            const double v = (problem.receiver_mass(i).matrix * pm).sum();
            out << ',' << (wsum[i] > 0 ? v / wsum[i] : 0.0);
        }
        out << '\n';
    }
}

inline nlohmann::json stability_json(const StabilityReport& r) {
    return {{"max_dp", r.max_dp}, {"max_du", r.max_du}, {"max_gradp", r.max_gradp}, {"max_p", r.max_p}, {"max_u", r.max_u}};
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_cfl(const Case& c, const CommandOptions& opts = {}) {
    std::ostream& log = *opts.log;
    const double h = c.mesh().h();
    const std::size_t n = c.steps();
    const CflResult r = cfl_check(h, n, c.config().T, c.config().nu_lo, c.c_inv());
    log << std::setprecision(10) << "h = " << h << "\nc_inv = " << c.c_inv() << "\nc_cfl = " << r.c_cfl
        << "\ntau_max = " << r.tau_max << "\nmin_N = " << r.min_steps << "\nN = " << n << " (tau/h = "
        << c.config().T / double(n) / h << ") " << (r.admissible ? "admissible" : "violates the CFL condition") << '\n';
    return kOk;
}

inline int cmd_forward(const Case& c, const CommandOptions& opts = {}) {
    std::ostream& log = *opts.log;
    const auto dir = detail::output_dir(c.config(), opts);
    const auto problem = c.problem(false);
    const CflResult cfl = problem->cfl();
    if (!cfl.admissible && !opts.allow_unstable) {
        log << "error: N = " << problem->steps() << " violates the CFL condition (need N >= " << cfl.min_steps
            << "); pass --allow-unstable to run anyway\n";
        return kConfigError;
    }
    RunOptions ro;
    ro.allow_unstable = opts.allow_unstable;
    ro.throw_on_blowup = false;
    const Trajectory traj = problem->run(c.nu(), ro);
    const StabilityReport stab = stability_report(traj);

    {
        std::ofstream out(dir / "trajectory.bin", std::ios::binary);
        write_trajectory(out, traj);
    }
    {
        std::ofstream out(dir / "stability.csv");
        write_stability_csv(out, stab);
    }
    {
        std::ofstream out(dir / "receivers.csv");
        detail::write_receiver_csv(out, *problem, traj);
    }

    bool unstable = traj.aborted();
    if (!cfl.admissible && !unstable) {
        // Compare against the admissible run with the smallest step count.
        ForwardOptions fo;
        fo.c_inv = c.c_inv();
        const DiscreteProblem ref(c.space(), c.scenario(), cfl.min_steps, fo);
        const StabilityReport ref_stab = stability_report(ref.run(c.nu()));
        unstable = stab.max_dp >= 1e3 * ref_stab.max_dp;
    }
    log << "forward: N = " << problem->steps() << ", completed steps = "
        << (traj.pressure_count() ? traj.pressure_count() - 1 : 0) << ", max_dp = " << stab.max_dp << '\n';
    if (unstable) {
        log << "instability detected" << (traj.aborted() ? " (aborted at step " + std::to_string(traj.abort_step()) + ")" : "")
            << '\n';
        return kUnstable;
    }
    return kOk;
}

inline int cmd_invert(const Case& c, const CommandOptions& opts = {}) {
    std::ostream& log = *opts.log;
    const auto dir = detail::output_dir(c.config(), opts);
    const auto problem = c.problem();
    const OptimizerResult res = minimize(*problem, c.nu0(), c.config().optimizer);
    {
        std::ofstream out(dir / "nu.dg0");
        write_dg0(out, res.nu.values());
    }
    {
        std::ofstream out(dir / "trace.csv");
        write_trace_csv(out, res.trace);
    }
    bool feasible = true, monotone = true;
    for (std::size_t k = 0; k < res.trace.records.size(); ++k) {
        feasible = feasible && res.trace.records[k].feasible;
        if (k > 0) monotone = monotone && res.trace.records[k].value.total <= res.trace.records[k - 1].value.total;
    }
    nlohmann::json summary{{"iterations", res.trace.records.size() - 1},
                           {"converged", res.trace.converged},
                           {"line_search_failed", res.trace.line_search_failed},
                           {"J_initial", res.trace.records.front().value.total},
                           {"J_final", res.trace.records.back().value.total},
                           {"pg_norm_final", res.trace.records.back().pg_norm},
                           {"all_feasible", feasible},
                           {"objective_nonincreasing", monotone}};
    if (c.config().observations == "twin") {
        DG0Field diff = res.nu.values();
        diff.values -= c.nu().values().values;
        const double rel = l2_norm(c.mesh(), diff) / l2_norm(c.mesh(), c.nu().values());
        summary["relative_l2_error"] = rel;
        log << "invert: relative L2 error to the true parameter " << rel << '\n';
    }
    detail::write_json(dir / "summary.json", summary);
    log << "invert: " << summary["iterations"] << " iterations, J " << summary["J_initial"] << " -> "
        << summary["J_final"] << (res.trace.converged ? ", converged" : "")
        << (res.trace.line_search_failed ? ", line search failed" : "") << '\n';
    return kOk;
}

struct GradcheckReport {
    std::vector<std::size_t> elements;
    std::vector<double> eps;
    std::vector<double> rel_err;  ///< per eps, max over elements of |fd - g| / |g|
    double best_rel_err = 0;
    double duality_rel_err = 0;
    bool sign_agreement = true;
};

/// Adjoint gradient against central differences on interior elements with
/// significant gradient entries, and against a tangent sweep.
inline GradcheckReport gradcheck(const DiscreteProblem& problem, const ParamField& nu, std::size_t count,
                                 const std::vector<double>& eps_list, std::uint64_t seed) {
    const GradientResult g = gradient(problem, nu);
    const double lo = problem.scenario().nu_lo, hi = problem.scenario().nu_hi;
    const double emax = *std::max_element(eps_list.begin(), eps_list.end());
    const double gmax = g.partials.values.cwiseAbs().maxCoeff();
    std::vector<std::size_t> candidates;
    for (std::size_t t = 0; t < nu.size(); ++t) {
        if (nu[t] - emax >= lo && nu[t] + emax <= hi && std::abs(g.partials[t]) > 0 &&
            std::abs(g.partials[t]) >= 1e-3 * gmax) candidates.push_back(t);
    }
    if (candidates.size() < count) throw PreconditionError("gradcheck: not enough interior elements with a significant gradient");
    std::mt19937_64 rng(seed);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(count);
    std::sort(candidates.begin(), candidates.end());

    GradcheckReport rep;
    rep.elements = candidates;
    rep.eps = eps_list;
    rep.best_rel_err = std::numeric_limits<double>::infinity();
    for (double eps : eps_list) {
        const DG0Field fd = fd_gradient_oracle(problem, nu, eps, candidates);
        double worst = 0;
        for (std::size_t t : candidates) worst = std::max(worst, std::abs(fd[t] - g.partials[t]) / std::abs(g.partials[t]));
        rep.rel_err.push_back(worst);
        if (worst < rep.best_rel_err) {
            rep.best_rel_err = worst;
            rep.sign_agreement = true;
            for (std::size_t t : candidates) rep.sign_agreement = rep.sign_agreement && (fd[t] > 0) == (g.partials[t] > 0);
        }
    }
    std::normal_distribution<double> normal;
    DG0Field d = DG0Field::constant(nu.size(), 0.0);
    for (std::size_t t = 0; t < nu.size(); ++t) d[t] = normal(rng);
    const double adj = g.partials.values.dot(d.values);
    const double tan = tangent_derivative(problem, nu, d);
    rep.duality_rel_err = std::abs(adj - tan) / std::max(std::abs(adj), std::abs(tan));
    return rep;
}

inline int cmd_gradcheck(const Case& c, const CommandOptions& opts = {}) {
    std::ostream& log = *opts.log;
    const auto dir = detail::output_dir(c.config(), opts);
    const auto problem = c.problem();
    const GradcheckReport rep =
        gradcheck(*problem, c.nu0(), c.config().gradcheck_elements, c.config().gradcheck_eps, c.config().seed);
    const bool pass = rep.best_rel_err <= 1e-6 && rep.duality_rel_err <= 1e-8 && rep.sign_agreement;
    detail::write_json(dir / "gradcheck.json", {{"elements", rep.elements},
                                                {"eps", rep.eps},
                                                {"rel_err", rep.rel_err},
                                                {"best_rel_err", rep.best_rel_err},
                                                {"duality_rel_err", rep.duality_rel_err},
                                                {"sign_agreement", rep.sign_agreement},
                                                {"pass", pass}});
    log << std::setprecision(3) << (pass ? "PASS" : "FAIL") << " rel_err = " << rep.best_rel_err
        << " (<= 1e-6), duality = " << rep.duality_rel_err << " (<= 1e-8)\n";
    return pass ? kOk : kThresholdFailed;
}

inline int cmd_convergence(const Case& c, const CommandOptions& opts = {}) {
    std::ostream& log = *opts.log;
    const auto dir = detail::output_dir(c.config(), opts);
    StudyConfig sc{c.mesh(), c.scenario()};
    sc.nu_bar = field_function(c.config().nu_bar);
    sc.levels = c.config().levels;
    sc.cfl_ratio = std::min(1.0, c.config().cfl_ratio);
    sc.c_inv = c.config().c_inv;
    const SweepResult r = convergence_study(sc);
    {
        std::ofstream out(dir / "sweep.csv");
        write_sweep_csv(out, r);
    }
    std::vector<double> el, et, ep, jd, pe;
    std::vector<std::vector<double>> stab(5);
    bool gaps = true;
    for (const auto& l : r.levels) {
        el.push_back(l.err_lambda_p);
        et.push_back(l.err_theta_p);
        ep.push_back(l.err_pi_p);
        jd.push_back(l.J_diff);
        pe.push_back(l.projection_error);
        const double slack = 1 + 1e-12;
        gaps = gaps && l.gap_lambda_theta_p <= slack * l.tau * l.stability.max_dp &&
               l.gap_lambda_pi_u <= slack * 2 * l.tau * l.stability.max_du;
        const double s[5] = {l.stability.max_dp, l.stability.max_du, l.stability.max_gradp, l.stability.max_p,
                             l.stability.max_u};
        for (int k = 0; k < 5; ++k) stab[std::size_t(k)].push_back(s[k]);
    }
    double spread = 0;
    for (const auto& s : stab) spread = std::max(spread, relative_spread(s));
    const bool decay = strictly_decreasing(el) && strictly_decreasing(et) && strictly_decreasing(ep);
    const bool jdecay = strictly_decreasing(jd) && strictly_decreasing(pe);
    const bool stable = spread <= 0.10;
    detail::write_json(dir / "convergence.json", {{"interpolant_errors_decrease", decay},
                                                  {"interpolant_gap_bounds", gaps},
                                                  {"stability_spread", spread},
                                                  {"stability_within_10pct", stable},
                                                  {"objective_difference_decreases", jdecay},
                                                  {"pass", decay && gaps && stable && jdecay}});
    log << (decay ? "PASS" : "FAIL") << " monotone decay of interpolant errors\n"
        << (gaps ? "PASS" : "FAIL") << " interpolant gap bounds\n"
        << (stable ? "PASS" : "FAIL") << " stability maxima spread " << spread << " (<= 0.10)\n"
        << (jdecay ? "PASS" : "FAIL") << " objective difference and projection error decrease\n";
    return (decay && gaps && stable && jdecay) ? kOk : kThresholdFailed;
}

}  // namespace fwi::cli
