// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

using namespace fwi;
using namespace fwi::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Oracle equivalence

Outcome oracle_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1, 1);
    double worst = 0;
    for (int trial = 0; trial < 5; ++trial) {
        SquareSides sides;
        if (trial % 2 == 0) sides.left = BoundaryTag::Dirichlet;
        if (trial == 4) sides.bottom = BoundaryTag::Dirichlet;
        const TriMesh mesh = perturbed_square(2, 0.2, 100 + trial, sides);
        const P1Space space(mesh);
        const double a0 = u(rng), a1 = u(rng), a2 = u(rng), b0 = u(rng), b1 = u(rng), c0 = u(rng), c1 = u(rng);
        Scenario sc;
        sc.T = 0.4 + 0.1 * trial;
        sc.nu_lo = 0.5;
        sc.nu_hi = 2.0;
        sc.eta = [=](const Point& x) { return 0.3 + 0.2 * a0 * x.x() + 0.1 * x.y(); };
        sc.p0.value = [=](const Point& x) { return a1 + b0 * x.x() * x.y() + c0 * x.y() * x.y(); };
        sc.p0.gradient = [=](const Point& x) { return Eigen::Vector2d(b0 * x.y(), b0 * x.x() + 2 * c0 * x.y()); };
        sc.p1.value = [=](const Point& x) { return a2 * x.x() * x.x() + b1 * x.y(); };
        SourceTerm s;
        s.spatial = [=](const Point& x) { return 1 + c1 * x.x() * x.y() * x.y(); };
        s.pulse = [=](double t) { return t * t * t - a0 * t + 0.5; };
        sc.sources.push_back(s);
        DG0Field nu = random_field(mesh.triangle_count(), 0.5, 2.0, 7 + trial);
        const ParamField param(nu, sc.nu_lo, sc.nu_hi);
        const std::size_t n = 4 + 3 * trial;  // 4..16
        ForwardOptions fo;
        fo.enforce_cfl = false;
        const DiscreteProblem problem(space, sc, n, fo);
        const Trajectory a = problem.run(param);
        const Trajectory b = dense_oracle_forward(space, sc, param, n);
        for (std::size_t l = 0; l <= n; ++l) worst = std::max(worst, (a.p(l) - b.p(l)).cwiseAbs().maxCoeff());
        for (std::size_t l = 0; l < n; ++l) {
            worst = std::max(worst, (a.u(l).values - b.u(l).values).cwiseAbs().maxCoeff());
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 5.0, "max componentwise difference " + fmt(worst) + " (<= 1e-12), " + fmt(secs) + " s (< 5 s)"};
}

// ---------------------------------------------------------------------------
// 2. Zero-data exactness and constant equilibria

Outcome zero_data() {
    const TriMesh mesh = structured_square(8, {BoundaryTag::Dirichlet});
    const P1Space space(mesh);
    Scenario sc;
    sc.nu_lo = 1.0;
    sc.nu_hi = 2.0;
    sc.eta = [](const Point&) { return 0.5; };
    const DiscreteProblem zero(space, sc, 200);
    const Trajectory tz = zero.run(ParamField(random_field(mesh.triangle_count(), 1.0, 2.0, 3), 1.0, 2.0));
    double zmax = 0;
    for (std::size_t l = 0; l < tz.pressure_count(); ++l) zmax = std::max(zmax, tz.p(l).cwiseAbs().maxCoeff());
    for (std::size_t k = 0; k < tz.flux_count(); ++k) zmax = std::max(zmax, tz.u(k).values.cwiseAbs().maxCoeff());

    const TriMesh neumann = structured_square(8);
    const P1Space nspace(neumann);
    Scenario cs;
    cs.nu_lo = 1.0;
    cs.nu_hi = 2.0;
    cs.p0 = ScalarFunction::constant(0.7);
    const DiscreteProblem constant(nspace, cs, 1000);
    const Trajectory tc = constant.run(ParamField(random_field(neumann.triangle_count(), 1.0, 2.0, 4), 1.0, 2.0));
    double drift = 0;
    for (std::size_t l = 0; l < tc.pressure_count(); ++l) drift = std::max(drift, (tc.p(l).array() - 0.7).abs().maxCoeff());
    return {zmax <= 1e-15 && drift <= 1e-12,
            "zero-data max " + fmt(zmax) + " (<= 1e-15), constant drift over 1000 steps " + fmt(drift) + " (<= 1e-12)"};
}

// ---------------------------------------------------------------------------
// Shared refinement sweep for criteria 3, 5 and 7

Scenario sweep_scenario() {
    Scenario sc = smooth_scenario(1.0);
    Receiver r;
    r.weight = [](const Point& x) { return std::exp(-(x - Point(0.7, 0.3)).squaredNorm() / 0.05); };
    r.observation = ObservationFunction([](double t, const Point& x) { return 0.1 * t * x.x(); });
    sc.receivers.push_back(r);
    return sc;
}

const SweepResult& shared_sweep(double* secs = nullptr) {
    static double elapsed = 0;
    static const SweepResult result = [] {
        const auto t0 = std::chrono::steady_clock::now();
        StudyConfig cfg{structured_square(8), sweep_scenario()};
        cfg.nu_bar = smooth_nu;
        cfg.levels = 3;
        cfg.cfl_ratio = 0.9;
        SweepResult r = convergence_study(cfg);
        elapsed = seconds_since(t0);
        return r;
    }();
    if (secs) *secs = elapsed;
    return result;
}

// 3. Stability under CFL
Outcome stability_under_cfl() {
    double secs = 0;
    const SweepResult& r = shared_sweep(&secs);
    std::vector<std::vector<double>> s(5);
    for (const auto& l : r.levels) {
        const double v[5] = {l.stability.max_dp, l.stability.max_du, l.stability.max_gradp, l.stability.max_p,
                             l.stability.max_u};
        for (int k = 0; k < 5; ++k) s[std::size_t(k)].push_back(v[k]);
    }
    const char* names[5] = {"max_dp", "max_du", "max_gradp", "max_p", "max_u"};
    double worst = 0;
    std::string detail;
    for (int k = 0; k < 5; ++k) {
        const double spread = relative_spread(s[std::size_t(k)]);
        worst = std::max(worst, spread);
        detail += std::string(k ? ", " : "") + names[k] + " " + fmt(spread);
    }
    return {worst <= 0.10 && secs < 120.0, "spread across h = 2^-3..2^-5: " + detail + " (<= 0.10), sweep " + fmt(secs) + " s"};
}

// 4. Instability beyond CFL
Outcome instability_beyond_cfl() {
    const SweepResult& r = shared_sweep();
    const Scenario sc = sweep_scenario();
    TriMesh mesh = structured_square(8);
    bool all = true;
    std::string detail;
    for (std::size_t k = 0; k < r.levels.size(); ++k) {
        if (k > 0) mesh = refine_uniform(mesh);
        const P1Space space(mesh);
        const double c_cfl = std::sqrt(sc.nu_lo) / (std::sqrt(2.0) * r.levels[k].c_inv);
        const auto n = std::size_t(std::ceil(sc.T / (4.0 * c_cfl * mesh.h())));
        ForwardOptions fo;
        fo.c_inv = r.levels[k].c_inv;
        const DiscreteProblem problem(space, sc, n, fo);
        RunOptions ro;
        ro.allow_unstable = true;
        ro.throw_on_blowup = false;
        const Trajectory traj = problem.run(ParamField(q_projection(mesh, smooth_nu), 1.0, 2.0), ro);
        const double ratio = stability_report(traj).max_dp / r.levels[k].stability.max_dp;
        const bool flagged = traj.aborted() || ratio >= 1e3;
        all = all && flagged;
        detail += std::string(k ? "; " : "") + "level " + std::to_string(k) + ": " +
                  (traj.aborted() ? "aborted at step " + std::to_string(traj.abort_step())
                                  : "max_dp ratio " + fmt(ratio));
    }
    return {all, detail + " (abort or ratio >= 1e3)"};
}

// 5. Interpolant convergence
Outcome interpolant_convergence() {
    double secs = 0;
    const SweepResult& r = shared_sweep(&secs);
    std::vector<double> el, et, ep;
    bool gaps = true;
    for (const auto& l : r.levels) {
        el.push_back(l.err_lambda_p);
        et.push_back(l.err_theta_p);
        ep.push_back(l.err_pi_p);
        const double slack = 1 + 1e-12;
        gaps = gaps && l.gap_lambda_theta_p <= slack * l.tau * l.stability.max_dp &&
               l.gap_lambda_pi_u <= slack * 2 * l.tau * l.stability.max_du;
    }
    auto seq = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " > " : "") + fmt(v[i]);
        return s;
    };
    const bool decay = strictly_decreasing(el) && strictly_decreasing(et) && strictly_decreasing(ep);
    return {decay && gaps && secs < 300.0, "Lambda " + seq(el) + "; Theta " + seq(et) + "; Pi " + seq(ep) +
                                               "; gap bounds " + (gaps ? "hold" : "violated")};
}

// ---------------------------------------------------------------------------
// 6. Gradient exactness

Outcome gradient_exactness() {
    const auto t0 = std::chrono::steady_clock::now();
    const TriMesh mesh = structured_square(8, {BoundaryTag::Neumann, BoundaryTag::Neumann, BoundaryTag::Dirichlet});
    const P1Space space(mesh);
    Scenario sc;
    sc.T = 1.0;
    sc.nu_lo = 0.8;
    sc.nu_hi = 2.5;
    sc.eta = [](const Point&) { return 0.1; };
    sc.lambda = 1e-4;
    sc.sources.push_back(ricker_source({0.3, 0.7}, 0.1, 3.0, 0.3));
    sc.sources.push_back(ricker_source({0.7, 0.4}, 0.1, 3.0, 0.25));
    sc.receivers.push_back(disk_receiver({0.5, 0.5}, 0.35));
    sc.receivers.push_back(disk_receiver({0.2, 0.2}, 0.15));
    DG0Field truth = DG0Field::constant(mesh.triangle_count(), 1.0);
    for (std::size_t t = 0; t < truth.size(); ++t) truth[t] = mesh.centroid(t).x() < 0.5 ? 1.0 : 1.6;
    const std::size_t n = 80;
    sc = with_twin_data(space, sc, n, ParamField(truth, sc.nu_lo, sc.nu_hi));
    const DiscreteProblem problem(space, sc, n);
    const ParamField nu(random_field(mesh.triangle_count(), 1.0, 2.0, 11), sc.nu_lo, sc.nu_hi);

    const GradientResult g = gradient(problem, nu);
    const double gmax = g.partials.values.cwiseAbs().maxCoeff();
    std::vector<std::size_t> elems;
    std::mt19937_64 rng(5);
    std::vector<std::size_t> cand;
    for (std::size_t t = 0; t < nu.size(); ++t) {
        if (std::abs(g.partials[t]) >= 1e-2 * gmax) cand.push_back(t);
    }
    std::shuffle(cand.begin(), cand.end(), rng);
    cand.resize(std::min<std::size_t>(12, cand.size()));
    double best = std::numeric_limits<double>::infinity();
    for (double eps : {1e-3, 1e-4, 1e-5}) {
        const DG0Field fd = fd_gradient_oracle(problem, nu, eps, cand);
        double worst = 0;
        for (std::size_t t : cand) worst = std::max(worst, std::abs(fd[t] - g.partials[t]) / std::abs(g.partials[t]));
        best = std::min(best, worst);
    }
    std::normal_distribution<double> normal;
    DG0Field d = DG0Field::constant(nu.size(), 0.0);
    for (std::size_t t = 0; t < d.size(); ++t) d[t] = normal(rng);
    const double adj = g.partials.values.dot(d.values), tan = tangent_derivative(problem, nu, d);
    const double dual = std::abs(adj - tan) / std::abs(tan);
    const double secs = seconds_since(t0);
    return {cand.size() >= 10 && best <= 1e-6 && dual <= 1e-8 && secs < 60.0,
            std::to_string(cand.size()) + " elements of " + std::to_string(mesh.triangle_count()) +
                ": best-eps FD relative error " + fmt(best) + " (<= 1e-6), duality " + fmt(dual) + " (<= 1e-8), " +
                fmt(secs) + " s"};
}

// 7. Objective consistency
Outcome objective_consistency() {
    const SweepResult& r = shared_sweep();
    std::vector<double> jd, pe;
    for (const auto& l : r.levels) {
        jd.push_back(l.J_diff);
        pe.push_back(l.projection_error);
    }
    const bool ok = strictly_decreasing(jd) && strictly_decreasing(pe);
    return {ok, "|J_ref - J_h| " + fmt(jd[0]) + " > " + fmt(jd[1]) + " > " + fmt(jd[2]) + "; ||Q_h nu - nu|| " +
                    fmt(pe[0]) + " > " + fmt(pe[1]) + " > " + fmt(pe[2])};
}

// ---------------------------------------------------------------------------
// 8. Twin inversion

Outcome twin_inversion() {
    const auto t0 = std::chrono::steady_clock::now();
    const TriMesh mesh = structured_square(16);
    const P1Space space(mesh);
    Scenario sc;
    sc.T = 1.5;
    sc.nu_lo = 0.8;
    sc.nu_hi = 2.0;
    sc.lambda = 1e-10;
    for (Point c : {Point(0.25, 0.25), Point(0.75, 0.25), Point(0.25, 0.75), Point(0.75, 0.75)}) {
        sc.sources.push_back(ricker_source(c, 0.08, 2.0, 0.25));
    }
    Receiver everywhere;
    everywhere.weight = [](const Point&) { return 1.0; };
    sc.receivers.push_back(everywhere);
    DG0Field truth = DG0Field::constant(mesh.triangle_count(), 1.0);
    for (std::size_t t = 0; t < truth.size(); ++t) truth[t] = mesh.centroid(t).x() < 0.5 ? 1.0 : 1.5;
    const ParamField true_nu(truth, sc.nu_lo, sc.nu_hi);

    ForwardOptions fo;
    fo.c_inv = estimate_cinv(space).c_inv;
    const std::size_t n = cfl_check(mesh.h(), 1, sc.T, sc.nu_lo, *fo.c_inv).min_steps;
    sc = with_twin_data(space, sc, n, true_nu, fo);
    const DiscreteProblem problem(space, sc, n, fo);
    const ParamField start = ParamField::constant(mesh.triangle_count(), 1.25, sc.nu_lo, sc.nu_hi);
    const OptimizerResult res = minimize(problem, start);

    bool feasible = true, monotone = true;
    for (std::size_t k = 0; k < res.trace.records.size(); ++k) {
        feasible = feasible && res.trace.records[k].feasible;
        if (k) monotone = monotone && res.trace.records[k].value.total <= res.trace.records[k - 1].value.total;
    }
    for (std::size_t t = 0; t < res.nu.size(); ++t) feasible = feasible && res.nu[t] >= sc.nu_lo && res.nu[t] <= sc.nu_hi;
    DG0Field diff = res.nu.values();
    diff.values -= truth.values;
    const double rel = l2_norm(mesh, diff) / l2_norm(mesh, truth);
    const std::size_t iters = res.trace.records.size() - 1;
    const double secs = seconds_since(t0);
    return {rel <= 0.10 && iters <= 200 && feasible && monotone && secs < 300.0,
            "relative L2 error " + fmt(rel) + " (<= 0.10) after " + std::to_string(iters) + " iterations on " +
                std::to_string(mesh.triangle_count()) + " triangles, feasible " + (feasible ? "yes" : "no") +
                ", nonincreasing " + (monotone ? "yes" : "no") + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------
// 9. Inverse-estimate sharpness

Outcome inverse_estimate() {
    std::vector<double> cinv;
    double worst_excess = 0, best_ratio = 0;
    TriMesh mesh = structured_square(8);
    for (int level = 0; level < 3; ++level) {
        if (level) mesh = refine_uniform(mesh);
        const P1Space space(mesh);
        const InverseEstimate est = estimate_cinv(space);
        cinv.push_back(est.c_inv);
        const SparseOperator m = assemble_mass(space);
        std::mt19937_64 rng(77 + level);
        std::uniform_real_distribution<double> amp(0.0, 0.1);
        for (int f = 0; f < 100; ++f) {
            NodalVector p = random_nodal(space, 1000 * level + f);
            if (f % 2 == 1) {
                // perturbation of the extremal mode
                p = est.extremal + amp(rng) * p / l2_norm(m, p);
            }
            const double ratio = l2_norm(mesh, p1_gradient(space, p)) / l2_norm(m, p) * mesh.h() / est.c_inv;
            worst_excess = std::max(worst_excess, ratio - 1.0);
            best_ratio = std::max(best_ratio, ratio);
        }
    }
    const double spread = relative_spread(cinv);
    const bool ok = worst_excess <= 1e-9 && best_ratio >= 0.99 && spread <= 0.05;
    return {ok, "c_inv " + fmt(cinv[0]) + ", " + fmt(cinv[1]) + ", " + fmt(cinv[2]) + " (spread " + fmt(spread) +
                    " <= 0.05), best ratio " + fmt(best_ratio) + " (>= 0.99), bound exceeded by " +
                    fmt(std::max(0.0, worst_excess))};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"oracle equivalence", oracle_equivalence},
        {"zero-data exactness", zero_data},
        {"stability under CFL", stability_under_cfl},
        {"instability beyond CFL", instability_beyond_cfl},
        {"interpolant convergence", interpolant_convergence},
        {"gradient exactness", gradient_exactness},
        {"objective consistency", objective_consistency},
        {"twin inversion", twin_inversion},
        {"inverse-estimate sharpness", inverse_estimate},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
                  << " [" << fmt(seconds_since(t0)) << " s]" << std::endl;
    }
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - std::size_t(failed) << "/" << criteria.size()
              << std::endl;
    return failed ? 1 : 0;
}
