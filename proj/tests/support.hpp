#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "fwi/fwi.hpp"

namespace fwi::testing {

inline constexpr double kPi = std::numbers::pi;

/// Smooth Neumann-compatible wave scenario on the unit square.
inline Scenario smooth_scenario(double T = 0.5) {
    Scenario sc;
    sc.T = T;
    sc.nu_lo = 1.0;
    sc.nu_hi = 2.0;
    sc.eta = [](const Point& x) { return 0.2 + 0.1 * x.x(); };
    sc.p0.value = [](const Point& x) { return std::cos(kPi * x.x()) * std::cos(kPi * x.y()); };
    sc.p0.gradient = [](const Point& x) {
        return Eigen::Vector2d(-kPi * std::sin(kPi * x.x()) * std::cos(kPi * x.y()),
                               -kPi * std::cos(kPi * x.x()) * std::sin(kPi * x.y()));
    };
    sc.p1.value = [](const Point& x) { return 0.5 * std::sin(kPi * x.x()) * std::sin(kPi * x.y()); };
    SourceTerm src;
    src.spatial = [](const Point& x) { return std::exp(-((x - Point(0.4, 0.6)).squaredNorm()) / 0.08); };
    src.pulse = [](double t) { return std::sin(2 * kPi * t); };
    src.integral = [](double t) { return (1 - std::cos(2 * kPi * t)) / (2 * kPi); };
    sc.sources.push_back(src);
    return sc;
}

inline double smooth_nu(const Point& x) { return 1.0 + 0.5 * std::sin(kPi * x.x()) * std::sin(kPi * x.y()); }

/// Disk receiver with an indicator weight.
inline Receiver disk_receiver(Point c, double r) {
    Receiver rec;
    rec.weight = [c, r](const Point& x) { return (x - c).norm() < r ? 1.0 : 0.0; };
    rec.discontinuous_weight = true;
    return rec;
}

/// Ricker point-like source.
inline SourceTerm ricker_source(Point c, double width, double freq, double delay) {
    SourceTerm s;
    s.spatial = [c, width](const Point& x) { return std::exp(-(x - c).squaredNorm() / (width * width)); };
    s.pulse = [freq, delay](double t) {
        const double a = kPi * freq * (t - delay);
        return (1 - 2 * a * a) * std::exp(-a * a);
    };
    s.integral = [freq, delay](double t) {
        const double w = kPi * freq;
        auto g = [&](double tt) { return (tt - delay) * std::exp(-w * w * (tt - delay) * (tt - delay)); };
        return g(t) - g(0.0);
    };
    return s;
}

/// Twin data: receivers observe p^{l+1/2} of the run at `truth`.
inline Scenario with_twin_data(const P1Space& space, Scenario sc, std::size_t n, const ParamField& truth,
                               const ForwardOptions& fo = {}) {
    const DiscreteProblem gen(space, sc, n, fo);
    const Trajectory traj = gen.run(truth);
    SampledObservations obs;
    for (std::size_t l = 0; l < n; ++l) obs.push_back(traj.p_mid(l));
    for (auto& r : sc.receivers) r.observation = obs;
    return sc;
}

inline DG0Field random_field(std::size_t n, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    DG0Field f = DG0Field::constant(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) f[t] = d(rng);
    return f;
}

inline NodalVector random_nodal(const P1Space& space, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    NodalVector v(Eigen::Index(space.dof_count()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = d(rng);
    space.zero_dirichlet(v);
    return v;
}

inline TriMesh perturbed_square(int n, double amount, std::uint64_t seed, SquareSides sides = {}) {
    const TriMesh base = structured_square(n, sides);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-amount / n, amount / n);
    std::vector<Point> v = base.vertices();
    for (auto& p : v) {
        const bool bx = p.x() == 0.0 || p.x() == 1.0, by = p.y() == 0.0 || p.y() == 1.0;
        if (!bx) p.x() += d(rng);
        if (!by) p.y() += d(rng);
    }
    return TriMesh(std::move(v), base.triangles(), base.boundary_edges());
}

}  // namespace fwi::testing
