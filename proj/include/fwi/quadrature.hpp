#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "fwi/mesh.hpp"

namespace fwi {

/// Quadrature on a triangle in barycentric coordinates; weights sum to one
/// so that sum w_q f(x_q) * |T| approximates the integral over T.
struct TriangleRule {
    std::vector<Eigen::Vector3d> points;
    std::vector<double> weights;
};

/// Six-point rule, exact for polynomials of degree 4.
inline const TriangleRule& degree4_rule() {
    static const TriangleRule rule = [] {
        constexpr double a1 = 0.44594849091596488631832925388305;
        constexpr double w1 = 0.22338158967801146569500700843312;
        constexpr double a2 = 0.091576213509770743459571463402202;
        constexpr double w2 = 0.10995174365532186763832632490021;
        TriangleRule r;
        for (double a : {a1, a2}) {
            const double b = 1.0 - 2.0 * a;
            const double w = (a == a1) ? w1 : w2;
            r.points.emplace_back(b, a, a);
            r.points.emplace_back(a, b, a);
            r.points.emplace_back(a, a, b);
            r.weights.insert(r.weights.end(), {w, w, w});
        }
        return r;
    }();
    return rule;
}

/// Equal-weight barycentric lattice with n*n sub-triangle centroids; used to
/// average discontinuous data such as indicator functions.
inline TriangleRule subdivision_rule(int n) {
    TriangleRule r;
    const double w = 1.0 / (double(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n - i; ++j) {
            // upright sub-triangle
            r.points.emplace_back((i + 1.0 / 3) / n, (j + 1.0 / 3) / n, 1.0 - (i + j + 2.0 / 3) / n);
            r.weights.push_back(w);
            if (i + j < n - 1) {
                r.points.emplace_back((i + 2.0 / 3) / n, (j + 2.0 / 3) / n, 1.0 - (i + j + 4.0 / 3) / n);
                r.weights.push_back(w);
            }
        }
    }
    return r;
}

inline Point map_to_triangle(const TriMesh& mesh, std::size_t t, const Eigen::Vector3d& bary) {
    const auto& tri = mesh.triangle(t);
    return bary[0] * mesh.vertex(tri[0]) + bary[1] * mesh.vertex(tri[1]) + bary[2] * mesh.vertex(tri[2]);
}

}  // namespace fwi
