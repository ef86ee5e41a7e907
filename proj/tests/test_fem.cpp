#include <gtest/gtest.h>

#include <cstdlib>

#include <Eigen/Eigenvalues>

#include "support.hpp"

using namespace fwi;
using namespace fwi::testing;

namespace {

Eigen::MatrixXd free_block(const P1Space& space, const SparseMatrix& a) {
    const auto& f = space.free_dofs();
    const Eigen::MatrixXd d(a);
    Eigen::MatrixXd out(Eigen::Index(f.size()), Eigen::Index(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (std::size_t j = 0; j < f.size(); ++j) out(Eigen::Index(i), Eigen::Index(j)) = d(f[i], f[j]);
    }
    return out;
}

NodalVector linear_nodal(const TriMesh& mesh, double a, double b, double c) {
    NodalVector v(Eigen::Index(mesh.vertex_count()));
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
        v[Eigen::Index(i)] = a + b * mesh.vertex(i).x() + c * mesh.vertex(i).y();
    }
    return v;
}

}  // namespace

TEST(Assembly, MassIntegratesPolynomialsExactly) {
    const TriMesh mesh = perturbed_square(5, 0.3, 1);
    const P1Space space(mesh);
    const SparseOperator m = assemble_mass(space);
    EXPECT_TRUE(m.symmetric);
    EXPECT_LT(m.asymmetry(), 1e-15);
    const NodalVector one = NodalVector::Ones(Eigen::Index(mesh.vertex_count()));
    EXPECT_NEAR(one.dot(m * one), 1.0, 1e-13);
    // int_[0,1]^2 x y = 1/4, exact for products of P1 functions
    const NodalVector x = linear_nodal(mesh, 0, 1, 0), y = linear_nodal(mesh, 0, 0, 1);
    EXPECT_NEAR(x.dot(m * y), 0.25, 1e-13);
    EXPECT_NEAR(x.dot(m * x), 1.0 / 3.0, 1e-13);
}

TEST(Assembly, WeightedMassIsLinearInWeight) {
    const TriMesh mesh = perturbed_square(4, 0.2, 3);
    const P1Space space(mesh);
    const DG0Field a = random_field(mesh.triangle_count(), 0.5, 2.0, 1);
    const DG0Field b = random_field(mesh.triangle_count(), 0.5, 2.0, 2);
    const DG0Field sum(a.values + 3.0 * b.values);
    const SparseMatrix lhs = assemble_weighted_mass(space, sum).matrix;
    const SparseMatrix rhs = assemble_weighted_mass(space, a).matrix + 3.0 * assemble_weighted_mass(space, b).matrix;
    EXPECT_LT((Eigen::MatrixXd(lhs) - Eigen::MatrixXd(rhs)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Assembly, StiffnessAnnihilatesConstantsAndMatchesGradientEnergy) {
    const TriMesh mesh = perturbed_square(5, 0.3, 5);
    const P1Space space(mesh);
    const SparseOperator k = assemble_stiffness(space);
    EXPECT_LT(k.asymmetry(), 1e-14);
    const NodalVector one = NodalVector::Ones(Eigen::Index(mesh.vertex_count()));
    EXPECT_LT((k * one).cwiseAbs().maxCoeff(), 1e-12);
    const NodalVector p = linear_nodal(mesh, 1.0, 2.0, -3.0);
    EXPECT_NEAR(p.dot(k * p), 13.0, 1e-12);
    const NodalVector q = random_nodal(space, 7);
    EXPECT_NEAR(q.dot(k * q), std::pow(l2_norm(mesh, p1_gradient(space, q)), 2), 1e-10 * q.dot(k * q));
    // positive semidefinite
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(k.matrix));
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-12);
}

TEST(Assembly, GradientTransposeAndFluxPairingAreAdjoint) {
    const TriMesh mesh = perturbed_square(4, 0.3, 8);
    const P1Space space(mesh);
    const NodalVector p = random_nodal(space, 1);
    DG0VecField w(mesh.triangle_count());
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d;
    for (Eigen::Index t = 0; t < w.values.rows(); ++t) w.values.row(t) = Eigen::RowVector2d(d(rng), d(rng));
    const DG0VecField g = p1_gradient(space, p);
    double euclid = 0, weighted = 0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const double dot = g.values.row(Eigen::Index(t)).dot(w.values.row(Eigen::Index(t)));
        euclid += dot;
        weighted += mesh.area(t) * dot;
    }
    EXPECT_NEAR(p.dot(gradient_transpose(space, w)), euclid, 1e-12 * std::abs(euclid) + 1e-12);
    EXPECT_NEAR(p.dot(flux_pairing(space, w)), weighted, 1e-12 * std::abs(weighted) + 1e-14);
}

TEST(Assembly, LoadVectorIntegratesQuadraticsExactly) {
    const TriMesh mesh = perturbed_square(3, 0.3, 2);
    const P1Space space(mesh);
    const NodalVector r = load_vector(space, [](const Point& x) { return x.x() * x.x() + x.y(); });
    // sum of hat functions is one
    EXPECT_NEAR(r.sum(), 1.0 / 3.0 + 0.5, 1e-14);
    const NodalVector x = linear_nodal(mesh, 0, 1, 0);
    // int x^3 + x y = 1/4 + 1/4
    EXPECT_NEAR(x.dot(r), 0.5, 1e-14);
}

TEST(Assembly, ThreadedAssemblyIsBitwiseIdentical) {
    const TriMesh mesh = structured_square(48);
    const P1Space space(mesh);
    ASSERT_GT(mesh.triangle_count(), 4096u);
    const DG0Field w = random_field(mesh.triangle_count(), 1.0, 2.0, 11);
    setenv("FWI_THREADS", "1", 1);
    const SparseMatrix serial = assemble_weighted_mass(space, w).matrix;
    setenv("FWI_THREADS", "4", 1);
    const SparseMatrix threaded = assemble_weighted_mass(space, w).matrix;
    unsetenv("FWI_THREADS");
    ASSERT_EQ(serial.nonZeros(), threaded.nonZeros());
    for (Eigen::Index i = 0; i < serial.nonZeros(); ++i) {
        ASSERT_EQ(serial.valuePtr()[i], threaded.valuePtr()[i]);
        ASSERT_EQ(serial.innerIndexPtr()[i], threaded.innerIndexPtr()[i]);
    }
}

TEST(P1Space, DirichletMaskAndConstrain) {
    const TriMesh mesh = structured_square(3, {.left = BoundaryTag::Dirichlet});
    const P1Space space(mesh);
    EXPECT_TRUE(space.has_dirichlet());
    EXPECT_EQ(space.free_dofs().size(), mesh.vertex_count() - 4);
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) EXPECT_EQ(space.is_dirichlet(i), mesh.vertex(i).x() == 0.0);
    const Eigen::MatrixXd c(space.constrain(assemble_mass(space).matrix));
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
        if (!space.is_dirichlet(i)) continue;
        for (Eigen::Index j = 0; j < c.cols(); ++j) {
            EXPECT_EQ(c(Eigen::Index(i), j), Eigen::Index(i) == j ? 1.0 : 0.0);
            EXPECT_EQ(c(j, Eigen::Index(i)), Eigen::Index(i) == j ? 1.0 : 0.0);
        }
    }
}

TEST(SpdSolver, SolvesAndReportsTolerance) {
    const TriMesh mesh = perturbed_square(5, 0.2, 4);
    const P1Space space(mesh);
    const SparseMatrix a = assemble_stiffness(space).matrix + assemble_mass(space).matrix;
    const NodalVector b = random_nodal(space, 3);
    const NodalVector x = SpdSolver(a).solve(b);
    EXPECT_LT((a * x - b).norm(), 1e-12 * b.norm());
    EXPECT_EQ(SpdSolver(a).solve(NodalVector::Zero(b.size())).norm(), 0.0);
}

TEST(Projection, PsiReproducesP1Fields) {
    const TriMesh mesh = perturbed_square(4, 0.3, 6, {.bottom = BoundaryTag::Dirichlet});
    const P1Space space(mesh);
    const NodalVector p = random_nodal(space, 9);
    EXPECT_LT((psi_projection(space, p) - p).cwiseAbs().maxCoeff(), 1e-12);
    // closed-form linear data reproduces its own interpolant in the pure Neumann space
    const TriMesh open = perturbed_square(4, 0.3, 6);
    const P1Space full(open);
    ScalarFunction lin{[](const Point& x) { return 1 + 2 * x.x() - x.y(); },
                       [](const Point&) { return Eigen::Vector2d(2, -1); }};
    EXPECT_LT((psi_projection(full, lin) - linear_nodal(open, 1, 2, -1)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Projection, PsiIsOrthogonalInH1) {
    const TriMesh mesh = perturbed_square(6, 0.2, 2, {.left = BoundaryTag::Dirichlet});
    const P1Space space(mesh);
    const ScalarFunction f{[](const Point& x) { return std::sin(3 * x.x()) * std::exp(x.y()); },
                           [](const Point& x) {
                               return Eigen::Vector2d(3 * std::cos(3 * x.x()) * std::exp(x.y()),
                                                      std::sin(3 * x.x()) * std::exp(x.y()));
                           }};
    const NodalVector y = psi_projection(space, f);
    // residual of the H1 normal equations vanishes on every free test function
    const SparseMatrix a = assemble_stiffness(space).matrix + assemble_mass(space).matrix;
    NodalVector rhs = load_vector(space, f.value);
    const auto& rule = degree4_rule();
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        Eigen::Vector2d g = Eigen::Vector2d::Zero();
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            g += rule.weights[q] * f.gradient(map_to_triangle(mesh, t, rule.points[q]));
        }
        const Eigen::Vector3d local = mesh.area(t) * (mesh.basis_gradients(t) * g);
        for (int i = 0; i < 3; ++i) rhs[mesh.triangle(t)[i]] += local[i];
    }
    NodalVector res = a * y - rhs;
    space.zero_dirichlet(res);
    EXPECT_LT(res.cwiseAbs().maxCoeff(), 1e-12);
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
        if (space.is_dirichlet(i)) {
            EXPECT_EQ(y[Eigen::Index(i)], 0.0);
        }
    }
}

TEST(Projection, QProjectionAveragesAndPreservesConstants) {
    const TriMesh mesh = perturbed_square(4, 0.3, 5);
    const DG0Field c = q_projection(mesh, [](const Point&) { return 1.7; });
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) EXPECT_NEAR(c[t], 1.7, 1e-15);
    // linear functions average to their centroid value under either overload
    auto lin = [](const Point& x) { return 0.3 + x.x() - 2 * x.y(); };
    const DG0Field a = q_projection(mesh, lin);
    const DG0Field b = q_projection(mesh, linear_nodal(mesh, 0.3, 1, -2));
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        EXPECT_NEAR(a[t], lin(mesh.centroid(t)), 1e-14);
        EXPECT_NEAR(b[t], lin(mesh.centroid(t)), 1e-14);
    }
    // the projection preserves the integral of a quadratic
    const DG0Field q = q_projection(mesh, [](const Point& x) { return x.x() * x.y(); });
    double integral = 0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) integral += mesh.area(t) * q[t];
    EXPECT_NEAR(integral, 0.25, 1e-14);
}

TEST(Quadrature, RulesIntegrateMonomials) {
    const TriMesh mesh = perturbed_square(3, 0.3, 12);
    for (const TriangleRule& rule : {degree4_rule(), subdivision_rule(4)}) {
        double w = 0;
        for (double wq : rule.weights) w += wq;
        EXPECT_NEAR(w, 1.0, 1e-14);
        const DG0Field f = q_projection(mesh, [](const Point& x) { return x.x(); }, rule);
        double s = 0;
        for (std::size_t t = 0; t < mesh.triangle_count(); ++t) s += mesh.area(t) * f[t];
        EXPECT_NEAR(s, 0.5, 1e-14);
    }
    const DG0Field d4 = q_projection(mesh, [](const Point& x) { return std::pow(x.x(), 4) + std::pow(x.x() * x.y(), 2); });
    double s = 0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) s += mesh.area(t) * d4[t];
    EXPECT_NEAR(s, 0.2 + 1.0 / 9.0, 1e-14);
}

TEST(InverseEstimate, MatchesDenseGeneralizedEigensolver) {
    for (const SquareSides sides : {SquareSides{}, SquareSides{.left = BoundaryTag::Dirichlet, .top = BoundaryTag::Dirichlet}}) {
        const TriMesh mesh = perturbed_square(6, 0.25, 3, sides);
        const P1Space space(mesh);
        const InverseEstimate est = estimate_cinv(space);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(free_block(space, assemble_stiffness(space).matrix),
                                                                     free_block(space, assemble_mass(space).matrix));
        const double exact = mesh.h() * std::sqrt(ges.eigenvalues().maxCoeff());
        EXPECT_NEAR(est.c_inv, exact, 1e-4 * exact);
        // the extremal vector attains the bound
        const SparseOperator m = assemble_mass(space);
        const double ratio = l2_norm(mesh, p1_gradient(space, est.extremal)) / l2_norm(m, est.extremal);
        EXPECT_NEAR(ratio * mesh.h(), est.c_inv, 1e-6 * est.c_inv);
    }
}

TEST(InverseEstimate, InvariantUnderUniformScaling) {
    const TriMesh mesh = perturbed_square(5, 0.2, 7);
    const double a = estimate_cinv(P1Space(mesh)).c_inv;
    const TriMesh big = scaled(mesh, 10.0);
    const double b = estimate_cinv(P1Space(big)).c_inv;
    EXPECT_NEAR(a, b, 1e-6 * a);
}

TEST(InverseEstimate, BoundsEveryDiscreteFunction) {
    const TriMesh mesh = perturbed_square(6, 0.2, 1);
    const P1Space space(mesh);
    const double c = estimate_cinv(space).c_inv;
    const SparseOperator m = assemble_mass(space);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const NodalVector p = random_nodal(space, seed);
        EXPECT_LE(l2_norm(mesh, p1_gradient(space, p)), (1 + 1e-6) * c / mesh.h() * l2_norm(m, p));
    }
}

TEST(Norms, DG0NormsAndInner) {
    const TriMesh mesh = structured_square(4);
    const DG0Field two = DG0Field::constant(mesh.triangle_count(), 2.0);
    EXPECT_NEAR(l2_norm(mesh, two), 2.0, 1e-15);
    EXPECT_NEAR(l2_inner(mesh, two, two), 4.0, 1e-14);
    DG0VecField v(mesh.triangle_count());
    v.values.col(0).setConstant(3.0);
    v.values.col(1).setConstant(4.0);
    EXPECT_NEAR(l2_norm(mesh, v), 5.0, 1e-14);
}
