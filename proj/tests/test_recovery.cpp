#include "surfot/recovery.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace surfot;

namespace {

Eigen::VectorXd sample(const TimeGrid& g, double (*f)(double))
{
    Eigen::VectorXd v(g.node_count());
    for (int j = 0; j < g.node_count(); ++j) v[j] = f(g.node(j));
    return v;
}

template <typename F>
ScalarField nodal(const SurfaceMesh& m, F f)
{
    ScalarField v(m.vertex_count());
    for (int i = 0; i < m.vertex_count(); ++i) v[i] = f(m.vertex(i));
    return v;
}

bool interior_of_square(const Vec3& p, double margin)
{
    return p.x() > margin && p.x() < 1 - margin && p.y() > margin && p.y() < 1 - margin;
}

double max_sphere_gradient_error(int level)
{
    const SurfaceMesh m = generate_icosphere(level);
    const SpatialRecovery sr = build_spatial_recovery(m);
    const auto g = sr.gradient(nodal(m, [](const Vec3& p) { return p.z(); }));
    double err = 0.0;
    for (int i = 0; i < m.vertex_count(); ++i) {
        const Vec3& p = m.vertex(i);
        const Vec3 exact(-p.x() * p.z(), -p.y() * p.z(), 1.0 - p.z() * p.z());
        err = std::max(err, (Vec3(g[0][i], g[1][i], g[2][i]) - exact).norm());
    }
    return err;
}

} // namespace

TEST(TemporalRecovery, QuadraticSamplesNtFour)
{
    const TimeGrid g(4);
    const auto tr = build_temporal_recovery(g);
    const Eigen::VectorXd d = tr.apply(sample(g, [](double t) { return t * t; }));
    const Eigen::VectorXd expected = (Eigen::VectorXd(5) << 0, 0.5, 1.0, 1.5, 2.0).finished();
    EXPECT_LE((d - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TemporalRecovery, Stencils)
{
    const TimeGrid g(8);
    const double tau = g.step();
    const Eigen::MatrixXd b(build_temporal_recovery(g).matrix);
    for (int j = 1; j < 8; ++j) {
        EXPECT_NEAR(b(j, j - 1), -1 / (2 * tau), 1e-10);
        EXPECT_NEAR(b(j, j), 0.0, 1e-10);
        EXPECT_NEAR(b(j, j + 1), 1 / (2 * tau), 1e-10);
    }
    EXPECT_NEAR(b(0, 0), -3 / (2 * tau), 1e-10);
    EXPECT_NEAR(b(0, 1), 2 / tau, 1e-10);
    EXPECT_NEAR(b(0, 2), -1 / (2 * tau), 1e-10);
    EXPECT_NEAR(b(8, 8), 3 / (2 * tau), 1e-10);
    EXPECT_NEAR(b(8, 7), -2 / tau, 1e-10);
    EXPECT_NEAR(b(8, 6), 1 / (2 * tau), 1e-10);
}

TEST(TemporalRecovery, ConstantGivesExactZero)
{
    const TimeGrid g(6);
    const Eigen::VectorXd d = build_temporal_recovery(g).apply(Eigen::VectorXd(Eigen::VectorXd::Constant(7, 4.25)));
    EXPECT_LE(d.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TemporalRecovery, TooFewIntervals)
{
    EXPECT_THROW(TimeGrid(1), GridTooSmall);
}

TEST(SpatialRecovery, PlanarLinearExactness)
{
    const SurfaceMesh m = generate_square_mesh(9);
    const SpatialRecovery sr = build_spatial_recovery(m);
    const auto g = sr.gradient(nodal(m, [](const Vec3& p) { return p.x(); }));
    for (int i = 0; i < m.vertex_count(); ++i) {
        EXPECT_NEAR(g[0][i], 1.0, 1e-10);
        EXPECT_NEAR(g[1][i], 0.0, 1e-10);
        EXPECT_NEAR(g[2][i], 0.0, 1e-10);
    }
}

TEST(SpatialRecovery, PlanarQuadraticExactAtInterior)
{
    const SurfaceMesh m = generate_square_mesh(11);
    const SpatialRecovery sr = build_spatial_recovery(m);
    const auto gx2 = sr.gradient(nodal(m, [](const Vec3& p) { return p.x() * p.x(); }));
    const auto gxy = sr.gradient(nodal(m, [](const Vec3& p) { return p.x() * p.y() - 3 * p.y() * p.y(); }));
    for (int i = 0; i < m.vertex_count(); ++i) {
        const Vec3& p = m.vertex(i);
        if (!interior_of_square(p, 1e-9)) continue;
        EXPECT_NEAR(gx2[0][i], 2 * p.x(), 1e-10);
        EXPECT_NEAR(gx2[1][i], 0.0, 1e-10);
        EXPECT_NEAR(gxy[0][i], p.y(), 1e-10);
        EXPECT_NEAR(gxy[1][i], p.x() - 6 * p.y(), 1e-10);
    }
}

TEST(SpatialRecovery, IcosphereCoordinateGradientConverges)
{
    const double e2 = max_sphere_gradient_error(2);
    const double e3 = max_sphere_gradient_error(3);
    const double e4 = max_sphere_gradient_error(4);
    EXPECT_LT(e3, e2);
    EXPECT_LT(e4, e3);
    EXPECT_GE(std::log2(e3 / e4), 1.5);
}

TEST(SpatialRecovery, RowSparsityBoundedByPatch)
{
    const SurfaceMesh m = generate_icosphere(2);
    const SpatialRecovery sr = build_spatial_recovery(m);
    for (std::size_t c = 0; c < 3; ++c) {
        for (int i = 0; i < m.vertex_count(); ++i) {
            const SparseMatrix row = sr.matrix[c].row(i);
            const auto nnz = static_cast<int>(row.nonZeros());
            EXPECT_LE(nnz, static_cast<int>(sr.patches[static_cast<std::size_t>(i)].members.size()));
        }
    }
}

TEST(SpatialRecovery, RankDeficientWhenMeshIsTooRegularToFit)
{
    // A strip one cell wide has only two distinct y values, so no ring
    // around any vertex supports a full quadratic fit.
    std::vector<Vec3> v;
    std::vector<Triangle> t;
    for (int k = 0; k < 8; ++k) {
        v.push_back({double(k), 0, 0});
        v.push_back({double(k), 1, 0});
    }
    for (int k = 0; k < 7; ++k) {
        const int a = 2 * k, b = 2 * k + 1, c = 2 * k + 2, d = 2 * k + 3;
        t.push_back({a, c, d});
        t.push_back({a, d, b});
    }
    const SurfaceMesh strip(v, t);
    EXPECT_THROW(build_spatial_recovery(strip), RankDeficientPatch);
}

TEST(RecoveredDivergence, ZeroFlux)
{
    const SurfaceMesh m = generate_square_mesh(5);
    const TimeGrid g(4);
    const auto d = recovered_divergence(build_temporal_recovery(g), build_spatial_recovery(m), TimeSpaceFlux::zeros(5, 25));
    EXPECT_EQ(d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RecoveredDivergence, LinearInTime)
{
    const SurfaceMesh m = generate_square_mesh(5);
    const TimeGrid g(6);
    TimeSpaceFlux f = TimeSpaceFlux::zeros(7, 25);
    for (int j = 0; j < 7; ++j) f.temporal.row(j).setConstant(g.node(j));
    const auto d = recovered_divergence(build_temporal_recovery(g), build_spatial_recovery(m), f);
    EXPECT_LE((d.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(RecoveredDivergence, IdentityFieldInPlane)
{
    const SurfaceMesh m = generate_square_mesh(7);
    const TimeGrid g(3);
    TimeSpaceFlux f = TimeSpaceFlux::zeros(4, m.vertex_count());
    for (int i = 0; i < m.vertex_count(); ++i) {
        f.spatial[0].col(i).setConstant(m.vertex(i).x());
        f.spatial[1].col(i).setConstant(m.vertex(i).y());
    }
    const auto d = recovered_divergence(build_temporal_recovery(g), build_spatial_recovery(m), f);
    for (int i = 0; i < m.vertex_count(); ++i) {
        if (!interior_of_square(m.vertex(i), 1e-9)) continue;
        for (int j = 0; j < 4; ++j) EXPECT_NEAR(d(j, i), 2.0, 1e-9);
    }
}

TEST(RecoveredDivergence, ShapeMismatch)
{
    const SurfaceMesh m = generate_square_mesh(4);
    const TimeGrid g(4);
    EXPECT_THROW(recovered_divergence(build_temporal_recovery(g), build_spatial_recovery(m), TimeSpaceFlux::zeros(4, 16)),
                 ShapeMismatch);
}
