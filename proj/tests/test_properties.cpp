#include "surfot/admm.hpp"
#include "surfot/benchmark.hpp"
#include "surfot/density.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

using namespace surfot;

namespace {

TimeSpaceField random_field(Eigen::Index rows, Eigen::Index cols, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> n01;
    TimeSpaceField f(rows, cols);
    for (Eigen::Index k = 0; k < f.size(); ++k) f.data()[k] = n01(rng);
    return f;
}

TimeSpaceFlux random_flux(Eigen::Index rows, Eigen::Index cols, unsigned seed)
{
    TimeSpaceFlux f;
    f.temporal = random_field(rows, cols, seed);
    for (unsigned d = 0; d < 3; ++d) f.spatial[d] = random_field(rows, cols, seed + 10 * (d + 1));
    return f;
}

double masked_l2(const ScalarField& v, const SparseMatrix& mass) { return std::sqrt(v.dot(mass * v)); }

struct BenchmarkRun {
    TransportProblem problem;
    AdmmState state;
    SurfaceMesh mesh;
};

} // namespace

// ---------------------------------------------------------------- mesh

TEST(MeshProperties, SquareAreaIsOne)
{
    for (int n = 2; n <= 257; ++n) {
        const SurfaceMesh m = generate_square_mesh(n);
        ASSERT_NEAR(m.total_area(), 1.0, 1e-12) << n;
    }
}

TEST(MeshProperties, IcosphereCounts)
{
    for (int k = 0; k <= 5; ++k) {
        const SurfaceMesh m = generate_icosphere(k);
        const int p = 1 << (2 * k);
        EXPECT_EQ(m.vertex_count(), 10 * p + 2);
        EXPECT_EQ(m.triangle_count(), 20 * p);
    }
}

TEST(MeshProperties, ClosedMeshEdgesHaveTwoTriangles)
{
    for (const SurfaceMesh& m : {generate_icosphere(3), generate_geodesic_sphere(5)}) {
        std::map<std::pair<int, int>, int> count;
        for (const auto& t : m.triangles()) {
            for (int a = 0; a < 3; ++a) {
                const int u = t[a], v = t[(a + 1) % 3];
                ++count[{std::min(u, v), std::max(u, v)}];
            }
        }
        for (const auto& [edge, c] : count) EXPECT_EQ(c, 2);
        EXPECT_TRUE(m.is_closed());
    }
}

TEST(MeshProperties, PatchDeterministic)
{
    const SurfaceMesh m = generate_geodesic_sphere(4);
    for (int v = 0; v < m.vertex_count(); v += 7) {
        EXPECT_EQ(build_patch(m, v, 6).members, build_patch(m, v, 6).members);
        EXPECT_EQ(build_patch(m, v, 12).members, build_patch(generate_geodesic_sphere(4), v, 12).members);
    }
}

// ---------------------------------------------------------------- fem

TEST(FemProperties, StiffnessKernelAndPsd)
{
    for (const SurfaceMesh& m : {generate_square_mesh(9), generate_icosphere(2)}) {
        const SparseMatrix s = assemble_stiffness(m);
        EXPECT_LE((s * Eigen::VectorXd::Ones(m.vertex_count())).cwiseAbs().maxCoeff(), 1e-12);
        const TimeSpaceField v = random_field(m.vertex_count(), 5, 2);
        for (int k = 0; k < 5; ++k) EXPECT_GE(v.col(k).dot(s * v.col(k)), -1e-12);
    }
}

TEST(FemProperties, ElementGradientReproducesLinear)
{
    const SurfaceMesh m = generate_square_mesh(8);
    std::mt19937 rng(5);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 5; ++trial) {
        const Vec3 g(n01(rng), n01(rng), 0.0);
        const double c = n01(rng);
        ScalarField f(m.vertex_count());
        for (int i = 0; i < m.vertex_count(); ++i) f[i] = g.dot(m.vertex(i)) + c;
        for (int t = 0; t < m.triangle_count(); ++t) EXPECT_LE((element_gradient(m, f, t) - g).norm(), 1e-12);
    }
}

TEST(FemProperties, GalerkinConsistency)
{
    const SurfaceMesh m = generate_square_mesh(10);
    const SparseMatrix s = assemble_stiffness(m);
    std::mt19937 rng(6);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::Vector2d gu(n01(rng), n01(rng)), gv(n01(rng), n01(rng));
        ScalarField u(m.vertex_count()), v(m.vertex_count());
        for (int i = 0; i < m.vertex_count(); ++i) {
            u[i] = gu.dot(m.vertex(i).head<2>()) + 1.0;
            v[i] = gv.dot(m.vertex(i).head<2>()) - 2.0;
        }
        EXPECT_NEAR(u.dot(s * v), gu.dot(gv), 1e-12);
    }
}

// ---------------------------------------------------------------- recovery

TEST(RecoveryProperties, TemporalPolynomialPreservation)
{
    for (int nt : {2, 3, 7, 20}) {
        const TimeGrid g(nt);
        const TemporalRecovery tr = build_temporal_recovery(g);
        const Eigen::VectorXd t = g.nodes();
        const Eigen::VectorXd p = (3.0 - 2.0 * t.array() + 5.0 * t.array().square()).matrix();
        const Eigen::VectorXd dp = (-2.0 + 10.0 * t.array()).matrix();
        EXPECT_LE((tr.apply(p) - dp).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, dp.cwiseAbs().maxCoeff()) * nt);
    }
}

TEST(RecoveryProperties, TemporalConsistencyOrder)
{
    auto error = [](int nt) {
        const TimeGrid g(nt);
        Eigen::VectorXd v(nt + 1), dv(nt + 1);
        for (int j = 0; j <= nt; ++j) {
            v[j] = std::sin(2 * std::numbers::pi * g.node(j));
            dv[j] = 2 * std::numbers::pi * std::cos(2 * std::numbers::pi * g.node(j));
        }
        return (build_temporal_recovery(g).apply(v) - dv).cwiseAbs().maxCoeff();
    };
    for (int nt : {16, 32, 64}) EXPECT_GE(std::log2(error(nt) / error(2 * nt)), 1.9) << nt;
}

TEST(RecoveryProperties, PlanarReduction)
{
    const SurfaceMesh m = generate_square_mesh(12);
    const SpatialRecovery sr = build_spatial_recovery(m);
    EXPECT_LE(Eigen::MatrixXd(sr.matrix[2]).cwiseAbs().maxCoeff(), 1e-12);
    ScalarField q(m.vertex_count());
    for (int i = 0; i < m.vertex_count(); ++i) {
        const Vec3& p = m.vertex(i);
        q[i] = 1 + 2 * p.x() - p.y() + 0.5 * p.x() * p.x() + 3 * p.x() * p.y() - 2 * p.y() * p.y();
    }
    const auto g = sr.gradient(q);
    for (int i = 0; i < m.vertex_count(); ++i) {
        if (m.is_boundary(i)) continue;
        const Vec3& p = m.vertex(i);
        EXPECT_NEAR(g[0][i], 2 + p.x() + 3 * p.y(), 1e-10);
        EXPECT_NEAR(g[1][i], -1 + 3 * p.x() - 4 * p.y(), 1e-10);
    }
}

TEST(RecoveryProperties, Tangency)
{
    for (const SurfaceMesh& m : {generate_icosphere(3), generate_geodesic_sphere(6)}) {
        const SpatialRecovery sr = build_spatial_recovery(m);
        const ScalarField f = random_field(m.vertex_count(), 1, 9).col(0);
        const auto g = sr.gradient(f);
        for (int i = 0; i < m.vertex_count(); ++i) {
            const Vec3 v(g[0][i], g[1][i], g[2][i]);
            EXPECT_LE(std::abs(v.dot(sr.normals[static_cast<std::size_t>(i)])), 1e-10 * std::max(1.0, v.norm()));
        }
    }
}

TEST(RecoveryProperties, DivergenceLinearity)
{
    const SurfaceMesh m = generate_icosphere(2);
    const TimeGrid g(6);
    const TemporalRecovery tr = build_temporal_recovery(g);
    const SpatialRecovery sr = build_spatial_recovery(m);
    const TimeSpaceFlux f = random_flux(7, m.vertex_count(), 1);
    const TimeSpaceFlux h = random_flux(7, m.vertex_count(), 2);
    const TimeSpaceField lhs = recovered_divergence(tr, sr, 2.5 * f + (-0.75) * h);
    const TimeSpaceField rhs = 2.5 * recovered_divergence(tr, sr, f) - 0.75 * recovered_divergence(tr, sr, h);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * rhs.cwiseAbs().maxCoeff());
}

// ---------------------------------------------------------------- timespace

TEST(TimespaceProperties, SpectralIdentity)
{
    for (int nt : {2, 4, 8, 16, 64}) {
        const TimeGrid g(nt);
        const Eigen::MatrixXd e = build_difference_matrix(g);
        const SpectralBasis sb = build_spectral_basis(g);
        EXPECT_LE((e * sb.basis - sb.basis * sb.eigenvalues.asDiagonal()).norm(), 1e-10 * e.norm()) << nt;
    }
}

TEST(TimespaceProperties, GaugeOfFastSolve)
{
    const SurfaceMesh m = generate_geodesic_sphere(3);
    const TimeGrid g(10);
    const SparseMatrix mass = assemble_mass(m);
    const SpectralBasis sb = build_spectral_basis(g);
    const PrefactorizedSolver solver(mass, assemble_stiffness(m), sb);
    for (unsigned seed = 0; seed < 5; ++seed) {
        const TimeSpaceField u = solve_fast(sb, solver, random_field(11, m.vertex_count(), seed));
        EXPECT_LE(std::abs(space_time_mean(u, mass, g)), 1e-10 * u.norm());
    }
}

TEST(TimespaceProperties, TimeReflection)
{
    const SurfaceMesh m = generate_icosphere(2);
    const TimeGrid g(8);
    const SparseMatrix mass = assemble_mass(m);
    const SpectralBasis sb = build_spectral_basis(g);
    const PrefactorizedSolver solver(mass, assemble_stiffness(m), sb);
    const ScalarField g0 = random_field(m.vertex_count(), 1, 3).col(0);
    const ScalarField g1 = random_field(m.vertex_count(), 1, 4).col(0);
    const TimeSpaceField interior = random_field(9, m.vertex_count(), 5);

    const TimeSpaceField f = (interior + build_neumann_rhs(g, {g0, g1})) * mass;
    const TimeSpaceField fr = (interior.colwise().reverse() + build_neumann_rhs(g, {g1, g0})) * mass;
    const TimeSpaceField u = solve_fast(sb, solver, f);
    const TimeSpaceField ur = solve_fast(sb, solver, fr);
    EXPECT_LE((ur - u.colwise().reverse()).norm(), 1e-10 * u.norm());
}

TEST(TimespaceProperties, PrefactorizationResidual)
{
    const SurfaceMesh m = generate_square_mesh(12);
    const TimeGrid g(16);
    const SparseMatrix mass = assemble_mass(m), stiff = assemble_stiffness(m);
    const SpectralBasis sb = build_spectral_basis(g);
    const PrefactorizedSolver solver(mass, stiff, sb);
    const TimeSpaceField x = random_field(17, m.vertex_count(), 8);
    for (Eigen::Index i = 1; i < sb.modes(); ++i) {
        const Eigen::VectorXd xi = x.row(i).transpose();
        const Eigen::VectorXd rhs = sb.eigenvalues[i] * (mass * xi) + stiff * xi;
        EXPECT_LE((solver.solve_mode(i, rhs) - xi).norm(), 1e-10 * xi.norm());
    }
}

TEST(TimespaceProperties, FastMatchesDirectOnRandomInstances)
{
    std::mt19937 rng(12);
    for (int trial = 0; trial < 6; ++trial) {
        const int n = 3 + trial;
        const int nt = 2 + 2 * trial;
        const SurfaceMesh m = trial % 2 ? generate_square_mesh(n) : generate_geodesic_sphere(1 + trial / 2);
        const TimeGrid g(nt);
        const SparseMatrix mass = assemble_mass(m), stiff = assemble_stiffness(m);
        const SpectralBasis sb = build_spectral_basis(g);
        const PrefactorizedSolver solver(mass, stiff, sb);
        const TimeSpaceField f = random_field(nt + 1, m.vertex_count(), rng());
        const TimeSpaceField a = solve_fast(sb, solver, f);
        const TimeSpaceField b = solve_direct(mass, stiff, g, f);
        EXPECT_LE((a - b).norm() / b.norm(), 1e-10);
    }
}

// ---------------------------------------------------------------- admm

class AdmmBenchmark : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        SurfaceMesh mesh = generate_square_mesh(15);
        const TimeGrid grid(30);
        ScalarField r0 = build_density(PlanarGaussian{{0.3, 0.3}, 0.01}, mesh);
        ScalarField r1 = build_density(PlanarGaussian{{0.7, 0.7}, 0.01}, mesh);
        TransportProblem p = make_problem(mesh, grid, r0, r1);
        run_ = new BenchmarkRun{std::move(p), {}, std::move(mesh)};
    }
    static void TearDownTestSuite()
    {
        delete run_;
        run_ = nullptr;
    }
    static BenchmarkRun* run_;
};

BenchmarkRun* AdmmBenchmark::run_ = nullptr;

TEST_F(AdmmBenchmark, FeasibilityGaugeAndTangencyEveryIteration)
{
    const TransportProblem& p = run_->problem;
    const AdmmConfig c;
    const PoissonSolver solver(p, SolverKind::fast);
    AdmmState s = initialize(p);
    for (int k = 0; k < 51; ++k) {
        s.u = step1_solve_potential(s, c, p, solver);
        ASSERT_LE(std::abs(space_time_mean(s.u, p.mass, p.grid)), 1e-10 * s.u.norm()) << k;
        const TimeSpaceFlux grad = recovered_gradient(p.temporal, p.spatial, s.u);
        s.q = step2_project(s, c, grad, &p.spatial);
        const Eigen::ArrayXXd con = s.q.temporal.array() + 0.5 * (s.q.spatial[0].array().square() +
                                                                  s.q.spatial[1].array().square() +
                                                                  s.q.spatial[2].array().square());
        ASSERT_LE(con.maxCoeff(), 1e-12) << k;
        s.sigma = step3_dual_update(s, c, grad, s.q, p);
        ASSERT_LE(s.sigma.spatial[2].cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, s.sigma.spatial[0].cwiseAbs().maxCoeff()));
    }
    EXPECT_EQ(s.residual_history.size(), 51u);
}

TEST_F(AdmmBenchmark, EndpointFidelity)
{
    const TransportProblem& p = run_->problem;
    const PoissonSolver solver(p, SolverKind::fast);
    AdmmConfig one;
    one.max_iter = 1;
    AdmmState s = initialize(p);
    std::vector<double> e0, e1;
    for (int k = 0; k < 51; ++k) {
        s = run(one, p, solver, std::move(s));
        e0.push_back(masked_l2(s.density().row(0).transpose() - p.rho0, p.mass));
        e1.push_back(masked_l2(s.density().bottomRows(1).transpose() - p.rho1, p.mass));
    }
    // The linear initialization matches both ends exactly, so the first
    // iterate is the reference for "initial value".
    EXPECT_LE(e0.back(), e0.front() / 10.0);
    EXPECT_LE(e1.back(), e1.front() / 10.0);
    int increases = 0;
    for (std::size_t k = 1; k < e0.size(); ++k) increases += (e0[k] > e0[k - 1]) + (e1[k] > e1[k - 1]);
    EXPECT_EQ(increases, 0);
}

TEST_F(AdmmBenchmark, DeterministicHistories)
{
    const TransportProblem& p = run_->problem;
    AdmmConfig c;
    c.max_iter = 10;
    const AdmmState a = run(c, p, PoissonSolver(p, SolverKind::fast));
    const AdmmState b = run(c, p, PoissonSolver(p, SolverKind::fast));
    EXPECT_EQ(a.residual_history, b.residual_history);
    EXPECT_EQ(a.energy_history, b.energy_history);
    EXPECT_EQ(a.density(), b.density());
}

// ---------------------------------------------------------------- app

TEST(AppProperties, GeneratedDensitiesHaveUnitMass)
{
    const std::vector<std::pair<DensitySpec, SurfaceMesh>> cases{
        {PlanarGaussian{{0.3, 0.3}, 0.01}, generate_square_mesh(15)},
        {PlanarGaussian{{0.5, 0.2}, 0.1}, generate_square_mesh(40)},
        {SphericalGaussian{{0, 0, 1}, 0.1}, generate_icosphere(3)},
        {SphericalGaussian{{0, 1, 0}, 0.3}, generate_geodesic_sphere(9)},
        {Indicator{}, generate_icosphere(2)},
        {Indicator{{0, 0, 1}, 0.5}, generate_icosphere(3)},
    };
    for (const auto& [spec, mesh] : cases) {
        const ScalarField rho = build_density(spec, mesh);
        EXPECT_NEAR(lumped_mass(assemble_mass(mesh)).dot(rho), 1.0, 1e-12);
        EXPECT_GT(rho.minCoeff(), 0.0);
    }
}

TEST(AppProperties, ErrorTableMonotone)
{
    RunConfig c;
    c.mesh = "square:15";
    c.refine = {29, 57};
    c.report_timings = false;
    c.write_slices = false;
    c.out = std::filesystem::temp_directory_path() / "surfot_monotone";
    const BenchmarkResult r = run_benchmark(c);
    std::filesystem::remove_all(c.out);
    ASSERT_EQ(r.levels.size(), 3u);
    EXPECT_LT(*r.levels[1].l2_error, *r.levels[0].l2_error);
    EXPECT_LT(*r.levels[2].l2_error, *r.levels[1].l2_error);
}
