#pragma once

#include "surfot/errors.hpp"
#include "surfot/fem.hpp"
#include "surfot/mesh.hpp"
#include "surfot/projection.hpp"
#include "surfot/recovery.hpp"
#include "surfot/time_grid.hpp"
#include "surfot/timespace.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace surfot {

struct AdmmConfig {
    double r = 0.02;       // augmentation weight
    double alpha_r = 0.02; // dual step size
    int max_iter = 51;
    std::optional<double> residual_tol;

    void validate() const
    {
        if (!(r > 0.0)) throw ValidationError("ADMM augmentation weight r must be positive");
        if (!(alpha_r > 0.0)) throw ValidationError("ADMM step alpha_r must be positive");
        if (max_iter < 1) throw ValidationError("ADMM max_iter must be at least 1");
    }
};

/// Everything that depends only on the mesh, the time grid and the end
/// densities. Built once per run.
struct TransportProblem {
    TimeGrid grid;
    SparseMatrix mass;
    SparseMatrix stiffness;
    Eigen::VectorXd lumped;
    TemporalRecovery temporal;
    SpatialRecovery spatial;
    SpectralBasis basis;
    ScalarField rho0;
    ScalarField rho1;

    Eigen::Index space_nodes() const { return mass.rows(); }
    Eigen::Index time_nodes() const { return grid.node_count(); }
};

inline constexpr double kMassMismatchTol = 1e-10;

inline TransportProblem make_problem(const SurfaceMesh& mesh, const TimeGrid& grid, ScalarField rho0, ScalarField rho1,
                                     int min_patch_size = 6)
{
    if (rho0.size() != mesh.vertex_count() || rho1.size() != mesh.vertex_count()) {
        throw ShapeMismatch("density length does not match vertex count");
    }
    TransportProblem p{grid,
                       assemble_mass(mesh),
                       assemble_stiffness(mesh),
                       {},
                       build_temporal_recovery(grid),
                       build_spatial_recovery(mesh, min_patch_size),
                       build_spectral_basis(grid),
                       std::move(rho0),
                       std::move(rho1)};
    p.lumped = lumped_mass(p.mass);
    return p;
}

enum class SolverKind { fast, direct };

/// Step 1 back end: the spectral solver with prefactorized modes, or the
/// direct Kronecker solve refactorized on every call.
class PoissonSolver {
public:
    PoissonSolver(const TransportProblem& problem, SolverKind kind, int threads = 1)
        : kind_(kind), grid_(problem.grid), mass_(problem.mass), stiffness_(problem.stiffness), basis_(problem.basis)
    {
        if (kind == SolverKind::fast) {
            fast_ = std::make_shared<PrefactorizedSolver>(problem.mass, problem.stiffness, problem.basis, threads);
        }
    }

    SolverKind kind() const { return kind_; }

    TimeSpaceField solve(const TimeSpaceField& f, SolveDiagnostics* diagnostics = nullptr) const
    {
        if (kind_ == SolverKind::fast) return solve_fast(basis_, *fast_, f, diagnostics);
        return solve_direct(mass_, stiffness_, grid_, f);
    }

private:
    SolverKind kind_;
    TimeGrid grid_;
    SparseMatrix mass_;
    SparseMatrix stiffness_;
    SpectralBasis basis_;
    std::shared_ptr<const PrefactorizedSolver> fast_;
};

struct AdmmState {
    TimeSpaceField u;
    TimeSpaceFlux q;
    TimeSpaceFlux sigma;
    int iteration = 0;
    std::vector<double> residual_history;
    std::vector<double> energy_history;
    std::vector<double> iteration_seconds;
    double last_compatibility_defect = 0.0;

    /// Density trajectory, one row per time node.
    const TimeSpaceField& density() const { return sigma.temporal; }
};

/// q = 0, u = 0, sigma = (linear density interpolation, zero momentum).
inline AdmmState initialize(const ScalarField& rho0, const ScalarField& rho1, const TimeGrid& grid,
                            const Eigen::VectorXd& lumped)
{
    if (rho0.size() != rho1.size() || rho0.size() != lumped.size()) throw ShapeMismatch("density length mismatch");
    const double m0 = lumped.dot(rho0);
    const double m1 = lumped.dot(rho1);
    if (std::abs(m0 - m1) > kMassMismatchTol * std::max(std::abs(m0), std::abs(m1))) {
        throw MassMismatch("end densities carry different mass: " + std::to_string(m0) + " vs " + std::to_string(m1));
    }
    const Eigen::Index nodes = grid.node_count();
    const Eigen::Index ns = rho0.size();
    AdmmState s;
    s.u = TimeSpaceField::Zero(nodes, ns);
    s.q = TimeSpaceFlux::zeros(nodes, ns);
    s.sigma = TimeSpaceFlux::zeros(nodes, ns);
    for (int j = 0; j < nodes; ++j) {
        const double t = grid.node(j);
        s.sigma.temporal.row(j) = ((1.0 - t) * rho0 + t * rho1).transpose();
    }
    s.sigma.temporal.row(0) = rho0.transpose();
    s.sigma.temporal.row(nodes - 1) = rho1.transpose();
    return s;
}

inline AdmmState initialize(const TransportProblem& problem)
{
    return initialize(problem.rho0, problem.rho1, problem.grid, problem.lumped);
}

/// Step 1: solves r (E (x) M + I (x) S) u = M (div_rec(sigma - r q) + Neumann terms)
/// with r d_t u(0) = rho0 - rho(0) + r a(0) and r d_t u(1) = rho1 - rho(1) + r a(1).
inline TimeSpaceField step1_solve_potential(const AdmmState& state, const AdmmConfig& config,
                                            const TransportProblem& problem, const PoissonSolver& solver,
                                            SolveDiagnostics* diagnostics = nullptr)
{
    const double r = config.r;
    const int last = problem.grid.intervals();
    const TimeSpaceFlux f = state.sigma - r * state.q;
    TimeSpaceField rhs = recovered_divergence(problem.temporal, problem.spatial, f) / r;

    const ScalarField slope0 = (problem.rho0 - state.sigma.temporal.row(0).transpose() +
                                r * state.q.temporal.row(0).transpose()) / r;
    const ScalarField slope1 = (problem.rho1 - state.sigma.temporal.row(last).transpose() +
                                r * state.q.temporal.row(last).transpose()) / r;
    // The ghost-point closure enters with opposite signs at the two ends.
    rhs += build_neumann_rhs(problem.grid, NeumannData{-slope0, slope1});

    const TimeSpaceField load = rhs * problem.mass; // row j: (M v_j)^T, M symmetric
    return solver.solve(load, diagnostics);
}

/// Step 2: q = P_A(G_p u + sigma / r) at every space-time node.
inline TimeSpaceFlux step2_project(const AdmmState& state, const AdmmConfig& config, const TimeSpaceFlux& recovered_grad,
                                   const SpatialRecovery* tangent_frames = nullptr)
{
    if (!recovered_grad.same_shape(state.sigma)) throw ShapeMismatch("gradient and multiplier shapes differ");
    TimeSpaceFlux target = recovered_grad;
    const double inv_r = 1.0 / config.r;
    target.temporal += inv_r * state.sigma.temporal;
    for (std::size_t k = 0; k < 3; ++k) target.spatial[k] += inv_r * state.sigma.spatial[k];
    if (tangent_frames) tangent_frames->make_tangential(target.spatial);

    TimeSpaceFlux q = TimeSpaceFlux::zeros(target.time_nodes(), target.space_nodes());
    for (Eigen::Index i = 0; i < target.space_nodes(); ++i) {
        for (Eigen::Index j = 0; j < target.time_nodes(); ++j) {
            const Vec3 beta(target.spatial[0](j, i), target.spatial[1](j, i), target.spatial[2](j, i));
            const ProjectedPoint p = project_onto_A(target.temporal(j, i), beta);
            q.temporal(j, i) = p.a;
            q.spatial[0](j, i) = p.b.x();
            q.spatial[1](j, i) = p.b.y();
            q.spatial[2](j, i) = p.b.z();
        }
    }
    return q;
}

/// sqrt( sum_j w_j sum_c v_cj^T M v_cj ): M-weighted in space, trapezoidal in time.
inline double flux_norm(const TimeSpaceFlux& v, const SparseMatrix& mass, const TimeGrid& grid)
{
    const Eigen::VectorXd w = grid.trapezoid_weights();
    double sum = 0.0;
    auto accumulate = [&](const TimeSpaceField& c) {
        const Eigen::MatrixXd mc = c * mass; // rows (M c_j)^T
        sum += w.dot(c.cwiseProduct(mc).rowwise().sum());
    };
    accumulate(v.temporal);
    for (const auto& c : v.spatial) accumulate(c);
    return std::sqrt(std::max(sum, 0.0));
}

/// Step 3: sigma += alpha_r (G_p u - q); appends the constraint residual.
inline TimeSpaceFlux step3_dual_update(AdmmState& state, const AdmmConfig& config, const TimeSpaceFlux& recovered_grad,
                                       const TimeSpaceFlux& q_new, const TransportProblem& problem)
{
    if (!recovered_grad.same_shape(q_new) || !q_new.same_shape(state.sigma)) {
        throw ShapeMismatch("flux shapes differ in the dual update");
    }
    const TimeSpaceFlux gap = recovered_grad - q_new;
    state.residual_history.push_back(flux_norm(gap, problem.mass, problem.grid));
    TimeSpaceFlux sigma = state.sigma + config.alpha_r * gap;
    problem.spatial.make_tangential(sigma.spatial);
    return sigma;
}

struct EnergyReport {
    /// Sum over nodes where rho is above the degeneracy floor.
    double value = 0.0;
    /// Set when some node has rho <= eps_rho but |m| > eps_m (energy is +inf there).
    bool infinite = false;
    int singular_nodes = 0;
};

/// Lumped-mass, time-trapezoidal quadrature of |m|^2 / (2 rho).
inline EnergyReport transport_energy(const TimeSpaceFlux& sigma, const Eigen::VectorXd& lumped, const TimeGrid& grid,
                                     double eps_m = 1e-12)
{
    const Eigen::VectorXd w = grid.trapezoid_weights();
    const double peak = sigma.temporal.maxCoeff();
    const double eps_rho = 1e-12 * std::max(peak, 0.0);
    EnergyReport report;
    for (Eigen::Index i = 0; i < sigma.space_nodes(); ++i) {
        for (Eigen::Index j = 0; j < sigma.time_nodes(); ++j) {
            const double rho = sigma.temporal(j, i);
            const double m2 = sigma.spatial[0](j, i) * sigma.spatial[0](j, i) +
                              sigma.spatial[1](j, i) * sigma.spatial[1](j, i) +
                              sigma.spatial[2](j, i) * sigma.spatial[2](j, i);
            if (rho <= eps_rho) {
                if (std::sqrt(m2) > eps_m) {
                    report.infinite = true;
                    ++report.singular_nodes;
                }
                continue;
            }
            report.value += w[j] * lumped[i] * m2 / (2.0 * rho);
        }
    }
    return report;
}

/// Gradient-enhanced ALG2 loop. Stops after max_iter iterations or once the
/// residual drops below residual_tol.
inline AdmmState run(const AdmmConfig& config, const TransportProblem& problem, const PoissonSolver& solver,
                     AdmmState state)
{
    config.validate();
    for (int k = 0; k < config.max_iter; ++k) {
        const auto start = std::chrono::steady_clock::now();
        const int current = state.iteration + 1;
        auto check = [current](bool finite, const char* what) {
            if (!finite) {
                throw DivergenceDetected(current, std::string("non-finite ") + what + " at ADMM iteration " +
                                                      std::to_string(current));
            }
        };
        SolveDiagnostics diag;
        state.u = step1_solve_potential(state, config, problem, solver, &diag);
        check(state.u.allFinite(), "potential");
        const TimeSpaceFlux grad = recovered_gradient(problem.temporal, problem.spatial, state.u);
        check(grad.all_finite() && state.sigma.all_finite(), "projection input");
        state.q = step2_project(state, config, grad, &problem.spatial);
        state.sigma = step3_dual_update(state, config, grad, state.q, problem);
        check(state.sigma.all_finite() && std::isfinite(state.residual_history.back()), "multiplier");
        ++state.iteration;
        state.last_compatibility_defect = diag.compatibility_defect;
        const EnergyReport energy = transport_energy(state.sigma, problem.lumped, problem.grid);
        check(std::isfinite(energy.value), "energy");
        state.energy_history.push_back(energy.value);
        state.iteration_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        if (config.residual_tol && state.residual_history.back() <= *config.residual_tol) break;
    }
    return state;
}

inline AdmmState run(const AdmmConfig& config, const TransportProblem& problem, const PoissonSolver& solver)
{
    return run(config, problem, solver, initialize(problem));
}

} // namespace surfot
