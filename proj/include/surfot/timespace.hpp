#pragma once

#include "surfot/errors.hpp"
#include "surfot/fem.hpp"
#include "surfot/time_grid.hpp"

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <thread>
#include <vector>

namespace surfot {

/// Second-difference matrix with ghost-point Neumann closure (positive
/// semidefinite sign convention, E ~ -d^2/dt^2).
inline Eigen::MatrixXd build_difference_matrix(const TimeGrid& grid)
{
    const int nt = grid.intervals();
    const double inv_tau2 = 1.0 / (grid.step() * grid.step());
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(nt + 1, nt + 1);
    e(0, 0) = 2.0;
    e(0, 1) = -2.0;
    for (int j = 1; j < nt; ++j) {
        e(j, j - 1) = -1.0;
        e(j, j) = 2.0;
        e(j, j + 1) = -1.0;
    }
    e(nt, nt - 1) = -2.0;
    e(nt, nt) = 2.0;
    return e * inv_tau2;
}

/// Cosine eigenbasis of the difference matrix. H is not orthogonal because
/// E is not symmetric, so the forward transform goes through (H^T H)^{-1}.
struct SpectralBasis {
    Eigen::VectorXd eigenvalues;   // gamma_i = (2 - 2 cos(i pi tau)) / tau^2
    Eigen::MatrixXd basis;         // H, columns e_i / |e_i|
    Eigen::MatrixXd gram_inverse;  // (H^T H)^{-1}
    Eigen::MatrixXd forward;       // (H^T H)^{-1} H^T, maps time slices to modes

    Eigen::Index modes() const { return eigenvalues.size(); }
};

inline SpectralBasis build_spectral_basis(const TimeGrid& grid)
{
    const int nt = grid.intervals();
    const double tau = grid.step();
    SpectralBasis sb;
    sb.eigenvalues.resize(nt + 1);
    sb.basis.resize(nt + 1, nt + 1);
    for (int i = 0; i <= nt; ++i) {
        sb.eigenvalues[i] = (2.0 - 2.0 * std::cos(i * std::numbers::pi * tau)) / (tau * tau);
        for (int j = 0; j <= nt; ++j) sb.basis(j, i) = std::cos(i * std::numbers::pi * grid.node(j));
        sb.basis.col(i).normalize();
    }
    sb.gram_inverse = (sb.basis.transpose() * sb.basis).inverse();
    sb.forward = sb.gram_inverse * sb.basis.transpose();
    return sb;
}

struct NeumannData {
    ScalarField u0_data;
    ScalarField u1_data;
};

/// Right-hand side contribution of the Neumann data: 2 u0/tau on the first
/// slice, 2 u1/tau on the last, zero in between.
inline TimeSpaceField build_neumann_rhs(const TimeGrid& grid, const NeumannData& data)
{
    if (data.u0_data.size() != data.u1_data.size()) throw ShapeMismatch("Neumann data lengths differ");
    TimeSpaceField out = TimeSpaceField::Zero(grid.node_count(), data.u0_data.size());
    out.row(0) = 2.0 * data.u0_data.transpose() / grid.step();
    out.row(grid.intervals()) = 2.0 * data.u1_data.transpose() / grid.step();
    return out;
}

struct SolveDiagnostics {
    /// |1^T R_0| / ||R_0||_1 before the constant mode was projected out.
    double compatibility_defect = 0.0;
};

/// Factorizations of gamma_i M + S for every temporal mode. Mode 0 is
/// singular (S annihilates constants); it is solved with one pinned vertex
/// and the M-weighted mean removed afterwards.
class PrefactorizedSolver {
public:
    PrefactorizedSolver(const SparseMatrix& mass, const SparseMatrix& stiffness, const SpectralBasis& basis,
                        int threads = 1)
        : mass_(mass), mass_ones_(lumped_mass(mass)), threads_(std::max(1, threads))
    {
        const auto modes = basis.modes();
        factors_.resize(static_cast<std::size_t>(modes));
        for (auto& f : factors_) f = std::make_unique<Factor>();
        auto factorize = [&](Eigen::Index i) {
            auto& f = *factors_[static_cast<std::size_t>(i)];
            if (i == 0) {
                f.compute(drop_first(stiffness));
            } else {
                const SparseMatrix a = basis.eigenvalues[i] * mass + stiffness;
                f.compute(a);
            }
        };
        parallel_for(modes, factorize);
        for (const auto& f : factors_) {
            if (f->info() != Eigen::Success) throw Error("sparse factorization of a temporal mode failed");
        }
    }

    Eigen::Index space_size() const { return mass_.rows(); }

    /// Solves (gamma_i M + S) w = rhs. For i = 0 the constant component of
    /// rhs is discarded first and w is returned with zero M-weighted mean.
    Eigen::VectorXd solve_mode(Eigen::Index i, Eigen::VectorXd rhs, double* defect = nullptr) const
    {
        const auto& f = *factors_[static_cast<std::size_t>(i)];
        if (i != 0) return f.solve(rhs);

        const double total = rhs.sum();
        const double scale = rhs.cwiseAbs().sum();
        if (defect) *defect = scale > 0.0 ? std::abs(total) / scale : 0.0;
        rhs -= (total / mass_ones_.sum()) * mass_ones_;

        Eigen::VectorXd w(rhs.size());
        w[0] = 0.0;
        w.tail(rhs.size() - 1) = f.solve(rhs.tail(rhs.size() - 1));
        w.array() -= mass_ones_.dot(w) / mass_ones_.sum();
        return w;
    }

    template <typename Fn>
    void parallel_for(Eigen::Index count, Fn&& fn) const
    {
        if (threads_ <= 1 || count < 2) {
            for (Eigen::Index i = 0; i < count; ++i) fn(i);
            return;
        }
        std::vector<std::thread> pool;
        const int workers = static_cast<int>(std::min<Eigen::Index>(threads_, count));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (Eigen::Index i = w; i < count; i += workers) fn(i);
            });
        }
        for (auto& t : pool) t.join();
    }

private:
    static SparseMatrix drop_first(const SparseMatrix& a)
    {
        const Eigen::Index n = a.rows();
        return a.bottomRightCorner(n - 1, n - 1);
    }

    SparseMatrix mass_;
    Eigen::VectorXd mass_ones_;
    using Factor = Eigen::SimplicialLDLT<SparseMatrix>;
    std::vector<std::unique_ptr<Factor>> factors_;
    int threads_;
};

/// Spectral solve of (E (x) M + I (x) S) U = F. Rows of F and U are time
/// slices. R = F H (H^T H)^{-1} mode by mode, then U = W H^T.
inline TimeSpaceField solve_fast(const SpectralBasis& basis, const PrefactorizedSolver& solver, const TimeSpaceField& f,
                                 SolveDiagnostics* diagnostics = nullptr)
{
    if (f.rows() != basis.modes() || f.cols() != solver.space_size()) throw ShapeMismatch("right-hand side shape");
    const Eigen::MatrixXd modes_rhs = basis.forward * f;
    Eigen::MatrixXd w(modes_rhs.rows(), modes_rhs.cols());
    double defect = 0.0;
    solver.parallel_for(modes_rhs.rows(), [&](Eigen::Index i) {
        w.row(i) = solver.solve_mode(i, modes_rhs.row(i).transpose(), i == 0 ? &defect : nullptr).transpose();
    });
    if (diagnostics) diagnostics->compatibility_defect = defect;
    return basis.basis * w;
}

// ---------------------------------------------------------------------------
// Direct Kronecker solve (validation oracle and timing baseline)

inline constexpr Eigen::Index kDirectSolveMaxUnknowns = 200000;

/// Row-major flattening: entry (j, i) goes to j * Ns + i.
inline Eigen::VectorXd flatten(const TimeSpaceField& u)
{
    Eigen::VectorXd v(u.size());
    for (Eigen::Index j = 0; j < u.rows(); ++j) v.segment(j * u.cols(), u.cols()) = u.row(j).transpose();
    return v;
}

inline TimeSpaceField unflatten(const Eigen::VectorXd& v, Eigen::Index time_nodes)
{
    const Eigen::Index ns = v.size() / time_nodes;
    TimeSpaceField u(time_nodes, ns);
    for (Eigen::Index j = 0; j < time_nodes; ++j) u.row(j) = v.segment(j * ns, ns).transpose();
    return u;
}

/// A = E (x) M + I (x) S in the flattening above.
inline SparseMatrix space_time_operator(const SparseMatrix& mass, const SparseMatrix& stiffness, const TimeGrid& grid)
{
    const Eigen::MatrixXd e = build_difference_matrix(grid);
    const Eigen::Index ns = mass.rows();
    std::vector<Eigen::Triplet<double>> entries;
    for (Eigen::Index a = 0; a < e.rows(); ++a) {
        for (Eigen::Index b = 0; b < e.cols(); ++b) {
            if (e(a, b) == 0.0) continue;
            for (Eigen::Index k = 0; k < mass.outerSize(); ++k) {
                for (SparseMatrix::InnerIterator it(mass, k); it; ++it) {
                    entries.emplace_back(a * ns + it.row(), b * ns + it.col(), e(a, b) * it.value());
                }
            }
        }
        for (Eigen::Index k = 0; k < stiffness.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(stiffness, k); it; ++it) {
                entries.emplace_back(a * ns + it.row(), a * ns + it.col(), it.value());
            }
        }
    }
    SparseMatrix a(e.rows() * ns, e.rows() * ns);
    a.setFromTriplets(entries.begin(), entries.end());
    return a;
}

/// Removes the incompatible (space-time constant) component of a load:
/// F_j -= c M 1 with c chosen so that sum_j w_j 1^T F_j = 0.
inline TimeSpaceField project_compatible(const TimeSpaceField& f, const SparseMatrix& mass, const TimeGrid& grid)
{
    const Eigen::VectorXd w = grid.trapezoid_weights();
    const Eigen::VectorXd m1 = lumped_mass(mass);
    const double c = w.dot(f.rowwise().sum()) / (w.sum() * m1.sum());
    TimeSpaceField out = f;
    out.rowwise() -= c * m1.transpose();
    return out;
}

/// Sparse direct solve of the full space-time system; one unknown is pinned
/// and the M-weighted space-time mean is removed afterwards.
inline TimeSpaceField solve_direct(const SparseMatrix& mass, const SparseMatrix& stiffness, const TimeGrid& grid,
                                   const TimeSpaceField& f)
{
    const Eigen::Index ns = mass.rows();
    const Eigen::Index nodes = grid.node_count();
    if (nodes * ns > kDirectSolveMaxUnknowns) throw SizeGuard("direct space-time solve limited to 2e5 unknowns");
    if (f.rows() != nodes || f.cols() != ns) throw ShapeMismatch("right-hand side shape");

    // Scaling the time rows by the trapezoid weights makes the operator symmetric.
    Eigen::VectorXd w = Eigen::VectorXd::Ones(nodes);
    w[0] = w[nodes - 1] = 0.5;
    const Eigen::MatrixXd we = w.asDiagonal() * build_difference_matrix(grid);

    std::vector<Eigen::Triplet<double>> entries;
    auto push = [&](Eigen::Index row, Eigen::Index col, double value) {
        if (row == 0 || col == 0) return;
        entries.emplace_back(row - 1, col - 1, value);
    };
    for (Eigen::Index a = 0; a < nodes; ++a) {
        for (Eigen::Index b = std::max<Eigen::Index>(0, a - 1); b <= std::min(nodes - 1, a + 1); ++b) {
            if (we(a, b) == 0.0) continue;
            for (Eigen::Index k = 0; k < mass.outerSize(); ++k) {
                for (SparseMatrix::InnerIterator it(mass, k); it; ++it) {
                    push(a * ns + it.row(), b * ns + it.col(), we(a, b) * it.value());
                }
            }
        }
        for (Eigen::Index k = 0; k < stiffness.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(stiffness, k); it; ++it) {
                push(a * ns + it.row(), a * ns + it.col(), w[a] * it.value());
            }
        }
    }
    const Eigen::Index n = nodes * ns;
    SparseMatrix a(n - 1, n - 1);
    a.setFromTriplets(entries.begin(), entries.end());

    const TimeSpaceField fc = project_compatible(f, mass, grid);
    Eigen::VectorXd rhs = flatten(w.asDiagonal() * fc);

    Eigen::SimplicialLDLT<SparseMatrix> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw Error("direct space-time factorization failed");
    Eigen::VectorXd x(n);
    x[0] = 0.0;
    x.tail(n - 1) = ldlt.solve(rhs.tail(n - 1));

    TimeSpaceField u = unflatten(x, nodes);
    const Eigen::VectorXd tw = grid.trapezoid_weights();
    const Eigen::VectorXd m1 = lumped_mass(mass);
    const double mean = tw.dot(u * m1) / (tw.sum() * m1.sum());
    u.array() -= mean;
    return u;
}

/// M-weighted space-time mean sum_j w_j 1^T M U_j with trapezoid weights.
inline double space_time_mean(const TimeSpaceField& u, const SparseMatrix& mass, const TimeGrid& grid)
{
    return grid.trapezoid_weights().dot(u * lumped_mass(mass));
}

} // namespace surfot
