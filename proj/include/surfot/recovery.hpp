#pragma once

#include "surfot/errors.hpp"
#include "surfot/fem.hpp"
#include "surfot/mesh.hpp"
#include "surfot/time_grid.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <string>
#include <vector>

namespace surfot {

/// Four nodal space-time components: one temporal (a or rho) and three
/// ambient spatial ones (b or m). All share the shape (Nt+1) x Ns.
struct TimeSpaceFlux {
    TimeSpaceField temporal;
    std::array<TimeSpaceField, 3> spatial;

    static TimeSpaceFlux zeros(Eigen::Index time_nodes, Eigen::Index space_nodes)
    {
        TimeSpaceFlux f;
        f.temporal = TimeSpaceField::Zero(time_nodes, space_nodes);
        for (auto& c : f.spatial) c = TimeSpaceField::Zero(time_nodes, space_nodes);
        return f;
    }

    Eigen::Index time_nodes() const { return temporal.rows(); }
    Eigen::Index space_nodes() const { return temporal.cols(); }

    bool same_shape(const TimeSpaceFlux& other) const
    {
        return time_nodes() == other.time_nodes() && space_nodes() == other.space_nodes() && consistent() &&
               other.consistent();
    }
    bool consistent() const
    {
        return std::all_of(spatial.begin(), spatial.end(), [this](const TimeSpaceField& c) {
            return c.rows() == temporal.rows() && c.cols() == temporal.cols();
        });
    }
    bool all_finite() const
    {
        return temporal.allFinite() && spatial[0].allFinite() && spatial[1].allFinite() && spatial[2].allFinite();
    }

    TimeSpaceFlux& operator+=(const TimeSpaceFlux& o)
    {
        temporal += o.temporal;
        for (std::size_t k = 0; k < 3; ++k) spatial[k] += o.spatial[k];
        return *this;
    }
    TimeSpaceFlux& operator-=(const TimeSpaceFlux& o)
    {
        temporal -= o.temporal;
        for (std::size_t k = 0; k < 3; ++k) spatial[k] -= o.spatial[k];
        return *this;
    }
    TimeSpaceFlux& operator*=(double s)
    {
        temporal *= s;
        for (auto& c : spatial) c *= s;
        return *this;
    }
    friend TimeSpaceFlux operator+(TimeSpaceFlux a, const TimeSpaceFlux& b) { return a += b; }
    friend TimeSpaceFlux operator-(TimeSpaceFlux a, const TimeSpaceFlux& b) { return a -= b; }
    friend TimeSpaceFlux operator*(double s, TimeSpaceFlux a) { return a *= s; }
};

// ---------------------------------------------------------------------------
// Temporal PPR

/// B_t: row j is the derivative at t_j of the least-squares quadratic over
/// the three nodes of I_{t_j} (centered inside, one-sided at both ends).
struct TemporalRecovery {
    SparseMatrix matrix;

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return matrix * v; }
    /// Differentiates every column (vertex) of a space-time field in time.
    TimeSpaceField apply(const TimeSpaceField& field) const { return matrix * field; }
};

inline TemporalRecovery build_temporal_recovery(const TimeGrid& grid)
{
    const int nt = grid.intervals();
    const double tau = grid.step();
    std::vector<Eigen::Triplet<double>> entries;
    for (int j = 0; j <= nt; ++j) {
        const int first = std::clamp(j - 1, 0, nt - 2);
        Eigen::Matrix3d vandermonde;
        for (int k = 0; k < 3; ++k) {
            const double s = (grid.node(first + k) - grid.node(j)) / tau;
            vandermonde.row(k) << 1.0, s, s * s;
        }
        const Eigen::Matrix3d coefficients = vandermonde.completeOrthogonalDecomposition().pseudoInverse();
        for (int k = 0; k < 3; ++k) entries.emplace_back(j, first + k, coefficients(1, k) / tau);
    }
    TemporalRecovery rec;
    rec.matrix.resize(nt + 1, nt + 1);
    rec.matrix.setFromTriplets(entries.begin(), entries.end());
    return rec;
}

// ---------------------------------------------------------------------------
// Spatial PPPR

/// Sparse differentiation matrices B_x, B_y, B_z. Row i holds the linear
/// functional that maps patch values to the recovered surface gradient at
/// vertex i.
struct SpatialRecovery {
    std::array<SparseMatrix, 3> matrix;
    /// Unit normal of the recovered tangent plane at each vertex.
    std::vector<Vec3> normals;
    std::vector<VertexPatch> patches;

    std::array<Eigen::VectorXd, 3> gradient(const ScalarField& field) const
    {
        return {matrix[0] * field, matrix[1] * field, matrix[2] * field};
    }

    /// Spatial gradient of each time slice; returns three (Nt+1) x Ns fields.
    std::array<TimeSpaceField, 3> gradient(const TimeSpaceField& field) const
    {
        std::array<TimeSpaceField, 3> out;
        for (std::size_t k = 0; k < 3; ++k) out[k] = (matrix[k] * field.transpose()).transpose();
        return out;
    }

    /// Removes the normal component of a nodal vector field, slice by slice.
    void make_tangential(std::array<TimeSpaceField, 3>& v) const
    {
        for (Eigen::Index i = 0; i < v[0].cols(); ++i) {
            const Vec3& n = normals[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < v[0].rows(); ++j) {
                const double dn = n.x() * v[0](j, i) + n.y() * v[1](j, i) + n.z() * v[2](j, i);
                v[0](j, i) -= dn * n.x();
                v[1](j, i) -= dn * n.y();
                v[2](j, i) -= dn * n.z();
            }
        }
    }
};

namespace detail {

struct LocalRecovery {
    Eigen::Matrix<double, 3, Eigen::Dynamic> functional; // rows x, y, z
    Vec3 normal;
};

inline constexpr double kVandermondeRankTol = 1e-10;
inline constexpr double kPseudoInverseTol = 1e-12;
inline constexpr int kMaxRingDepth = 3;

/// PPPR at one vertex for a fixed patch; returns false when the quadratic
/// least-squares system is rank deficient.
inline bool local_pppr(const SurfaceMesh& mesh, const VertexPatch& patch, LocalRecovery& out)
{
    const auto n = static_cast<Eigen::Index>(patch.members.size());
    if (n < 6) return false;

    Eigen::MatrixXd points(n, 3);
    for (Eigen::Index k = 0; k < n; ++k) points.row(k) = mesh.vertex(patch.members[static_cast<std::size_t>(k)]).transpose();

    // Least-squares plane through the centroid.
    const Eigen::RowVector3d centroid = points.colwise().mean();
    const Eigen::MatrixXd centered = points.rowwise() - centroid;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> pca(centered.transpose() * centered);
    const Vec3 e1 = pca.eigenvectors().col(2);
    const Vec3 e2 = pca.eigenvectors().col(1);

    // Local coordinates relative to the projected center, scaled by the patch radius.
    const Vec3 origin = mesh.vertex(patch.center);
    Eigen::MatrixXd uv(n, 2);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Vec3 d = points.row(k).transpose() - origin;
        uv(k, 0) = d.dot(e1);
        uv(k, 1) = d.dot(e2);
    }
    const double scale = uv.rowwise().norm().maxCoeff();
    if (!(scale > 0.0)) return false;
    uv /= scale;

    Eigen::MatrixXd vandermonde(n, 6);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double s = uv(k, 0);
        const double t = uv(k, 1);
        vandermonde.row(k) << 1.0, s, t, s * s, s * t, t * t;
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(vandermonde);
    const auto& sv = svd.singularValues();
    if (sv[5] <= kVandermondeRankTol * sv[0]) return false;

    const Eigen::MatrixXd fit = vandermonde.completeOrthogonalDecomposition().pseudoInverse(); // 6 x n
    const Eigen::MatrixXd planar_gradient = fit.middleRows(1, 2) / scale;                     // 2 x n

    // Recovered Jacobian of the local parametrization (columns d r / d xi, d r / d eta).
    const Eigen::Matrix<double, 3, 2> jacobian = (planar_gradient * points).transpose();
    const Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> jsvd(jacobian, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector2d js = jsvd.singularValues();
    Eigen::Matrix2d inv_sigma = Eigen::Matrix2d::Zero();
    for (int k = 0; k < 2; ++k) {
        if (js[k] > kPseudoInverseTol * js[0]) inv_sigma(k, k) = 1.0 / js[k];
    }
    const Eigen::Matrix<double, 2, 3> pinv =
        jsvd.matrixV() * inv_sigma * jsvd.matrixU().leftCols<2>().transpose();

    out.functional = pinv.transpose() * planar_gradient;
    out.normal = jacobian.col(0).cross(jacobian.col(1)).normalized();
    // Keep the normal on the same side as the PCA normal for reproducibility.
    if (out.normal.dot(pca.eigenvectors().col(0)) < 0.0) out.normal = -out.normal;
    return true;
}

} // namespace detail

inline SpatialRecovery build_spatial_recovery(const SurfaceMesh& mesh, int min_patch_size = 6)
{
    const int ns = mesh.vertex_count();
    SpatialRecovery rec;
    rec.normals.resize(static_cast<std::size_t>(ns));
    rec.patches.resize(static_cast<std::size_t>(ns));
    std::array<std::vector<Eigen::Triplet<double>>, 3> entries;

    for (int i = 0; i < ns; ++i) {
        VertexPatch patch = build_patch(mesh, i, min_patch_size);
        detail::LocalRecovery local;
        const int max_depth = std::max(detail::kMaxRingDepth, patch.ring_depth);
        bool ok = detail::local_pppr(mesh, patch, local);
        while (!ok && patch.ring_depth < max_depth) {
            VertexPatch bigger = k_ring(mesh, i, patch.ring_depth + 1);
            if (bigger.members.size() == patch.members.size()) break;
            patch = std::move(bigger);
            ok = detail::local_pppr(mesh, patch, local);
        }
        if (!ok) {
            throw RankDeficientPatch("vertex " + std::to_string(i) + ": quadratic fit is rank deficient at ring depth " +
                                     std::to_string(patch.ring_depth));
        }
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t k = 0; k < patch.members.size(); ++k) {
                entries[c].emplace_back(i, patch.members[k], local.functional(static_cast<Eigen::Index>(c),
                                                                             static_cast<Eigen::Index>(k)));
            }
        }
        rec.normals[static_cast<std::size_t>(i)] = local.normal;
        rec.patches[static_cast<std::size_t>(i)] = std::move(patch);
    }
    for (std::size_t c = 0; c < 3; ++c) {
        rec.matrix[c].resize(ns, ns);
        rec.matrix[c].setFromTriplets(entries[c].begin(), entries[c].end());
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Space-time operators

/// Recovered space-time gradient (G_tau u, G_h u) of a nodal field.
inline TimeSpaceFlux recovered_gradient(const TemporalRecovery& tr, const SpatialRecovery& sr, const TimeSpaceField& u)
{
    if (tr.matrix.cols() != u.rows() || sr.matrix[0].cols() != u.cols()) {
        throw ShapeMismatch("field shape does not match the recovery operators");
    }
    TimeSpaceFlux g;
    g.temporal = tr.apply(u);
    g.spatial = sr.gradient(u);
    return g;
}

/// G_tau c + B_x d_x + B_y d_y + B_z d_z, evaluated slice by slice.
inline TimeSpaceField recovered_divergence(const TemporalRecovery& tr, const SpatialRecovery& sr,
                                           const TimeSpaceFlux& flux)
{
    if (!flux.consistent() || tr.matrix.cols() != flux.time_nodes() || sr.matrix[0].cols() != flux.space_nodes()) {
        throw ShapeMismatch("flux shape does not match the recovery operators");
    }
    TimeSpaceField div = tr.apply(flux.temporal);
    Eigen::MatrixXd spatial = sr.matrix[0] * flux.spatial[0].transpose();
    spatial += sr.matrix[1] * flux.spatial[1].transpose();
    spatial += sr.matrix[2] * flux.spatial[2].transpose();
    div += spatial.transpose();
    return div;
}

} // namespace surfot
