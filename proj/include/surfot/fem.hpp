#pragma once

#include "surfot/errors.hpp"
#include "surfot/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <vector>

namespace surfot {

/// Symmetric sparse matrix (mass, stiffness). Stored in full, not as a triangle.
using SparseMatrix = Eigen::SparseMatrix<double>;
/// Nodal values of a P1 function, one entry per mesh vertex.
using ScalarField = Eigen::VectorXd;
/// Nodal values over space-time: row j is the time slice t_j, column i the vertex.
using TimeSpaceField = Eigen::MatrixXd;

namespace detail {

/// Gradients of the three barycentric basis functions of triangle `t`,
/// as ambient vectors lying in the triangle plane.
inline std::array<Vec3, 3> basis_gradients(const SurfaceMesh& mesh, int t)
{
    const auto& f = mesh.triangle(t);
    const Vec3& p0 = mesh.vertex(f[0]);
    const Vec3& p1 = mesh.vertex(f[1]);
    const Vec3& p2 = mesh.vertex(f[2]);
    const Vec3 cross = (p1 - p0).cross(p2 - p0);
    const double twice_area = cross.norm();
    const Vec3 n = cross / twice_area;
    return {n.cross(p2 - p1) / twice_area, n.cross(p0 - p2) / twice_area, n.cross(p1 - p0) / twice_area};
}

} // namespace detail

/// Consistent P1 mass matrix, M_ij = integral of psi_i psi_j over the mesh.
inline SparseMatrix assemble_mass(const SurfaceMesh& mesh)
{
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(9 * static_cast<std::size_t>(mesh.triangle_count()));
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& f = mesh.triangle(t);
        const double area = mesh.triangle_area(t);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                entries.emplace_back(f[static_cast<std::size_t>(a)], f[static_cast<std::size_t>(b)],
                                     area / 12.0 * (a == b ? 2.0 : 1.0));
            }
        }
    }
    SparseMatrix m(mesh.vertex_count(), mesh.vertex_count());
    m.setFromTriplets(entries.begin(), entries.end());
    return m;
}

/// P1 stiffness matrix built from the tangential gradient on each flat
/// triangle. No boundary rows are modified, so boundaries carry natural
/// zero-flux conditions and constants span the kernel.
inline SparseMatrix assemble_stiffness(const SurfaceMesh& mesh)
{
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(9 * static_cast<std::size_t>(mesh.triangle_count()));
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& f = mesh.triangle(t);
        const double area = mesh.triangle_area(t);
        const auto grads = detail::basis_gradients(mesh, t);
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t b = 0; b < 3; ++b) {
                entries.emplace_back(f[a], f[b], area * grads[a].dot(grads[b]));
            }
        }
    }
    SparseMatrix s(mesh.vertex_count(), mesh.vertex_count());
    s.setFromTriplets(entries.begin(), entries.end());
    return s;
}

/// Row sums of the mass matrix.
inline Eigen::VectorXd lumped_mass(const SparseMatrix& mass)
{
    return mass * Eigen::VectorXd::Ones(mass.cols());
}

/// Constant tangential gradient of the P1 interpolant of `field` on triangle `t`.
inline Vec3 element_gradient(const SurfaceMesh& mesh, const ScalarField& field, int t)
{
    if (field.size() != mesh.vertex_count()) throw ShapeMismatch("field length does not match vertex count");
    const auto& f = mesh.triangle(t);
    const auto grads = detail::basis_gradients(mesh, t);
    return field[f[0]] * grads[0] + field[f[1]] * grads[1] + field[f[2]] * grads[2];
}

/// Space-time norm ( sum_{j=1}^{Nt-1} tau ||v(t_j)||_p^p )^(1/p) over interior
/// time nodes. p = 2 uses the consistent mass matrix, p = 1 the lumped mass.
inline double discrete_lp_norm(const TimeSpaceField& fields, const SparseMatrix& mass, double tau, int p)
{
    if (p != 1 && p != 2) throw ValidationError("discrete_lp_norm supports p = 1 or p = 2");
    if (fields.cols() != mass.rows()) throw ShapeMismatch("field width does not match mass matrix");
    const Eigen::Index last = fields.rows() - 1;
    double sum = 0.0;
    if (p == 2) {
        for (Eigen::Index j = 1; j < last; ++j) {
            const Eigen::VectorXd v = fields.row(j).transpose();
            sum += tau * v.dot(mass * v);
        }
        return std::sqrt(std::max(sum, 0.0));
    }
    const Eigen::VectorXd lumped = lumped_mass(mass);
    for (Eigen::Index j = 1; j < last; ++j) {
        sum += tau * fields.row(j).cwiseAbs().dot(lumped.transpose());
    }
    return sum;
}

} // namespace surfot
