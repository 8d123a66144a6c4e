#pragma once

#include "surfot/errors.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace surfot {

using Vec3 = Eigen::Vector3d;
using Triangle = std::array<int, 3>;

/// Embedded triangle mesh. Validated on construction and immutable afterwards,
/// so it can be shared freely between threads.
class SurfaceMesh {
public:
    SurfaceMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
        : vertices_(std::move(vertices)), triangles_(std::move(triangles))
    {
        validate_and_index();
    }

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    const Vec3& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }
    const Triangle& triangle(int t) const { return triangles_[static_cast<std::size_t>(t)]; }

    int vertex_count() const { return static_cast<int>(vertices_.size()); }
    int triangle_count() const { return static_cast<int>(triangles_.size()); }

    const std::vector<bool>& boundary_flags() const { return boundary_; }
    bool is_boundary(int v) const { return boundary_[static_cast<std::size_t>(v)]; }
    bool is_closed() const { return std::none_of(boundary_.begin(), boundary_.end(), [](bool b) { return b; }); }

    /// Vertices sharing an edge with `v`, ascending.
    std::span<const int> neighbors(int v) const
    {
        const auto begin = static_cast<std::size_t>(adjacency_offsets_[static_cast<std::size_t>(v)]);
        const auto end = static_cast<std::size_t>(adjacency_offsets_[static_cast<std::size_t>(v) + 1]);
        return {adjacency_.data() + begin, end - begin};
    }

    Vec3 triangle_cross(int t) const
    {
        const auto& f = triangle(t);
        return (vertex(f[1]) - vertex(f[0])).cross(vertex(f[2]) - vertex(f[0]));
    }
    double triangle_area(int t) const { return 0.5 * triangle_cross(t).norm(); }
    Vec3 triangle_normal(int t) const { return triangle_cross(t).normalized(); }

    double total_area() const
    {
        // Neumaier summation; fine square meshes have ~1e5 equal-sized terms
        double area = 0.0, carry = 0.0;
        for (int t = 0; t < triangle_count(); ++t) {
            const double a = triangle_area(t);
            const double s = area + a;
            carry += std::abs(area) >= a ? (area - s) + a : (a - s) + area;
            area = s;
        }
        return area + carry;
    }

    double bounding_box_diagonal() const
    {
        if (vertices_.empty()) return 0.0;
        Vec3 lo = vertices_.front();
        Vec3 hi = vertices_.front();
        for (const auto& p : vertices_) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        return (hi - lo).norm();
    }

    /// True when every vertex has z == 0 (within `tol`).
    bool is_flat_xy(double tol = 1e-12) const
    {
        return std::all_of(vertices_.begin(), vertices_.end(), [tol](const Vec3& p) { return std::abs(p.z()) <= tol; });
    }

private:
    void validate_and_index()
    {
        const int n = vertex_count();
        if (n == 0 || triangles_.empty()) throw ValidationError("mesh has no vertices or no triangles");
        for (const auto& p : vertices_) {
            if (!p.allFinite()) throw ValidationError("mesh has a non-finite vertex coordinate");
        }
        for (std::size_t t = 0; t < triangles_.size(); ++t) {
            const auto& f = triangles_[t];
            for (int idx : f) {
                if (idx < 0 || idx >= n) {
                    throw ValidationError("triangle " + std::to_string(t) + " references vertex " + std::to_string(idx) +
                                          " outside [0, " + std::to_string(n) + ")");
                }
            }
            if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
                throw ValidationError("triangle " + std::to_string(t) + " repeats a vertex");
            }
        }

        const double diag = bounding_box_diagonal();
        const double min_area = 1e-14 * diag * diag;
        for (int t = 0; t < triangle_count(); ++t) {
            if (!(triangle_area(t) > min_area)) throw ValidationError("triangle " + std::to_string(t) + " is degenerate");
        }

        // Directed half-edges must be unique; an undirected edge carries at most two.
        std::map<std::pair<int, int>, int> directed;
        for (const auto& f : triangles_) {
            for (int k = 0; k < 3; ++k) {
                const int a = f[static_cast<std::size_t>(k)];
                const int b = f[static_cast<std::size_t>((k + 1) % 3)];
                if (++directed[{a, b}] > 1) {
                    throw ValidationError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                          ") is traversed twice in the same direction: inconsistent orientation "
                                          "or non-manifold edge");
                }
            }
        }

        boundary_.assign(static_cast<std::size_t>(n), false);
        std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
        for (const auto& [edge, count] : directed) {
            const auto [a, b] = edge;
            const bool has_twin = directed.count({b, a}) > 0;
            if (!has_twin) {
                boundary_[static_cast<std::size_t>(a)] = true;
                boundary_[static_cast<std::size_t>(b)] = true;
            }
            adj[static_cast<std::size_t>(a)].push_back(b);
            adj[static_cast<std::size_t>(b)].push_back(a);
        }

        adjacency_offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
        adjacency_.clear();
        for (int v = 0; v < n; ++v) {
            auto& list = adj[static_cast<std::size_t>(v)];
            std::sort(list.begin(), list.end());
            list.erase(std::unique(list.begin(), list.end()), list.end());
            adjacency_.insert(adjacency_.end(), list.begin(), list.end());
            adjacency_offsets_[static_cast<std::size_t>(v) + 1] = static_cast<int>(adjacency_.size());
        }
    }

    std::vector<Vec3> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<bool> boundary_;
    std::vector<int> adjacency_offsets_;
    std::vector<int> adjacency_;
};

// ---------------------------------------------------------------------------
// File I/O

enum class MeshFormat { off, obj };

namespace detail {

inline std::string strip_comments(std::istream& in)
{
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        out << line << '\n';
    }
    return out.str();
}

template <typename T>
T read_token(std::istream& in, const char* what)
{
    T value{};
    if (!(in >> value)) throw ParseError(std::string("expected ") + what);
    return value;
}

inline int parse_obj_index(const std::string& token)
{
    const std::string head = token.substr(0, token.find('/'));
    std::size_t used = 0;
    long value = 0;
    try {
        value = std::stol(head, &used);
    } catch (const std::exception&) {
        throw ParseError("bad OBJ face index '" + token + "'");
    }
    if (used != head.size()) throw ParseError("bad OBJ face index '" + token + "'");
    if (value <= 0) throw ParseError("OBJ face index must be a positive 1-based index, got '" + token + "'");
    return static_cast<int>(value - 1);
}

} // namespace detail

inline SurfaceMesh read_off(std::istream& in)
{
    std::istringstream tokens(detail::strip_comments(in));
    if (detail::read_token<std::string>(tokens, "OFF header") != "OFF") throw ParseError("missing OFF header");
    const auto nv = detail::read_token<long>(tokens, "vertex count");
    const auto nf = detail::read_token<long>(tokens, "face count");
    detail::read_token<long>(tokens, "edge count");
    if (nv < 0 || nf < 0) throw ParseError("negative element count in OFF file");

    std::vector<Vec3> vertices(static_cast<std::size_t>(nv));
    for (auto& p : vertices) {
        for (int k = 0; k < 3; ++k) p[k] = detail::read_token<double>(tokens, "vertex coordinate");
    }
    std::vector<Triangle> triangles(static_cast<std::size_t>(nf));
    for (auto& f : triangles) {
        const auto arity = detail::read_token<long>(tokens, "face arity");
        if (arity != 3) throw ParseError("only triangular faces are supported, got arity " + std::to_string(arity));
        for (auto& idx : f) idx = detail::read_token<int>(tokens, "face index");
    }
    return SurfaceMesh(std::move(vertices), std::move(triangles));
}

inline SurfaceMesh read_obj(std::istream& in)
{
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 p;
            for (int k = 0; k < 3; ++k) p[k] = detail::read_token<double>(ls, "vertex coordinate");
            vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<std::string> items;
            std::string item;
            while (ls >> item) items.push_back(item);
            if (items.size() != 3) throw ParseError("only triangular faces are supported in OBJ input");
            triangles.push_back({detail::parse_obj_index(items[0]), detail::parse_obj_index(items[1]),
                                 detail::parse_obj_index(items[2])});
        }
        // vt, vn, g, o, s and friends carry nothing we use.
    }
    return SurfaceMesh(std::move(vertices), std::move(triangles));
}

inline void write_off(std::ostream& out, const SurfaceMesh& mesh)
{
    out << std::setprecision(17);
    out << "OFF\n" << mesh.vertex_count() << ' ' << mesh.triangle_count() << " 0\n";
    for (const auto& p : mesh.vertices()) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const auto& f : mesh.triangles()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

inline void write_obj(std::ostream& out, const SurfaceMesh& mesh)
{
    out << std::setprecision(17);
    for (const auto& p : mesh.vertices()) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const auto& f : mesh.triangles()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

/// Deduces the format from the file extension (.off / .obj, case-insensitive).
inline MeshFormat mesh_format_from_path(const std::filesystem::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".off") return MeshFormat::off;
    if (ext == ".obj") return MeshFormat::obj;
    throw ParseError("unsupported mesh format '" + ext + "' (expected .off or .obj)");
}

inline SurfaceMesh load_mesh(const std::filesystem::path& path, MeshFormat format)
{
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open mesh file " + path.string());
    return format == MeshFormat::off ? read_off(in) : read_obj(in);
}

inline SurfaceMesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, mesh_format_from_path(path)); }

inline void save_mesh(const std::filesystem::path& path, const SurfaceMesh& mesh, MeshFormat format)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write mesh file " + path.string());
    if (format == MeshFormat::off) {
        write_off(out, mesh);
    } else {
        write_obj(out, mesh);
    }
    if (!out) throw IoError("failed while writing " + path.string());
}

// ---------------------------------------------------------------------------
// Generators

/// Uniform N x N grid on [0,1]^2 at z = 0. Every cell is cut along its
/// lower-left to upper-right diagonal. Vertex (i, j) has index i + N*j.
inline SurfaceMesh generate_square_mesh(int n)
{
    if (n < 2) throw ValidationError("square mesh needs N >= 2");
    std::vector<Vec3> vertices;
    vertices.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    const double h = 1.0 / (n - 1);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) vertices.emplace_back(i * h, j * h, 0.0);
    }
    // Pin the far edges to exactly 1.
    for (int k = 0; k < n; ++k) {
        vertices[static_cast<std::size_t>((n - 1) + n * k)].x() = 1.0;
        vertices[static_cast<std::size_t>(k + n * (n - 1))].y() = 1.0;
    }
    std::vector<Triangle> triangles;
    triangles.reserve(2 * static_cast<std::size_t>(n - 1) * static_cast<std::size_t>(n - 1));
    for (int j = 0; j + 1 < n; ++j) {
        for (int i = 0; i + 1 < n; ++i) {
            const int v00 = i + n * j;
            const int v10 = v00 + 1;
            const int v01 = v00 + n;
            const int v11 = v01 + 1;
            triangles.push_back({v00, v10, v11});
            triangles.push_back({v00, v11, v01});
        }
    }
    return SurfaceMesh(std::move(vertices), std::move(triangles));
}

namespace detail {

inline std::pair<std::vector<Vec3>, std::vector<Triangle>> icosahedron()
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (auto& p : v) p.normalize();
    std::vector<Triangle> f = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
        {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    return {std::move(v), std::move(f)};
}

} // namespace detail

/// Icosahedron refined by repeated 1-to-4 splits; new vertices are pushed
/// onto the unit sphere after every level.
inline SurfaceMesh generate_icosphere(int subdivisions)
{
    if (subdivisions < 0 || subdivisions > 7) throw ValidationError("icosphere subdivisions must lie in [0, 7]");
    auto [vertices, triangles] = detail::icosahedron();
    for (int level = 0; level < subdivisions; ++level) {
        std::unordered_map<std::uint64_t, int> midpoint;
        auto split = [&](int a, int b) {
            const auto lo = static_cast<std::uint64_t>(std::min(a, b));
            const auto hi = static_cast<std::uint64_t>(std::max(a, b));
            const std::uint64_t key = (lo << 32) | hi;
            if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
            const Vec3 mid = (vertices[static_cast<std::size_t>(a)] + vertices[static_cast<std::size_t>(b)]).normalized();
            vertices.push_back(mid);
            const int id = static_cast<int>(vertices.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<Triangle> refined;
        refined.reserve(triangles.size() * 4);
        for (const auto& f : triangles) {
            const int ab = split(f[0], f[1]);
            const int bc = split(f[1], f[2]);
            const int ca = split(f[2], f[0]);
            refined.push_back({f[0], ab, ca});
            refined.push_back({f[1], bc, ab});
            refined.push_back({f[2], ca, bc});
            refined.push_back({ab, bc, ca});
        }
        triangles = std::move(refined);
    }
    return SurfaceMesh(std::move(vertices), std::move(triangles));
}

/// Class-I geodesic sphere: every icosahedron face is cut into frequency^2
/// triangles and all points are projected to the unit sphere. Has
/// 10 f^2 + 2 vertices, which fills the gaps between icosphere levels.
inline SurfaceMesh generate_geodesic_sphere(int frequency)
{
    if (frequency < 1 || frequency > 128) throw ValidationError("geodesic sphere frequency must lie in [1, 128]");
    const auto [corners, faces] = detail::icosahedron();
    const int n = frequency;

    // Key kinds: 0 = icosahedron corner, 1 = point on an icosahedron edge, 2 = face interior.
    std::map<std::tuple<int, int, int, int>, int> ids;
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;

    for (int face = 0; face < static_cast<int>(faces.size()); ++face) {
        const auto& f = faces[static_cast<std::size_t>(face)];
        const Vec3& a = corners[static_cast<std::size_t>(f[0])];
        const Vec3& b = corners[static_cast<std::size_t>(f[1])];
        const Vec3& c = corners[static_cast<std::size_t>(f[2])];
        auto point_id = [&](int i, int j) {
            const int w[3] = {n - i - j, i, j};
            std::tuple<int, int, int, int> key;
            const int zeros = (w[0] == 0) + (w[1] == 0) + (w[2] == 0);
            if (zeros == 2) {
                const int k = w[0] == n ? 0 : (w[1] == n ? 1 : 2);
                key = {0, f[static_cast<std::size_t>(k)], 0, 0};
            } else if (zeros == 1) {
                const int skip = w[0] == 0 ? 0 : (w[1] == 0 ? 1 : 2);
                const int p = (skip + 1) % 3;
                const int q = (skip + 2) % 3;
                int u = f[static_cast<std::size_t>(p)];
                int v = f[static_cast<std::size_t>(q)];
                int weight_v = w[q];
                if (u > v) {
                    std::swap(u, v);
                    weight_v = w[p];
                }
                key = {1, u, v, weight_v};
            } else {
                key = {2, face, i, j};
            }
            if (auto it = ids.find(key); it != ids.end()) return it->second;
            const Vec3 p = (a * w[0] + b * w[1] + c * w[2]) / static_cast<double>(n);
            vertices.push_back(p.normalized());
            const int id = static_cast<int>(vertices.size()) - 1;
            ids.emplace(key, id);
            return id;
        };
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i + j < n; ++i) {
                triangles.push_back({point_id(i, j), point_id(i + 1, j), point_id(i, j + 1)});
                if (i + j + 2 <= n) triangles.push_back({point_id(i + 1, j), point_id(i + 1, j + 1), point_id(i, j + 1)});
            }
        }
    }
    return SurfaceMesh(std::move(vertices), std::move(triangles));
}

// ---------------------------------------------------------------------------
// Patches

/// k-ring neighborhood of a vertex. `members` lists the center first, then
/// each ring in ascending index order.
struct VertexPatch {
    int center = 0;
    std::vector<int> members;
    int ring_depth = 0;
};

/// k-ring of exact depth `depth` (may stop early once the component is exhausted).
inline VertexPatch k_ring(const SurfaceMesh& mesh, int vertex, int depth)
{
    if (vertex < 0 || vertex >= mesh.vertex_count()) throw ValidationError("vertex index out of range");
    VertexPatch patch;
    patch.center = vertex;
    patch.members = {vertex};
    std::vector<char> seen(static_cast<std::size_t>(mesh.vertex_count()), 0);
    seen[static_cast<std::size_t>(vertex)] = 1;
    std::vector<int> frontier = {vertex};
    for (int k = 1; k <= depth && !frontier.empty(); ++k) {
        std::vector<int> next;
        for (int v : frontier) {
            for (int w : mesh.neighbors(v)) {
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    next.push_back(w);
                }
            }
        }
        std::sort(next.begin(), next.end());
        patch.members.insert(patch.members.end(), next.begin(), next.end());
        if (!next.empty()) patch.ring_depth = k;
        frontier = std::move(next);
    }
    return patch;
}

/// Smallest k-ring (k >= 1) around `vertex` with at least `min_size` members.
inline VertexPatch build_patch(const SurfaceMesh& mesh, int vertex, int min_size)
{
    int depth = 1;
    for (;;) {
        VertexPatch patch = k_ring(mesh, vertex, depth);
        if (static_cast<int>(patch.members.size()) >= min_size) return patch;
        if (patch.ring_depth < depth) {
            throw PatchTooSmall("vertex " + std::to_string(vertex) + ": connected component has only " +
                                std::to_string(patch.members.size()) + " vertices, need " + std::to_string(min_size));
        }
        ++depth;
    }
}

} // namespace surfot
