#pragma once

#include "surfot/config.hpp"
#include "surfot/errors.hpp"
#include "surfot/fem.hpp"
#include "surfot/mesh.hpp"
#include "surfot/time_grid.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace surfot {

namespace detail {

inline std::string slice_name(int j, const char* ext)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "slice_%04d.%s", j, ext);
    return buf;
}

inline std::ofstream open_for_write(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace detail

/// Writes one file per time slice plus "manifest.csv" (index,t,file).
/// Returns every path written, manifest last.
inline std::vector<std::filesystem::path> write_trajectory(const TimeSpaceField& fields, const SurfaceMesh& mesh,
                                                           const TimeGrid& grid, OutputFormat format,
                                                           const std::filesystem::path& dir)
{
    if (fields.rows() != grid.node_count() || fields.cols() != mesh.vertex_count()) {
        throw ShapeMismatch("trajectory shape does not match mesh and time grid");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

    std::vector<std::filesystem::path> written;
    try {
    const char* ext = format == OutputFormat::csv ? "csv" : "vtk";
    for (int j = 0; j < grid.node_count(); ++j) {
        const auto path = dir / detail::slice_name(j, ext);
        auto out = detail::open_for_write(path);
        written.push_back(path);
        if (format == OutputFormat::csv) {
            out << "vertex_index,x,y,z,value\n";
            for (int i = 0; i < mesh.vertex_count(); ++i) {
                const Vec3& x = mesh.vertex(i);
                out << i << ',' << x.x() << ',' << x.y() << ',' << x.z() << ',' << fields(j, i) << '\n';
            }
        } else {
            out << "# vtk DataFile Version 3.0\n"
                << "density t=" << grid.node(j) << "\n"
                << "ASCII\nDATASET POLYDATA\n"
                << "POINTS " << mesh.vertex_count() << " double\n";
            for (const auto& x : mesh.vertices()) out << x.x() << ' ' << x.y() << ' ' << x.z() << '\n';
            out << "POLYGONS " << mesh.triangle_count() << ' ' << 4 * mesh.triangle_count() << '\n';
            for (const auto& t : mesh.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
            out << "POINT_DATA " << mesh.vertex_count() << "\n"
                << "SCALARS density double 1\nLOOKUP_TABLE default\n";
            for (int i = 0; i < mesh.vertex_count(); ++i) out << fields(j, i) << '\n';
        }
        detail::finish(out, path);
    }

    const auto manifest = dir / "manifest.csv";
    auto out = detail::open_for_write(manifest);
    written.push_back(manifest);
    out << "index,t,file\n";
    for (int j = 0; j < grid.node_count(); ++j) out << j << ',' << grid.node(j) << ',' << detail::slice_name(j, ext) << '\n';
    detail::finish(out, manifest);
    } catch (...) {
        for (const auto& f : written) std::filesystem::remove(f, ec);
        throw;
    }
    return written;
}

/// Reads the value column of a CSV slice written by write_trajectory.
inline ScalarField read_csv_slice(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        try {
            values.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw ParseError("bad slice row '" + line + "'");
        }
    }
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

} // namespace surfot
