#pragma once

#include "surfot/admm.hpp"
#include "surfot/density.hpp"
#include "surfot/errors.hpp"
#include "surfot/mesh.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace surfot {

enum class OutputFormat { csv, vtk };
enum class SolverChoice { fast, direct, both };

struct RunConfig {
    /// "square:N", "icosphere:k", "geodesic:f" or a path to an .off/.obj file.
    std::string mesh = "square:15";
    /// Additional square resolutions for the error/order table.
    std::vector<int> refine;
    /// 0 selects 2N on square meshes and 2 floor(sqrt(N_s)) otherwise.
    int nt = 0;
    double r = 0.02;
    double alpha_r = 0.02;
    bool r_set = false;
    int iters = 51;
    std::optional<double> tol;
    std::string rho0 = "planar_gaussian:0.3,0.3,0.01";
    std::string rho1 = "planar_gaussian:0.7,0.7,0.01";
    std::filesystem::path out = "surfot_out";
    OutputFormat format = OutputFormat::csv;
    SolverChoice solver = SolverChoice::fast;
    int threads = 1;
    bool report_errors = true;
    bool report_energy = true;
    bool report_timings = true;
    bool write_slices = true;

    AdmmConfig admm() const
    {
        AdmmConfig c;
        c.alpha_r = alpha_r;
        c.r = r_set ? r : alpha_r;
        c.max_iter = iters;
        c.residual_tol = tol;
        return c;
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' expects a real number, got '" + value + "'");
    }
}

inline int parse_int(const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        const long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("'" + key + "' expects true/false, got '" + value + "'");
}

} // namespace detail

/// Applies one key/value pair. Keys use underscores; dashes are accepted
/// so that CLI flag names map onto the same table.
inline void apply_setting(RunConfig& c, std::string key, const std::string& raw)
{
    for (auto& ch : key) if (ch == '-') ch = '_';
    const std::string value = detail::trim(raw);
    if (key == "mesh") {
        c.mesh = value;
    } else if (key == "refine") {
        c.refine.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = detail::trim(item);
            if (!item.empty()) c.refine.push_back(detail::parse_int(key, item));
        }
    } else if (key == "nt") {
        c.nt = value == "auto" ? 0 : detail::parse_int(key, value);
    } else if (key == "r") {
        c.r = detail::parse_real(key, value);
        c.r_set = true;
    } else if (key == "alpha_r") {
        c.alpha_r = detail::parse_real(key, value);
    } else if (key == "iters") {
        c.iters = detail::parse_int(key, value);
    } else if (key == "tol") {
        if (value == "none" || value.empty()) c.tol.reset();
        else c.tol = detail::parse_real(key, value);
    } else if (key == "rho0") {
        c.rho0 = value;
    } else if (key == "rho1") {
        c.rho1 = value;
    } else if (key == "out") {
        c.out = value;
    } else if (key == "format") {
        if (value == "csv" || value == "CSV") c.format = OutputFormat::csv;
        else if (value == "vtk" || value == "VTK") c.format = OutputFormat::vtk;
        else throw ConfigError("format must be csv or vtk, got '" + value + "'");
    } else if (key == "solver") {
        if (value == "fast") c.solver = SolverChoice::fast;
        else if (value == "direct") c.solver = SolverChoice::direct;
        else if (value == "both") c.solver = SolverChoice::both;
        else throw ConfigError("solver must be fast, direct or both, got '" + value + "'");
    } else if (key == "threads") {
        c.threads = detail::parse_int(key, value);
    } else if (key == "report_errors") {
        c.report_errors = detail::parse_bool(key, value);
    } else if (key == "report_energy") {
        c.report_energy = detail::parse_bool(key, value);
    } else if (key == "report_timings") {
        c.report_timings = detail::parse_bool(key, value);
    } else if (key == "write_slices") {
        c.write_slices = detail::parse_bool(key, value);
    } else {
        throw ConfigError("unknown configuration key '" + key + "'");
    }
}

/// Flat "key = value" lines; '#' starts a comment.
inline RunConfig parse_config(std::istream& in, RunConfig base = {})
{
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        }
        apply_setting(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {})
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse_config(in, std::move(base));
}

struct MeshSource {
    enum class Kind { square, icosphere, geodesic, file } kind = Kind::square;
    int param = 0;
    std::filesystem::path path;
};

inline MeshSource parse_mesh_source(const std::string& text)
{
    const auto colon = text.find(':');
    if (colon != std::string::npos) {
        const std::string kind = text.substr(0, colon);
        const std::string arg = text.substr(colon + 1);
        if (kind == "square") return {MeshSource::Kind::square, detail::parse_int("mesh", arg), {}};
        if (kind == "icosphere") return {MeshSource::Kind::icosphere, detail::parse_int("mesh", arg), {}};
        if (kind == "geodesic") return {MeshSource::Kind::geodesic, detail::parse_int("mesh", arg), {}};
    }
    return {MeshSource::Kind::file, 0, text};
}

inline SurfaceMesh make_mesh(const MeshSource& src)
{
    switch (src.kind) {
    case MeshSource::Kind::square: return generate_square_mesh(src.param);
    case MeshSource::Kind::icosphere: return generate_icosphere(src.param);
    case MeshSource::Kind::geodesic: return generate_geodesic_sphere(src.param);
    case MeshSource::Kind::file: break;
    }
    return load_mesh(src.path);
}

inline int default_time_intervals(const MeshSource& src, Eigen::Index vertex_count)
{
    if (src.kind == MeshSource::Kind::square) return 2 * src.param;
    return 2 * static_cast<int>(std::floor(std::sqrt(static_cast<double>(vertex_count))));
}

/// Checks ranges and file references; raises ConfigError.
inline void validate(const RunConfig& c)
{
    const MeshSource src = parse_mesh_source(c.mesh);
    if (src.kind == MeshSource::Kind::file && !std::filesystem::exists(src.path)) {
        throw ConfigError("mesh file not found: " + src.path.string());
    }
    if (src.kind == MeshSource::Kind::square && src.param < 2) throw ConfigError("square mesh needs N >= 2");
    if (!c.refine.empty() && src.kind != MeshSource::Kind::square) {
        throw ConfigError("refine is only supported for square meshes");
    }
    for (int n : c.refine) if (n < 2) throw ConfigError("refine levels need N >= 2");
    if (c.nt != 0 && c.nt < 2) throw ConfigError("nt must be at least 2");
    if (c.threads < 1) throw ConfigError("threads must be at least 1");
    try {
        c.admm().validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    parse_density_spec(c.rho0);
    parse_density_spec(c.rho1);
}

} // namespace surfot
