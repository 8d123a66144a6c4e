#pragma once

#include "surfot/errors.hpp"
#include "surfot/fem.hpp"
#include "surfot/mesh.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace surfot {

struct PlanarGaussian {
    Eigen::Vector2d mean{0.5, 0.5};
    double sigma = 0.01;
};

struct SphericalGaussian {
    Vec3 mean{0.0, 0.0, 1.0};
    double sigma = 0.1;
};

/// Indicator of the ball |x - center| <= radius; the whole mesh when radius < 0.
struct Indicator {
    Vec3 center = Vec3::Zero();
    double radius = -1.0;
};

struct DensityFile {
    std::filesystem::path path;
};

using DensitySpec = std::variant<PlanarGaussian, SphericalGaussian, Indicator, DensityFile>;

inline void validate(const DensitySpec& spec)
{
    if (const auto* g = std::get_if<PlanarGaussian>(&spec)) {
        if (!(g->sigma > 0.0)) throw ValidationError("planar Gaussian needs sigma > 0");
    } else if (const auto* s = std::get_if<SphericalGaussian>(&spec)) {
        if (!(s->sigma > 0.0)) throw ValidationError("spherical Gaussian needs sigma > 0");
        if (std::abs(s->mean.norm() - 1.0) > 1e-10) throw ValidationError("spherical Gaussian mean must be a unit vector");
    } else if (const auto* f = std::get_if<DensityFile>(&spec)) {
        if (!std::filesystem::exists(f->path)) throw ValidationError("density file not found: " + f->path.string());
    }
}

/// Parses "planar_gaussian:mx,my,sigma", "spherical_gaussian:x,y,z,sigma",
/// "indicator:all", "indicator:cx,cy,cz,radius" or "file:path".
inline DensitySpec parse_density_spec(const std::string& text)
{
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string args = colon == std::string::npos ? std::string() : text.substr(colon + 1);
    auto numbers = [&](std::size_t expected) {
        std::vector<double> v;
        std::stringstream ss(args);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(item, &used));
                if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("bad number '" + item + "' in density spec '" + text + "'");
            }
        }
        if (v.size() != expected) {
            throw ConfigError("density spec '" + text + "' needs " + std::to_string(expected) + " numbers");
        }
        return v;
    };

    DensitySpec spec;
    if (kind == "planar_gaussian") {
        const auto v = numbers(3);
        spec = PlanarGaussian{{v[0], v[1]}, v[2]};
    } else if (kind == "spherical_gaussian") {
        const auto v = numbers(4);
        spec = SphericalGaussian{{v[0], v[1], v[2]}, v[3]};
    } else if (kind == "indicator") {
        if (args.empty() || args == "all") {
            spec = Indicator{};
        } else {
            const auto v = numbers(4);
            spec = Indicator{{v[0], v[1], v[2]}, v[3]};
        }
    } else if (kind == "file") {
        if (args.empty()) throw ConfigError("file density spec needs a path");
        spec = DensityFile{args};
    } else {
        throw ConfigError("unknown density kind '" + kind + "'");
    }
    try {
        validate(spec);
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return spec;
}

namespace detail {

inline constexpr double kDensityFloor = 1e-10;

/// exp(-d^2 / (2 sigma^2)) up to a common factor. The smallest exponent is
/// shifted to zero so that narrow Gaussians never underflow everywhere.
inline ScalarField gaussian_from_distances(const Eigen::VectorXd& dist2, double sigma)
{
    const double shift = dist2.minCoeff();
    return (-(dist2.array() - shift) / (2.0 * sigma * sigma)).exp().matrix();
}

/// A single value per line; for comma-separated rows the last field is used.
inline ScalarField read_density_file(const std::filesystem::path& path, Eigen::Index expected)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open density file " + path.string());
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto comma = line.rfind(',');
        const std::string field = comma == std::string::npos ? line : line.substr(comma + 1);
        try {
            values.push_back(std::stod(field));
        } catch (const std::exception&) {
            throw ParseError("bad density value '" + field + "' in " + path.string());
        }
    }
    if (static_cast<Eigen::Index>(values.size()) != expected) {
        throw ValidationError("density file " + path.string() + " has " + std::to_string(values.size()) +
                              " values, mesh has " + std::to_string(expected) + " vertices");
    }
    return Eigen::Map<const Eigen::VectorXd>(values.data(), expected);
}

inline bool is_unit_sphere(const SurfaceMesh& mesh, double tol = 1e-6)
{
    for (const auto& v : mesh.vertices()) {
        if (std::abs(v.norm() - 1.0) > tol) return false;
    }
    return true;
}

} // namespace detail

/// Floors at zero, scales to unit lumped mass, adds a uniform 1e-10/area and
/// rescales again.
inline ScalarField normalize_density(ScalarField rho, const Eigen::VectorXd& lumped)
{
    rho = rho.cwiseMax(0.0);
    const double mass = lumped.dot(rho);
    if (!(mass > 0.0) || !std::isfinite(mass)) throw ValidationError("density has no positive mass on this mesh");
    rho /= mass;
    const double area = lumped.sum();
    rho.array() += detail::kDensityFloor / area;
    rho /= lumped.dot(rho);
    return rho;
}

inline ScalarField build_density(const DensitySpec& spec, const SurfaceMesh& mesh,
                                 std::vector<std::string>* warnings = nullptr)
{
    validate(spec);
    const Eigen::Index n = mesh.vertex_count();
    ScalarField rho(n);
    if (const auto* g = std::get_if<PlanarGaussian>(&spec)) {
        if (!mesh.is_flat_xy()) throw IncompatibleSpec("planar Gaussian needs a flat z = 0 mesh");
        Eigen::VectorXd d2(n);
        for (Eigen::Index i = 0; i < n; ++i) d2[i] = (mesh.vertex(i).head<2>() - g->mean).squaredNorm();
        rho = detail::gaussian_from_distances(d2, g->sigma);
    } else if (const auto* s = std::get_if<SphericalGaussian>(&spec)) {
        const bool sphere = detail::is_unit_sphere(mesh);
        if (!sphere && warnings) {
            warnings->push_back("spherical Gaussian on a non-spherical mesh: using chordal distance");
        }
        Eigen::VectorXd d2(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vec3& x = mesh.vertex(i);
            const double d = sphere ? std::acos(std::clamp(x.normalized().dot(s->mean), -1.0, 1.0))
                                    : (x - s->mean).norm();
            d2[i] = d * d;
        }
        rho = detail::gaussian_from_distances(d2, s->sigma);
    } else if (const auto* ind = std::get_if<Indicator>(&spec)) {
        for (Eigen::Index i = 0; i < n; ++i) {
            rho[i] = (ind->radius < 0.0 || (mesh.vertex(i) - ind->center).norm() <= ind->radius) ? 1.0 : 0.0;
        }
    } else {
        rho = detail::read_density_file(std::get<DensityFile>(spec).path, n);
    }
    return normalize_density(std::move(rho), lumped_mass(assemble_mass(mesh)));
}

inline constexpr double kBenchmarkSigma = 0.01;

/// Translating Gaussian with mean (1-t) mu0 + t mu1, normalized like build_density.
inline ScalarField exact_gaussian_path(double t, const SurfaceMesh& mesh,
                                       const Eigen::Vector2d& mu0 = {0.3, 0.3},
                                       const Eigen::Vector2d& mu1 = {0.7, 0.7}, double sigma = kBenchmarkSigma)
{
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("time must lie in [0, 1]");
    if (!mesh.is_flat_xy()) throw IncompatibleSpec("exact Gaussian path needs a flat z = 0 mesh");
    return build_density(PlanarGaussian{(1.0 - t) * mu0 + t * mu1, sigma}, mesh);
}

} // namespace surfot
