#pragma once

#include "surfot/admm.hpp"
#include "surfot/config.hpp"
#include "surfot/density.hpp"
#include "surfot/output.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace surfot {

/// Ordered "key = value" report.
class Report {
public:
    template <typename T>
    void add(const std::string& key, const T& value)
    {
        std::ostringstream os;
        os << std::setprecision(17) << std::boolalpha << value;
        entries_.emplace_back(key, os.str());
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::optional<std::string> find(const std::string& key) const
    {
        for (const auto& [k, v] : entries_) {
            if (k == key) return v;
        }
        return std::nullopt;
    }

    void write(std::ostream& out) const
    {
        for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

struct PathRun {
    SolverKind kind;
    AdmmState state;
    double setup_seconds = 0.0;
    double total_seconds = 0.0;
};

struct LevelResult {
    std::string mesh;
    Eigen::Index vertices = 0;
    int time_intervals = 0;
    std::vector<PathRun> runs;
    std::optional<double> l1_error;
    std::optional<double> l2_error;
    double mesh_size = 0.0;
};

struct BenchmarkResult {
    Report report;
    std::vector<LevelResult> levels;
    std::vector<std::filesystem::path> files;
};

namespace detail {

inline std::string join(const std::vector<double>& v)
{
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

inline const char* kind_name(SolverKind k) { return k == SolverKind::fast ? "fast" : "direct"; }

/// Removes files created by an aborted run, or the whole output directory if
/// the run created it.
class OutputGuard {
public:
    explicit OutputGuard(std::filesystem::path dir) : dir_(std::move(dir)), existed_(std::filesystem::exists(dir_)) {}
    OutputGuard(const OutputGuard&) = delete;
    OutputGuard& operator=(const OutputGuard&) = delete;

    ~OutputGuard()
    {
        if (committed_) return;
        std::error_code ec;
        for (const auto& f : files_) std::filesystem::remove(f, ec);
        if (!existed_) std::filesystem::remove_all(dir_, ec);
    }

    void track(const std::vector<std::filesystem::path>& files) { files_.insert(files_.end(), files.begin(), files.end()); }
    void track(const std::filesystem::path& f) { files_.push_back(f); }
    void commit() { committed_ = true; }
    const std::vector<std::filesystem::path>& files() const { return files_; }

private:
    std::filesystem::path dir_;
    bool existed_;
    bool committed_ = false;
    std::vector<std::filesystem::path> files_;
};

} // namespace detail

/// Runs every requested mesh level and solver path, writes the density slices
/// of the last level and report.txt into config.out.
inline BenchmarkResult run_benchmark(const RunConfig& config, std::ostream* log = nullptr)
{
    validate(config);
    const MeshSource base = parse_mesh_source(config.mesh);
    std::vector<MeshSource> sources{base};
    for (int n : config.refine) sources.push_back({MeshSource::Kind::square, n, {}});

    const DensitySpec spec0 = parse_density_spec(config.rho0);
    const DensitySpec spec1 = parse_density_spec(config.rho1);
    const auto* g0 = std::get_if<PlanarGaussian>(&spec0);
    const auto* g1 = std::get_if<PlanarGaussian>(&spec1);
    const bool exact_available = g0 && g1 && g0->sigma == g1->sigma;

    std::vector<SolverKind> kinds;
    if (config.solver != SolverChoice::direct) kinds.push_back(SolverKind::fast);
    if (config.solver != SolverChoice::fast) kinds.push_back(SolverKind::direct);

    detail::OutputGuard guard(config.out);
    BenchmarkResult result;
    Report& rep = result.report;
    const AdmmConfig admm = config.admm();
    rep.add("r", admm.r);
    rep.add("alpha_r", admm.alpha_r);
    rep.add("max_iter", admm.max_iter);
    rep.add("levels", sources.size());

    std::optional<SurfaceMesh> last_mesh;
    std::optional<TimeGrid> last_grid;
    for (std::size_t level = 0; level < sources.size(); ++level) {
        const MeshSource& src = sources[level];
        SurfaceMesh mesh = make_mesh(src);
        const int nt = config.nt > 0 && level == 0 && config.refine.empty() ? config.nt
                                                                            : default_time_intervals(src, mesh.vertex_count());
        const TimeGrid grid(nt);
        std::vector<std::string> warnings;
        ScalarField rho0 = build_density(spec0, mesh, &warnings);
        ScalarField rho1 = build_density(spec1, mesh, &warnings);
        if (log) for (const auto& w : warnings) *log << "warning: " << w << '\n';

        LevelResult lr;
        lr.mesh = src.kind == MeshSource::Kind::file ? src.path.string() : config.mesh;
        if (src.kind == MeshSource::Kind::square) {
            lr.mesh = "square:" + std::to_string(src.param);
            lr.mesh_size = 1.0 / (src.param - 1);
        }
        lr.vertices = mesh.vertex_count();
        lr.time_intervals = nt;

        const TransportProblem problem = make_problem(mesh, grid, std::move(rho0), std::move(rho1));
        for (SolverKind kind : kinds) {
            if (log) *log << lr.mesh << " (" << lr.vertices << " vertices, " << nt << " intervals): " << detail::kind_name(kind) << " path\n";
            PathRun pr{kind, {}, 0.0, 0.0};
            const auto t0 = std::chrono::steady_clock::now();
            const PoissonSolver solver(problem, kind, config.threads);
            const auto t1 = std::chrono::steady_clock::now();
            pr.state = run(admm, problem, solver);
            const auto t2 = std::chrono::steady_clock::now();
            pr.setup_seconds = std::chrono::duration<double>(t1 - t0).count();
            pr.total_seconds = std::chrono::duration<double>(t2 - t0).count();
            lr.runs.push_back(std::move(pr));
        }

        const AdmmState& primary = lr.runs.front().state;
        const std::string p = "level" + std::to_string(level) + ".";
        rep.add(p + "mesh", lr.mesh);
        rep.add(p + "vertices", lr.vertices);
        rep.add(p + "time_intervals", nt);
        rep.add(p + "iterations", primary.iteration);
        rep.add(p + "final_residual", primary.residual_history.back());
        if (config.report_energy) {
            const EnergyReport e = transport_energy(primary.sigma, problem.lumped, grid);
            rep.add(p + "energy", e.value);
            rep.add(p + "energy_infinite", e.infinite);
            rep.add(p + "energy_singular_nodes", e.singular_nodes);
        }
        if (config.report_errors && exact_available && mesh.is_flat_xy()) {
            TimeSpaceField diff = primary.sigma.temporal;
            for (int j = 0; j < grid.node_count(); ++j) {
                diff.row(j) -= exact_gaussian_path(grid.node(j), mesh, g0->mean, g1->mean, g0->sigma).transpose();
            }
            lr.l1_error = discrete_lp_norm(diff, problem.mass, grid.step(), 1);
            lr.l2_error = discrete_lp_norm(diff, problem.mass, grid.step(), 2);
            rep.add(p + "l1_error", *lr.l1_error);
            rep.add(p + "l2_error", *lr.l2_error);
        }
        if (lr.runs.size() == 2) {
            const double scale = lr.runs[1].state.density().norm();
            const double gap = (lr.runs[0].state.density() - lr.runs[1].state.density()).norm();
            rep.add(p + "fast_direct_relative_gap", scale > 0.0 ? gap / scale : gap);
        }
        if (config.report_timings) {
            for (const auto& pr : lr.runs) {
                const std::string k = p + detail::kind_name(pr.kind) + ".";
                const auto& its = pr.state.iteration_seconds;
                rep.add(k + "setup_seconds", pr.setup_seconds);
                rep.add(k + "total_seconds", pr.total_seconds);
                rep.add(k + "mean_iteration_seconds",
                        std::accumulate(its.begin(), its.end(), 0.0) / static_cast<double>(its.size()));
                rep.add(k + "iteration_seconds", detail::join(its));
            }
            if (lr.runs.size() == 2) {
                const auto mean = [](const PathRun& pr) {
                    const auto& v = pr.state.iteration_seconds;
                    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
                };
                rep.add(p + "speedup_per_iteration", mean(lr.runs[1]) / mean(lr.runs[0]));
            }
        }
        result.levels.push_back(std::move(lr));
        if (level + 1 == sources.size()) {
            last_mesh = std::move(mesh);
            last_grid = grid;
        }
    }

    for (std::size_t level = 1; level < result.levels.size(); ++level) {
        const auto& a = result.levels[level - 1];
        const auto& b = result.levels[level];
        if (!a.l2_error || !b.l2_error) continue;
        const double ratio = std::log(a.mesh_size / b.mesh_size);
        const std::string k = "level" + std::to_string(level) + ".";
        rep.add(k + "order_l1", std::log(*a.l1_error / *b.l1_error) / ratio);
        rep.add(k + "order_l2", std::log(*a.l2_error / *b.l2_error) / ratio);
    }

    if (config.write_slices) {
        guard.track(write_trajectory(result.levels.back().runs.front().state.density(), *last_mesh, *last_grid,
                                     config.format, config.out));
    }
    std::error_code ec;
    std::filesystem::create_directories(config.out, ec);
    if (ec) throw IoError("cannot create output directory " + config.out.string());
    const auto report_path = config.out / "report.txt";
    {
        std::ofstream out(report_path);
        if (!out) throw IoError("cannot write " + report_path.string());
        guard.track(report_path);
        rep.write(out);
        out.flush();
        if (!out) throw IoError("write failed for " + report_path.string());
    }
    result.files = guard.files();
    guard.commit();
    return result;
}

} // namespace surfot
