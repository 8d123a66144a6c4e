#include "surfot/benchmark.hpp"
#include "surfot/config.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Dynamic optimal transport on triangulated surfaces (gradient-recovered ADMM)"};
    app.set_version_flag("--version", "surfot 1.0");

    std::string config_path;
    std::map<std::string, std::string> flags;
    app.add_option("-c,--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);

    // Each flag mirrors a configuration key; flags override the file.
    const std::pair<const char*, const char*> options[] = {
        {"mesh", "square:N | icosphere:k | geodesic:f | path to .off/.obj"},
        {"refine", "extra square resolutions for the error table, e.g. 29,57"},
        {"nt", "number of time intervals (auto: 2N on squares, 2 floor(sqrt(Ns)) otherwise)"},
        {"alpha-r", "dual step size"},
        {"r", "augmentation weight (defaults to alpha-r)"},
        {"iters", "maximum ADMM iterations"},
        {"tol", "stop once the constraint residual drops below this value"},
        {"rho0", "initial density, e.g. planar_gaussian:0.3,0.3,0.01"},
        {"rho1", "final density, e.g. spherical_gaussian:0,0,-1,0.1"},
        {"out", "output directory"},
        {"format", "csv | vtk"},
        {"solver", "fast | direct | both"},
        {"threads", "worker threads for the per-frequency solves"},
    };
    for (const auto& [name, help] : options) {
        app.add_option_function<std::string>(std::string("--") + name,
                                             [&flags, key = std::string(name)](const std::string& v) { flags[key] = v; },
                                             help);
    }
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "suppress progress messages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        surfot::RunConfig config;
        if (!config_path.empty()) config = surfot::load_config(config_path);
        for (const auto& [key, value] : flags) surfot::apply_setting(config, key, value);

        const auto result = surfot::run_benchmark(config, quiet ? nullptr : &std::cerr);
        result.report.write(std::cout);
        if (!quiet) std::cerr << "wrote " << result.files.size() << " files to " << config.out << '\n';
        return 0;
    } catch (const surfot::DivergenceDetected& e) {
        std::cerr << "diverged at iteration " << e.iteration() << ": " << e.what() << '\n';
        return kExitDivergence;
    } catch (const surfot::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const surfot::ValidationError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const surfot::IncompatibleSpec& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const surfot::ParseError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const surfot::MassMismatch& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const surfot::SizeGuard& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
