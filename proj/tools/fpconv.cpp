// fpconv: free convolution, spectra of A + U B U* and the local law campaigns.

#include "fpconv/cli.hpp"
#include "fpconv/config.hpp"
#include "fpconv/diagnostics.hpp"
#include "fpconv/ensemble.hpp"
#include "fpconv/measure_io.hpp"
#include "fpconv/results_io.hpp"
#include "fpconv/subordination.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace fpconv;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct Options {
    fs::path out = ".";
    std::size_t threads = 0;
    std::optional<std::uint64_t> seed;
    int verbosity = 0;

    fs::path alpha, beta, measure, spectrum, config;
    std::string grid, eta = "4e-3,2e-3,1e-3", scan = "-10:10:2001", z;
    double floor = 0.05;
    std::size_t n = 0;
    bool center = false;
};

RunControl run_control(const Options& o)
{
    RunControl ctl;
    ctl.threads = cli::resolve_threads(o.threads);
    ctl.stop = &g_stop;
    if (o.verbosity > 0)
        ctl.log = [](const std::string& line) { std::cerr << "fpconv: " << line << "\n"; };
    return ctl;
}

std::string format_row(std::initializer_list<double> values)
{
    std::string out;
    for (double v : values) {
        if (!out.empty())
            out += ",";
        out += format_double(v);
    }
    return out + "\n";
}

int cmd_convolve(const Options& o)
{
    const auto a = read_measure_file(o.alpha);
    const auto b = read_measure_file(o.beta);
    const auto grid = cli::parse_grid(o.grid, "--grid");
    const auto etas = cli::parse_list(o.eta, "--eta");
    const auto d = convolution_density(a, b, grid, etas);
    std::string csv = "E,density\n";
    for (std::size_t k = 0; k < d.grid.size(); ++k)
        csv += format_row({d.grid[k], d.values[k]});
    ensure_directory(o.out);
    write_atomic(o.out / "density.csv", csv);
    for (std::size_t g : d.failed)
        std::cerr << "fpconv: warning: solver failed at E = " << format_double(d.grid[g]) << ", density reported as 0\n";
    return cli::ok;
}

std::vector<double> read_spectrum(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open spectrum file " + path.string());
    std::vector<double> ev;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty())
            ev.push_back(cli::parse_real(line, path.string()));
    if (ev.empty())
        throw ValidationError("spectrum file " + path.string() + " is empty");
    return ev;
}

int cmd_density(const Options& o)
{
    if (o.measure.empty() == o.spectrum.empty())
        throw ValidationError("density needs exactly one of --measure and --spectrum");
    const auto mu = o.measure.empty() ? make_uniform_measure(read_spectrum(o.spectrum)) : read_measure_file(o.measure);
    const auto grid = cli::parse_grid(o.grid, "--grid");
    const auto etas = cli::parse_list(o.eta, "--eta");
    const auto d = invert_density([&](cplx z) { return stieltjes(mu, z); }, grid, etas);
    std::string csv = "E,density\n";
    for (std::size_t k = 0; k < d.grid.size(); ++k)
        csv += format_row({d.grid[k], d.values[k]});
    ensure_directory(o.out);
    write_atomic(o.out / "density.csv", csv);
    return cli::ok;
}

int cmd_bulk(const Options& o)
{
    const auto a = read_measure_file(o.alpha);
    const auto b = read_measure_file(o.beta);
    const auto scan = cli::parse_grid(o.scan, "--scan");
    if (scan.size() < 2)
        throw ValidationError("--scan: needs at least two points");
    BulkOptions opt;
    opt.density_floor = o.floor;
    opt.eta_schedule = cli::parse_list(o.eta, "--eta");
    const auto windows = regular_bulk(a, b, scan.front(), scan.back(), scan.size(), opt);
    std::string csv = "lo,hi,min_density\n";
    for (const auto& w : windows)
        csv += format_row({w.lo, w.hi, w.min_density});
    ensure_directory(o.out);
    write_atomic(o.out / "bulk.csv", csv);
    std::cout << csv;
    return cli::ok;
}

EnsembleSpec ensemble_from(const Options& o)
{
    if (o.n == 0)
        throw ValidationError("--n must be positive");
    EnsembleSpec es;
    es.n = o.n;
    es.a_diag = quantile_sample(read_measure_file(o.alpha), o.n);
    es.b_diag = quantile_sample(read_measure_file(o.beta), o.n);
    if (o.center) {
        es.a_diag = centered(std::move(es.a_diag));
        es.b_diag = centered(std::move(es.b_diag));
    }
    es.seed = o.seed.value_or(0);
    es.validate();
    return es;
}

int cmd_sample(const Options& o)
{
    const auto es = ensemble_from(o);
    const auto s = eigen_h(build_h(es, sample_haar(es.n, es.seed)));
    ensure_directory(o.out);
    write_atomic(o.out / "spectrum.csv", spectrum_csv(s));
    return cli::ok;
}

int cmd_diag(const Options& o)
{
    const auto es = ensemble_from(o);
    const auto zs = cli::parse_list(o.z, "--z");
    if (zs.size() != 2 || !(zs[1] > 0.0))
        throw ValidationError("--z: expected E,eta with eta > 0");
    const SpectralParam z(zs[0], zs[1]);
    const auto ref = solve_subordination(make_uniform_measure(es.a_diag), make_uniform_measure(es.b_diag), z.z());
    const auto u = sample_haar(es.n, es.seed);
    const auto s = green(build_h(es, u), es, u, z);
    const auto rows = row_quantities_all(s, u, es.b_diag);
    const std::string csv = std::string(diagnostics_csv_header) + "\n" + to_csv(diagnose(s, ref, rows, es.seed)) + "\n";
    ensure_directory(o.out);
    write_atomic(o.out / "diagnostics.csv", csv);
    std::cout << csv;
    return cli::ok;
}

/// Loads the config, checks it names an experiment the subcommand runs, and
/// applies the --seed override.
ExperimentConfig load_config(const Options& o, std::initializer_list<ExperimentKind> accepted)
{
    if (o.config.empty())
        throw ValidationError("--config is required");
    std::ifstream in(o.config);
    if (!in)
        throw ValidationError("cannot open config file " + o.config.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config file " + o.config.string() + " is not valid JSON: " + e.what());
    }
    if (j.is_object() && !j.contains("experiment"))
        j["experiment"] = to_string(*accepted.begin());
    if (o.seed && j.is_object())
        j["seed"] = *o.seed;
    auto cfg = parse_config(j, o.config.parent_path());
    if (std::find(accepted.begin(), accepted.end(), cfg.kind) == accepted.end())
        throw ValidationError(std::string("experiment: \"") + to_string(cfg.kind) + "\" cannot run under this subcommand");
    return cfg;
}

int cmd_experiment(const Options& o, std::initializer_list<ExperimentKind> accepted)
{
    const auto cfg = load_config(o, accepted);
    ensure_directory(o.out);
    const auto r = run_experiment(cfg, run_control(o));
    write_results(r, o.out);
    if (r.slope)
        std::cout << "slope " << format_double(*r.slope) << " ci [" << format_double(r.slope_ci->first) << ", "
                  << format_double(r.slope_ci->second) << "]\n";
    std::cout << "verdicts " << r.domination_verdicts.size() << " all_passed " << (r.all_passed() ? "true" : "false")
              << (r.partial ? " partial" : "") << "\n";
    if (r.partial)
        std::cerr << "fpconv: interrupted, partial results written to " << o.out.string() << "\n";
    return cli::ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Free additive convolution and the local law of A + U B U*"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("-o,--out", o.out, "Output directory (created if missing)");
    app.add_option("-j,--threads", o.threads, "Worker threads (default: FPCONV_THREADS, then hardware)");
    app.add_option("--seed", o.seed, "Seed; overrides the config seed");
    app.add_flag("-v,--verbose", o.verbosity, "Log progress to stderr");

    const std::string grid_help = "Energy grid lo:hi:count";
    const std::string eta_help = "Comma list of decreasing eta values for the inversion";

    auto* convolve = app.add_subcommand("convolve", "Density of mu_alpha [+] mu_beta -> density.csv (E,density)");
    convolve->add_option("--alpha", o.alpha, "Measure file")->required()->check(CLI::ExistingFile);
    convolve->add_option("--beta", o.beta, "Measure file")->required()->check(CLI::ExistingFile);
    convolve->add_option("--grid", o.grid, grid_help)->required();
    convolve->add_option("--eta", o.eta, eta_help)->capture_default_str();

    auto* density = app.add_subcommand("density", "Smoothed density of one measure or spectrum -> density.csv");
    density->add_option("--measure", o.measure, "Measure file")->check(CLI::ExistingFile);
    density->add_option("--spectrum", o.spectrum, "Spectrum CSV, one eigenvalue per line")->check(CLI::ExistingFile);
    density->add_option("--grid", o.grid, grid_help)->required();
    density->add_option("--eta", o.eta, eta_help)->capture_default_str();

    auto* bulk = app.add_subcommand("bulk", "Regular bulk windows of mu_alpha [+] mu_beta -> bulk.csv");
    bulk->add_option("--alpha", o.alpha, "Measure file")->required()->check(CLI::ExistingFile);
    bulk->add_option("--beta", o.beta, "Measure file")->required()->check(CLI::ExistingFile);
    bulk->add_option("--scan", o.scan, "Scan grid lo:hi:count")->capture_default_str();
    bulk->add_option("--floor", o.floor, "Density floor")->capture_default_str();
    bulk->add_option("--eta", o.eta, eta_help)->capture_default_str();

    auto* sample = app.add_subcommand("sample", "Eigenvalues of H = A + U B U* -> spectrum.csv");
    auto* diag = app.add_subcommand("diag", "Green function diagnostics at one z -> diagnostics.csv");
    for (auto* sub : {sample, diag}) {
        sub->add_option("--alpha", o.alpha, "Measure file for A")->required()->check(CLI::ExistingFile);
        sub->add_option("--beta", o.beta, "Measure file for B")->required()->check(CLI::ExistingFile);
        sub->add_option("--n", o.n, "Dimension N")->required();
        sub->add_flag("--center", o.center, "Shift A and B to trace zero");
    }
    diag->add_option("--z", o.z, "Spectral parameter E,eta")->required();

    auto* rate = app.add_subcommand("rate", "Convergence-rate campaign -> result.json, errors.csv, scan.csv");
    auto* locallaw =
        app.add_subcommand("locallaw", "Local law or fluctuation-averaging scan -> result.json, errors.csv, scan.csv");
    auto* twoatom = app.add_subcommand("twoatom", "Two-point-mass local law -> result.json, errors.csv, scan.csv");
    for (auto* sub : {rate, locallaw, twoatom})
        sub->add_option("-c,--config", o.config, "Experiment config (JSON)")->required();

    app.footer("Grids use lo:hi:count (count points, both ends included); eta schedules are comma lists.\n"
               "Exit codes: 0 ok, 1 invalid input, 2 numerical failure, 3 I/O error.");

    int code = cli::ok;
    std::string message;
    try {
        app.parse(argc, argv);
        std::signal(SIGINT, on_sigint);
        std::signal(SIGTERM, on_sigint);
        if (*convolve)
            code = cmd_convolve(o);
        else if (*density)
            code = cmd_density(o);
        else if (*bulk)
            code = cmd_bulk(o);
        else if (*sample)
            code = cmd_sample(o);
        else if (*diag)
            code = cmd_diag(o);
        else if (*rate)
            code = cmd_experiment(o, {ExperimentKind::rate});
        else if (*locallaw)
            code = cmd_experiment(o, {ExperimentKind::locallaw, ExperimentKind::fluctuation});
        else if (*twoatom)
            code = cmd_experiment(o, {ExperimentKind::twoatom});
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        code = cli::validation;
        message = e.what();
    } catch (const ValidationError& e) {
        code = cli::validation;
        message = e.what();
    } catch (const NumericalError& e) {
        code = cli::numerical;
        message = e.what();
    } catch (const IoError& e) {
        code = cli::io;
        message = e.what();
    } catch (const std::exception& e) {
        code = cli::numerical;
        message = std::string("unexpected failure: ") + e.what();
    }
    if (code != cli::ok)
        std::cerr << cli::error_line(code, message) << "\n";
    return code;
}
