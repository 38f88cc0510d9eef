#ifndef FPCONV_RESULTS_IO_HPP
#define FPCONV_RESULTS_IO_HPP

// result.json, errors.csv and scan.csv, each written to a temporary file in
// the output directory and renamed into place.

#include "fpconv/errors.hpp"
#include "fpconv/experiments.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>

#include <unistd.h>

namespace fpconv {

/// Write `content` to `path` via a sibling temporary and rename(2), so that
/// readers never observe a truncated file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    const auto tmp = path.parent_path() / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot create " + tmp.string());
        out << content;
        out.flush();
        if (!out)
            throw IoError("write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move result into " + path.string());
    }
}

inline void ensure_directory(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("cannot create output directory " + dir.string());
}

inline std::string format_double(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string errors_csv(const ExperimentResult& r)
{
    std::string out = "N,replica,error\n";
    for (const auto& e : r.errors)
        out += std::to_string(e.n) + "," + std::to_string(e.replica) + "," + format_double(e.error) + "\n";
    return out;
}

inline std::string scan_csv(const ExperimentResult& r)
{
    std::string out = "E,eta,statistic,value,psi,verdict\n";
    for (const auto& s : r.scan)
        out += format_double(s.e) + "," + format_double(s.eta) + "," + s.statistic + "," + format_double(s.value) +
               "," + format_double(s.psi) + "," + s.verdict + "\n";
    return out;
}

inline nlohmann::json verdict_json(const DominationStat& s)
{
    return {{"statistic", s.statistic_name}, {"bound", s.bound},           {"epsilon", s.epsilon},
            {"pass_fraction", s.pass_fraction}, {"exceed_fraction", s.exceed_fraction}, {"passed", s.passed},
            {"samples", s.samples.size()}};
}

/// JSON keys are strings; N-indexed maps use the decimal N.
inline nlohmann::json result_json(const ExperimentResult& r)
{
    nlohmann::json j;
    j["kind"] = r.kind;
    j["partial"] = r.partial;
    j["runtime_s"] = r.runtime_s;
    j["config"] = r.config_echo;
    auto per_n = nlohmann::json::object();
    for (const auto& [n, errs] : r.per_n_errors)
        per_n[std::to_string(n)] = errs;
    j["per_n_errors"] = per_n;
    auto medians = nlohmann::json::object();
    for (const auto& [n, m] : r.median_errors)
        medians[std::to_string(n)] = m;
    j["median_errors"] = medians;
    j["slope"] = r.slope ? nlohmann::json(*r.slope) : nlohmann::json();
    j["intercept"] = r.intercept ? nlohmann::json(*r.intercept) : nlohmann::json();
    j["slope_ci"] = r.slope_ci ? nlohmann::json{r.slope_ci->first, r.slope_ci->second} : nlohmann::json();
    auto verdicts = nlohmann::json::array();
    for (const auto& s : r.domination_verdicts)
        verdicts.push_back(verdict_json(s));
    j["domination_verdicts"] = verdicts;
    auto recorded = nlohmann::json::array();
    for (const auto& s : r.recorded_verdicts)
        recorded.push_back(verdict_json(s));
    j["recorded_verdicts"] = recorded;
    j["all_passed"] = r.all_passed();
    auto levy = nlohmann::json::object();
    for (const auto& [n, d] : r.levy_a)
        levy[std::to_string(n)] = {{"mu_A", d}, {"mu_B", r.levy_b.count(n) ? r.levy_b.at(n) : 0.0}};
    j["levy_distances"] = levy;
    auto dropped = nlohmann::json::object();
    for (const auto& [n, d] : r.dropped)
        dropped[std::to_string(n)] = d;
    j["dropped_replicas"] = dropped;
    j["log"] = r.log;
    return j;
}

/// Writes result.json, errors.csv and scan.csv into dir.
inline void write_results(const ExperimentResult& r, const std::filesystem::path& dir)
{
    ensure_directory(dir);
    write_atomic(dir / "errors.csv", errors_csv(r));
    write_atomic(dir / "scan.csv", scan_csv(r));
    write_atomic(dir / "result.json", result_json(r).dump(2) + "\n");
}

} // namespace fpconv

#endif
