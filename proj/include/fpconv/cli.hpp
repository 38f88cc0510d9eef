#ifndef FPCONV_CLI_HPP
#define FPCONV_CLI_HPP

// Helpers behind the command-line front end: flag syntax, thread selection,
// exit codes and the one-line error report.

#include "fpconv/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace fpconv::cli {

enum ExitCode : int { ok = 0, validation = 1, numerical = 2, io = 3 };

inline double parse_real(std::string_view s, const std::string& what)
{
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end || s.empty())
        throw ValidationError(what + ": \"" + std::string(s) + "\" is not a number");
    return v;
}

/// "lo:hi:count" -> count equispaced points from lo to hi inclusive.
inline std::vector<double> parse_grid(std::string_view spec, const std::string& what = "grid")
{
    const auto c1 = spec.find(':');
    const auto c2 = c1 == std::string_view::npos ? c1 : spec.find(':', c1 + 1);
    if (c2 == std::string_view::npos || spec.find(':', c2 + 1) != std::string_view::npos)
        throw ValidationError(what + ": expected lo:hi:count, got \"" + std::string(spec) + "\"");
    const double lo = parse_real(spec.substr(0, c1), what);
    const double hi = parse_real(spec.substr(c1 + 1, c2 - c1 - 1), what);
    const auto cs = spec.substr(c2 + 1);
    std::size_t count = 0;
    const auto [p, ec] = std::from_chars(cs.data(), cs.data() + cs.size(), count);
    if (ec != std::errc() || p != cs.data() + cs.size() || cs.empty())
        throw ValidationError(what + ": count \"" + std::string(cs) + "\" is not a positive integer");
    if (count == 0)
        throw ValidationError(what + ": count must be positive");
    if (count > 1 && !(hi > lo))
        throw ValidationError(what + ": needs lo < hi");
    if (count == 1 && lo != hi)
        throw ValidationError(what + ": a single point needs lo == hi");
    std::vector<double> g(count);
    for (std::size_t k = 0; k < count; ++k)
        g[k] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
    if (count > 1)
        g.back() = hi;
    return g;
}

/// "a,b,c" -> {a, b, c}.
inline std::vector<double> parse_list(std::string_view spec, const std::string& what = "list")
{
    std::vector<double> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = spec.find(',', start);
        out.push_back(parse_real(spec.substr(start, comma == std::string_view::npos ? spec.npos : comma - start), what));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return out;
}

/// Flag, then FPCONV_THREADS, then hardware parallelism.
inline std::size_t resolve_threads(std::size_t flag, const char* env = std::getenv("FPCONV_THREADS"))
{
    if (flag > 0)
        return flag;
    if (env && *env) {
        std::size_t v = 0;
        const std::string_view s(env);
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || v == 0)
            throw ValidationError("FPCONV_THREADS: \"" + std::string(s) + "\" is not a positive integer");
        return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline const char* exit_kind(int code)
{
    switch (code) {
    case validation: return "validation";
    case numerical: return "numerical";
    case io: return "io";
    default: return "ok";
    }
}

/// One line, machine-parseable: `fpconv: error=<kind> code=<n> message=<json string>`.
inline std::string error_line(int code, const std::string& message)
{
    return std::string("fpconv: error=") + exit_kind(code) + " code=" + std::to_string(code) +
           " message=" + nlohmann::json(message).dump();
}

} // namespace fpconv::cli

#endif
