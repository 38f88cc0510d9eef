#ifndef FPCONV_MEASURE_IO_HPP
#define FPCONV_MEASURE_IO_HPP

// Measure interchange format: {"atoms": [...], "weights": [...]}, weights
// optional (uniform 1/n when absent).

#include "fpconv/errors.hpp"
#include "fpconv/measures.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fpconv {

inline DiscreteMeasure measure_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ValidationError("measure must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (key != "atoms" && key != "weights")
            throw ValidationError("unknown measure key \"" + key + "\"");
    if (!j.contains("atoms") || !j["atoms"].is_array())
        throw ValidationError("measure needs an \"atoms\" array");
    std::vector<double> atoms;
    for (const auto& a : j["atoms"]) {
        if (!a.is_number())
            throw ValidationError("measure atoms must be numbers");
        atoms.push_back(a.get<double>());
    }
    if (!j.contains("weights"))
        return make_uniform_measure(atoms);
    if (!j["weights"].is_array())
        throw ValidationError("measure \"weights\" must be an array");
    std::vector<double> weights;
    for (const auto& w : j["weights"]) {
        if (!w.is_number())
            throw ValidationError("measure weights must be numbers");
        weights.push_back(w.get<double>());
    }
    return make_measure(atoms, weights);
}

inline nlohmann::json measure_to_json(const DiscreteMeasure& mu)
{
    return nlohmann::json{{"atoms", mu.atoms()}, {"weights", mu.weights()}};
}

inline DiscreteMeasure read_measure_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open measure file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("measure file " + path.string() + " is not valid JSON: " + e.what());
    }
    return measure_from_json(j);
}

} // namespace fpconv

#endif
