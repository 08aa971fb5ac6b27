#pragma once

#include "l0control/problem.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace l0control {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "l0control 0.1.0";

inline json problem_echo(const ProblemSpec& spec) {
    const Grid& g = spec.grid();
    json j;
    j["dim"] = g.dim();
    j["nx"] = g.nodes(0);
    if (g.dim() == 2) j["ny"] = g.nodes(1);
    j["lx"] = g.extent(0);
    if (g.dim() == 2) j["ly"] = g.extent(1);
    j["nonlinearity"] = to_string(spec.nonlinearity().family());
    j["alpha"] = spec.alpha();
    j["beta"] = spec.beta();
    j["gamma"] = std::isfinite(spec.gamma()) ? json(spec.gamma()) : json("inf");
    j["ellipticity"] = spec.ellipticity();
    const CostParams p = spec.cost_params();
    j["regime"] = p.interior_kink() ? "interior-kink" : "l1";
    if (std::isfinite(p.kink)) j["kink"] = p.kink;
    j["adjoint_threshold"] = p.adjoint_threshold;
    return j;
}

inline void write_report(const std::string& path, const json& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open report file '" + path + "'");
    out << report.dump(2) << '\n';
}

}  // namespace l0control
