#include "xray/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "xray/common.hpp"

namespace xray {

double IdentityReport::term(const std::string& k) const {
    for (const auto& [n, v] : terms)
        if (n == k) return v;
    throw std::out_of_range("report has no term " + k);
}

void IdentityReport::close_identity(double tol, double floor) {
    residual = std::abs(lhs - rhs);
    relative_residual = residual / std::max({std::abs(lhs), std::abs(rhs), floor, 1e-300});
    pass = relative_residual <= tol;
}

void IdentityReport::close_inequality(double bound) {
    residual = rhs - lhs;
    if (rhs > 0)
        ratio = lhs / rhs;
    else
        ratio = lhs > 0 ? INFINITY : 0.0;
    pass = lhs <= bound * rhs || (lhs == 0 && rhs == 0);
}

nlohmann::json to_json(const IdentityReport& r) {
    nlohmann::json j;
    j["name"] = r.name;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["residual"] = r.residual;
    j["relative_residual"] = r.relative_residual;
    j["ratio"] = std::isfinite(r.ratio) ? nlohmann::json(r.ratio) : nlohmann::json("inf");
    j["pass"] = r.pass;
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : r.terms) t[k] = v;
    j["terms"] = t;
    if (!r.notes.empty()) {
        nlohmann::json n = nlohmann::json::object();
        for (const auto& [k, v] : r.notes) n[k] = v;
        j["notes"] = n;
    }
    return j;
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const nlohmann::json& cfg) { return hex64(fnv1a(cfg.dump())); }

}  // namespace xray
