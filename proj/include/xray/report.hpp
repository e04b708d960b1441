#pragma once

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace xray {

// Two-sided summary of an identity or inequality check.
struct IdentityReport {
    std::string name;
    double lhs = 0, rhs = 0;
    double residual = 0, relative_residual = 0;
    double ratio = 0;  // lhs / rhs for inequalities
    bool pass = true;
    std::vector<std::pair<std::string, double>> terms;
    std::vector<std::pair<std::string, std::string>> notes;

    void add(const std::string& k, double v) { terms.emplace_back(k, v); }
    void note(const std::string& k, const std::string& v) { notes.emplace_back(k, v); }
    double term(const std::string& k) const;
    // residual = |lhs - rhs|, relative to max(lhs, rhs, floor)
    void close_identity(double tol, double floor = 1e-300);
    // ratio = lhs / rhs; pass iff lhs <= bound * rhs (0 <= 0 passes)
    void close_inequality(double bound = 1.0);
};

nlohmann::json to_json(const IdentityReport& r);

// FNV-1a of the compact dump of a JSON value (object keys are sorted by
// nlohmann::json), printed as 16 hex digits.
std::string config_hash(const nlohmann::json& cfg);
std::string hex64(std::uint64_t h);

}  // namespace xray
