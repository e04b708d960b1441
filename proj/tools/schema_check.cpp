#include "schema_check.hpp"

namespace xray {

namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "number") return v.is_number();
    if (t == "integer") {
        if (v.is_number_integer()) return true;
        if (v.is_number_float()) {
            double d = v.get<double>();
            return d == static_cast<double>(static_cast<long long>(d));
        }
        return false;
    }
    return false;
}

void check(const json& s, const json& v, const std::string& path, std::vector<std::string>& err) {
    auto fail = [&](const std::string& m) { err.push_back((path.empty() ? "/" : path) + ": " + m); };
    if (s.is_boolean()) {
        if (!s.get<bool>()) fail("not allowed");
        return;
    }
    if (!s.is_object()) return;

    if (s.contains("type")) {
        const json& t = s["type"];
        bool ok = false;
        if (t.is_string())
            ok = has_type(v, t.get<std::string>());
        else
            for (const auto& x : t) ok = ok || has_type(v, x.get<std::string>());
        if (!ok) {
            fail("expected type " + t.dump());
            return;
        }
    }
    if (s.contains("enum")) {
        bool ok = false;
        for (const auto& e : s["enum"]) ok = ok || e == v;
        if (!ok) fail("value " + v.dump() + " not in " + s["enum"].dump());
    }
    if (v.is_number()) {
        double d = v.get<double>();
        if (s.contains("minimum") && d < s["minimum"].get<double>()) fail("below minimum " + s["minimum"].dump());
        if (s.contains("maximum") && d > s["maximum"].get<double>()) fail("above maximum " + s["maximum"].dump());
        if (s.contains("exclusiveMinimum") && d <= s["exclusiveMinimum"].get<double>())
            fail("must exceed " + s["exclusiveMinimum"].dump());
        if (s.contains("exclusiveMaximum") && d >= s["exclusiveMaximum"].get<double>())
            fail("must be below " + s["exclusiveMaximum"].dump());
    }
    if (v.is_string() && s.contains("minLength") &&
        v.get<std::string>().size() < s["minLength"].get<std::size_t>())
        fail("string shorter than " + s["minLength"].dump());
    if (v.is_array()) {
        if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) fail("too few items");
        if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) fail("too many items");
        if (s.contains("items"))
            for (std::size_t i = 0; i < v.size(); ++i) check(s["items"], v[i], path + "/" + std::to_string(i), err);
    }
    if (v.is_object()) {
        if (s.contains("required"))
            for (const auto& r : s["required"])
                if (!v.contains(r.get<std::string>())) fail("missing required property " + r.dump());
        const json props = s.value("properties", json::object());
        for (auto it = v.begin(); it != v.end(); ++it) {
            std::string p = path + "/" + it.key();
            if (props.contains(it.key()))
                check(props[it.key()], it.value(), p, err);
            else if (s.contains("additionalProperties"))
                check(s["additionalProperties"], it.value(), p, err);
        }
    }
}

}  // namespace

std::vector<std::string> schema_errors(const nlohmann::json& schema, const nlohmann::json& value) {
    std::vector<std::string> err;
    check(schema, value, "", err);
    return err;
}

}  // namespace xray
