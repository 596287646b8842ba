#include "schema_check.hpp"

#include <sstream>

namespace bsl::cli {

namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "number") return v.is_number();
    if (type == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())));
    if (type == "null") return v.is_null();
    return false;
}

std::string where(const std::string& path) { return path.empty() ? "/" : path; }

void check(const json& schema, const json& v, const std::string& path, std::vector<std::string>& errors) {
    if (schema.contains("type")) {
        const std::string type = schema["type"];
        if (!has_type(v, type)) {
            errors.push_back(where(path) + ": expected " + type);
            return;
        }
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& e : schema["enum"]) found = found || e == v;
        if (!found) errors.push_back(where(path) + ": " + v.dump() + " is not one of " + schema["enum"].dump());
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        auto bound = [&](const char* key, bool ok, const char* op) {
            if (schema.contains(key) && !ok) {
                std::ostringstream msg;
                msg << where(path) << ": must be " << op << " " << schema[key].get<double>();
                errors.push_back(msg.str());
            }
        };
        bound("minimum", !schema.contains("minimum") || x >= schema["minimum"].get<double>(), ">=");
        bound("maximum", !schema.contains("maximum") || x <= schema["maximum"].get<double>(), "<=");
        bound("exclusiveMinimum", !schema.contains("exclusiveMinimum") || x > schema["exclusiveMinimum"].get<double>(), ">");
        bound("exclusiveMaximum", !schema.contains("exclusiveMaximum") || x < schema["exclusiveMaximum"].get<double>(), "<");
    }
    if (v.is_array()) {
        const auto n = v.size();
        if (schema.contains("minItems") && n < schema["minItems"].get<std::size_t>())
            errors.push_back(where(path) + ": needs at least " + schema["minItems"].dump() + " items");
        if (schema.contains("maxItems") && n > schema["maxItems"].get<std::size_t>())
            errors.push_back(where(path) + ": allows at most " + schema["maxItems"].dump() + " items");
        if (schema.contains("items"))
            for (std::size_t i = 0; i < n; ++i) check(schema["items"], v[i], path + "/" + std::to_string(i), errors);
    }
    if (v.is_object()) {
        if (schema.contains("required"))
            for (const auto& key : schema["required"])
                if (!v.contains(key.get<std::string>()))
                    errors.push_back(where(path) + ": missing required field '" + key.get<std::string>() + "'");
        const json props = schema.value("properties", json::object());
        for (const auto& [key, val] : v.items()) {
            if (props.contains(key)) {
                check(props[key], val, path + "/" + key, errors);
            } else if (schema.contains("additionalProperties")) {
                const auto& extra = schema["additionalProperties"];
                if (extra.is_boolean() && !extra.get<bool>())
                    errors.push_back(where(path + "/" + key) + ": unknown field '" + key + "'");
                else if (extra.is_object())
                    check(extra, val, path + "/" + key, errors);
            }
        }
    }
    if (schema.contains("anyOf")) {
        bool any = false;
        std::vector<std::string> reasons;
        for (const auto& alt : schema["anyOf"]) {
            std::vector<std::string> sub;
            check(alt, v, path, sub);
            if (sub.empty()) {
                any = true;
                break;
            }
            reasons.insert(reasons.end(), sub.begin(), sub.end());
        }
        if (!any) {
            std::string msg = where(path) + ": none of the alternatives hold (";
            for (std::size_t i = 0; i < reasons.size(); ++i) msg += (i ? "; " : "") + reasons[i];
            errors.push_back(msg + ")");
        }
    }
}

}  // namespace

std::vector<std::string> schema_errors(const json& schema, const json& doc) {
    std::vector<std::string> errors;
    check(schema, doc, "", errors);
    return errors;
}

}  // namespace bsl::cli
