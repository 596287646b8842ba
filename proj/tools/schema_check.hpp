#pragma once

#include "json.hpp"

#include <string>
#include <vector>

namespace bsl::cli {

/// Checks `doc` against the JSON Schema keywords used by the run config: type, enum, properties,
/// required, additionalProperties, anyOf, items, minItems, maxItems, minimum, maximum,
/// exclusiveMinimum, exclusiveMaximum. Returns one message per violation, each naming the
/// offending field by its JSON pointer.
std::vector<std::string> schema_errors(const nlohmann::json& schema, const nlohmann::json& doc);

}  // namespace bsl::cli
