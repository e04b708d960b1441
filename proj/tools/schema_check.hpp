#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace xray {

// Validator for the JSON Schema subset used by config.schema.json: type,
// enum, properties, required, additionalProperties (bool or schema), items,
// minItems, maxItems, minimum, maximum, exclusiveMinimum, exclusiveMaximum,
// minLength. Returns one message per violation, each prefixed by its path.
std::vector<std::string> schema_errors(const nlohmann::json& schema, const nlohmann::json& value);

}  // namespace xray
