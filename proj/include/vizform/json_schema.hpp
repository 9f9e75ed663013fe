#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vizform {

struct SchemaViolation {
    std::string instance_path;  // JSON pointer into the instance
    std::string schema_path;    // JSON pointer into the schema
    std::string message;
};

/// Validator for the draft-07 keywords used by the Vega-Lite and API schemas:
/// $ref (local pointers), type, enum, const, anyOf, oneOf, allOf, not,
/// properties, patternProperties, additionalProperties, required,
/// min/maxProperties, items, additionalItems, min/maxItems, uniqueItems,
/// minimum, maximum, exclusiveMinimum, exclusiveMaximum, multipleOf,
/// min/maxLength and pattern. Annotation keywords such as format are ignored.
class JsonSchema {
public:
    explicit JsonSchema(nlohmann::json document);
    static auto load(const std::filesystem::path& path) -> JsonSchema;

    /// Validates against the root schema, or against the subschema at `ref`
    /// (e.g. "#/definitions/Session") when given.
    [[nodiscard]] auto validate(const nlohmann::json& instance, std::string_view ref = "") const
        -> std::vector<SchemaViolation>;
    [[nodiscard]] auto is_valid(const nlohmann::json& instance, std::string_view ref = "") const -> bool;

    [[nodiscard]] auto document() const -> const nlohmann::json& { return doc_; }

private:
    nlohmann::json doc_;
};

auto describe(const std::vector<SchemaViolation>& violations, std::size_t limit = 5) -> std::string;

}  // namespace vizform
