#pragma once

#include <vizform/formula.hpp>
#include <vizform/table.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vizform {

enum class ConceptKind { original, derived, custom };

auto to_string(ConceptKind kind) -> std::string_view;
auto concept_kind_from_string(std::string_view s) -> std::optional<ConceptKind>;

/// Where a known concept lives. A derived concept whose sources are known but
/// not materialized together in any table has an empty table_id.
struct Resolution {
    std::string table_id;
    std::string column;

    friend auto operator==(const Resolution&, const Resolution&) -> bool = default;
};

inline constexpr std::size_t kMaxExampleValues = 5;

struct DataConcept {
    std::string id;
    std::string name;
    ConceptKind kind = ConceptKind::original;
    SemanticType semantic_type = SemanticType::text;
    std::vector<Value> example_values;
    std::optional<Resolution> resolution;
    // derived only
    std::vector<std::string> sources;
    std::string description;
    std::optional<Formula> formula;

    [[nodiscard]] auto known() const -> bool { return resolution.has_value(); }
};

/// First `limit` distinct non-null values in order.
auto sample_examples(std::span<const Value> values, std::size_t limit = kMaxExampleValues) -> std::vector<Value>;

/// Infers a common type for loose example values and coerces them to it.
auto infer_example_type(std::span<const Value> values) -> std::pair<SemanticType, std::vector<Value>>;

/// The session's concept shelf. Concept ids are "c1", "c2", ... in creation order.
class ConceptShelf {
public:
    [[nodiscard]] auto concepts() const -> const std::vector<DataConcept>& { return concepts_; }
    /// Looks a concept up by id, then by name.
    [[nodiscard]] auto find(std::string_view ref) const -> const DataConcept*;
    /// Throws Error(unknown_concept).
    [[nodiscard]] auto get(std::string_view ref) const -> const DataConcept&;
    /// Concepts whose sources include `id`.
    [[nodiscard]] auto dependents(std::string_view id) const -> std::vector<std::string>;

    auto load_original_concepts(const Table& t, const std::string& table_id) -> std::vector<DataConcept>;
    /// Throws Error(duplicate_name | empty_examples).
    auto create_custom_concept(std::string name, std::span<const Value> examples) -> const DataConcept&;
    /// Parses `formula_text` against the source types. The concept is known iff
    /// every source is known; `placement` supplies its resolution in that case.
    /// Throws Error(duplicate_name | unknown_concept | type_mismatch | parse_error | ...).
    auto create_derived_concept(std::string name, std::span<const std::string> source_refs,
                                std::string description, std::string_view formula_text,
                                std::vector<Value> examples = {}) -> const DataConcept&;
    /// Marks each listed unknown concept known at (table_id, binding[name]),
    /// re-infers custom types from `t`, then resolves derived dependents whose
    /// sources all became known. Returns the ids that changed state.
    /// Throws Error(binding_incomplete).
    auto resolve_concepts(std::span<const std::string> refs, const std::string& table_id, const Table& t,
                          const std::map<std::string, std::string>& binding) -> std::vector<std::string>;
    /// Records where a known derived concept is materialized.
    void place(std::string_view id, Resolution where, SemanticType type, std::vector<Value> examples);
    /// Throws Error(concept_in_use) if a derived concept depends on it.
    void remove(std::string_view ref);

    [[nodiscard]] auto to_json() const -> nlohmann::json;
    static auto from_json(const nlohmann::json& j) -> ConceptShelf;

private:
    auto mutable_get(std::string_view id) -> DataConcept&;
    void check_name(const std::string& name) const;
    auto next_id() -> std::string;

    std::vector<DataConcept> concepts_;
    std::size_t counter_ = 0;
};

auto concept_to_json(const DataConcept& c) -> nlohmann::json;

}  // namespace vizform
