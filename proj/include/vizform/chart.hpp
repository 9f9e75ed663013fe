#pragma once

#include <vizform/json_schema.hpp>
#include <vizform/table.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vizform {

enum class Channel { x, y, x2, y2, color, size, column, row };
enum class Aggregate { count, sum, avg, median, min, max };
enum class ChannelType { quantitative, temporal, nominal, ordinal };

auto to_string(Channel c) -> std::string_view;
auto to_string(Aggregate a) -> std::string_view;
auto to_string(ChannelType t) -> std::string_view;
auto channel_from_string(std::string_view s) -> std::optional<Channel>;
auto aggregate_from_string(std::string_view s) -> std::optional<Aggregate>;
auto channel_type_from_string(std::string_view s) -> std::optional<ChannelType>;

/// Vega-Lite measurement type implied by a column type.
auto infer_channel_type(SemanticType t) -> ChannelType;

struct ChannelSlot {
    Channel channel = Channel::x;
    bool required = false;
    std::vector<Aggregate> allowed_aggregates;
};

/// A Vega-Lite skeleton whose string leaves "{{channel:<name>}}" are filled
/// with encoding definitions. Leaves for unfilled optional channels are removed.
struct ChartTemplate {
    std::string id;
    nlohmann::json skeleton;
    std::vector<ChannelSlot> channels;
    bool custom = false;

    [[nodiscard]] auto slot(Channel c) const -> const ChannelSlot*;
    auto slot_mut(Channel c) -> ChannelSlot&;
};

/// Channel assignment. `field` names a column of the table the spec is
/// assembled over; it is empty only for a count aggregate.
struct Encoding {
    Channel channel = Channel::x;
    std::string field;
    std::optional<Aggregate> aggregate;
    std::optional<ChannelType> type_override;

    friend auto operator==(const Encoding&, const Encoding&) -> bool = default;
};

auto encoding_to_json(const Encoding& e) -> nlohmann::json;
/// Reads {"channel", "field" | "concept", "aggregate"?, "type"?}.
auto encoding_from_json(const nlohmann::json& j) -> Encoding;

/// The built-in templates, in catalog order.
auto list_templates() -> const std::vector<ChartTemplate>&;
auto find_builtin_template(std::string_view id) -> const ChartTemplate*;

/// Builds a template from Vega-Lite text with {{channel:<name>}} placeholders.
/// Placeholder channels are required. Throws Error(invalid_template).
auto register_custom_template(std::string id, std::string_view doc) -> ChartTemplate;

/// Checks required channels, duplicate or foreign channels and aggregate
/// rules without a table. Throws Error(missing_required_channel | invalid_encoding).
void check_encodings(const ChartTemplate& tmpl, const std::vector<Encoding>& encodings);

inline constexpr std::string_view kVegaLiteSchemaUrl = "https://vega.github.io/schema/vega-lite/v5.20.1.json";

/// Assembles a Vega-Lite document with `t` inlined as data values and
/// validates it against the pinned schema.
/// Throws Error(missing_required_channel | unknown_concept_in_encoding |
/// aggregate_on_non_quantitative | invalid_encoding | invalid_spec).
auto assemble_spec(const ChartTemplate& tmpl, const std::vector<Encoding>& encodings, const Table& t)
    -> nlohmann::json;

/// The pinned Vega-Lite schema, loaded once from VIZFORM_SCHEMA_DIR or the
/// build-time schema directory.
auto vega_lite_schema() -> const JsonSchema&;
auto schema_dir() -> std::string;

/// Number of documents assemble_spec has emitted (each one validated) in this process.
auto emitted_spec_count() -> std::size_t;

}  // namespace vizform
