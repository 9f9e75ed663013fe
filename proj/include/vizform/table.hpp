#pragma once

#include <vizform/value.hpp>

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vizform {

struct Column {
    std::string name;
    SemanticType type = SemanticType::text;

    friend auto operator==(const Column&, const Column&) -> bool = default;
};

using Row = std::vector<Value>;

/// Immutable typed table.
///
/// Construction validates the invariants: unique column names, rectangular
/// rows, and every non-null cell stored in the exact representation of its
/// column type. Use `Table::coerced` to build from loosely typed cells.
class Table {
public:
    Table() = default;
    Table(std::string name, std::vector<Column> columns, std::vector<Row> rows);

    /// Builds a table converting each cell to its column type first.
    static auto coerced(std::string name, std::vector<Column> columns, std::vector<Row> rows) -> Table;

    [[nodiscard]] auto name() const -> const std::string& { return name_; }
    [[nodiscard]] auto columns() const -> const std::vector<Column>& { return columns_; }
    [[nodiscard]] auto rows() const -> const std::vector<Row>& { return rows_; }
    [[nodiscard]] auto column_count() const -> std::size_t { return columns_.size(); }
    [[nodiscard]] auto row_count() const -> std::size_t { return rows_.size(); }

    [[nodiscard]] auto find_column(std::string_view name) const -> std::optional<std::size_t>;
    /// Index of `name`; throws Error(unknown_column).
    [[nodiscard]] auto column_index(std::string_view name) const -> std::size_t;
    [[nodiscard]] auto column_values(std::size_t index) const -> std::vector<Value>;
    [[nodiscard]] auto column_names() const -> std::vector<std::string>;

    /// Copy of this table with one more column appended.
    [[nodiscard]] auto with_column(Column column, std::vector<Value> values) const -> Table;
    [[nodiscard]] auto renamed(std::string name) const -> Table;
    /// Copy with column `from` renamed to `to`.
    [[nodiscard]] auto with_column_renamed(std::string_view from, std::string to) const -> Table;
    [[nodiscard]] auto slice_rows(std::size_t offset, std::size_t limit) const -> Table;

    friend auto operator==(const Table&, const Table&) -> bool = default;

private:
    std::string name_;
    std::vector<Column> columns_;
    std::vector<Row> rows_;
};

enum class TableFormat { csv, json_rows };

auto table_format_from_string(std::string_view name) -> std::optional<TableFormat>;

/// Most specific type on the ladder boolean, integer, float, date, datetime,
/// text under which every non-null raw value parses. Empty evidence yields text.
auto infer_type(std::span<const std::string> values) -> SemanticType;

/// Parses CSV (RFC-4180, mandatory header) or an array of flat JSON objects.
auto parse_table(std::string_view input, TableFormat format, std::string name) -> Table;
auto serialize_table(const Table& table, TableFormat format) -> std::string;

/// Cell-level canonical comparison (same column names and order, same row
/// count, canonically equal cells). Ignores table names and column types.
auto canonically_equal(const Table& a, const Table& b) -> bool;

// JSON forms shared by the session file, the service and the CLI.
auto value_to_json(const Value& value) -> nlohmann::json;
/// Reads a JSON scalar as a value of `type`.
auto value_from_json(const nlohmann::json& json, SemanticType type) -> Value;
/// Reads a JSON scalar with its own most specific type (strings go through parse_scalar).
auto value_from_json(const nlohmann::json& json) -> Value;
auto table_to_json(const Table& table) -> nlohmann::json;
auto table_from_json(const nlohmann::json& json) -> Table;

}  // namespace vizform
