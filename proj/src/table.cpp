#include <vizform/error.hpp>
#include <vizform/table.hpp>

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace vizform {

namespace {

auto value_to_ordered_json(const Value& value) -> nlohmann::ordered_json {
    if (value.is_null()) return nullptr;
    if (value.is_bool()) return value.as_bool();
    if (value.is_int()) return value.as_int();
    if (value.is_float()) return value.as_float();
    return value.render();
}

auto cell_matches(const Value& cell, SemanticType type) -> bool {
    return cell.is_null() || cell.type() == type;
}

struct CsvField {
    std::string text;
    bool quoted = false;
};

// RFC-4180 reader; tolerates CRLF and a trailing newline.
auto read_csv(std::string_view input) -> std::vector<std::vector<CsvField>> {
    if (input.size() >= 3 && input.substr(0, 3) == "\xEF\xBB\xBF") {
        input.remove_prefix(3);
    }
    std::vector<std::vector<CsvField>> records;
    std::vector<CsvField> record;
    CsvField field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    auto end_field = [&]() {
        record.push_back(std::move(field));
        field = CsvField{};
        field_started = false;
    };
    auto end_record = [&]() {
        end_field();
        bool blank = record.size() == 1 && !record.front().quoted && record.front().text.empty();
        if (!blank) {
            records.push_back(std::move(record));
        }
        record.clear();
    };
    while (i < input.size()) {
        char c = input[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < input.size() && input[i + 1] == '"') {
                    field.text.push_back('"');
                    i += 2;
                    continue;
                }
                in_quotes = false;
                ++i;
                if (i < input.size() && input[i] != ',' && input[i] != '\n' && input[i] != '\r') {
                    throw Error(ErrorCode::malformed_input, "unexpected character after closing quote",
                                {{"offset", i}});
                }
                continue;
            }
            field.text.push_back(c);
            ++i;
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field.quoted = true;
            field_started = true;
            ++i;
            continue;
        }
        if (c == ',') {
            end_field();
            ++i;
            continue;
        }
        if (c == '\r' || c == '\n') {
            end_record();
            if (c == '\r' && i + 1 < input.size() && input[i + 1] == '\n') {
                ++i;
            }
            ++i;
            continue;
        }
        if (c == '"') {
            throw Error(ErrorCode::malformed_input, "stray quote inside unquoted field", {{"offset", i}});
        }
        field.text.push_back(c);
        field_started = true;
        ++i;
    }
    if (in_quotes) {
        throw Error(ErrorCode::malformed_input, "unbalanced quotes");
    }
    if (field_started || !record.empty() || field.quoted) {
        end_record();
    }
    return records;
}

auto needs_quotes(std::string_view text) -> bool {
    return text.find_first_of(",\"\r\n") != std::string_view::npos || trim(text).size() != text.size() ||
           is_null_token(text);
}

auto quote(std::string_view text) -> std::string {
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void check_column_names(const std::vector<std::string>& names) {
    if (names.empty()) {
        throw Error(ErrorCode::empty_header, "table has no columns");
    }
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
        if (n.empty()) {
            throw Error(ErrorCode::empty_header, "header contains an empty column name");
        }
        if (!seen.insert(n).second) {
            throw Error(ErrorCode::duplicate_column, "duplicate column '" + n + "'", {{"column", n}});
        }
    }
}

// Raw cell: nullopt for null, otherwise the text handed to type inference.
using RawCell = std::optional<std::string>;

auto build_from_raw(std::string name, std::vector<std::string> header, std::vector<std::vector<RawCell>> raw)
    -> Table {
    check_column_names(header);
    std::vector<Column> columns;
    columns.reserve(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        std::vector<std::string> evidence;
        for (const auto& r : raw) {
            if (r[c]) {
                evidence.push_back(*r[c]);
            }
        }
        columns.push_back(Column{header[c], infer_type(evidence)});
    }
    std::vector<Row> rows;
    rows.reserve(raw.size());
    for (auto& r : raw) {
        Row row;
        row.reserve(header.size());
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (!r[c]) {
                row.emplace_back();
            } else if (columns[c].type == SemanticType::text) {
                row.emplace_back(std::move(*r[c]));
            } else {
                row.push_back(parse_as(*r[c], columns[c].type));
            }
        }
        rows.push_back(std::move(row));
    }
    return Table(std::move(name), std::move(columns), std::move(rows));
}

auto parse_csv_table(std::string_view input, std::string name) -> Table {
    auto records = read_csv(input);
    if (records.empty()) {
        throw Error(ErrorCode::empty_header, "csv input has no header row");
    }
    std::vector<std::string> header;
    for (auto& f : records.front()) {
        header.push_back(std::string(trim(f.text)));
    }
    std::vector<std::vector<RawCell>> raw;
    for (std::size_t r = 1; r < records.size(); ++r) {
        auto& rec = records[r];
        if (rec.size() > header.size()) {
            throw Error(ErrorCode::malformed_input,
                        "row " + std::to_string(r) + " has more fields than the header", {{"row", r}});
        }
        std::vector<RawCell> cells(header.size());
        for (std::size_t c = 0; c < rec.size(); ++c) {
            if (rec[c].quoted || !is_null_token(rec[c].text)) {
                cells[c] = std::move(rec[c].text);
            }
        }
        raw.push_back(std::move(cells));
    }
    return build_from_raw(std::move(name), std::move(header), std::move(raw));
}

auto parse_json_rows_table(std::string_view input, std::string name) -> Table {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(input);
    } catch (const nlohmann::ordered_json::parse_error& e) {
        throw Error(ErrorCode::malformed_input, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_array()) {
        throw Error(ErrorCode::malformed_input, "json-rows input must be an array of objects");
    }
    std::vector<std::string> header;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& obj : doc) {
        if (!obj.is_object()) {
            throw Error(ErrorCode::malformed_input, "json-rows element is not an object");
        }
        for (const auto& [key, _] : obj.items()) {
            if (index.emplace(key, header.size()).second) {
                header.push_back(key);
            }
        }
    }
    std::vector<std::vector<RawCell>> raw;
    raw.reserve(doc.size());
    for (const auto& obj : doc) {
        std::vector<RawCell> cells(header.size());
        for (const auto& [key, v] : obj.items()) {
            auto c = index.at(key);
            if (v.is_null()) {
                continue;
            }
            if (v.is_string()) {
                const auto& s = v.get_ref<const std::string&>();
                if (!is_null_token(s)) {
                    cells[c] = s;
                }
            } else if (v.is_boolean() || v.is_number()) {
                cells[c] = v.dump();
                if (v.is_number_float()) {
                    cells[c] = Value(v.get<double>()).render();
                }
            } else {
                throw Error(ErrorCode::malformed_input, "json-rows cell for '" + key + "' is not a scalar");
            }
        }
        raw.push_back(std::move(cells));
    }
    return build_from_raw(std::move(name), std::move(header), std::move(raw));
}

}  // namespace

Table::Table(std::string name, std::vector<Column> columns, std::vector<Row> rows)
    : name_(std::move(name)), columns_(std::move(columns)), rows_(std::move(rows)) {
    std::unordered_set<std::string_view> seen;
    for (const auto& c : columns_) {
        if (!seen.insert(c.name).second) {
            throw Error(ErrorCode::duplicate_column, "duplicate column '" + c.name + "'", {{"column", c.name}});
        }
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        if (rows_[r].size() != columns_.size()) {
            throw Error(ErrorCode::malformed_input, "row " + std::to_string(r) + " has wrong arity");
        }
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            if (!cell_matches(rows_[r][c], columns_[c].type)) {
                throw Error(ErrorCode::type_mismatch, "cell (" + std::to_string(r) + ", " + columns_[c].name +
                                                          ") is not a " +
                                                          std::string(to_string(columns_[c].type)));
            }
        }
    }
}

auto Table::coerced(std::string name, std::vector<Column> columns, std::vector<Row> rows) -> Table {
    for (auto& row : rows) {
        for (std::size_t c = 0; c < row.size() && c < columns.size(); ++c) {
            if (!cell_matches(row[c], columns[c].type)) {
                row[c] = coerce(row[c], columns[c].type);
            }
        }
    }
    return Table(std::move(name), std::move(columns), std::move(rows));
}

auto Table::find_column(std::string_view name) const -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

auto Table::column_index(std::string_view name) const -> std::size_t {
    if (auto i = find_column(name)) {
        return *i;
    }
    throw Error(ErrorCode::unknown_column, "unknown column '" + std::string(name) + "'",
                {{"column", std::string(name)}});
}

auto Table::column_values(std::size_t index) const -> std::vector<Value> {
    std::vector<Value> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) {
        out.push_back(r[index]);
    }
    return out;
}

auto Table::column_names() const -> std::vector<std::string> {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) {
        out.push_back(c.name);
    }
    return out;
}

auto Table::with_column(Column column, std::vector<Value> values) const -> Table {
    if (find_column(column.name)) {
        throw Error(ErrorCode::duplicate_output_column, "column '" + column.name + "' already exists",
                    {{"column", column.name}});
    }
    if (values.size() != rows_.size()) {
        throw Error(ErrorCode::malformed_input, "new column length does not match row count");
    }
    auto columns = columns_;
    columns.push_back(std::move(column));
    auto rows = rows_;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        rows[r].push_back(std::move(values[r]));
    }
    return Table::coerced(name_, std::move(columns), std::move(rows));
}

auto Table::renamed(std::string name) const -> Table {
    Table copy = *this;
    copy.name_ = std::move(name);
    return copy;
}

auto Table::with_column_renamed(std::string_view from, std::string to) const -> Table {
    auto idx = column_index(from);
    auto columns = columns_;
    columns[idx].name = std::move(to);
    return Table(name_, std::move(columns), rows_);
}

auto Table::slice_rows(std::size_t offset, std::size_t limit) const -> Table {
    std::vector<Row> rows;
    for (std::size_t r = offset; r < rows_.size() && r - offset < limit; ++r) {
        rows.push_back(rows_[r]);
    }
    return Table(name_, columns_, std::move(rows));
}

auto table_format_from_string(std::string_view name) -> std::optional<TableFormat> {
    if (name == "csv") {
        return TableFormat::csv;
    }
    if (name == "json-rows" || name == "json") {
        return TableFormat::json_rows;
    }
    return std::nullopt;
}

auto infer_type(std::span<const std::string> values) -> SemanticType {
    bool any = false;
    bool is_bool = true;
    bool is_int = true;
    bool is_float = true;
    bool is_date = true;
    bool is_datetime = true;
    for (const auto& raw : values) {
        if (is_null_token(raw)) {
            continue;
        }
        any = true;
        is_bool = is_bool && parse_bool(raw).has_value();
        is_int = is_int && parse_int(raw).has_value();
        is_float = is_float && parse_float(raw).has_value();
        is_date = is_date && parse_date(raw).has_value();
        is_datetime = is_datetime && parse_datetime(raw).has_value();
    }
    if (!any) {
        return SemanticType::text;
    }
    if (is_bool) return SemanticType::boolean;
    if (is_int) return SemanticType::integer;
    if (is_float) return SemanticType::floating;
    if (is_date) return SemanticType::date;
    if (is_datetime) return SemanticType::datetime;
    return SemanticType::text;
}

auto parse_table(std::string_view input, TableFormat format, std::string name) -> Table {
    if (format == TableFormat::csv) {
        return parse_csv_table(input, std::move(name));
    }
    return parse_json_rows_table(input, std::move(name));
}

auto serialize_table(const Table& table, TableFormat format) -> std::string {
    if (format == TableFormat::json_rows) {
        nlohmann::ordered_json out = nlohmann::ordered_json::array();
        for (const auto& r : table.rows()) {
            nlohmann::ordered_json obj = nlohmann::ordered_json::object();
            for (std::size_t c = 0; c < table.column_count(); ++c) {
                obj[table.columns()[c].name] = value_to_ordered_json(r[c]);
            }
            out.push_back(std::move(obj));
        }
        return out.dump();
    }
    std::string out;
    for (std::size_t c = 0; c < table.column_count(); ++c) {
        if (c > 0) {
            out.push_back(',');
        }
        const auto& n = table.columns()[c].name;
        out += needs_quotes(n) ? quote(n) : n;
    }
    out.push_back('\n');
    for (const auto& r : table.rows()) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c > 0) {
                out.push_back(',');
            }
            if (r[c].is_null()) {
                // A lone empty field would read back as a skipped blank line.
                if (r.size() == 1) {
                    out += "NA";
                }
                continue;
            }
            auto text = r[c].render();
            out += needs_quotes(text) ? quote(text) : text;
        }
        out.push_back('\n');
    }
    return out;
}

auto canonically_equal(const Table& a, const Table& b) -> bool {
    if (a.column_names() != b.column_names() || a.row_count() != b.row_count()) {
        return false;
    }
    for (std::size_t r = 0; r < a.row_count(); ++r) {
        for (std::size_t c = 0; c < a.column_count(); ++c) {
            if (!canonically_equal(a.rows()[r][c], b.rows()[r][c])) {
                return false;
            }
        }
    }
    return true;
}

auto value_to_json(const Value& value) -> nlohmann::json {
    if (value.is_null()) return nullptr;
    if (value.is_bool()) return value.as_bool();
    if (value.is_int()) return value.as_int();
    if (value.is_float()) return value.as_float();
    if (value.is_text()) return value.as_text();
    return value.render();
}

auto value_from_json(const nlohmann::json& json, SemanticType type) -> Value {
    if (json.is_null()) {
        return Value::null();
    }
    if (json.is_string()) {
        const auto& s = json.get_ref<const std::string&>();
        if (type == SemanticType::text) {
            return Value(s);
        }
        return parse_as(s, type);
    }
    if (json.is_boolean()) {
        return coerce(Value(json.get<bool>()), type);
    }
    if (json.is_number_integer()) {
        return coerce(Value(json.get<std::int64_t>()), type);
    }
    if (json.is_number()) {
        return coerce(Value(json.get<double>()), type);
    }
    throw Error(ErrorCode::malformed_input, "expected a JSON scalar, got " + json.dump());
}

auto value_from_json(const nlohmann::json& json) -> Value {
    if (json.is_null()) return Value::null();
    if (json.is_boolean()) return Value(json.get<bool>());
    if (json.is_number_integer()) return Value(json.get<std::int64_t>());
    if (json.is_number()) return Value(json.get<double>());
    if (json.is_string()) return parse_scalar(json.get_ref<const std::string&>());
    throw Error(ErrorCode::malformed_input, "expected a JSON scalar, got " + json.dump());
}

auto table_to_json(const Table& table) -> nlohmann::json {
    auto columns = nlohmann::json::array();
    for (const auto& c : table.columns()) {
        columns.push_back({{"name", c.name}, {"type", to_string(c.type)}});
    }
    auto rows = nlohmann::json::array();
    for (const auto& r : table.rows()) {
        auto row = nlohmann::json::array();
        for (const auto& v : r) {
            row.push_back(value_to_json(v));
        }
        rows.push_back(std::move(row));
    }
    return {{"name", table.name()}, {"columns", std::move(columns)}, {"rows", std::move(rows)}};
}

auto table_from_json(const nlohmann::json& json) -> Table {
    try {
        std::vector<Column> columns;
        for (const auto& c : json.at("columns")) {
            auto type = semantic_type_from_string(c.at("type").get<std::string>());
            if (!type) {
                throw Error(ErrorCode::malformed_input, "unknown column type " + c.at("type").dump());
            }
            columns.push_back(Column{c.at("name").get<std::string>(), *type});
        }
        std::vector<Row> rows;
        for (const auto& r : json.at("rows")) {
            if (!r.is_array() || r.size() != columns.size()) {
                throw Error(ErrorCode::malformed_input, "table row has wrong arity");
            }
            Row row;
            for (std::size_t c = 0; c < columns.size(); ++c) {
                row.push_back(value_from_json(r[c], columns[c].type));
            }
            rows.push_back(std::move(row));
        }
        return Table(json.value("name", std::string("table")), std::move(columns), std::move(rows));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_input, std::string("invalid table document: ") + e.what());
    }
}

}  // namespace vizform
