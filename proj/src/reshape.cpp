#include <vizform/error.hpp>
#include <vizform/reshape.hpp>

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

namespace vizform {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

auto make(auto node) -> ProgramPtr {
    return std::make_shared<const Program>(Program{std::move(node)});
}

[[noreturn]] void duplicate_output(const std::string& name) {
    throw Error(ErrorCode::duplicate_output_column, "output column '" + name + "' already exists",
                {{"column", name}});
}

void require_unique(const std::vector<Column>& columns) {
    std::unordered_set<std::string_view> seen;
    for (const auto& c : columns) {
        if (!seen.insert(c.name).second) {
            duplicate_output(c.name);
        }
    }
}

auto find_in(const std::vector<Column>& columns, std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) {
            return i;
        }
    }
    throw Error(ErrorCode::unknown_column, "unknown column '" + std::string(name) + "'",
                {{"column", std::string(name)}});
}

void check_longer_columns(const std::vector<Column>& schema, const PivotLonger& op) {
    if (op.columns.empty() || op.columns.size() >= schema.size()) {
        throw Error(ErrorCode::invalid_program, "pivot_longer needs a non-empty strict subset of the columns");
    }
    std::unordered_set<std::string_view> seen;
    for (const auto& c : op.columns) {
        find_in(schema, c);
        if (!seen.insert(c).second) {
            throw Error(ErrorCode::invalid_program, "pivot_longer lists '" + c + "' twice");
        }
    }
}

auto split_first(const std::string& text, std::string_view delim) -> std::pair<Value, Value> {
    auto pos = text.find(delim);
    if (pos == std::string::npos) {
        return {Value(text), Value::null()};
    }
    return {Value(text.substr(0, pos)), Value(text.substr(pos + delim.size()))};
}

auto split_all(const std::string& text, std::string_view delim) -> std::vector<std::string> {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = text.find(delim, start);
        if (pos == std::string::npos) {
            out.emplace_back(trim(std::string_view(text).substr(start)));
            return out;
        }
        out.emplace_back(trim(std::string_view(text).substr(start, pos - start)));
        start = pos + delim.size();
    }
}

auto row_group_key(const Row& row, const std::vector<std::size_t>& cols) -> std::string {
    std::string key;
    for (auto c : cols) {
        key += row[c].canonical_key();
        key.push_back('\x1f');
    }
    return key;
}

auto eval_longer(const PivotLonger& op, const Table& in) -> Table {
    check_longer_columns(in.columns(), op);
    std::vector<std::size_t> listed;
    std::vector<bool> is_listed(in.column_count(), false);
    SemanticType value_type = SemanticType::text;
    for (std::size_t i = 0; i < op.columns.size(); ++i) {
        auto idx = in.column_index(op.columns[i]);
        listed.push_back(idx);
        is_listed[idx] = true;
        value_type = i == 0 ? in.columns()[idx].type : join(value_type, in.columns()[idx].type);
    }
    std::vector<Column> columns;
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < in.column_count(); ++c) {
        if (!is_listed[c]) {
            kept.push_back(c);
            columns.push_back(in.columns()[c]);
        }
    }
    columns.push_back(Column{op.key_name, SemanticType::text});
    columns.push_back(Column{op.value_name, value_type});
    require_unique(columns);
    std::vector<Row> rows;
    rows.reserve(in.row_count() * listed.size());
    for (const auto& r : in.rows()) {
        for (auto idx : listed) {
            Row out;
            out.reserve(columns.size());
            for (auto k : kept) {
                out.push_back(r[k]);
            }
            out.emplace_back(in.columns()[idx].name);
            out.push_back(r[idx].is_null() || r[idx].type() == value_type ? r[idx] : coerce(r[idx], value_type));
            rows.push_back(std::move(out));
        }
    }
    return Table(in.name(), std::move(columns), std::move(rows));
}

auto eval_wider(const PivotWider& op, const Table& in) -> Table {
    auto name_idx = in.column_index(op.name_col);
    auto value_idx = in.column_index(op.value_col);
    if (name_idx == value_idx) {
        throw Error(ErrorCode::invalid_program, "pivot_wider name and value columns must differ");
    }
    std::vector<std::size_t> group_cols;
    std::vector<Column> columns;
    for (std::size_t c = 0; c < in.column_count(); ++c) {
        if (c != name_idx && c != value_idx) {
            group_cols.push_back(c);
            columns.push_back(in.columns()[c]);
        }
    }
    std::unordered_map<std::string, std::size_t> new_cols;
    std::vector<std::string> new_names;
    std::unordered_map<std::string, std::size_t> groups;
    std::vector<Row> rows;
    // cells[group][new column]
    std::vector<std::vector<std::optional<Value>>> cells;
    for (const auto& r : in.rows()) {
        auto name = generated_column_name(r[name_idx]);
        auto [nit, fresh_name] = new_cols.emplace(name, new_names.size());
        if (fresh_name) {
            new_names.push_back(name);
        }
        auto [git, fresh_group] = groups.emplace(row_group_key(r, group_cols), rows.size());
        if (fresh_group) {
            Row key;
            for (auto c : group_cols) {
                key.push_back(r[c]);
            }
            rows.push_back(std::move(key));
            cells.emplace_back();
        }
        auto& slots = cells[git->second];
        if (slots.size() <= nit->second) {
            slots.resize(nit->second + 1);
        }
        auto& slot = slots[nit->second];
        if (slot && !canonically_equal(*slot, r[value_idx])) {
            throw Error(ErrorCode::non_scalar_group,
                        "group has several values for '" + name + "'",
                        {{"column", name}, {"values", {slot->render(), r[value_idx].render()}}});
        }
        if (!slot) {
            slot = r[value_idx];
        }
    }
    auto value_type = in.columns()[value_idx].type;
    for (const auto& n : new_names) {
        columns.push_back(Column{n, value_type});
    }
    require_unique(columns);
    for (std::size_t g = 0; g < rows.size(); ++g) {
        for (std::size_t k = 0; k < new_names.size(); ++k) {
            const auto& slots = cells[g];
            rows[g].push_back(k < slots.size() && slots[k] ? *slots[k] : Value::null());
        }
    }
    return Table(in.name(), std::move(columns), std::move(rows));
}

auto eval_separate(const Separate& op, const Table& in) -> Table {
    auto idx = in.column_index(op.col);
    if (op.delimiter.empty()) {
        throw Error(ErrorCode::invalid_program, "separate needs a non-empty delimiter");
    }
    std::vector<Column> columns;
    for (std::size_t c = 0; c < in.column_count(); ++c) {
        if (c == idx) {
            columns.push_back(Column{op.left_name, SemanticType::text});
            columns.push_back(Column{op.right_name, SemanticType::text});
        } else {
            columns.push_back(in.columns()[c]);
        }
    }
    require_unique(columns);
    std::vector<Row> rows;
    rows.reserve(in.row_count());
    for (const auto& r : in.rows()) {
        Row out;
        out.reserve(columns.size());
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c != idx) {
                out.push_back(r[c]);
            } else if (r[c].is_null()) {
                out.emplace_back();
                out.emplace_back();
            } else {
                auto [left, right] = split_first(r[c].render(), op.delimiter);
                out.push_back(std::move(left));
                out.push_back(std::move(right));
            }
        }
        rows.push_back(std::move(out));
    }
    return Table(in.name(), std::move(columns), std::move(rows));
}

auto eval_separate_rows(const SeparateRows& op, const Table& in) -> Table {
    auto idx = in.column_index(op.col);
    if (op.delimiter.empty()) {
        throw Error(ErrorCode::invalid_program, "separate_rows needs a non-empty delimiter");
    }
    auto columns = in.columns();
    columns[idx].type = SemanticType::text;
    std::vector<Row> rows;
    rows.reserve(in.row_count());
    for (const auto& r : in.rows()) {
        if (r[idx].is_null()) {
            rows.push_back(r);
            continue;
        }
        for (auto& token : split_all(r[idx].render(), op.delimiter)) {
            Row out = r;
            out[idx] = Value(std::move(token));
            rows.push_back(std::move(out));
        }
    }
    return Table(in.name(), std::move(columns), std::move(rows));
}

// ---- s-expression reader ----

class Reader {
public:
    explicit Reader(std::string_view text) : text_(text) {}

    auto program() -> ProgramPtr {
        expect('(');
        auto op = ident();
        if (op == "input") {
            expect(')');
            return input_ref();
        }
        auto child = program();
        std::unordered_map<std::string, nlohmann::json> params;
        while (true) {
            skip_space();
            if (peek() == ')') {
                ++pos_;
                break;
            }
            auto key = ident();
            expect('=');
            skip_space();
            params[key] = peek() == '[' ? list() : string_literal();
        }
        auto str = [&](const char* key) -> std::string {
            auto it = params.find(key);
            if (it == params.end() || !it->second.is_string()) {
                fail(std::string("missing parameter '") + key + "'");
            }
            return it->second.get<std::string>();
        };
        auto strs = [&](const char* key) -> std::vector<std::string> {
            auto it = params.find(key);
            if (it == params.end() || !it->second.is_array()) {
                fail(std::string("missing list parameter '") + key + "'");
            }
            return it->second.get<std::vector<std::string>>();
        };
        if (op == "pivot_longer") {
            return pivot_longer(child, strs("columns"), str("key"), str("value"));
        }
        if (op == "pivot_wider") {
            return pivot_wider(child, str("name_col"), str("value_col"));
        }
        if (op == "separate") {
            auto into = strs("into");
            if (into.size() != 2) {
                fail("separate needs exactly two output names");
            }
            return separate(child, str("col"), into[0], into[1], str("delim"));
        }
        if (op == "separate_rows") {
            return separate_rows(child, str("col"), str("delim"));
        }
        fail("unknown operator '" + op + "'");
    }

    void finish() {
        skip_space();
        if (pos_ != text_.size()) {
            fail("trailing characters");
        }
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorCode::parse_error, "program text: " + msg, {{"offset", pos_}});
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    auto peek() const -> char { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void expect(char c) {
        skip_space();
        if (peek() != c) {
            fail(std::string("expected '") + c + "'");
        }
        ++pos_;
    }

    auto ident() -> std::string {
        skip_space();
        auto start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
        }
        if (start == pos_) {
            fail("expected identifier");
        }
        return std::string(text_.substr(start, pos_ - start));
    }

    auto string_literal() -> nlohmann::json {
        skip_space();
        if (peek() != '"') {
            fail("expected string literal");
        }
        auto start = pos_++;
        while (pos_ < text_.size() && text_[pos_] != '"') {
            pos_ += text_[pos_] == '\\' ? 2 : 1;
        }
        if (pos_ >= text_.size()) {
            fail("unterminated string");
        }
        ++pos_;
        try {
            return nlohmann::json::parse(text_.substr(start, pos_ - start));
        } catch (const nlohmann::json::exception&) {
            fail("bad string escape");
        }
    }

    auto list() -> nlohmann::json {
        expect('[');
        auto out = nlohmann::json::array();
        skip_space();
        if (peek() == ']') {
            ++pos_;
            return out;
        }
        while (true) {
            out.push_back(string_literal());
            skip_space();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            expect(']');
            return out;
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

auto quoted(const std::string& s) -> std::string {
    return nlohmann::json(s).dump();
}

}  // namespace

auto input_ref() -> ProgramPtr {
    static const auto shared = make(InputRef{});
    return shared;
}

auto pivot_longer(ProgramPtr child, std::vector<std::string> columns, std::string key_name, std::string value_name)
    -> ProgramPtr {
    return make(PivotLonger{std::move(child), std::move(columns), std::move(key_name), std::move(value_name)});
}

auto pivot_wider(ProgramPtr child, std::string name_col, std::string value_col) -> ProgramPtr {
    return make(PivotWider{std::move(child), std::move(name_col), std::move(value_col)});
}

auto separate(ProgramPtr child, std::string col, std::string left_name, std::string right_name,
              std::string delimiter) -> ProgramPtr {
    return make(Separate{std::move(child), std::move(col), std::move(left_name), std::move(right_name),
                         std::move(delimiter)});
}

auto separate_rows(ProgramPtr child, std::string col, std::string delimiter) -> ProgramPtr {
    return make(SeparateRows{std::move(child), std::move(col), std::move(delimiter)});
}

auto child_of(const Program& p) -> ProgramPtr {
    return std::visit(overloaded{[](const InputRef&) -> ProgramPtr { return nullptr; },
                                 [](const auto& op) -> ProgramPtr { return op.child; }},
                      p.node);
}

auto with_child(const Program& p, ProgramPtr child) -> ProgramPtr {
    return std::visit(overloaded{[&](const InputRef&) -> ProgramPtr { return input_ref(); },
                                 [&](auto op) -> ProgramPtr {
                                     op.child = std::move(child);
                                     return make(std::move(op));
                                 }},
                      p.node);
}

auto ast_size(const Program& p) -> int {
    auto c = child_of(p);
    return c ? 1 + ast_size(*c) : 0;
}

auto op_name(const Program& p) -> std::string_view {
    return std::visit(overloaded{[](const InputRef&) { return std::string_view("identity"); },
                                 [](const PivotLonger&) { return std::string_view("pivot_longer"); },
                                 [](const PivotWider&) { return std::string_view("pivot_wider"); },
                                 [](const Separate&) { return std::string_view("separate"); },
                                 [](const SeparateRows&) { return std::string_view("separate_rows"); }},
                      p.node);
}

auto generated_column_name(const Value& name_cell) -> std::string {
    return name_cell.is_null() ? std::string("NA") : name_cell.canonical_key();
}

auto eval_program(const Program& p, const Table& t) -> Table {
    return std::visit(overloaded{[&](const InputRef&) { return t; },
                                 [&](const PivotLonger& op) { return eval_longer(op, eval_program(*op.child, t)); },
                                 [&](const PivotWider& op) { return eval_wider(op, eval_program(*op.child, t)); },
                                 [&](const Separate& op) { return eval_separate(op, eval_program(*op.child, t)); },
                                 [&](const SeparateRows& op) {
                                     return eval_separate_rows(op, eval_program(*op.child, t));
                                 }},
                      p.node);
}

auto output_schema(const Program& p, const Table& t) -> AbstractSchema {
    if (std::holds_alternative<InputRef>(p.node)) {
        return AbstractSchema{t.columns(), std::nullopt};
    }
    auto in = output_schema(*child_of(p), t);
    // Wildcard names are exact (they come from the evaluated child), so a
    // parent operator sees them as ordinary columns.
    if (in.wildcard) {
        for (const auto& n : in.wildcard->possible_names) {
            in.columns.push_back(Column{n, in.wildcard->type});
        }
        in.wildcard.reset();
    }
    auto& cols = in.columns;
    return std::visit(
        overloaded{
            [&](const InputRef&) { return in; },
            [&](const PivotLonger& op) {
                check_longer_columns(cols, op);
                std::vector<Column> out;
                std::optional<SemanticType> value_type;
                for (const auto& c : cols) {
                    if (std::find(op.columns.begin(), op.columns.end(), c.name) == op.columns.end()) {
                        out.push_back(c);
                    } else {
                        value_type = value_type ? join(*value_type, c.type) : c.type;
                    }
                }
                out.push_back(Column{op.key_name, SemanticType::text});
                out.push_back(Column{op.value_name, *value_type});
                require_unique(out);
                return AbstractSchema{std::move(out), std::nullopt};
            },
            [&](const PivotWider& op) {
                auto name_idx = find_in(cols, op.name_col);
                auto value_idx = find_in(cols, op.value_col);
                if (name_idx == value_idx) {
                    throw Error(ErrorCode::invalid_program, "pivot_wider name and value columns must differ");
                }
                std::vector<Column> out;
                for (std::size_t c = 0; c < cols.size(); ++c) {
                    if (c != name_idx && c != value_idx) {
                        out.push_back(cols[c]);
                    }
                }
                auto child_table = eval_program(*op.child, t);
                auto idx = child_table.column_index(op.name_col);
                AbstractSchema::Wildcard wildcard{{}, cols[value_idx].type};
                std::unordered_set<std::string> seen;
                for (const auto& r : child_table.rows()) {
                    auto n = generated_column_name(r[idx]);
                    if (seen.insert(n).second) {
                        wildcard.possible_names.push_back(n);
                    }
                }
                for (const auto& n : wildcard.possible_names) {
                    if (std::any_of(out.begin(), out.end(), [&](const Column& c) { return c.name == n; })) {
                        duplicate_output(n);
                    }
                }
                return AbstractSchema{std::move(out), std::move(wildcard)};
            },
            [&](const Separate& op) {
                auto idx = find_in(cols, op.col);
                std::vector<Column> out;
                for (std::size_t c = 0; c < cols.size(); ++c) {
                    if (c == idx) {
                        out.push_back(Column{op.left_name, SemanticType::text});
                        out.push_back(Column{op.right_name, SemanticType::text});
                    } else {
                        out.push_back(cols[c]);
                    }
                }
                require_unique(out);
                return AbstractSchema{std::move(out), std::nullopt};
            },
            [&](const SeparateRows& op) {
                auto idx = find_in(cols, op.col);
                cols[idx].type = SemanticType::text;
                return in;
            }},
        p.node);
}

auto to_string(const Program& p) -> std::string {
    return std::visit(
        overloaded{[](const InputRef&) { return std::string("(input)"); },
                   [](const PivotLonger& op) {
                       return "(pivot_longer " + to_string(*op.child) + " columns=" + nlohmann::json(op.columns).dump() +
                              " key=" + quoted(op.key_name) + " value=" + quoted(op.value_name) + ")";
                   },
                   [](const PivotWider& op) {
                       return "(pivot_wider " + to_string(*op.child) + " name_col=" + quoted(op.name_col) +
                              " value_col=" + quoted(op.value_col) + ")";
                   },
                   [](const Separate& op) {
                       return "(separate " + to_string(*op.child) + " col=" + quoted(op.col) + " into=" +
                              nlohmann::json::array({op.left_name, op.right_name}).dump() + " delim=" +
                              quoted(op.delimiter) + ")";
                   },
                   [](const SeparateRows& op) {
                       return "(separate_rows " + to_string(*op.child) + " col=" + quoted(op.col) +
                              " delim=" + quoted(op.delimiter) + ")";
                   }},
        p.node);
}

auto parse_program(std::string_view text) -> ProgramPtr {
    Reader reader(text);
    auto p = reader.program();
    reader.finish();
    return p;
}

}  // namespace vizform
