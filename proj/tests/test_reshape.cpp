#include "test_support.hpp"

#include <vizform/error.hpp>
#include <vizform/reshape.hpp>

#include <catch_amalgamated.hpp>

#include <set>

using namespace vizform;
using vizform::testing::d;
using vizform::testing::t0;

namespace {

auto code_of(auto&& fn) -> std::optional<ErrorCode> {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

auto column(const Table& t, std::string_view name) -> std::vector<Value> {
    return t.column_values(t.column_index(name));
}

// Multiset of rows under canonical keys, with columns matched by name.
auto row_bag(const Table& t, const std::vector<std::string>& names) -> std::multiset<std::string> {
    std::vector<std::size_t> idx;
    for (const auto& n : names) {
        idx.push_back(t.column_index(n));
    }
    std::multiset<std::string> bag;
    for (const auto& r : t.rows()) {
        std::string key;
        for (auto i : idx) {
            key += r[i].canonical_key() + "\x1f";
        }
        bag.insert(key);
    }
    return bag;
}

}  // namespace

TEST_CASE("pivot_wider on the weather fixture") {
    auto out = eval_program(*pivot_wider(input_ref(), "City", "Temperature"), t0());
    REQUIRE(out.column_names() == std::vector<std::string>{"Date", "Seattle", "Atlanta"});
    REQUIRE(out.row_count() == 3);
    CHECK(out.rows()[0] == Row{d(2020, 1, 1), Value(51), Value(45)});
    CHECK(out.columns()[1].type == SemanticType::integer);
    CHECK(column(out, "Seattle") == std::vector<Value>{Value(51), Value(45), Value(48)});
    CHECK(column(out, "Atlanta") == std::vector<Value>{Value(45), Value(47), Value(56)});
}

TEST_CASE("pivot_longer undoes pivot_wider on the weather fixture") {
    auto p = pivot_longer(pivot_wider(input_ref(), "City", "Temperature"), {"Seattle", "Atlanta"}, "City",
                          "Temperature");
    auto out = eval_program(*p, t0());
    REQUIRE(out.column_names() == std::vector<std::string>{"Date", "City", "Temperature"});
    CHECK(row_bag(out, {"Date", "City", "Temperature"}) == row_bag(t0(), {"Date", "City", "Temperature"}));
    CHECK(out.columns()[2].type == SemanticType::integer);
}

TEST_CASE("separate splits at the first delimiter") {
    Table t("s", {{"Score", SemanticType::text}}, {{Value("math-80")}});
    auto out = eval_program(*separate(input_ref(), "Score", "Subject", "Points", "-"), t);
    REQUIRE(out.column_names() == std::vector<std::string>{"Subject", "Points"});
    CHECK(out.rows()[0] == Row{Value("math"), Value("80")});

    Table more("s", {{"k", SemanticType::integer}, {"v", SemanticType::text}},
               {{Value(1), Value("a-b-c")}, {Value(2), Value("plain")}, {Value(3), Value::null()}});
    auto split = eval_program(*separate(input_ref(), "v", "l", "r", "-"), more);
    CHECK(split.column_names() == std::vector<std::string>{"k", "l", "r"});
    CHECK(split.rows()[0] == Row{Value(1), Value("a"), Value("b-c")});
    CHECK(split.rows()[1] == Row{Value(2), Value("plain"), Value::null()});
    CHECK(split.rows()[2] == Row{Value(3), Value::null(), Value::null()});
}

TEST_CASE("separate_rows emits one trimmed row per token") {
    Table t("s", {{"id", SemanticType::integer}, {"tags", SemanticType::text}},
            {{Value(1), Value("a, b,c")}, {Value(2), Value::null()}, {Value(3), Value("solo")}});
    auto out = eval_program(*separate_rows(input_ref(), "tags", ","), t);
    REQUIRE(out.row_count() == 5);
    CHECK(column(out, "tags") ==
          std::vector<Value>{Value("a"), Value("b"), Value("c"), Value::null(), Value("solo")});
    CHECK(column(out, "id") == std::vector<Value>{Value(1), Value(1), Value(1), Value(2), Value(3)});
}

TEST_CASE("reshape error paths") {
    auto t = t0();
    CHECK(code_of([&] { eval_program(*separate(input_ref(), "Nope", "a", "b", "-"), t); }) ==
          ErrorCode::unknown_column);
    Table conflict("c", {{"k", SemanticType::integer}, {"n", SemanticType::text}, {"v", SemanticType::integer}},
                   {{Value(1), Value("a"), Value(10)}, {Value(1), Value("a"), Value(11)}});
    CHECK(code_of([&] { eval_program(*pivot_wider(input_ref(), "n", "v"), conflict); }) ==
          ErrorCode::non_scalar_group);
    CHECK(code_of([&] { eval_program(*pivot_longer(input_ref(), {"Date", "City", "Temperature"}, "k", "v"), t); }) ==
          ErrorCode::invalid_program);
    CHECK(code_of([&] { eval_program(*pivot_longer(input_ref(), {}, "k", "v"), t); }) == ErrorCode::invalid_program);
    CHECK(code_of([&] { eval_program(*pivot_longer(input_ref(), {"City"}, "Date", "v"), t); }) ==
          ErrorCode::duplicate_output_column);
    Table clash("c", {{"Seattle", SemanticType::integer}, {"City", SemanticType::text}, {"T", SemanticType::integer}},
                {{Value(1), Value("Seattle"), Value(3)}});
    CHECK(code_of([&] { eval_program(*pivot_wider(input_ref(), "City", "T"), clash); }) ==
          ErrorCode::duplicate_output_column);
}

TEST_CASE("pivot_wider collapses identical duplicates and fills gaps with Null") {
    Table t("w", {{"k", SemanticType::integer}, {"n", SemanticType::text}, {"v", SemanticType::integer}},
            {{Value(1), Value("a"), Value(10)},
             {Value(1), Value("a"), Value(10)},
             {Value(2), Value("b"), Value(20)},
             {Value(3), Value::null(), Value(30)}});
    auto out = eval_program(*pivot_wider(input_ref(), "n", "v"), t);
    REQUIRE(out.column_names() == std::vector<std::string>{"k", "a", "b", "NA"});
    CHECK(out.rows()[0] == Row{Value(1), Value(10), Value::null(), Value::null()});
    CHECK(out.rows()[2] == Row{Value(3), Value::null(), Value::null(), Value(30)});
}

TEST_CASE("pivot_longer unifies listed column types") {
    Table t("u", {{"id", SemanticType::text}, {"a", SemanticType::integer}, {"b", SemanticType::floating}},
            {{Value("x"), Value(1), Value(2.5)}});
    auto out = eval_program(*pivot_longer(input_ref(), {"a", "b"}, "k", "v"), t);
    CHECK(out.columns()[2].type == SemanticType::floating);
    CHECK(out.rows()[0][2] == Value(1.0));
    Table mixed("m", {{"id", SemanticType::text}, {"a", SemanticType::integer}, {"b", SemanticType::date}},
                {{Value("x"), Value(1), d(2020, 1, 1)}});
    auto text = eval_program(*pivot_longer(input_ref(), {"a", "b"}, "k", "v"), mixed);
    CHECK(text.columns()[2].type == SemanticType::text);
    CHECK(text.rows()[1][2] == Value("2020-01-01"));
}

TEST_CASE("output_schema examples") {
    Table wide("w", {{"Date", SemanticType::date}, {"Seattle", SemanticType::integer}, {"Atlanta", SemanticType::integer}},
               {});
    auto s = output_schema(*pivot_longer(input_ref(), {"Seattle", "Atlanta"}, "City", "Temp"), wide);
    CHECK(s.columns == std::vector<Column>{{"Date", SemanticType::date},
                                           {"City", SemanticType::text},
                                           {"Temp", SemanticType::integer}});
    CHECK_FALSE(s.wildcard);
    CHECK(output_schema(*input_ref(), t0()).columns == t0().columns());
    CHECK(code_of([&] { output_schema(*separate(input_ref(), "Nope", "a", "b", "-"), t0()); }) ==
          ErrorCode::unknown_column);
    auto w = output_schema(*pivot_wider(input_ref(), "City", "Temperature"), t0());
    CHECK(w.columns == std::vector<Column>{{"Date", SemanticType::date}});
    REQUIRE(w.wildcard);
    CHECK(w.wildcard->possible_names == std::vector<std::string>{"Seattle", "Atlanta"});
    CHECK(w.max_width() == 3);
}

TEST_CASE("program text round trips") {
    std::vector<ProgramPtr> programs{
        input_ref(),
        pivot_wider(input_ref(), "City", "Temperature"),
        pivot_longer(separate(input_ref(), "a \"q\"", "x", "y", " "), {"x", "B"}, "key", "val"),
        separate_rows(pivot_wider(input_ref(), "n", "v"), "k", ","),
    };
    CHECK(to_string(*programs[1]) == R"((pivot_wider (input) name_col="City" value_col="Temperature"))");
    CHECK(to_string(*separate(input_ref(), "Score", "Subject", "Points", "-")) ==
          R"((separate (input) col="Score" into=["Subject","Points"] delim="-"))");
    for (const auto& p : programs) {
        auto text = to_string(*p);
        CHECK(to_string(*parse_program(text)) == text);
    }
    CHECK(code_of([] { parse_program("(pivot_wider (input) name_col=\"a\")"); }) == ErrorCode::parse_error);
    CHECK(code_of([] { parse_program("(explode (input))"); }) == ErrorCode::parse_error);
    CHECK(code_of([] { parse_program("(input) extra"); }) == ErrorCode::parse_error);
}

TEST_CASE("pivot inverse on random wide tables") {
    vizform::testing::TableGenerator gen(5);
    for (int trial = 0; trial < 200; ++trial) {
        int measures = gen.uniform(1, 4);
        int nrows = gen.uniform(1, 15);
        std::vector<Column> cols{{"id", SemanticType::integer}};
        std::vector<std::string> names;
        for (int m = 0; m < measures; ++m) {
            names.push_back("m" + std::to_string(m));
            cols.push_back({names.back(), SemanticType::integer});
        }
        std::vector<Row> rows;
        for (int r = 0; r < nrows; ++r) {
            Row row{Value(r)};
            for (int m = 0; m < measures; ++m) {
                row.push_back(gen.random_value(SemanticType::integer, 0.0));
            }
            rows.push_back(std::move(row));
        }
        Table wide("w", cols, rows);
        auto longer = pivot_longer(input_ref(), names, "key", "value");
        auto back = eval_program(*pivot_wider(longer, "key", "value"), wide);
        REQUIRE(back.column_names() == wide.column_names());
        REQUIRE(canonically_equal(back, wide));

        // Dual direction: long table with unique (id, key) pairs.
        auto long_table = eval_program(*longer, wide);
        auto again = eval_program(*pivot_longer(pivot_wider(input_ref(), "key", "value"), names, "key", "value"),
                                  long_table);
        REQUIRE(row_bag(again, {"id", "key", "value"}) == row_bag(long_table, {"id", "key", "value"}));
    }
}

TEST_CASE("pivot_longer conserves (column, cell) pairs") {
    vizform::testing::TableGenerator gen(9);
    for (int trial = 0; trial < 200; ++trial) {
        auto t = gen.random_table(6, 10);
        if (t.column_count() < 2) {
            continue;
        }
        std::vector<std::string> listed;
        for (const auto& c : t.columns()) {
            if (listed.size() + 1 < t.column_count() && gen.uniform(0, 1) == 1) {
                listed.push_back(c.name);
            }
        }
        if (listed.empty()) {
            listed.push_back(t.columns()[0].name);
        }
        auto out = eval_program(*pivot_longer(input_ref(), listed, "#k", "#v"), t);
        // Cells are compared after widening to the unified value type.
        auto value_type = t.columns()[t.column_index(listed[0])].type;
        for (const auto& n : listed) {
            value_type = join(value_type, t.columns()[t.column_index(n)].type);
        }
        std::multiset<std::pair<std::string, std::string>> expected;
        for (const auto& r : t.rows()) {
            for (const auto& n : listed) {
                expected.emplace(n, coerce(r[t.column_index(n)], value_type).canonical_key());
            }
        }
        std::multiset<std::pair<std::string, std::string>> actual;
        for (const auto& r : out.rows()) {
            actual.emplace(r[out.column_count() - 2].as_text(), r[out.column_count() - 1].canonical_key());
        }
        REQUIRE(actual == expected);
    }
}

TEST_CASE("separate_rows row count equals total token count") {
    vizform::testing::TableGenerator gen(13);
    for (int trial = 0; trial < 200; ++trial) {
        auto t = gen.random_table(4, 10);
        for (std::size_t c = 0; c < t.column_count(); ++c) {
            for (auto delim : kDelimiters) {
                std::size_t expected = 0;
                for (const auto& r : t.rows()) {
                    if (r[c].is_null()) {
                        ++expected;
                        continue;
                    }
                    auto text = r[c].render();
                    std::size_t tokens = 1;
                    for (auto pos = text.find(delim); pos != std::string::npos; pos = text.find(delim, pos + 1)) {
                        ++tokens;
                    }
                    expected += tokens;
                }
                auto out = eval_program(*separate_rows(input_ref(), t.columns()[c].name, std::string(delim)), t);
                REQUIRE(out.row_count() == expected);
            }
        }
    }
}

TEST_CASE("evaluation is deterministic and output_schema agrees with eval") {
    vizform::testing::TableGenerator gen(21);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        auto t = gen.random_table(5, 8);
        auto names = t.column_names();
        auto pick = [&]() { return names[gen.uniform(0, static_cast<int>(names.size()) - 1)]; };
        ProgramPtr p;
        switch (gen.uniform(0, 3)) {
            case 0: p = pivot_longer(input_ref(), {pick()}, "#k", "#v"); break;
            case 1: p = pivot_wider(input_ref(), pick(), pick()); break;
            case 2: p = separate(input_ref(), pick(), "#l", "#r", " "); break;
            default: p = separate_rows(input_ref(), pick(), "-"); break;
        }
        Table a;
        try {
            a = eval_program(*p, t);
        } catch (const Error&) {
            continue;
        }
        auto b = eval_program(*p, t);
        REQUIRE(serialize_table(a, TableFormat::csv) == serialize_table(b, TableFormat::csv));
        auto schema = output_schema(*p, t);
        auto flat = schema.columns;
        if (schema.wildcard) {
            for (const auto& n : schema.wildcard->possible_names) {
                flat.push_back({n, schema.wildcard->type});
            }
        }
        REQUIRE(flat == a.columns());
        ++checked;
    }
    CHECK(checked > 100);
}
