#include "test_support.hpp"

#include <vizform/error.hpp>
#include <vizform/table.hpp>

#include <catch_amalgamated.hpp>

using namespace vizform;
using vizform::testing::d;

namespace {

auto csv(std::string_view text) -> Table {
    return parse_table(text, TableFormat::csv, "t");
}

auto error_code_of(auto&& fn) -> std::optional<ErrorCode> {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

}  // namespace

TEST_CASE("parse_table infers date, text and integer columns") {
    auto t = csv("Date,City,Temperature\n2020-01-01,Seattle,51");
    REQUIRE(t.row_count() == 1);
    REQUIRE(t.columns() == std::vector<Column>{{"Date", SemanticType::date},
                                               {"City", SemanticType::text},
                                               {"Temperature", SemanticType::integer}});
    CHECK(t.rows()[0][0] == d(2020, 1, 1));
    CHECK(t.rows()[0][1] == Value("Seattle"));
    CHECK(t.rows()[0][2] == Value(51));
}

TEST_CASE("header-only csv yields zero rows of text columns") {
    auto t = csv("A,B\n");
    CHECK(t.row_count() == 0);
    CHECK(t.columns() == std::vector<Column>{{"A", SemanticType::text}, {"B", SemanticType::text}});
}

TEST_CASE("mixed evidence falls back to text") {
    auto t = csv("X\n51\nabc");
    CHECK(t.columns()[0].type == SemanticType::text);
    CHECK(t.rows()[0][0] == Value("51"));
}

TEST_CASE("infer_type ladder") {
    std::vector<std::string> ints{"51", "45", "48"};
    std::vector<std::string> dates{"2020-01-01", "2020-01-02"};
    std::vector<std::string> floats{"51", "6.5"};
    std::vector<std::string> slash{"01/01/2020", "1/2/2020"};
    std::vector<std::string> stamps{"2020-01-01T10:00:00", "2020-01-02"};
    std::vector<std::string> bools{"true", "FALSE", ""};
    std::vector<std::string> empty{"", "NA", "null"};
    CHECK(infer_type(ints) == SemanticType::integer);
    CHECK(infer_type(dates) == SemanticType::date);
    CHECK(infer_type(floats) == SemanticType::floating);
    CHECK(infer_type(slash) == SemanticType::date);
    CHECK(infer_type(stamps) == SemanticType::datetime);
    CHECK(infer_type(bools) == SemanticType::boolean);
    CHECK(infer_type(empty) == SemanticType::text);
    CHECK(infer_type(std::vector<std::string>{}) == SemanticType::text);
}

TEST_CASE("slash dates normalize to ISO") {
    auto t = csv("When\n01/02/2020\n");
    CHECK(t.rows()[0][0].render() == "2020-01-02");
    CHECK(!parse_date("2020-02-30"));
    CHECK(!parse_date("2020/01/01"));
}

TEST_CASE("null tokens and missing cells ingest as Null") {
    auto t = csv("A,B,C\n1,NA,x\n2,,\n3,null");
    REQUIRE(t.row_count() == 3);
    CHECK(t.columns()[0].type == SemanticType::integer);
    CHECK(t.rows()[0][1].is_null());
    CHECK(t.rows()[1][1].is_null());
    CHECK(t.rows()[1][2].is_null());
    CHECK(t.rows()[2][1].is_null());
    CHECK(t.rows()[2][2].is_null());
}

TEST_CASE("RFC-4180 quoting") {
    auto t = csv("name,quote\r\n\"Smith, J\",\"said \"\"hi\"\"\"\r\n\"multi\nline\",x\r\n");
    REQUIRE(t.row_count() == 2);
    CHECK(t.rows()[0][0] == Value("Smith, J"));
    CHECK(t.rows()[0][1] == Value("said \"hi\""));
    CHECK(t.rows()[1][0] == Value("multi\nline"));
}

TEST_CASE("parse_table error paths") {
    CHECK(error_code_of([] { csv("A,B\n\"open,1\n"); }) == ErrorCode::malformed_input);
    CHECK(error_code_of([] { csv(""); }) == ErrorCode::empty_header);
    CHECK(error_code_of([] { csv("A,A\n1,2\n"); }) == ErrorCode::duplicate_column);
    CHECK(error_code_of([] { csv("A\n1,2\n"); }) == ErrorCode::malformed_input);
    CHECK(error_code_of([] { parse_table("{\"a\":1}", TableFormat::json_rows, "t"); }) ==
          ErrorCode::malformed_input);
    CHECK(error_code_of([] { parse_table("[]", TableFormat::json_rows, "t"); }) == ErrorCode::empty_header);
    CHECK(error_code_of([] { parse_table("[{\"a\":[1]}]", TableFormat::json_rows, "t"); }) ==
          ErrorCode::malformed_input);
}

TEST_CASE("json-rows keeps first-encounter column order and absent keys become Null") {
    auto t = parse_table(R"([{"z": 1, "a": "x"}, {"a": "y", "m": 2.5}])", TableFormat::json_rows, "j");
    REQUIRE(t.column_names() == std::vector<std::string>{"z", "a", "m"});
    CHECK(t.columns()[0].type == SemanticType::integer);
    CHECK(t.columns()[2].type == SemanticType::floating);
    CHECK(t.rows()[1][0].is_null());
    CHECK(t.rows()[0][2].is_null());
}

TEST_CASE("serialize_table csv edge cases") {
    Table empty("e", {{"A", SemanticType::integer}, {"B", SemanticType::text}}, {});
    CHECK(serialize_table(empty, TableFormat::csv) == "A,B\n");
    Table with_null("n", {{"A", SemanticType::integer}, {"B", SemanticType::text}},
                    {{Value(1), Value::null()}, {Value::null(), Value("NA")}});
    CHECK(serialize_table(with_null, TableFormat::csv) == "A,B\n1,\n,\"NA\"\n");
}

TEST_CASE("canonical equality") {
    CHECK(canonically_equal(Value(5), Value(5.0)));
    CHECK(canonically_equal(Value("  Seattle "), Value("Seattle")));
    CHECK_FALSE(canonically_equal(Value(5), Value(5.5)));
    CHECK_FALSE(canonically_equal(Value::null(), Value("")));
    CHECK(canonically_equal(Value::null(), Value::null()));
    CHECK(Value(5.0).render() == "5.0");
    CHECK(Value(5.0).canonical_key() == "5");
    for (int k = -1000; k <= 1000; ++k) {
        CHECK(canonically_equal(Value(k), Value(static_cast<double>(k))));
    }
}

TEST_CASE("canonical equality is an equivalence relation on random values") {
    vizform::testing::TableGenerator gen(7);
    std::vector<Value> pool;
    for (int i = 0; i < 120; ++i) {
        pool.push_back(gen.random_value(static_cast<SemanticType>(gen.uniform(0, 5)), 0.05));
    }
    pool.push_back(Value(3));
    pool.push_back(Value(3.0));
    pool.push_back(Value(" 3"));
    for (const auto& a : pool) {
        CHECK(canonically_equal(a, a));
        for (const auto& b : pool) {
            REQUIRE(canonically_equal(a, b) == canonically_equal(b, a));
            if (!canonically_equal(a, b)) {
                continue;
            }
            for (const auto& c : pool) {
                if (canonically_equal(b, c)) {
                    REQUIRE(canonically_equal(a, c));
                }
            }
        }
    }
}

TEST_CASE("inference ladder is monotone under adding values") {
    vizform::testing::TableGenerator gen(11);
    const std::vector<std::string> vocab{"1", "2.5", "true", "2020-01-01", "03/04/2021", "2020-01-01 10:00",
                                         "abc", "", "NA", "-7", "1e3", "false"};
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::string> values;
        int n = gen.uniform(0, 5);
        for (int i = 0; i < n; ++i) {
            values.push_back(vocab[gen.uniform(0, static_cast<int>(vocab.size()) - 1)]);
        }
        auto before = infer_type(values);
        values.push_back(vocab[gen.uniform(0, static_cast<int>(vocab.size()) - 1)]);
        auto after = infer_type(values);
        // Non-empty evidence can only move down the ladder; text is the floor.
        bool had_evidence = std::any_of(values.begin(), values.end() - 1, [](const auto& v) { return !is_null_token(v); });
        if (had_evidence) {
            REQUIRE(static_cast<int>(after) >= static_cast<int>(before));
        }
    }
}

TEST_CASE("parse and serialize round trip on random tables") {
    vizform::testing::TableGenerator gen(42);
    for (int trial = 0; trial < 300; ++trial) {
        auto t = gen.random_table(6, 12);
        for (auto format : {TableFormat::csv, TableFormat::json_rows}) {
            if (format == TableFormat::json_rows && t.row_count() == 0) {
                continue;  // zero objects carry no column names
            }
            auto text = serialize_table(t, format);
            auto back = parse_table(text, format, "random");
            REQUIRE(back.column_names() == t.column_names());
            INFO(text);
            REQUIRE(canonically_equal(back, t));
        }
    }
}

TEST_CASE("table JSON round trip preserves types exactly") {
    auto t = vizform::testing::t0();
    auto back = table_from_json(table_to_json(t));
    CHECK(back == t);
}
