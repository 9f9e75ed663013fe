#include "test_support.hpp"

#include <vizform/error.hpp>
#include <vizform/json_schema.hpp>

#include <catch_amalgamated.hpp>

using namespace vizform;
using nlohmann::json;

namespace {

auto cases() -> const json& {
    static const json doc = json::parse(testing::read_file(testing::fixture_path("schema_cases.json")));
    return doc;
}

auto vega_lite() -> const JsonSchema& {
    static const JsonSchema schema = JsonSchema::load(std::string(VIZFORM_DEFAULT_SCHEMA_DIR) + "/vega-lite-v5.20.1.json");
    return schema;
}

}  // namespace

TEST_CASE("keyword verdicts agree with the reference validator") {
    JsonSchema schema(cases()["keyword_schema"]);
    for (const auto& c : cases()["keyword_cases"]) {
        INFO(c["doc"].dump());
        bool want = c["valid"].get<bool>();
        CHECK(schema.is_valid(c["doc"]) == want);
        CHECK(schema.validate(c["doc"]).empty() == want);
    }
}

TEST_CASE("vega-lite verdicts agree with the reference validator") {
    std::size_t valid = 0;
    for (const auto& c : cases()["vega_lite_cases"]) {
        INFO(c["doc"].dump());
        bool want = c["valid"].get<bool>();
        CHECK(vega_lite().is_valid(c["doc"]) == want);
        valid += want ? 1 : 0;
    }
    // The corpus exercises both verdicts.
    CHECK(valid > 10);
    CHECK(valid < cases()["vega_lite_cases"].size() - 10);
}

TEST_CASE("violations name the failing location") {
    JsonSchema schema(cases()["keyword_schema"]);
    auto v = schema.validate(json{{"id", 1}, {"items", {"ab", "Q"}}});
    REQUIRE_FALSE(v.empty());
    CHECK(v[0].instance_path == "/items/1");
    CHECK(describe(v).find("/items/1") != std::string::npos);
    auto missing = schema.validate(json::object());
    CHECK(missing.size() == 2);
    CHECK(missing[0].instance_path == "/");
}

TEST_CASE("validation against a named definition") {
    JsonSchema schema(cases()["keyword_schema"]);
    CHECK(schema.is_valid(3, "#/definitions/pos"));
    CHECK_FALSE(schema.is_valid(0, "#/definitions/pos"));
    CHECK_THROWS_AS(schema.is_valid(3, "#/definitions/absent"), Error);
    CHECK(vega_lite().is_valid(json{{"field", "a"}, {"type", "nominal"}}, "#/definitions/FieldDefWithoutScale"));
}

TEST_CASE("schema loading errors") {
    CHECK_THROWS_AS(JsonSchema::load("/nonexistent/schema.json"), Error);
    CHECK(JsonSchema(true).is_valid(json{{"anything", 1}}));
    CHECK_FALSE(JsonSchema(false).is_valid(1));
}
