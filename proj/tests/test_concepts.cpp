#include "test_support.hpp"

#include <vizform/concepts.hpp>
#include <vizform/error.hpp>

#include <catch_amalgamated.hpp>

#include <map>
#include <set>

using namespace vizform;
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

auto ints(std::initializer_list<int> xs) -> std::vector<Value> {
    std::vector<Value> out;
    for (int x : xs) out.emplace_back(x);
    return out;
}

auto pivoted() -> Table {
    return Table::coerced("P", {{"Date", SemanticType::date}, {"Seattle Temp", SemanticType::integer},
                                {"Atlanta Temp", SemanticType::integer}},
                          {{Value(make_date(2020, 1, 1)), Value(51), Value(45)},
                           {Value(make_date(2020, 1, 2)), Value(45), Value(47)},
                           {Value(make_date(2020, 1, 3)), Value(48), Value(56)}});
}

}  // namespace

TEST_CASE("original concepts come from table columns") {
    ConceptShelf shelf;
    auto originals = shelf.load_original_concepts(t0(), "t1");
    REQUIRE(originals.size() == 3);
    CHECK(originals[0].name == "Date");
    CHECK(originals[1].name == "City");
    CHECK(originals[2].name == "Temperature");
    for (const auto& c : originals) {
        CHECK(c.kind == ConceptKind::original);
        REQUIRE(c.known());
        CHECK(c.resolution->table_id == "t1");
        CHECK(c.resolution->column == c.name);
    }
    CHECK(originals[1].example_values == std::vector<Value>{Value("Seattle"), Value("Atlanta")});
    CHECK(originals[2].example_values == ints({51, 45, 47, 48, 56}));
    CHECK(originals[2].semantic_type == SemanticType::integer);

    ConceptShelf empty;
    CHECK(empty.load_original_concepts(Table("E", {}, {}), "t1").empty());
}

TEST_CASE("example sampling keeps the first five distinct non-null values") {
    std::vector<Value> values{Value::null(), Value(3), Value(3), Value(1), Value(2), Value::null(),
                              Value(5), Value(1), Value(8), Value(9)};
    CHECK(sample_examples(values) == ints({3, 1, 2, 5, 8}));
    CHECK(sample_examples(ints({4, 4})) == ints({4}));
}

TEST_CASE("custom concepts start unknown with an inferred type") {
    ConceptShelf shelf;
    shelf.load_original_concepts(t0(), "t1");
    const auto& atl = shelf.create_custom_concept("Atlanta Temp", ints({45, 47, 56, 41}));
    CHECK_FALSE(atl.known());
    CHECK(atl.kind == ConceptKind::custom);
    CHECK(atl.semantic_type == SemanticType::integer);
    CHECK(atl.example_values == ints({45, 47, 56, 41}));

    CHECK(shelf.create_custom_concept("Label", std::vector<Value>{Value("a"), Value("b")}).semantic_type ==
          SemanticType::text);
    CHECK(shelf.create_custom_concept("Mixed", std::vector<Value>{Value(1), Value(2.5)}).semantic_type ==
          SemanticType::floating);
    CHECK(shelf.create_custom_concept("Day", std::vector<Value>{Value("2020-01-05")}).semantic_type ==
          SemanticType::date);

    CHECK(code_of([&] { shelf.create_custom_concept("Atlanta Temp", ints({1})); }) == ErrorCode::duplicate_name);
    CHECK(code_of([&] { shelf.create_custom_concept("City", ints({1})); }) == ErrorCode::duplicate_name);
    CHECK(code_of([&] { shelf.create_custom_concept("Nothing", {}); }) == ErrorCode::empty_examples);
    CHECK(code_of([&] { shelf.create_custom_concept("Nulls", std::vector<Value>{Value::null()}); }) ==
          ErrorCode::empty_examples);
}

TEST_CASE("derived concepts are known exactly when their sources are") {
    ConceptShelf shelf;
    shelf.load_original_concepts(pivoted(), "t2");
    std::vector<std::string> both{"Seattle Temp", "Atlanta Temp"};
    const auto& diff = shelf.create_derived_concept("Difference", both, "diff", "fn(a, b) = a - b");
    CHECK(diff.kind == ConceptKind::derived);
    CHECK(diff.known());
    CHECK(diff.semantic_type == SemanticType::integer);
    CHECK(diff.sources == std::vector<std::string>{"c2", "c3"});
    REQUIRE(diff.formula);
    CHECK(diff.formula->source() == "fn(a, b) = a - b");

    shelf.create_custom_concept("Boston Temp", ints({30, 31}));
    std::vector<std::string> mixed{"Seattle Temp", "Boston Temp"};
    CHECK_FALSE(shelf.create_derived_concept("Gap", mixed, "", "fn(a, b) = a - b").known());

    CHECK(code_of([&] { shelf.create_derived_concept("Three", both, "", "fn(a, b, c) = a + b + c"); }) ==
          ErrorCode::type_mismatch);
    CHECK(code_of([&] { shelf.create_derived_concept("Bad", both, "", "fn(a, b) = a +"); }) ==
          ErrorCode::parse_error);
    CHECK(code_of([&] { shelf.create_derived_concept("Difference", both, "", "fn(a, b) = a"); }) ==
          ErrorCode::duplicate_name);
    std::vector<std::string> ghost{"Nope"};
    CHECK(code_of([&] { shelf.create_derived_concept("G", ghost, "", "fn(a) = a"); }) ==
          ErrorCode::unknown_concept);
}

TEST_CASE("resolution binds unknown concepts and follows derived dependents") {
    ConceptShelf shelf;
    shelf.load_original_concepts(t0(), "t1");
    shelf.create_custom_concept("Seattle Temp", ints({51, 45, 48}));
    shelf.create_custom_concept("Atlanta Temp", ints({45, 47, 56, 41}));
    std::vector<std::string> both{"Seattle Temp", "Atlanta Temp"};
    shelf.create_derived_concept("Difference", both, "", "fn(a, b) = a - b");
    CHECK_FALSE(shelf.get("Difference").known());

    std::map<std::string, std::string> binding{{"Seattle Temp", "Seattle Temp"}};
    CHECK(code_of([&] { shelf.resolve_concepts(both, "t2", pivoted(), binding); }) ==
          ErrorCode::binding_incomplete);
    CHECK_FALSE(shelf.get("Seattle Temp").known());

    binding["Atlanta Temp"] = "Atlanta Temp";
    auto changed = shelf.resolve_concepts(both, "t2", pivoted(), binding);
    CHECK(changed.size() == 3);
    CHECK(shelf.get("Seattle Temp").resolution == Resolution{"t2", "Seattle Temp"});
    CHECK(shelf.get("Atlanta Temp").resolution == Resolution{"t2", "Atlanta Temp"});
    // The pivoted table has no Difference column yet, so it is known but unplaced.
    CHECK(shelf.get("Difference").resolution == Resolution{"", "Difference"});

    CHECK(shelf.resolve_concepts({}, "t2", pivoted(), {}).empty());
}

TEST_CASE("resolution re-infers custom types from the bound column") {
    ConceptShelf shelf;
    shelf.create_custom_concept("Seattle Temp", ints({51, 45}));
    auto p = pivoted();
    auto floaty = Table::coerced("F", {{"S", SemanticType::floating}}, {{Value(51.0)}, {Value(45.5)}});
    std::vector<std::string> refs{"Seattle Temp"};
    shelf.resolve_concepts(refs, "t9", floaty, {{"Seattle Temp", "S"}});
    CHECK(shelf.get("Seattle Temp").semantic_type == SemanticType::floating);
    CHECK(shelf.get("Seattle Temp").example_values.front().is_float());
}

TEST_CASE("deletion respects dependents") {
    ConceptShelf shelf;
    shelf.load_original_concepts(pivoted(), "t1");
    std::vector<std::string> src{"Seattle Temp"};
    shelf.create_derived_concept("Double", src, "", "fn(a) = a * 2");
    CHECK(code_of([&] { shelf.remove("Seattle Temp"); }) == ErrorCode::concept_in_use);
    shelf.remove("Double");
    shelf.remove("Seattle Temp");
    CHECK(shelf.find("Seattle Temp") == nullptr);
    CHECK(code_of([&] { shelf.remove("Seattle Temp"); }) == ErrorCode::unknown_concept);
}

TEST_CASE("shelf serialization round-trips") {
    ConceptShelf shelf;
    shelf.load_original_concepts(t0(), "t1");
    shelf.create_custom_concept("Atlanta Temp", ints({45, 47, 56, 41}));
    std::vector<std::string> src{"Temperature", "Atlanta Temp"};
    shelf.create_derived_concept("Gap", src, "gap", "fn(a, b) = abs(a - b)");
    auto j = shelf.to_json();
    auto back = ConceptShelf::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.get("Gap").formula->source() == "fn(a, b) = abs(a - b)");
    CHECK(back.create_custom_concept("Next", ints({1})).id == "c6");
}

// Reference model: original known; custom known once bound; derived known iff
// all sources are known.
TEST_CASE("known state follows the resolution rules over random operation sequences") {
    for (std::uint32_t seed = 1; seed <= 150; ++seed) {
        vizform::testing::TableGenerator gen(seed);
        ConceptShelf shelf;
        std::map<std::string, ConceptKind> kinds;
        std::map<std::string, std::vector<std::string>> sources;
        std::set<std::string> bound;
        std::set<std::string> ever_known;
        auto input = gen.random_table(3, 4);
        for (const auto& c : shelf.load_original_concepts(input, "t1")) {
            kinds[c.id] = c.kind;
        }
        std::function<bool(const std::string&)> expected = [&](const std::string& id) -> bool {
            switch (kinds.at(id)) {
                case ConceptKind::original: return true;
                case ConceptKind::custom: return bound.count(id) > 0;
                case ConceptKind::derived:
                    return std::all_of(sources[id].begin(), sources[id].end(), expected);
            }
            return false;
        };
        int fresh = 0;
        for (int step = 0; step < 25; ++step) {
            std::vector<std::string> ids;
            for (const auto& c : shelf.concepts()) ids.push_back(c.id);
            auto pick = [&] { return ids[gen.uniform(0, static_cast<int>(ids.size()) - 1)]; };
            int op = ids.empty() ? 0 : gen.uniform(0, 3);
            if (op == 0) {
                const auto& c = shelf.create_custom_concept("u" + std::to_string(fresh++), ints({gen.uniform(0, 9)}));
                kinds[c.id] = c.kind;
            } else if (op == 1) {
                std::vector<std::string> src{pick()};
                if (gen.uniform(0, 1) == 1) {
                    auto other = pick();
                    if (other != src[0]) src.push_back(other);
                }
                auto text = src.size() == 1 ? "fn(a) = a" : "fn(a, b) = a";
                const auto& c = shelf.create_derived_concept("d" + std::to_string(fresh++), src, "", text);
                kinds[c.id] = c.kind;
                sources[c.id] = c.sources;
            } else if (op == 2) {
                std::vector<std::string> targets;
                std::map<std::string, std::string> binding;
                std::vector<Column> cols;
                std::vector<Value> row;
                for (const auto& c : shelf.concepts()) {
                    if (!c.known() && c.kind == ConceptKind::custom && gen.uniform(0, 1) == 1) {
                        targets.push_back(c.id);
                        binding[c.name] = "col_" + c.name;
                        cols.push_back({"col_" + c.name, SemanticType::integer});
                        row.emplace_back(1);
                    }
                }
                Table t("R", cols, {row});
                shelf.resolve_concepts(targets, "t2", t, binding);
                bound.insert(targets.begin(), targets.end());
            } else {
                auto victim = pick();
                bool has_dependents = false;
                for (const auto& [id, src] : sources) {
                    if (kinds.count(id) && std::find(src.begin(), src.end(), victim) != src.end()) {
                        has_dependents = true;
                    }
                }
                auto code = code_of([&] { shelf.remove(victim); });
                if (has_dependents) {
                    REQUIRE(code == ErrorCode::concept_in_use);
                } else {
                    REQUIRE_FALSE(code);
                    kinds.erase(victim);
                    sources.erase(victim);
                    ever_known.erase(victim);
                }
            }
            REQUIRE(shelf.concepts().size() == kinds.size());
            for (const auto& c : shelf.concepts()) {
                INFO("seed " << seed << " step " << step << " concept " << c.name);
                REQUIRE(c.kind == kinds.at(c.id));
                REQUIRE(c.known() == expected(c.id));
                if (ever_known.count(c.id)) {
                    REQUIRE(c.known());
                }
                if (c.known()) ever_known.insert(c.id);
            }
        }
    }
}
