#include "test_support.hpp"

#include <vizform/error.hpp>
#include <vizform/synthesizer.hpp>

#include <catch_amalgamated.hpp>

#include <functional>
#include <set>

using namespace vizform;
using vizform::testing::naive_subsumes;
using vizform::testing::t0;

namespace {

auto example(std::vector<std::string> cols, std::vector<Row> rows) -> ExampleRelation {
    return ExampleRelation{std::move(cols), std::move(rows)};
}

auto catch_error(auto&& fn) -> std::optional<Error> {
    try {
        fn();
    } catch (const Error& e) {
        return e;
    }
    return std::nullopt;
}

// ---- independent oracle: exhaustive enumeration ----

// Every operator over the capped operand space, written independently of the
// synthesizer's enumerator.
auto all_operators(const Table& in, int depth) -> std::vector<ProgramPtr> {
    std::vector<ProgramPtr> ops;
    const auto& cols = in.columns();
    auto n = cols.size();
    for (std::size_t i = 0; i < n; ++i) {
        std::set<std::string> names;
        for (const auto& r : in.rows()) names.insert(generated_column_name(r[i]));
        if (names.empty() || names.size() > 16) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) ops.push_back(pivot_wider(input_ref(), cols[i].name, cols[j].name));
        }
    }
    if (n >= 2 && n <= 8) {
        for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
            auto size = static_cast<std::size_t>(__builtin_popcount(mask));
            if (size > std::min<std::size_t>(6, n - 1)) continue;
            std::vector<std::string> listed;
            for (std::size_t c = 0; c < n; ++c) {
                if (mask & (1u << c)) listed.push_back(cols[c].name);
            }
            auto d = std::to_string(depth);
            ops.push_back(pivot_longer(input_ref(), listed, "#key" + d, "#val" + d));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (cols[i].type != SemanticType::text) continue;
        for (auto delim : kDelimiters) {
            bool present = false;
            for (const auto& r : in.rows()) {
                present = present || (r[i].is_text() && r[i].as_text().find(delim) != std::string::npos);
            }
            if (!present) continue;
            auto d = std::to_string(depth);
            ops.push_back(separate(input_ref(), cols[i].name, "#left" + d, "#right" + d, std::string(delim)));
            ops.push_back(separate_rows(input_ref(), cols[i].name, std::string(delim)));
        }
    }
    return ops;
}

// Smallest operator count of a satisfying program, if any.
auto brute_force_min_size(const Table& t, const ExampleRelation& e, int max_depth) -> std::optional<int> {
    std::vector<Table> level{t};
    if (naive_subsumes(e, t)) return 0;
    for (int depth = 1; depth <= max_depth; ++depth) {
        std::vector<Table> next;
        for (const auto& in : level) {
            for (const auto& op : all_operators(in, depth)) {
                Table out;
                try {
                    out = eval_program(*op, in);
                } catch (const Error&) {
                    continue;
                }
                if (naive_subsumes(e, out)) return depth;
                if (depth < max_depth) next.push_back(std::move(out));
            }
        }
        level = std::move(next);
    }
    return std::nullopt;
}

}  // namespace

TEST_CASE("pivot scenario: top program is pivot_wider(City, Temperature)") {
    auto e = example({"Atlanta Temp", "Seattle Temp"}, {{Value(45), Value(51)}, {Value(47), Value(45)}});
    auto results = synthesize(t0(), e);
    REQUIRE(!results.empty());
    CHECK(to_string(*results[0].program) == R"((pivot_wider (input) name_col="City" value_col="Temperature"))");
    CHECK(results[0].binding == std::vector<std::string>{"Atlanta", "Seattle"});
    CHECK(results[0].rank.ast_size == 1);
    for (const auto& r : results) {
        auto out = eval_program(*r.program, t0());
        CHECK(check_subsumption(e, out) == r.binding);
    }
}

TEST_CASE("example values typed as text still match numeric cells") {
    auto e = example({"Seattle Temp", "Atlanta Temp"}, {{Value("51"), Value("45")}, {Value("45"), Value("47")}});
    auto results = synthesize(t0(), e);
    REQUIRE(!results.empty());
    CHECK(op_name(*results[0].program) == "pivot_wider");
}

TEST_CASE("identity when the example is already a sub-relation") {
    auto e = example({"Date", "Temperature"}, {{vizform::testing::d(2020, 1, 1), Value(51)},
                                               {vizform::testing::d(2020, 1, 2), Value(47)}});
    auto results = synthesize(t0(), e);
    REQUIRE(!results.empty());
    CHECK(to_string(*results[0].program) == "(input)");
    CHECK(results[0].binding == std::vector<std::string>{"Date", "Temperature"});
    CHECK(results[0].rank.ast_size == 0);
}

TEST_CASE("unreachable example value yields NoProgram with a diagnostic") {
    auto e = example({"Seattle Temp", "Atlanta Temp"}, {{Value(51), Value(45)}, {Value(999), Value(47)}});
    SynthesisStats stats;
    auto err = catch_error([&] { synthesize(t0(), e, {}, &stats); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::no_program);
    CHECK(err->details()["unreachable"] == nlohmann::json::array({"999"}));
    CHECK(err->details()["suggestions"]["999"].size() == 3);
    CHECK(std::string(err->what()).find("999") != std::string::npos);
    CHECK(stats.evaluated == 0);
    CHECK(stats.pruned == 1);
}

TEST_CASE("pivot_longer output names come from the example relation") {
    Table wide("w", {{"Date", SemanticType::text}, {"Seattle", SemanticType::integer}, {"Atlanta", SemanticType::integer}},
               {{Value("d1"), Value(51), Value(45)}, {Value("d2"), Value(45), Value(47)}});
    auto e = example({"City", "Temp"}, {{Value("Seattle"), Value(51)}, {Value("Atlanta"), Value(47)}});
    auto results = synthesize(wide, e);
    REQUIRE(!results.empty());
    CHECK(to_string(*results[0].program) ==
          R"((pivot_longer (input) columns=["Seattle","Atlanta"] key="City" value="Temp"))");
    CHECK(results[0].binding == std::vector<std::string>{"City", "Temp"});
    CHECK(results[0].output.column_names() == std::vector<std::string>{"Date", "City", "Temp"});
}

TEST_CASE("unbound placeholder columns get tidy default names") {
    Table scores("s", {{"id", SemanticType::integer}, {"Score", SemanticType::text}},
                 {{Value(1), Value("math-80")}, {Value(2), Value("art-95")}});
    auto e = example({"Subject"}, {{Value("math")}, {Value("art")}});
    auto results = synthesize(scores, e);
    REQUIRE(!results.empty());
    CHECK(to_string(*results[0].program) ==
          R"((separate (input) col="Score" into=["Subject","part_2"] delim="-"))");
}

TEST_CASE("check_subsumption examples") {
    auto wide = eval_program(*pivot_wider(input_ref(), "City", "Temperature"), t0());
    auto e = example({"a", "b"}, {{Value(45), Value(51)}, {Value(47), Value(45)}});
    CHECK(check_subsumption(e, wide) == std::vector<std::string>{"Atlanta", "Seattle"});

    Table once("o", {{"x", SemanticType::text}, {"y", SemanticType::text}},
               {{Value("x"), Value("y")}, {Value("p"), Value("q")}});
    auto twice = example({"x", "y"}, {{Value("x"), Value("y")}, {Value("x"), Value("y")}});
    CHECK_FALSE(check_subsumption(twice, once));

    auto names_only = example({"Date", "City"}, {{Value("zzz"), Value("yyy")}, {Value("www"), Value("vvv")}});
    CHECK_FALSE(check_subsumption(names_only, t0()));

    // Exact names win over earlier columns with the same values.
    Table dup("d", {{"p", SemanticType::integer}, {"q", SemanticType::integer}},
              {{Value(1), Value(1)}, {Value(2), Value(2)}});
    auto by_name = example({"q"}, {{Value(1)}, {Value(2)}});
    CHECK(check_subsumption(by_name, dup) == std::vector<std::string>{"q"});
    auto by_order = example({"z"}, {{Value(1)}, {Value(2)}});
    CHECK(check_subsumption(by_order, dup) == std::vector<std::string>{"p"});
}

TEST_CASE("example relation validation") {
    auto code = [](ExampleRelation e) {
        auto err = catch_error([&] { validate_example(e); });
        return err ? std::optional<ErrorCode>(err->code()) : std::nullopt;
    };
    CHECK(code(example({}, {{}, {}})) == ErrorCode::invalid_example);
    CHECK(code(example({"a"}, {{Value(1)}})) == ErrorCode::invalid_example);
    CHECK(code(example({"a", "a"}, {{Value(1), Value(2)}, {Value(1), Value(2)}})) == ErrorCode::invalid_example);
    CHECK(code(example({"a"}, {{Value(1)}, {Value::null()}})) == ErrorCode::invalid_example);
    CHECK(code(example({"a"}, {{Value(1)}, {Value(1), Value(2)}})) == ErrorCode::invalid_example);
    CHECK_FALSE(code(example({"a"}, {{Value(1)}, {Value(1)}})));
}

TEST_CASE("abstract_inventory examples") {
    auto inv = abstract_inventory(t0());
    CHECK(inv.count("51"));
    CHECK(inv.count("Seattle"));
    CHECK(inv.count("Temperature"));
    Table dash("d", {{"v", SemanticType::text}}, {{Value("a-b")}});
    auto d = abstract_inventory(dash);
    CHECK(d.count("a"));
    CHECK(d.count("b"));
    CHECK(d.count("a-b"));
}

TEST_CASE("abstract_inventory over-approximates every reachable cell") {
    vizform::testing::TableGenerator gen(101);
    for (int trial = 0; trial < 150; ++trial) {
        auto inst = vizform::testing::sample_instance(gen);
        auto inv = abstract_inventory(inst.table);
        // Output names chosen by the program's own parameters can surface as
        // pivot_longer keys; the synthesizer adds its placeholders the same way.
        for (auto p = inst.program; p; p = child_of(*p)) {
            if (auto* op = std::get_if<PivotLonger>(&p->node)) {
                inv.insert(op->key_name);
                inv.insert(op->value_name);
            } else if (auto* sep = std::get_if<Separate>(&p->node)) {
                inv.insert(sep->left_name);
                inv.insert(sep->right_name);
            }
        }
        auto out = eval_program(*inst.program, inst.table);
        for (const auto& r : out.rows()) {
            for (const auto& v : r) {
                if (v.is_null()) continue;
                INFO(to_string(*inst.program));
                REQUIRE(inv.count(v.canonical_key()));
            }
        }
        for (const auto& c : inst.table.columns()) {
            REQUIRE(inv.count(c.name));
        }
    }
}

TEST_CASE("synthesis agrees with brute-force enumeration") {
    vizform::testing::TableGenerator gen(2024);
    for (int trial = 0; trial < 60; ++trial) {
        auto inst = vizform::testing::sample_instance(gen);
        INFO("trial " << trial << " program " << to_string(*inst.program));
        auto expected = brute_force_min_size(inst.table, inst.example, 2);
        REQUIRE(expected);  // the sampled program itself is a witness
        SynthesisLimits limits;
        limits.timeout = std::chrono::seconds(60);
        auto results = synthesize(inst.table, inst.example, limits);
        REQUIRE(!results.empty());
        CHECK(results.front().rank.ast_size == *expected);
        for (const auto& r : results) {
            auto out = eval_program(*r.program, inst.table);
            REQUIRE(naive_subsumes(inst.example, out));
            REQUIRE(check_subsumption(inst.example, out) == r.binding);
        }
        for (std::size_t i = 1; i < results.size(); ++i) {
            REQUIRE(results[i - 1].rank <= results[i].rank);
        }
    }
}

TEST_CASE("pruning does not change results and synthesis is deterministic") {
    vizform::testing::TableGenerator gen(77);
    for (int trial = 0; trial < 40; ++trial) {
        auto inst = vizform::testing::sample_instance(gen);
        SynthesisLimits pruned;
        pruned.timeout = std::chrono::seconds(60);
        auto unpruned = pruned;
        unpruned.prune = false;
        auto a = synthesize(inst.table, inst.example, pruned);
        auto b = synthesize(inst.table, inst.example, unpruned);
        auto c = synthesize(inst.table, inst.example, pruned);
        REQUIRE(a.size() == b.size());
        REQUIRE(a.size() == c.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(to_string(*a[i].program) == to_string(*b[i].program));
            REQUIRE(a[i].binding == b[i].binding);
            REQUIRE(to_string(*a[i].program) == to_string(*c[i].program));
        }
    }
}

TEST_CASE("results are capped and deduplicated by output") {
    auto e = example({"City"}, {{Value("Seattle")}, {Value("Atlanta")}});
    SynthesisLimits limits;
    limits.max_candidates = 3;
    auto results = synthesize(t0(), e, limits);
    CHECK(results.size() <= 3);
    std::set<std::string> outputs;
    for (const auto& r : results) {
        CHECK(outputs.insert(serialize_table(r.output, TableFormat::csv)).second);
    }
}

TEST_CASE("levenshtein distance") {
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("", "abc") == 3);
    CHECK(levenshtein("51", "51") == 0);
}
