#pragma once

#include <vizform/reshape.hpp>
#include <vizform/table.hpp>

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace vizform {

/// Small author-provided table over concept names; each row is one intended
/// data point of the chart.
struct ExampleRelation {
    std::vector<std::string> columns;
    std::vector<Row> rows;
};

/// Throws Error(invalid_example) unless `e` has at least one uniquely named
/// column, at least two rows, is rectangular and holds no Nulls.
void validate_example(const ExampleRelation& e);

struct SynthesisLimits {
    int max_depth = 2;
    int max_candidates = 5;
    std::chrono::milliseconds timeout{10'000};
    bool prune = true;
};

struct RankKey {
    int ast_size = 0;
    std::string tie_break;

    auto operator<=>(const RankKey&) const = default;
};

struct SynthesisResult {
    ProgramPtr program;
    /// binding[i] is the output column bound to example column i.
    std::vector<std::string> binding;
    RankKey rank;
    Table output;
};

struct SynthesisStats {
    std::size_t evaluated = 0;
    std::size_t pruned = 0;
};

/// Ranked programs p with E contained in p(t). Throws Error(no_program) with
/// a diagnostic of unreachable example values when the search is exhausted,
/// and Error(timeout) when the budget runs out before any program is found.
auto synthesize(const Table& t, const ExampleRelation& e, const SynthesisLimits& limits = {},
                SynthesisStats* stats = nullptr) -> std::vector<SynthesisResult>;

/// Injective binding of E's columns onto columns of `out` under which E's rows
/// are a sub-multiset of the projected rows. Exact name matches are tried
/// first, then column order.
auto check_subsumption(const ExampleRelation& e, const Table& out) -> std::optional<std::vector<std::string>>;

/// Canonical keys of every non-null value any reshaping program can place in
/// a cell when run on `t`.
auto abstract_inventory(const Table& t) -> std::unordered_set<std::string>;

/// Example values (canonical keys) absent from `inventory`, in first-seen order.
auto unreachable_values(const ExampleRelation& e, const std::unordered_set<std::string>& inventory)
    -> std::vector<std::string>;

auto levenshtein(std::string_view a, std::string_view b) -> std::size_t;

}  // namespace vizform
