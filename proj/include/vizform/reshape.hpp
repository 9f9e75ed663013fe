#pragma once

#include <vizform/table.hpp>

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vizform {

struct Program;
using ProgramPtr = std::shared_ptr<const Program>;

struct InputRef {};

struct PivotLonger {
    ProgramPtr child;
    std::vector<std::string> columns;
    std::string key_name;
    std::string value_name;
};

struct PivotWider {
    ProgramPtr child;
    std::string name_col;
    std::string value_col;
};

struct Separate {
    ProgramPtr child;
    std::string col;
    std::string left_name;
    std::string right_name;
    std::string delimiter;
};

struct SeparateRows {
    ProgramPtr child;
    std::string col;
    std::string delimiter;
};

/// Reshaping program: a chain of operators rooted at the input table.
struct Program {
    std::variant<InputRef, PivotLonger, PivotWider, Separate, SeparateRows> node;
};

/// Delimiters the engine splits on, in enumeration order.
inline constexpr std::array<std::string_view, 8> kDelimiters = {",", ";", "|", "-", "_", "/", ":", " "};

auto input_ref() -> ProgramPtr;
auto pivot_longer(ProgramPtr child, std::vector<std::string> columns, std::string key_name,
                  std::string value_name) -> ProgramPtr;
auto pivot_wider(ProgramPtr child, std::string name_col, std::string value_col) -> ProgramPtr;
auto separate(ProgramPtr child, std::string col, std::string left_name, std::string right_name,
              std::string delimiter) -> ProgramPtr;
auto separate_rows(ProgramPtr child, std::string col, std::string delimiter) -> ProgramPtr;

/// Number of operators (InputRef counts as zero).
auto ast_size(const Program& p) -> int;
/// Operator name: "identity", "pivot_wider", ...
auto op_name(const Program& p) -> std::string_view;
/// Child program, or null for InputRef.
auto child_of(const Program& p) -> ProgramPtr;
/// Copy of `p` with its child replaced.
auto with_child(const Program& p, ProgramPtr child) -> ProgramPtr;

auto eval_program(const Program& p, const Table& t) -> Table;

/// Result schema computed without evaluating rows. PivotWider's generated
/// columns are data dependent and are reported as a wildcard set.
struct AbstractSchema {
    struct Wildcard {
        std::vector<std::string> possible_names;
        SemanticType type = SemanticType::text;
    };
    std::vector<Column> columns;
    std::optional<Wildcard> wildcard;

    /// Upper bound on the number of columns an instance of this schema has.
    [[nodiscard]] auto max_width() const -> std::size_t {
        return columns.size() + (wildcard ? wildcard->possible_names.size() : 0);
    }
};

auto output_schema(const Program& p, const Table& t) -> AbstractSchema;

/// S-expression form, e.g. (pivot_wider (input) name_col="City" value_col="Temperature").
auto to_string(const Program& p) -> std::string;
auto parse_program(std::string_view text) -> ProgramPtr;

/// Column name a PivotWider name cell produces.
auto generated_column_name(const Value& name_cell) -> std::string;

}  // namespace vizform
