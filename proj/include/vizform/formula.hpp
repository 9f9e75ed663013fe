#pragma once

#include <vizform/table.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vizform {

/// Static type of a formula expression.
struct FormulaType {
    enum class Kind { any, null, boolean, integer, floating, text, date, datetime };
    Kind kind = Kind::any;
    bool list = false;

    static auto of(SemanticType t) -> FormulaType;
    /// Column type a value of this type is stored as; nullopt for any/null.
    [[nodiscard]] auto semantic() const -> std::optional<SemanticType>;
    [[nodiscard]] auto str() const -> std::string;

    friend auto operator==(const FormulaType&, const FormulaType&) -> bool = default;
};

struct FormulaParam {
    std::string name;
    FormulaType type;
};

namespace detail {
struct Expr;
}

/// A parsed, resolved and type-checked derivation formula.
///
/// Concrete syntax: `fn(a, b) = a - b`, or for analytical formulas that see
/// whole columns, `fn(a, index, a_list) = list_avg(slice(a_list, index - 6, index + 1))`.
class Formula {
public:
    [[nodiscard]] auto source() const -> const std::string& { return source_; }
    /// Scalar parameters, in header order.
    [[nodiscard]] auto params() const -> const std::vector<FormulaParam>& { return params_; }
    [[nodiscard]] auto analytical() const -> bool { return analytical_; }
    [[nodiscard]] auto result_type() const -> FormulaType { return result_; }
    [[nodiscard]] auto node_count() const -> std::size_t { return nodes_; }
    [[nodiscard]] auto body() const -> const detail::Expr& { return *body_; }
    /// Slots needed by the evaluator (parameters, index, lists and let bindings).
    [[nodiscard]] auto slot_count() const -> std::size_t { return slots_; }
    /// Slot of the list for scalar parameter i, when the header declares it.
    [[nodiscard]] auto list_slot(std::size_t param) const -> std::optional<std::size_t> { return list_slots_[param]; }
    [[nodiscard]] auto index_slot() const -> std::optional<std::size_t> { return index_slot_; }

private:
    friend auto parse_formula(std::string_view, std::span<const SemanticType>) -> Formula;

    std::string source_;
    std::vector<FormulaParam> params_;
    std::vector<std::optional<std::size_t>> list_slots_;
    std::optional<std::size_t> index_slot_;
    bool analytical_ = false;
    FormulaType result_;
    std::size_t nodes_ = 0;
    std::size_t slots_ = 0;
    std::shared_ptr<const detail::Expr> body_;
};

/// Parses and type-checks `source`. `param_types` gives the scalar parameter
/// types in header order; when empty every parameter is typed `any`.
/// Throws Error(parse_error | unknown_identifier | type_error | arity_error | type_mismatch).
auto parse_formula(std::string_view source, std::span<const SemanticType> param_types = {}) -> Formula;

/// What an analytical formula yields when a slice asks for rows past either
/// end of the column.
enum class WindowRule {
    strict,  // the whole result is Null
    clamp,   // the slice is silently clamped
};

/// Evaluates the formula on one row. `lists` holds one full column per scalar
/// parameter and is required for analytical formulas.
auto eval_row(const Formula& f, std::span<const Value> args, std::int64_t index = 0,
              std::span<const std::vector<Value>> lists = {}, WindowRule rule = WindowRule::strict) -> Value;

/// Extends `t` with `out_name` computed row-wise from `source_columns`.
auto apply_derivation(const Table& t, const Formula& f, std::span<const std::string> source_columns,
                      const std::string& out_name, WindowRule rule = WindowRule::strict) -> Table;

/// Names of the builtin functions, sorted.
auto builtin_names() -> std::vector<std::string>;

/// True when `word` cannot be used as a parameter or let name.
auto is_reserved_word(std::string_view word) -> bool;

}  // namespace vizform
