#pragma once

#include <compare>
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace vizform {

/// Calendar date without timezone, stored as days since 1970-01-01.
struct Date {
    std::int32_t days = 0;
    auto operator<=>(const Date&) const = default;
};

/// Date and time of day without timezone, stored as seconds since 1970-01-01T00:00:00.
struct DateTime {
    std::int64_t seconds = 0;
    auto operator<=>(const DateTime&) const = default;
};

/// Column types, ordered from most to least specific on the inference ladder.
enum class SemanticType { boolean, integer, floating, date, datetime, text };

auto to_string(SemanticType type) -> std::string_view;
auto semantic_type_from_string(std::string_view name) -> std::optional<SemanticType>;

/// Least general type able to represent values of both `a` and `b`.
auto join(SemanticType a, SemanticType b) -> SemanticType;

auto is_numeric(SemanticType type) -> bool;
auto is_temporal(SemanticType type) -> bool;

class Value {
public:
    using Storage = std::variant<std::monostate, bool, std::int64_t, double, std::string, Date, DateTime>;

    Value() = default;
    Value(bool v) : storage_(v) {}
    template <std::integral T>
        requires(!std::same_as<T, bool>)
    Value(T v) : storage_(static_cast<std::int64_t>(v)) {}
    Value(double v) : storage_(v) {}
    Value(std::string v) : storage_(std::move(v)) {}
    Value(std::string_view v) : storage_(std::string(v)) {}
    Value(const char* v) : storage_(std::string(v)) {}
    Value(Date v) : storage_(v) {}
    Value(DateTime v) : storage_(v) {}

    static auto null() -> Value { return Value{}; }

    [[nodiscard]] auto is_null() const -> bool { return std::holds_alternative<std::monostate>(storage_); }
    [[nodiscard]] auto is_bool() const -> bool { return std::holds_alternative<bool>(storage_); }
    [[nodiscard]] auto is_int() const -> bool { return std::holds_alternative<std::int64_t>(storage_); }
    [[nodiscard]] auto is_float() const -> bool { return std::holds_alternative<double>(storage_); }
    [[nodiscard]] auto is_numeric() const -> bool { return is_int() || is_float(); }
    [[nodiscard]] auto is_text() const -> bool { return std::holds_alternative<std::string>(storage_); }
    [[nodiscard]] auto is_date() const -> bool { return std::holds_alternative<Date>(storage_); }
    [[nodiscard]] auto is_datetime() const -> bool { return std::holds_alternative<DateTime>(storage_); }

    [[nodiscard]] auto as_bool() const -> bool { return std::get<bool>(storage_); }
    [[nodiscard]] auto as_int() const -> std::int64_t { return std::get<std::int64_t>(storage_); }
    [[nodiscard]] auto as_float() const -> double { return std::get<double>(storage_); }
    [[nodiscard]] auto as_text() const -> const std::string& { return std::get<std::string>(storage_); }
    [[nodiscard]] auto as_date() const -> Date { return std::get<Date>(storage_); }
    [[nodiscard]] auto as_datetime() const -> DateTime { return std::get<DateTime>(storage_); }
    /// Numeric view of an integer or float value.
    [[nodiscard]] auto as_number() const -> double;

    /// The semantic type this value natively belongs to; nullopt for Null.
    [[nodiscard]] auto type() const -> std::optional<SemanticType>;

    /// Textual rendering used for CSV output and for splitting. Floats always
    /// carry a decimal point or exponent so they re-infer as float.
    [[nodiscard]] auto render() const -> std::string;

    /// Key under which values compare canonically: integral floats collapse
    /// onto their integer form and text is trimmed. Null has a distinct key.
    [[nodiscard]] auto canonical_key() const -> std::string;

    [[nodiscard]] auto storage() const -> const Storage& { return storage_; }

    /// Strict (representation) equality.
    friend auto operator==(const Value&, const Value&) -> bool = default;

private:
    Storage storage_;
};

/// Canonical equality: an equivalence relation on values induced by canonical_key().
auto canonically_equal(const Value& a, const Value& b) -> bool;

/// Total order used to sort values for display and deterministic output.
auto canonical_less(const Value& a, const Value& b) -> bool;

// Scalar text parsing. Each returns nullopt when the text does not parse as
// the requested type.
auto is_null_token(std::string_view raw) -> bool;
auto parse_bool(std::string_view raw) -> std::optional<bool>;
auto parse_int(std::string_view raw) -> std::optional<std::int64_t>;
auto parse_float(std::string_view raw) -> std::optional<double>;
auto parse_date(std::string_view raw) -> std::optional<Date>;
auto parse_datetime(std::string_view raw) -> std::optional<DateTime>;

/// Parses raw text as a value of `type`; null tokens become Null. Throws
/// Error(type_mismatch) when the text is not representable.
auto parse_as(std::string_view raw, SemanticType type) -> Value;

/// Parses a single raw cell with its own most specific type.
auto parse_scalar(std::string_view raw) -> Value;

/// Converts a value to `type` (widening or rendering to text). Throws
/// Error(type_mismatch) when no conversion exists.
auto coerce(const Value& value, SemanticType type) -> Value;

auto make_date(int year, unsigned month, unsigned day) -> Date;
auto format_date(Date date) -> std::string;
auto format_datetime(DateTime dt) -> std::string;

auto trim(std::string_view text) -> std::string_view;

}  // namespace vizform
