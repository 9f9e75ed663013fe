#include <vizform/error.hpp>
#include <vizform/value.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace vizform {

namespace {

auto iequals(std::string_view a, std::string_view b) -> bool {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

auto all_digits(std::string_view s) -> bool {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

auto to_uint(std::string_view s) -> unsigned {
    unsigned v = 0;
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
}

auto checked_date(int y, unsigned m, unsigned d) -> std::optional<Date> {
    using namespace std::chrono;
    year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok()) {
        return std::nullopt;
    }
    return Date{static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count())};
}

auto render_float(double v) -> std::string {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    std::string out(buf.data(), res.ptr);
    if (out.find_first_of(".eEn") == std::string::npos) {
        out += ".0";
    }
    return out;
}

auto integral_key(double v) -> std::optional<std::int64_t> {
    if (std::isfinite(v) && std::floor(v) == v && std::fabs(v) < 9.2e18) {
        return static_cast<std::int64_t>(v);
    }
    return std::nullopt;
}

auto kind_rank(const Value& v) -> int {
    if (v.is_null()) return 0;
    if (v.is_bool()) return 1;
    if (v.is_numeric()) return 2;
    if (v.is_date() || v.is_datetime()) return 3;
    return 4;
}

auto temporal_seconds(const Value& v) -> std::int64_t {
    if (v.is_date()) {
        return static_cast<std::int64_t>(v.as_date().days) * 86400;
    }
    return v.as_datetime().seconds;
}

}  // namespace

auto to_string(SemanticType type) -> std::string_view {
    switch (type) {
        case SemanticType::boolean: return "boolean";
        case SemanticType::integer: return "integer";
        case SemanticType::floating: return "float";
        case SemanticType::date: return "date";
        case SemanticType::datetime: return "datetime";
        case SemanticType::text: return "text";
    }
    return "text";
}

auto semantic_type_from_string(std::string_view name) -> std::optional<SemanticType> {
    for (auto t : {SemanticType::boolean, SemanticType::integer, SemanticType::floating, SemanticType::date,
                   SemanticType::datetime, SemanticType::text}) {
        if (to_string(t) == name) {
            return t;
        }
    }
    return std::nullopt;
}

auto join(SemanticType a, SemanticType b) -> SemanticType {
    if (a == b) {
        return a;
    }
    if (is_numeric(a) && is_numeric(b)) {
        return SemanticType::floating;
    }
    if (is_temporal(a) && is_temporal(b)) {
        return SemanticType::datetime;
    }
    return SemanticType::text;
}

auto is_numeric(SemanticType type) -> bool {
    return type == SemanticType::integer || type == SemanticType::floating;
}

auto is_temporal(SemanticType type) -> bool {
    return type == SemanticType::date || type == SemanticType::datetime;
}

auto Value::as_number() const -> double {
    return is_int() ? static_cast<double>(as_int()) : as_float();
}

auto Value::type() const -> std::optional<SemanticType> {
    switch (storage_.index()) {
        case 1: return SemanticType::boolean;
        case 2: return SemanticType::integer;
        case 3: return SemanticType::floating;
        case 4: return SemanticType::text;
        case 5: return SemanticType::date;
        case 6: return SemanticType::datetime;
        default: return std::nullopt;
    }
}

auto Value::render() const -> std::string {
    switch (storage_.index()) {
        case 0: return {};
        case 1: return as_bool() ? "true" : "false";
        case 2: return std::to_string(as_int());
        case 3: return render_float(as_float());
        case 4: return as_text();
        case 5: return format_date(as_date());
        case 6: return format_datetime(as_datetime());
    }
    return {};
}

auto Value::canonical_key() const -> std::string {
    switch (storage_.index()) {
        case 0: return std::string("\x01null");
        case 3:
            if (auto k = integral_key(as_float())) {
                return std::to_string(*k);
            }
            return render_float(as_float());
        case 4: return std::string(trim(as_text()));
        default: return render();
    }
}

auto canonically_equal(const Value& a, const Value& b) -> bool {
    if (a.is_numeric() && b.is_numeric()) {
        if (a.is_int() && b.is_int()) {
            return a.as_int() == b.as_int();
        }
        return a.as_number() == b.as_number();
    }
    return a.canonical_key() == b.canonical_key();
}

auto canonical_less(const Value& a, const Value& b) -> bool {
    int ra = kind_rank(a);
    int rb = kind_rank(b);
    if (ra != rb) {
        return ra < rb;
    }
    switch (ra) {
        case 0: return false;
        case 1: return a.as_bool() < b.as_bool();
        case 2:
            if (a.is_int() && b.is_int()) {
                return a.as_int() < b.as_int();
            }
            return a.as_number() < b.as_number();
        case 3: return temporal_seconds(a) < temporal_seconds(b);
        default: return trim(a.as_text()) < trim(b.as_text());
    }
}

auto trim(std::string_view text) -> std::string_view {
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!text.empty() && is_space(text.front())) {
        text.remove_prefix(1);
    }
    while (!text.empty() && is_space(text.back())) {
        text.remove_suffix(1);
    }
    return text;
}

auto is_null_token(std::string_view raw) -> bool {
    auto t = trim(raw);
    return t.empty() || iequals(t, "null") || iequals(t, "na");
}

auto parse_bool(std::string_view raw) -> std::optional<bool> {
    auto t = trim(raw);
    if (iequals(t, "true")) {
        return true;
    }
    if (iequals(t, "false")) {
        return false;
    }
    return std::nullopt;
}

auto parse_int(std::string_view raw) -> std::optional<std::int64_t> {
    auto t = trim(raw);
    if (!t.empty() && t.front() == '+') {
        t.remove_prefix(1);
    }
    std::int64_t v = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
        return std::nullopt;
    }
    return v;
}

auto parse_float(std::string_view raw) -> std::optional<double> {
    auto t = trim(raw);
    if (!t.empty() && t.front() == '+') {
        t.remove_prefix(1);
    }
    if (t.empty()) {
        return std::nullopt;
    }
    // from_chars accepts "inf"/"nan"; those stay text.
    if (std::any_of(t.begin(), t.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)) && c != 'e' && c != 'E'; })) {
        return std::nullopt;
    }
    double v = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
        return std::nullopt;
    }
    return v;
}

auto parse_date(std::string_view raw) -> std::optional<Date> {
    auto t = trim(raw);
    // ISO-8601: YYYY-MM-DD
    if (t.size() == 10 && t[4] == '-' && t[7] == '-') {
        auto y = t.substr(0, 4);
        auto m = t.substr(5, 2);
        auto d = t.substr(8, 2);
        if (all_digits(y) && all_digits(m) && all_digits(d)) {
            return checked_date(static_cast<int>(to_uint(y)), to_uint(m), to_uint(d));
        }
        return std::nullopt;
    }
    // US slash form: M/D/YYYY with one or two digit month and day
    auto first = t.find('/');
    auto second = first == std::string_view::npos ? first : t.find('/', first + 1);
    if (second != std::string_view::npos && t.find('/', second + 1) == std::string_view::npos) {
        auto m = t.substr(0, first);
        auto d = t.substr(first + 1, second - first - 1);
        auto y = t.substr(second + 1);
        if (all_digits(m) && all_digits(d) && all_digits(y) && m.size() <= 2 && d.size() <= 2 && y.size() == 4) {
            return checked_date(static_cast<int>(to_uint(y)), to_uint(m), to_uint(d));
        }
    }
    return std::nullopt;
}

auto parse_datetime(std::string_view raw) -> std::optional<DateTime> {
    auto t = trim(raw);
    if (auto d = parse_date(t)) {
        return DateTime{static_cast<std::int64_t>(d->days) * 86400};
    }
    if (t.size() < 16 || (t[10] != 'T' && t[10] != ' ')) {
        return std::nullopt;
    }
    auto date = parse_date(t.substr(0, 10));
    if (!date) {
        return std::nullopt;
    }
    auto clock = t.substr(11);
    if (clock.size() != 5 && clock.size() != 8) {
        return std::nullopt;
    }
    if (clock[2] != ':' || (clock.size() == 8 && clock[5] != ':')) {
        return std::nullopt;
    }
    auto hh = clock.substr(0, 2);
    auto mm = clock.substr(3, 2);
    auto ss = clock.size() == 8 ? clock.substr(6, 2) : std::string_view{"00"};
    if (!all_digits(hh) || !all_digits(mm) || !all_digits(ss)) {
        return std::nullopt;
    }
    unsigned h = to_uint(hh);
    unsigned m = to_uint(mm);
    unsigned s = to_uint(ss);
    if (h > 23 || m > 59 || s > 59) {
        return std::nullopt;
    }
    return DateTime{static_cast<std::int64_t>(date->days) * 86400 + h * 3600 + m * 60 + s};
}

auto parse_as(std::string_view raw, SemanticType type) -> Value {
    if (is_null_token(raw)) {
        return Value::null();
    }
    auto fail = [&]() -> Value {
        throw Error(ErrorCode::type_mismatch,
                    "'" + std::string(raw) + "' is not a valid " + std::string(to_string(type)));
    };
    switch (type) {
        case SemanticType::boolean:
            if (auto v = parse_bool(raw)) return Value(*v);
            return fail();
        case SemanticType::integer:
            if (auto v = parse_int(raw)) return Value(*v);
            return fail();
        case SemanticType::floating:
            if (auto v = parse_float(raw)) return Value(*v);
            return fail();
        case SemanticType::date:
            if (auto v = parse_date(raw)) return Value(*v);
            return fail();
        case SemanticType::datetime:
            if (auto v = parse_datetime(raw)) return Value(*v);
            return fail();
        case SemanticType::text: return Value(std::string(raw));
    }
    return fail();
}

auto parse_scalar(std::string_view raw) -> Value {
    if (is_null_token(raw)) {
        return Value::null();
    }
    if (auto v = parse_bool(raw)) return Value(*v);
    if (auto v = parse_int(raw)) return Value(*v);
    if (auto v = parse_float(raw)) return Value(*v);
    if (auto v = parse_date(raw)) return Value(*v);
    if (auto v = parse_datetime(raw)) return Value(*v);
    return Value(std::string(raw));
}

auto coerce(const Value& value, SemanticType type) -> Value {
    if (value.is_null()) {
        return value;
    }
    auto own = *value.type();
    if (own == type) {
        return value;
    }
    if (type == SemanticType::text) {
        return Value(value.render());
    }
    if (type == SemanticType::floating && own == SemanticType::integer) {
        return Value(static_cast<double>(value.as_int()));
    }
    if (type == SemanticType::datetime && own == SemanticType::date) {
        return Value(DateTime{static_cast<std::int64_t>(value.as_date().days) * 86400});
    }
    if (type == SemanticType::integer && own == SemanticType::floating) {
        if (auto k = integral_key(value.as_float())) {
            return Value(*k);
        }
    }
    throw Error(ErrorCode::type_mismatch,
                "cannot represent " + value.render() + " as " + std::string(to_string(type)));
}

auto make_date(int year, unsigned month, unsigned day) -> Date {
    auto d = checked_date(year, month, day);
    if (!d) {
        throw Error(ErrorCode::malformed_input, "invalid calendar date");
    }
    return *d;
}

auto format_date(Date date) -> std::string {
    using namespace std::chrono;
    year_month_day ymd{sys_days{days{date.days}}};
    auto y = static_cast<int>(ymd.year());
    auto m = static_cast<unsigned>(ymd.month());
    auto d = static_cast<unsigned>(ymd.day());
    if (y < 0 || y > 9999) {
        std::array<char, 32> buf{};
        std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02u", y, m, d);
        return buf.data();
    }
    // Hot in synthesis: row keys render every date cell.
    std::string out = "0000-00-00";
    for (int i = 3; i >= 0; --i, y /= 10) out[static_cast<std::size_t>(i)] = static_cast<char>('0' + y % 10);
    out[5] = static_cast<char>('0' + m / 10);
    out[6] = static_cast<char>('0' + m % 10);
    out[8] = static_cast<char>('0' + d / 10);
    out[9] = static_cast<char>('0' + d % 10);
    return out;
}

auto format_datetime(DateTime dt) -> std::string {
    auto days = dt.seconds >= 0 ? dt.seconds / 86400 : -((-dt.seconds + 86399) / 86400);
    auto rem = dt.seconds - days * 86400;
    std::array<char, 32> buf{};
    std::snprintf(buf.data(), buf.size(), "T%02lld:%02lld:%02lld", static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
    return format_date(Date{static_cast<std::int32_t>(days)}) + buf.data();
}

}  // namespace vizform
