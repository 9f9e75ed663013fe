#include <vizform/error.hpp>
#include <vizform/formula.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <unordered_map>

namespace vizform {

namespace detail {

enum class UnOp { neg, logical_not };
enum class BinOp { add, sub, mul, div, mod, eq, ne, lt, le, gt, ge, logical_and, logical_or };
enum class Builtin {
    abs_, round_, floor_, ceil_, sqrt_, pow_, min_, max_,
    concat, upper, lower, trim_, substring, split_part, text_length, to_text,
    year, month, day, weekday,
    list_len, list_get, slice, list_sum, list_avg, list_min, list_max, list_count_nonnull, percentile_rank,
    to_number, to_date,
};

struct Expr {
    enum class Kind { literal, slot, unary, binary, cond, call, let };
    Kind kind = Kind::literal;
    FormulaType type;
    Value literal;
    std::size_t slot = 0;
    UnOp unop = UnOp::neg;
    BinOp binop = BinOp::add;
    Builtin fn = Builtin::abs_;
    std::vector<std::shared_ptr<const Expr>> kids;
};

}  // namespace detail

using detail::BinOp;
using detail::Builtin;
using detail::Expr;
using detail::UnOp;
using Kind = FormulaType::Kind;
using ExprPtr = std::shared_ptr<const Expr>;

namespace {

const std::map<std::string, Builtin, std::less<>>& builtin_table() {
    static const std::map<std::string, Builtin, std::less<>> table{
        {"abs", Builtin::abs_},
        {"round", Builtin::round_},
        {"floor", Builtin::floor_},
        {"ceil", Builtin::ceil_},
        {"sqrt", Builtin::sqrt_},
        {"pow", Builtin::pow_},
        {"min", Builtin::min_},
        {"max", Builtin::max_},
        {"concat", Builtin::concat},
        {"upper", Builtin::upper},
        {"lower", Builtin::lower},
        {"trim", Builtin::trim_},
        {"substring", Builtin::substring},
        {"split_part", Builtin::split_part},
        {"text_length", Builtin::text_length},
        {"to_text", Builtin::to_text},
        {"year", Builtin::year},
        {"month", Builtin::month},
        {"day", Builtin::day},
        {"weekday", Builtin::weekday},
        {"list_len", Builtin::list_len},
        {"list_get", Builtin::list_get},
        {"slice", Builtin::slice},
        {"list_sum", Builtin::list_sum},
        {"list_avg", Builtin::list_avg},
        {"list_min", Builtin::list_min},
        {"list_max", Builtin::list_max},
        {"list_count_nonnull", Builtin::list_count_nonnull},
        {"percentile_rank", Builtin::percentile_rank},
        {"to_number", Builtin::to_number},
        {"to_date", Builtin::to_date},
    };
    return table;
}

constexpr std::array<std::string_view, 11> kReserved = {"let", "in",   "if",    "then", "else", "and",
                                                        "or",  "not", "true", "false", "null"};

auto scalar(Kind k) -> FormulaType {
    return FormulaType{k, false};
}

auto is_numeric(Kind k) -> bool {
    return k == Kind::integer || k == Kind::floating;
}

auto is_temporal(Kind k) -> bool {
    return k == Kind::date || k == Kind::datetime;
}

auto is_open(Kind k) -> bool {
    return k == Kind::any || k == Kind::null;
}

// ---------------------------------------------------------------- lexer

enum class Tok { ident, number, string, punct, end };

struct Token {
    Tok kind = Tok::end;
    std::string text;
    std::size_t offset = 0;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    auto tokens() -> std::vector<Token> {
        std::vector<Token> out;
        while (true) {
            skip_space_and_comments();
            if (pos_ >= src_.size()) {
                out.push_back(Token{Tok::end, "", pos_});
                return out;
            }
            out.push_back(next());
        }
    }

private:
    void skip_space_and_comments() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#' || (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/')) {
                while (pos_ < src_.size() && src_[pos_] != '\n') {
                    ++pos_;
                }
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    auto next() -> Token {
        auto start = pos_;
        char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                ++pos_;
            }
            return Token{Tok::ident, std::string(src_.substr(start, pos_ - start)), start};
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) {
                ++pos_;
            }
            if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                auto save = pos_++;
                if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) {
                    ++pos_;
                }
                if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                        ++pos_;
                    }
                } else {
                    pos_ = save;
                }
            }
            return Token{Tok::number, std::string(src_.substr(start, pos_ - start)), start};
        }
        if (c == '\'' || c == '"') {
            char q = c;
            ++pos_;
            std::string text;
            while (true) {
                if (pos_ >= src_.size()) {
                    throw Error(ErrorCode::parse_error, "unterminated text literal",
                                {{"offset", start}, {"expected", {std::string(1, q)}}});
                }
                if (src_[pos_] == q) {
                    if (pos_ + 1 < src_.size() && src_[pos_ + 1] == q) {
                        text.push_back(q);
                        pos_ += 2;
                        continue;
                    }
                    ++pos_;
                    break;
                }
                text.push_back(src_[pos_++]);
            }
            return Token{Tok::string, std::move(text), start};
        }
        static constexpr std::array<std::string_view, 6> two = {"==", "!=", "<=", ">=", "&&", "||"};
        for (auto op : two) {
            if (src_.substr(pos_, 2) == op) {
                pos_ += 2;
                return Token{Tok::punct, std::string(op), start};
            }
        }
        if (std::string_view("()+-*/%<>=,!").find(c) != std::string_view::npos) {
            ++pos_;
            return Token{Tok::punct, std::string(1, c), start};
        }
        throw Error(ErrorCode::parse_error, std::string("unexpected character '") + c + "'",
                    {{"offset", start}, {"expected", nlohmann::json::array()}});
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------- type rules

[[noreturn]] void type_error(const std::string& msg) {
    throw Error(ErrorCode::type_error, msg);
}

auto unify(FormulaType a, FormulaType b, const char* what) -> FormulaType {
    if (a.list != b.list) {
        if (a.kind == Kind::null && !a.list) return b;
        if (b.kind == Kind::null && !b.list) return a;
        type_error(std::string(what) + ": cannot mix a list and a scalar");
    }
    auto wrap = [&](Kind k) { return FormulaType{k, a.list}; };
    if (a.kind == b.kind) return a;
    if (a.kind == Kind::null) return b;
    if (b.kind == Kind::null) return a;
    if (a.kind == Kind::any || b.kind == Kind::any) return wrap(Kind::any);
    if (is_numeric(a.kind) && is_numeric(b.kind)) return wrap(Kind::floating);
    if (is_temporal(a.kind) && is_temporal(b.kind)) return wrap(Kind::datetime);
    type_error(std::string(what) + ": incompatible types " + a.str() + " and " + b.str());
}

auto comparable(Kind a, Kind b) -> bool {
    if (is_open(a) || is_open(b) || a == b) return true;
    return (is_numeric(a) && is_numeric(b)) || (is_temporal(a) && is_temporal(b));
}

auto binary_type(BinOp op, FormulaType l, FormulaType r) -> FormulaType {
    auto name = [&]() -> std::string {
        static const char* names[] = {"+", "-", "*", "/", "%", "==", "!=", "<", "<=", ">", ">=", "and", "or"};
        return names[static_cast<int>(op)];
    };
    if (l.list || r.list) {
        type_error("operator " + name() + " does not apply to lists");
    }
    auto a = l.kind;
    auto b = r.kind;
    switch (op) {
        case BinOp::logical_and:
        case BinOp::logical_or:
            if ((a != Kind::boolean && !is_open(a)) || (b != Kind::boolean && !is_open(b))) {
                type_error("operator " + name() + " needs boolean operands, got " + l.str() + " and " + r.str());
            }
            return scalar(Kind::boolean);
        case BinOp::eq:
        case BinOp::ne:
        case BinOp::lt:
        case BinOp::le:
        case BinOp::gt:
        case BinOp::ge:
            if (!comparable(a, b)) {
                type_error("cannot compare " + l.str() + " with " + r.str());
            }
            return scalar(Kind::boolean);
        default: break;
    }
    if (a == Kind::null || b == Kind::null) return scalar(Kind::null);
    bool a_num = is_numeric(a) || a == Kind::any;
    bool b_num = is_numeric(b) || b == Kind::any;
    if (op == BinOp::add || op == BinOp::sub) {
        if (a == Kind::date && (b == Kind::integer || b == Kind::any)) return scalar(Kind::date);
        if (op == BinOp::add && b == Kind::date && (a == Kind::integer || a == Kind::any)) return scalar(Kind::date);
        if (op == BinOp::sub && a == Kind::date && b == Kind::date) return scalar(Kind::integer);
    }
    if (!a_num || !b_num) {
        type_error("operator " + name() + " needs numeric operands, got " + l.str() + " and " + r.str());
    }
    if (a == Kind::any || b == Kind::any) {
        return scalar(op == BinOp::div ? Kind::floating : Kind::any);
    }
    if (op == BinOp::div) return scalar(Kind::floating);
    if (a == Kind::integer && b == Kind::integer) return scalar(Kind::integer);
    return scalar(Kind::floating);
}

struct ArgCheck {
    const std::string& fn;
    const std::vector<FormulaType>& args;

    [[noreturn]] void bad(std::size_t i, const char* wanted) const {
        type_error(fn + ": argument " + std::to_string(i + 1) + " must be " + wanted + ", got " + args[i].str());
    }
    void arity(std::size_t lo, std::size_t hi) const {
        if (args.size() < lo || args.size() > hi) {
            std::string want = lo == hi ? std::to_string(lo) : std::to_string(lo) + ".." + std::to_string(hi);
            if (hi == SIZE_MAX) want = "at least " + std::to_string(lo);
            throw Error(ErrorCode::arity_error,
                        fn + " takes " + want + " argument(s), got " + std::to_string(args.size()),
                        {{"function", fn}});
        }
    }
    void numeric(std::size_t i) const {
        if (args[i].list || !(is_numeric(args[i].kind) || is_open(args[i].kind))) bad(i, "numeric");
    }
    void integer(std::size_t i) const {
        if (args[i].list || !(args[i].kind == Kind::integer || is_open(args[i].kind))) bad(i, "an integer");
    }
    void text(std::size_t i) const {
        if (args[i].list || !(args[i].kind == Kind::text || is_open(args[i].kind))) bad(i, "text");
    }
    void temporal(std::size_t i) const {
        if (args[i].list || !(is_temporal(args[i].kind) || is_open(args[i].kind))) bad(i, "a date");
    }
    void scalar_arg(std::size_t i) const {
        if (args[i].list) bad(i, "a scalar");
    }
    void list(std::size_t i) const {
        if (!args[i].list) bad(i, "a list");
    }
    void numeric_list(std::size_t i) const {
        list(i);
        if (!(is_numeric(args[i].kind) || is_open(args[i].kind))) bad(i, "a numeric list");
    }
};

auto call_type(const std::string& name, Builtin fn, const std::vector<FormulaType>& args) -> FormulaType {
    ArgCheck c{name, args};
    auto numeric_result = [](FormulaType t) { return scalar(t.kind == Kind::null ? Kind::null : t.kind); };
    switch (fn) {
        case Builtin::abs_:
            c.arity(1, 1);
            c.numeric(0);
            return numeric_result(args[0]);
        case Builtin::round_:
            c.arity(1, 2);
            c.numeric(0);
            if (args.size() == 2) {
                c.integer(1);
                return scalar(Kind::floating);
            }
            return numeric_result(args[0]);
        case Builtin::floor_:
        case Builtin::ceil_:
            c.arity(1, 1);
            c.numeric(0);
            return scalar(Kind::integer);
        case Builtin::sqrt_:
            c.arity(1, 1);
            c.numeric(0);
            return scalar(Kind::floating);
        case Builtin::pow_:
            c.arity(2, 2);
            c.numeric(0);
            c.numeric(1);
            return scalar(Kind::floating);
        case Builtin::min_:
        case Builtin::max_: {
            c.arity(2, SIZE_MAX);
            auto t = args[0];
            for (std::size_t i = 0; i < args.size(); ++i) {
                c.scalar_arg(i);
                t = unify(t, args[i], name.c_str());
            }
            if (t.kind == Kind::boolean) c.bad(0, "comparable");
            return t;
        }
        case Builtin::concat:
            c.arity(1, SIZE_MAX);
            for (std::size_t i = 0; i < args.size(); ++i) c.scalar_arg(i);
            return scalar(Kind::text);
        case Builtin::upper:
        case Builtin::lower:
        case Builtin::trim_:
            c.arity(1, 1);
            c.text(0);
            return scalar(Kind::text);
        case Builtin::substring:
            c.arity(3, 3);
            c.text(0);
            c.integer(1);
            c.integer(2);
            return scalar(Kind::text);
        case Builtin::split_part:
            c.arity(3, 3);
            c.text(0);
            c.text(1);
            c.integer(2);
            return scalar(Kind::text);
        case Builtin::text_length:
            c.arity(1, 1);
            c.text(0);
            return scalar(Kind::integer);
        case Builtin::to_text:
            c.arity(1, 1);
            c.scalar_arg(0);
            return scalar(Kind::text);
        case Builtin::year:
        case Builtin::month:
        case Builtin::day:
        case Builtin::weekday:
            c.arity(1, 1);
            c.temporal(0);
            return scalar(Kind::integer);
        case Builtin::list_len:
        case Builtin::list_count_nonnull:
            c.arity(1, 1);
            c.list(0);
            return scalar(Kind::integer);
        case Builtin::list_get:
            c.arity(2, 2);
            c.list(0);
            c.integer(1);
            return scalar(args[0].kind);
        case Builtin::slice:
            c.arity(3, 3);
            c.list(0);
            c.integer(1);
            c.integer(2);
            return args[0];
        case Builtin::list_sum:
            c.arity(1, 1);
            c.numeric_list(0);
            return scalar(args[0].kind == Kind::null ? Kind::integer : args[0].kind);
        case Builtin::list_avg:
            c.arity(1, 1);
            c.numeric_list(0);
            return scalar(Kind::floating);
        case Builtin::list_min:
        case Builtin::list_max:
            c.arity(1, 1);
            c.list(0);
            if (args[0].kind == Kind::boolean) c.bad(0, "a list of comparable values");
            return scalar(args[0].kind);
        case Builtin::percentile_rank:
            c.arity(2, 2);
            c.list(0);
            c.scalar_arg(1);
            if (!comparable(args[0].kind, args[1].kind)) {
                type_error("percentile_rank: cannot rank " + args[1].str() + " within " + args[0].str());
            }
            return scalar(Kind::floating);
        case Builtin::to_number:
            c.arity(1, 1);
            c.scalar_arg(0);
            if (!(args[0].kind == Kind::text || is_numeric(args[0].kind) || is_open(args[0].kind))) {
                c.bad(0, "text or numeric");
            }
            return scalar(Kind::floating);
        case Builtin::to_date:
            c.arity(1, 1);
            c.scalar_arg(0);
            if (!(args[0].kind == Kind::text || is_temporal(args[0].kind) || is_open(args[0].kind))) {
                c.bad(0, "text or a date");
            }
            return scalar(Kind::date);
    }
    type_error("unknown builtin");
}

// ---------------------------------------------------------------- parser

struct Binding {
    std::string name;
    std::size_t slot;
    FormulaType type;
};

class Parser {
public:
    Parser(std::vector<Token> tokens, std::string_view source) : toks_(std::move(tokens)), src_(source) {}

    auto header() -> std::vector<std::string> {
        expect_ident("function name");
        expect_punct("(");
        std::vector<std::string> params;
        if (!at_punct(")")) {
            while (true) {
                params.push_back(expect_ident("parameter name"));
                if (at_punct(",")) {
                    advance();
                    continue;
                }
                break;
            }
        }
        expect_punct(")");
        expect_punct("=");
        return params;
    }

    void bind(std::string name, std::size_t slot, FormulaType type) {
        scope_.push_back(Binding{std::move(name), slot, type});
    }

    auto expression() -> ExprPtr {
        if (at_keyword("let")) {
            advance();
            auto name = expect_ident("let name");
            if (is_reserved_word(name)) fail("a let name", "'" + name + "' is reserved");
            expect_punct("=");
            auto value = expression();
            expect_keyword("in");
            auto slot = next_slot++;
            bind(name, slot, value->type);
            auto body = expression();
            scope_.pop_back();
            auto e = node(Expr::Kind::let, body->type);
            e->slot = slot;
            e->kids = {value, body};
            return e;
        }
        if (at_keyword("if")) {
            advance();
            auto c = expression();
            expect_keyword("then");
            auto t = expression();
            expect_keyword("else");
            auto f = expression();
            if (c->type.list || !(c->type.kind == Kind::boolean || is_open(c->type.kind))) {
                type_error("if condition must be boolean, got " + c->type.str());
            }
            auto e = node(Expr::Kind::cond, unify(t->type, f->type, "if branches"));
            e->kids = {c, t, f};
            return e;
        }
        return disjunction();
    }

    void finish() {
        if (peek().kind != Tok::end) {
            fail("end of formula", "unexpected '" + peek().text + "'");
        }
    }

    std::size_t next_slot = 0;
    std::size_t nodes = 0;

private:
    auto node(Expr::Kind kind, FormulaType type) -> std::shared_ptr<Expr> {
        ++nodes;
        auto e = std::make_shared<Expr>();
        e->kind = kind;
        e->type = type;
        return e;
    }

    auto binary(BinOp op, ExprPtr l, ExprPtr r) -> ExprPtr {
        auto e = node(Expr::Kind::binary, binary_type(op, l->type, r->type));
        e->binop = op;
        e->kids = {std::move(l), std::move(r)};
        return e;
    }

    auto disjunction() -> ExprPtr {
        auto l = conjunction();
        while (at_keyword("or") || at_punct("||")) {
            advance();
            l = binary(BinOp::logical_or, l, conjunction());
        }
        return l;
    }

    auto conjunction() -> ExprPtr {
        auto l = negation();
        while (at_keyword("and") || at_punct("&&")) {
            advance();
            l = binary(BinOp::logical_and, l, negation());
        }
        return l;
    }

    auto negation() -> ExprPtr {
        if (at_keyword("not") || at_punct("!")) {
            advance();
            auto inner = negation();
            if (inner->type.list || !(inner->type.kind == Kind::boolean || is_open(inner->type.kind))) {
                type_error("not needs a boolean, got " + inner->type.str());
            }
            auto e = node(Expr::Kind::unary, scalar(Kind::boolean));
            e->unop = UnOp::logical_not;
            e->kids = {inner};
            return e;
        }
        return comparison();
    }

    auto comparison() -> ExprPtr {
        auto l = additive();
        static const std::array<std::pair<const char*, BinOp>, 7> ops = {{{"==", BinOp::eq},
                                                                         {"!=", BinOp::ne},
                                                                         {"<=", BinOp::le},
                                                                         {">=", BinOp::ge},
                                                                         {"<", BinOp::lt},
                                                                         {">", BinOp::gt},
                                                                         {"=", BinOp::eq}}};
        for (auto [text, op] : ops) {
            if (at_punct(text)) {
                advance();
                return binary(op, l, additive());
            }
        }
        return l;
    }

    auto additive() -> ExprPtr {
        auto l = multiplicative();
        while (at_punct("+") || at_punct("-")) {
            auto op = peek().text == "+" ? BinOp::add : BinOp::sub;
            advance();
            l = binary(op, l, multiplicative());
        }
        return l;
    }

    auto multiplicative() -> ExprPtr {
        auto l = unary();
        while (at_punct("*") || at_punct("/") || at_punct("%")) {
            auto op = peek().text == "*" ? BinOp::mul : peek().text == "/" ? BinOp::div : BinOp::mod;
            advance();
            l = binary(op, l, unary());
        }
        return l;
    }

    auto unary() -> ExprPtr {
        if (at_punct("-")) {
            advance();
            auto inner = unary();
            if (inner->type.list || !(is_numeric(inner->type.kind) || is_open(inner->type.kind))) {
                type_error("unary minus needs a number, got " + inner->type.str());
            }
            if (inner->kind == Expr::Kind::literal && inner->literal.is_numeric()) {
                auto e = node(Expr::Kind::literal, inner->type);
                e->literal = inner->literal.is_int() ? Value(-inner->literal.as_int()) : Value(-inner->literal.as_float());
                return e;
            }
            auto e = node(Expr::Kind::unary, inner->type);
            e->unop = UnOp::neg;
            e->kids = {inner};
            return e;
        }
        return primary();
    }

    auto primary() -> ExprPtr {
        const auto& t = peek();
        switch (t.kind) {
            case Tok::number: {
                advance();
                if (auto i = parse_int(t.text)) {
                    auto e = node(Expr::Kind::literal, scalar(Kind::integer));
                    e->literal = Value(*i);
                    return e;
                }
                if (auto f = parse_float(t.text)) {
                    auto e = node(Expr::Kind::literal, scalar(Kind::floating));
                    e->literal = Value(*f);
                    return e;
                }
                fail("a number", "malformed number '" + t.text + "'");
            }
            case Tok::string: {
                advance();
                auto e = node(Expr::Kind::literal, scalar(Kind::text));
                e->literal = Value(t.text);
                return e;
            }
            case Tok::punct:
                if (t.text == "(") {
                    advance();
                    auto inner = expression();
                    expect_punct(")");
                    return inner;
                }
                fail("an expression", "unexpected '" + t.text + "'");
            case Tok::end: fail("an expression", "unexpected end of formula");
            case Tok::ident: break;
        }
        auto name = t.text;
        auto at = t.offset;
        advance();
        if (name == "true" || name == "false") {
            auto e = node(Expr::Kind::literal, scalar(Kind::boolean));
            e->literal = Value(name == "true");
            return e;
        }
        if (name == "null") {
            return node(Expr::Kind::literal, scalar(Kind::null));
        }
        if (is_reserved_word(name)) {
            offset_fail(at, "an expression", "unexpected keyword '" + name + "'");
        }
        if (at_punct("(")) {
            advance();
            std::vector<ExprPtr> args;
            if (!at_punct(")")) {
                while (true) {
                    args.push_back(expression());
                    if (at_punct(",")) {
                        advance();
                        continue;
                    }
                    break;
                }
            }
            expect_punct(")");
            auto it = builtin_table().find(name);
            if (it == builtin_table().end()) {
                throw Error(ErrorCode::unknown_identifier, "unknown function '" + name + "'",
                            {{"identifier", name}, {"offset", at}});
            }
            std::vector<FormulaType> types;
            for (const auto& a : args) types.push_back(a->type);
            auto e = node(Expr::Kind::call, call_type(name, it->second, types));
            e->fn = it->second;
            e->kids = std::move(args);
            return e;
        }
        for (auto b = scope_.rbegin(); b != scope_.rend(); ++b) {
            if (b->name == name) {
                auto e = node(Expr::Kind::slot, b->type);
                e->slot = b->slot;
                return e;
            }
        }
        throw Error(ErrorCode::unknown_identifier, "unknown identifier '" + name + "'",
                    {{"identifier", name}, {"offset", at}});
    }

    auto peek() const -> const Token& { return toks_[pos_]; }
    void advance() {
        if (pos_ + 1 < toks_.size()) ++pos_;
    }
    auto at_punct(std::string_view p) const -> bool { return peek().kind == Tok::punct && peek().text == p; }
    auto at_keyword(std::string_view k) const -> bool { return peek().kind == Tok::ident && peek().text == k; }

    void expect_punct(std::string_view p) {
        if (!at_punct(p)) {
            fail("'" + std::string(p) + "'", peek().kind == Tok::end ? "unexpected end of formula"
                                                                     : "unexpected '" + peek().text + "'");
        }
        advance();
    }
    void expect_keyword(std::string_view k) {
        if (!at_keyword(k)) {
            fail("'" + std::string(k) + "'", peek().kind == Tok::end ? "unexpected end of formula"
                                                                     : "unexpected '" + peek().text + "'");
        }
        advance();
    }
    auto expect_ident(const std::string& what) -> std::string {
        if (peek().kind != Tok::ident) {
            fail(what, peek().kind == Tok::end ? "unexpected end of formula" : "unexpected '" + peek().text + "'");
        }
        auto s = peek().text;
        advance();
        return s;
    }

    [[noreturn]] void fail(const std::string& expected, const std::string& msg) const {
        offset_fail(peek().offset, expected, msg);
    }

    [[noreturn]] void offset_fail(std::size_t offset, const std::string& expected, const std::string& msg) const {
        std::size_t line = 1;
        std::size_t col = 1;
        for (std::size_t i = 0; i < offset && i < src_.size(); ++i) {
            if (src_[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(ErrorCode::parse_error,
                    msg + " at line " + std::to_string(line) + ", column " + std::to_string(col) + " (expected " +
                        expected + ")",
                    {{"offset", offset}, {"line", line}, {"column", col}, {"expected", {expected}}});
    }

    std::vector<Token> toks_;
    std::string_view src_;
    std::size_t pos_ = 0;
    std::vector<Binding> scope_;
};

// ---------------------------------------------------------------- evaluator

struct Slot {
    Value scalar;
    const std::vector<Value>* list = nullptr;
    std::shared_ptr<const std::vector<Value>> owned;
    bool is_list = false;

    static auto of(Value v) -> Slot { return Slot{std::move(v), nullptr, nullptr, false}; }
    static auto borrowed(const std::vector<Value>& l) -> Slot { return Slot{Value{}, &l, nullptr, true}; }
    static auto owning(std::vector<Value> l) -> Slot {
        auto p = std::make_shared<const std::vector<Value>>(std::move(l));
        return Slot{Value{}, p.get(), p, true};
    }
    [[nodiscard]] auto items() const -> const std::vector<Value>& { return *list; }
};

[[noreturn]] void eval_error(const std::string& msg) {
    throw Error(ErrorCode::eval_error, msg);
}

auto finite_or_null(double v) -> Value {
    return std::isfinite(v) ? Value(v) : Value::null();
}

auto numeric_arg(const Value& v, const char* what) -> double {
    if (!v.is_numeric()) eval_error(std::string(what) + ": expected a number, got '" + v.render() + "'");
    return v.as_number();
}

auto integer_arg(const Value& v, const char* what) -> std::int64_t {
    if (v.is_int()) return v.as_int();
    if (v.is_float() && std::floor(v.as_float()) == v.as_float() && std::fabs(v.as_float()) < 9e18) {
        return static_cast<std::int64_t>(v.as_float());
    }
    eval_error(std::string(what) + ": expected an integer, got '" + v.render() + "'");
}

auto text_arg(const Value& v, const char* what) -> const std::string& {
    if (!v.is_text()) eval_error(std::string(what) + ": expected text, got '" + v.render() + "'");
    return v.as_text();
}

auto seconds_of(const Value& v) -> std::int64_t {
    return v.is_date() ? static_cast<std::int64_t>(v.as_date().days) * 86400 : v.as_datetime().seconds;
}

auto date_of(const Value& v, const char* what) -> Date {
    if (v.is_date()) return v.as_date();
    if (v.is_datetime()) {
        auto s = v.as_datetime().seconds;
        auto days = s >= 0 ? s / 86400 : -((-s + 86399) / 86400);
        return Date{static_cast<std::int32_t>(days)};
    }
    eval_error(std::string(what) + ": expected a date, got '" + v.render() + "'");
}

// Three-way comparison of two non-null values; nullopt when incomparable.
auto compare(const Value& a, const Value& b) -> std::optional<int> {
    auto sign = [](auto x, auto y) { return x < y ? -1 : (y < x ? 1 : 0); };
    if (a.is_int() && b.is_int()) return sign(a.as_int(), b.as_int());
    if (a.is_numeric() && b.is_numeric()) return sign(a.as_number(), b.as_number());
    if ((a.is_date() || a.is_datetime()) && (b.is_date() || b.is_datetime())) return sign(seconds_of(a), seconds_of(b));
    if (a.is_text() && b.is_text()) return sign(a.as_text(), b.as_text());
    if (a.is_bool() && b.is_bool()) return sign(a.as_bool(), b.as_bool());
    return std::nullopt;
}

// UTF-8 code point boundaries of `s`.
auto code_points(const std::string& s) -> std::vector<std::size_t> {
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) starts.push_back(i);
    }
    starts.push_back(s.size());
    return starts;
}

struct Context {
    std::vector<Slot> slots;
    bool truncated = false;
    std::size_t steps = 0;
    std::size_t budget = 0;
};

auto eval(const Expr& e, Context& ctx) -> Slot;

auto eval_scalar(const Expr& e, Context& ctx) -> Value {
    auto s = eval(e, ctx);
    if (s.is_list) eval_error("expected a scalar, got a list");
    return std::move(s.scalar);
}

auto arithmetic(BinOp op, const Value& a, const Value& b) -> Value {
    if (a.is_null() || b.is_null()) return Value::null();
    if (op == BinOp::add || op == BinOp::sub) {
        if (a.is_date() && b.is_numeric()) {
            auto delta = integer_arg(b, "date arithmetic");
            auto days = static_cast<std::int64_t>(a.as_date().days) + (op == BinOp::add ? delta : -delta);
            return Value(Date{static_cast<std::int32_t>(days)});
        }
        if (op == BinOp::add && a.is_numeric() && b.is_date()) {
            return Value(Date{static_cast<std::int32_t>(b.as_date().days + integer_arg(a, "date arithmetic"))});
        }
        if (op == BinOp::sub && a.is_date() && b.is_date()) {
            return Value(static_cast<std::int64_t>(a.as_date().days) - b.as_date().days);
        }
    }
    const char* what = "arithmetic";
    if (op == BinOp::div) {
        double y = numeric_arg(b, what);
        if (y == 0) return Value::null();
        return finite_or_null(numeric_arg(a, what) / y);
    }
    if (a.is_int() && b.is_int()) {
        std::int64_t x = a.as_int();
        std::int64_t y = b.as_int();
        std::int64_t r = 0;
        bool overflow = false;
        switch (op) {
            case BinOp::add: overflow = __builtin_add_overflow(x, y, &r); break;
            case BinOp::sub: overflow = __builtin_sub_overflow(x, y, &r); break;
            case BinOp::mul: overflow = __builtin_mul_overflow(x, y, &r); break;
            case BinOp::mod:
                if (y == 0 || (x == INT64_MIN && y == -1)) return Value::null();
                r = x % y;
                break;
            default: eval_error("bad arithmetic operator");
        }
        return overflow ? Value::null() : Value(r);
    }
    double x = numeric_arg(a, what);
    double y = numeric_arg(b, what);
    switch (op) {
        case BinOp::add: return finite_or_null(x + y);
        case BinOp::sub: return finite_or_null(x - y);
        case BinOp::mul: return finite_or_null(x * y);
        case BinOp::mod: return y == 0 ? Value::null() : finite_or_null(std::fmod(x, y));
        default: eval_error("bad arithmetic operator");
    }
}

auto eval_binary(const Expr& e, Context& ctx) -> Value {
    auto op = e.binop;
    if (op == BinOp::logical_and || op == BinOp::logical_or) {
        // Kleene logic: a decided operand wins over Null.
        auto l = eval_scalar(*e.kids[0], ctx);
        bool dominant = op == BinOp::logical_or;
        if (l.is_bool() && l.as_bool() == dominant) return Value(dominant);
        auto r = eval_scalar(*e.kids[1], ctx);
        if (r.is_bool() && r.as_bool() == dominant) return Value(dominant);
        if (l.is_null() || r.is_null()) return Value::null();
        if (!l.is_bool() || !r.is_bool()) eval_error("logical operator on non-boolean");
        return Value(!dominant);
    }
    auto l = eval_scalar(*e.kids[0], ctx);
    auto r = eval_scalar(*e.kids[1], ctx);
    switch (op) {
        case BinOp::eq:
        case BinOp::ne:
        case BinOp::lt:
        case BinOp::le:
        case BinOp::gt:
        case BinOp::ge: {
            if (l.is_null() || r.is_null()) return Value::null();
            auto c = compare(l, r);
            if (!c) {
                if (op == BinOp::eq || op == BinOp::ne) {
                    bool same = canonically_equal(l, r);
                    return Value(op == BinOp::eq ? same : !same);
                }
                eval_error("cannot compare '" + l.render() + "' with '" + r.render() + "'");
            }
            switch (op) {
                case BinOp::eq: return Value(*c == 0);
                case BinOp::ne: return Value(*c != 0);
                case BinOp::lt: return Value(*c < 0);
                case BinOp::le: return Value(*c <= 0);
                case BinOp::gt: return Value(*c > 0);
                default: return Value(*c >= 0);
            }
        }
        default: return arithmetic(op, l, r);
    }
}

auto list_values(const Slot& s) -> std::vector<Value> {
    std::vector<Value> out;
    for (const auto& v : s.items()) {
        if (!v.is_null()) out.push_back(v);
    }
    return out;
}

auto eval_call(const Expr& e, Context& ctx) -> Slot {
    std::vector<Slot> args;
    args.reserve(e.kids.size());
    for (const auto& k : e.kids) {
        args.push_back(eval(*k, ctx));
    }
    auto scalar_at = [&](std::size_t i) -> const Value& { return args[i].scalar; };
    // Scalar builtins propagate Null from any scalar argument.
    bool any_null = false;
    for (const auto& a : args) {
        any_null = any_null || (!a.is_list && a.scalar.is_null());
    }
    auto ret = [](Value v) { return Slot::of(std::move(v)); };
    switch (e.fn) {
        case Builtin::list_len: return ret(Value(static_cast<std::int64_t>(args[0].items().size())));
        case Builtin::list_count_nonnull: return ret(Value(static_cast<std::int64_t>(list_values(args[0]).size())));
        case Builtin::list_sum: {
            auto vals = list_values(args[0]);
            bool all_int = std::all_of(vals.begin(), vals.end(), [](const Value& v) { return v.is_int(); });
            if (all_int && e.type.kind != Kind::floating) {
                std::int64_t sum = 0;
                for (const auto& v : vals) {
                    if (__builtin_add_overflow(sum, v.as_int(), &sum)) return ret(Value::null());
                }
                return ret(Value(sum));
            }
            double sum = 0;
            for (const auto& v : vals) sum += numeric_arg(v, "list_sum");
            return ret(finite_or_null(sum));
        }
        case Builtin::list_avg: {
            auto vals = list_values(args[0]);
            if (vals.empty()) return ret(Value::null());
            double sum = 0;
            for (const auto& v : vals) sum += numeric_arg(v, "list_avg");
            return ret(finite_or_null(sum / static_cast<double>(vals.size())));
        }
        case Builtin::list_min:
        case Builtin::list_max: {
            auto vals = list_values(args[0]);
            if (vals.empty()) return ret(Value::null());
            Value best = vals[0];
            for (const auto& v : vals) {
                auto c = compare(v, best);
                if (!c) eval_error("list values are not comparable");
                if ((e.fn == Builtin::list_min && *c < 0) || (e.fn == Builtin::list_max && *c > 0)) best = v;
            }
            return ret(best);
        }
        case Builtin::list_get: {
            if (scalar_at(1).is_null()) return ret(Value::null());
            auto i = integer_arg(scalar_at(1), "list_get");
            const auto& items = args[0].items();
            if (i < 0 || i >= static_cast<std::int64_t>(items.size())) return ret(Value::null());
            return ret(items[static_cast<std::size_t>(i)]);
        }
        case Builtin::slice: {
            const auto& items = args[0].items();
            auto n = static_cast<std::int64_t>(items.size());
            if (scalar_at(1).is_null() || scalar_at(2).is_null()) {
                ctx.truncated = true;
                return Slot::owning({});
            }
            auto a = integer_arg(scalar_at(1), "slice");
            auto b = integer_arg(scalar_at(2), "slice");
            if (a < 0 || b > n) ctx.truncated = true;
            auto lo = std::clamp<std::int64_t>(a, 0, n);
            auto hi = std::clamp<std::int64_t>(b, 0, n);
            if (hi < lo) hi = lo;
            return Slot::owning(std::vector<Value>(items.begin() + lo, items.begin() + hi));
        }
        case Builtin::percentile_rank: {
            if (scalar_at(1).is_null()) return ret(Value::null());
            auto vals = list_values(args[0]);
            if (vals.empty()) return ret(Value::null());
            std::size_t below = 0;
            for (const auto& v : vals) {
                auto c = compare(v, scalar_at(1));
                if (!c) eval_error("percentile_rank: values are not comparable");
                below += *c <= 0 ? 1 : 0;
            }
            return ret(Value(static_cast<double>(below) / static_cast<double>(vals.size())));
        }
        default: break;
    }
    if (any_null) return ret(Value::null());
    const auto& x = scalar_at(0);
    switch (e.fn) {
        case Builtin::abs_:
            if (x.is_int()) {
                if (x.as_int() == INT64_MIN) return ret(Value::null());
                return ret(Value(x.as_int() < 0 ? -x.as_int() : x.as_int()));
            }
            return ret(finite_or_null(std::fabs(numeric_arg(x, "abs"))));
        case Builtin::round_:
            if (args.size() == 2) {
                auto digits = integer_arg(scalar_at(1), "round");
                double scale = std::pow(10.0, static_cast<double>(digits));
                return ret(finite_or_null(std::round(numeric_arg(x, "round") * scale) / scale));
            }
            if (x.is_int()) return ret(x);
            return ret(finite_or_null(std::round(numeric_arg(x, "round"))));
        case Builtin::floor_:
        case Builtin::ceil_: {
            if (x.is_int()) return ret(x);
            double v = e.fn == Builtin::floor_ ? std::floor(numeric_arg(x, "floor")) : std::ceil(numeric_arg(x, "ceil"));
            if (!std::isfinite(v) || std::fabs(v) >= 9.2e18) return ret(Value::null());
            return ret(Value(static_cast<std::int64_t>(v)));
        }
        case Builtin::sqrt_: {
            double v = numeric_arg(x, "sqrt");
            return ret(v < 0 ? Value::null() : finite_or_null(std::sqrt(v)));
        }
        case Builtin::pow_: return ret(finite_or_null(std::pow(numeric_arg(x, "pow"), numeric_arg(scalar_at(1), "pow"))));
        case Builtin::min_:
        case Builtin::max_: {
            Value best = x;
            for (std::size_t i = 1; i < args.size(); ++i) {
                auto c = compare(scalar_at(i), best);
                if (!c) eval_error("min/max arguments are not comparable");
                if ((e.fn == Builtin::min_ && *c < 0) || (e.fn == Builtin::max_ && *c > 0)) best = scalar_at(i);
            }
            if (e.type.kind == Kind::floating && best.is_int()) return ret(Value(static_cast<double>(best.as_int())));
            return ret(best);
        }
        case Builtin::concat: {
            std::string out;
            for (const auto& a : args) out += a.scalar.render();
            return ret(Value(std::move(out)));
        }
        case Builtin::upper:
        case Builtin::lower: {
            auto s = text_arg(x, "upper/lower");
            for (auto& ch : s) {
                ch = static_cast<char>(e.fn == Builtin::upper ? std::toupper(static_cast<unsigned char>(ch))
                                                              : std::tolower(static_cast<unsigned char>(ch)));
            }
            return ret(Value(std::move(s)));
        }
        case Builtin::trim_: return ret(Value(std::string(trim(text_arg(x, "trim")))));
        case Builtin::substring: {
            const auto& s = text_arg(x, "substring");
            auto cps = code_points(s);
            auto count = static_cast<std::int64_t>(cps.size() - 1);
            auto start = integer_arg(scalar_at(1), "substring") - 1;
            auto len = integer_arg(scalar_at(2), "substring");
            if (len < 0) return ret(Value::null());
            auto lo = std::clamp<std::int64_t>(start, 0, count);
            auto hi = std::clamp<std::int64_t>(start + len, 0, count);
            if (hi < lo) hi = lo;
            return ret(Value(s.substr(cps[static_cast<std::size_t>(lo)], cps[static_cast<std::size_t>(hi)] - cps[static_cast<std::size_t>(lo)])));
        }
        case Builtin::split_part: {
            const auto& s = text_arg(x, "split_part");
            const auto& delim = text_arg(scalar_at(1), "split_part");
            auto k = integer_arg(scalar_at(2), "split_part");
            if (delim.empty() || k < 1) return ret(Value::null());
            std::size_t start = 0;
            for (std::int64_t part = 1;; ++part) {
                auto pos = s.find(delim, start);
                if (part == k) {
                    return ret(Value(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
                }
                if (pos == std::string::npos) return ret(Value::null());
                start = pos + delim.size();
            }
        }
        case Builtin::text_length:
            return ret(Value(static_cast<std::int64_t>(code_points(text_arg(x, "text_length")).size() - 1)));
        case Builtin::to_text: return ret(Value(x.render()));
        case Builtin::year:
        case Builtin::month:
        case Builtin::day:
        case Builtin::weekday: {
            using namespace std::chrono;
            auto d = date_of(x, "date function");
            sys_days sd{days{d.days}};
            year_month_day ymd{sd};
            switch (e.fn) {
                case Builtin::year: return ret(Value(static_cast<int>(ymd.year())));
                case Builtin::month: return ret(Value(static_cast<unsigned>(ymd.month())));
                case Builtin::day: return ret(Value(static_cast<unsigned>(ymd.day())));
                default: return ret(Value(weekday{sd}.iso_encoding()));
            }
        }
        case Builtin::to_number:
            if (x.is_numeric()) return ret(Value(x.as_number()));
            if (x.is_text()) {
                if (auto f = parse_float(x.as_text())) return ret(finite_or_null(*f));
                return ret(Value::null());
            }
            eval_error("to_number: cannot convert '" + x.render() + "'");
        case Builtin::to_date:
            if (x.is_date() || x.is_datetime()) return ret(Value(date_of(x, "to_date")));
            if (x.is_text()) {
                if (auto d = parse_date(x.as_text())) return ret(Value(*d));
                if (auto dt = parse_datetime(x.as_text())) return ret(Value(date_of(Value(*dt), "to_date")));
                return ret(Value::null());
            }
            eval_error("to_date: cannot convert '" + x.render() + "'");
        default: break;
    }
    eval_error("unhandled builtin");
}

auto eval(const Expr& e, Context& ctx) -> Slot {
    if (++ctx.steps > ctx.budget) {
        eval_error("formula exceeded its evaluation step budget");
    }
    switch (e.kind) {
        case Expr::Kind::literal: return Slot::of(e.literal);
        case Expr::Kind::slot: return ctx.slots[e.slot];
        case Expr::Kind::unary: {
            auto v = eval_scalar(*e.kids[0], ctx);
            if (v.is_null()) return Slot::of(Value::null());
            if (e.unop == UnOp::logical_not) {
                if (!v.is_bool()) eval_error("not applied to a non-boolean");
                return Slot::of(Value(!v.as_bool()));
            }
            if (v.is_int()) {
                if (v.as_int() == INT64_MIN) return Slot::of(Value::null());
                return Slot::of(Value(-v.as_int()));
            }
            return Slot::of(Value(-numeric_arg(v, "unary minus")));
        }
        case Expr::Kind::binary: return Slot::of(eval_binary(e, ctx));
        case Expr::Kind::cond: {
            auto c = eval_scalar(*e.kids[0], ctx);
            if (c.is_null()) return Slot::of(Value::null());
            if (!c.is_bool()) eval_error("if condition is not boolean");
            return eval(*e.kids[c.as_bool() ? 1 : 2], ctx);
        }
        case Expr::Kind::call: return eval_call(e, ctx);
        case Expr::Kind::let: {
            ctx.slots[e.slot] = eval(*e.kids[0], ctx);
            return eval(*e.kids[1], ctx);
        }
    }
    eval_error("unhandled expression");
}

// Widens a statically typed result value to its declared type.
auto conform(const Value& v, FormulaType type) -> Value {
    if (v.is_null()) return v;
    if (type.kind == Kind::floating && v.is_int()) return Value(static_cast<double>(v.as_int()));
    if (type.kind == Kind::datetime && v.is_date()) return coerce(v, SemanticType::datetime);
    return v;
}

auto param_accepts(FormulaType param, SemanticType column) -> bool {
    switch (param.kind) {
        case Kind::any: return true;
        case Kind::floating: return column == SemanticType::floating || column == SemanticType::integer;
        case Kind::datetime: return column == SemanticType::datetime || column == SemanticType::date;
        default: return param.semantic() == column;
    }
}

}  // namespace

auto FormulaType::of(SemanticType t) -> FormulaType {
    switch (t) {
        case SemanticType::boolean: return {Kind::boolean, false};
        case SemanticType::integer: return {Kind::integer, false};
        case SemanticType::floating: return {Kind::floating, false};
        case SemanticType::date: return {Kind::date, false};
        case SemanticType::datetime: return {Kind::datetime, false};
        case SemanticType::text: return {Kind::text, false};
    }
    return {};
}

auto FormulaType::semantic() const -> std::optional<SemanticType> {
    switch (kind) {
        case Kind::boolean: return SemanticType::boolean;
        case Kind::integer: return SemanticType::integer;
        case Kind::floating: return SemanticType::floating;
        case Kind::date: return SemanticType::date;
        case Kind::datetime: return SemanticType::datetime;
        case Kind::text: return SemanticType::text;
        default: return std::nullopt;
    }
}

auto FormulaType::str() const -> std::string {
    std::string base;
    switch (kind) {
        case Kind::any: base = "any"; break;
        case Kind::null: base = "null"; break;
        default: base = std::string(to_string(*semantic()));
    }
    return list ? "list<" + base + ">" : base;
}

auto is_reserved_word(std::string_view word) -> bool {
    return std::find(kReserved.begin(), kReserved.end(), word) != kReserved.end();
}

auto builtin_names() -> std::vector<std::string> {
    std::vector<std::string> out;
    for (const auto& [name, _] : builtin_table()) out.push_back(name);
    return out;
}

auto parse_formula(std::string_view source, std::span<const SemanticType> param_types) -> Formula {
    Lexer lexer(source);
    Parser parser(lexer.tokens(), source);
    auto header = parser.header();

    Formula f;
    f.source_ = std::string(source);
    auto types_given = param_types.size();
    std::vector<std::string> scalars;
    std::vector<std::string> lists;
    bool has_index = false;
    std::vector<std::string> seen;
    for (const auto& name : header) {
        if (std::find(seen.begin(), seen.end(), name) != seen.end()) {
            throw Error(ErrorCode::parse_error, "parameter '" + name + "' is declared twice", {{"parameter", name}});
        }
        if (is_reserved_word(name)) {
            throw Error(ErrorCode::parse_error, "parameter name '" + name + "' is reserved", {{"parameter", name}});
        }
        seen.push_back(name);
        if (name == "index") {
            has_index = true;
        } else if (name.size() > 5 && name.ends_with("_list") &&
                   std::find(header.begin(), header.end(), name.substr(0, name.size() - 5)) != header.end()) {
            lists.push_back(name);
        } else {
            scalars.push_back(name);
        }
    }
    if (!lists.empty() && !has_index) {
        throw Error(ErrorCode::parse_error, "list parameters need an 'index' parameter in the header");
    }
    // A count mismatch is reported after the body, so unresolved names win.
    bool count_mismatch = !param_types.empty() && param_types.size() != scalars.size();
    if (count_mismatch) param_types = {};
    f.analytical_ = has_index;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        auto type = param_types.empty() ? FormulaType{} : FormulaType::of(param_types[i]);
        f.params_.push_back(FormulaParam{scalars[i], type});
        parser.bind(scalars[i], parser.next_slot++, type);
    }
    f.list_slots_.assign(scalars.size(), std::nullopt);
    if (has_index) {
        f.index_slot_ = parser.next_slot++;
        parser.bind("index", *f.index_slot_, scalar(Kind::integer));
    }
    for (const auto& l : lists) {
        auto stem = l.substr(0, l.size() - 5);
        auto idx = static_cast<std::size_t>(std::find(scalars.begin(), scalars.end(), stem) - scalars.begin());
        auto type = f.params_[idx].type;
        type.list = true;
        f.list_slots_[idx] = parser.next_slot;
        parser.bind(l, parser.next_slot++, type);
    }
    auto body = parser.expression();
    parser.finish();
    if (count_mismatch) {
        throw Error(ErrorCode::type_mismatch,
                    "formula has " + std::to_string(scalars.size()) + " parameter(s) but " +
                        std::to_string(types_given) + " source(s) were given",
                    {{"parameters", scalars.size()}, {"sources", types_given}});
    }
    if (body->type.list) {
        type_error("a formula must produce a scalar, not " + body->type.str());
    }
    f.result_ = body->type;
    f.body_ = body;
    f.nodes_ = parser.nodes;
    f.slots_ = parser.next_slot;
    return f;
}

auto eval_row(const Formula& f, std::span<const Value> args, std::int64_t index,
              std::span<const std::vector<Value>> lists, WindowRule rule) -> Value {
    if (args.size() != f.params().size()) {
        throw Error(ErrorCode::eval_error, "expected " + std::to_string(f.params().size()) + " argument(s), got " +
                                               std::to_string(args.size()));
    }
    if (f.analytical() && lists.size() != f.params().size()) {
        throw Error(ErrorCode::eval_error, "analytical formula needs one list per parameter");
    }
    Context ctx;
    ctx.slots.resize(f.slot_count());
    ctx.budget = f.node_count();
    for (std::size_t i = 0; i < args.size(); ++i) {
        ctx.slots[i] = Slot::of(args[i]);
        if (auto s = f.list_slot(i)) {
            ctx.slots[*s] = Slot::borrowed(lists[i]);
        }
    }
    if (auto s = f.index_slot()) {
        ctx.slots[*s] = Slot::of(Value(index));
    }
    auto out = eval_scalar(f.body(), ctx);
    if (ctx.truncated && rule == WindowRule::strict) {
        return Value::null();
    }
    return conform(out, f.result_type());
}

auto apply_derivation(const Table& t, const Formula& f, std::span<const std::string> source_columns,
                      const std::string& out_name, WindowRule rule) -> Table {
    if (source_columns.size() != f.params().size()) {
        throw Error(ErrorCode::type_mismatch, "formula has " + std::to_string(f.params().size()) +
                                                  " parameter(s) but " + std::to_string(source_columns.size()) +
                                                  " source column(s) were given");
    }
    if (t.find_column(out_name)) {
        throw Error(ErrorCode::duplicate_output_column, "column '" + out_name + "' already exists",
                    {{"column", out_name}});
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < source_columns.size(); ++i) {
        auto c = t.column_index(source_columns[i]);
        if (!param_accepts(f.params()[i].type, t.columns()[c].type)) {
            throw Error(ErrorCode::type_mismatch,
                        "column '" + source_columns[i] + "' is " + std::string(to_string(t.columns()[c].type)) +
                            " but parameter '" + f.params()[i].name + "' expects " + f.params()[i].type.str(),
                        {{"column", source_columns[i]}});
        }
        idx.push_back(c);
    }
    std::vector<std::vector<Value>> lists;
    if (f.analytical()) {
        for (auto c : idx) lists.push_back(t.column_values(c));
    }
    std::vector<Value> out;
    out.reserve(t.row_count());
    std::vector<Value> args(idx.size());
    for (std::size_t r = 0; r < t.row_count(); ++r) {
        for (std::size_t i = 0; i < idx.size(); ++i) args[i] = t.rows()[r][idx[i]];
        out.push_back(eval_row(f, args, static_cast<std::int64_t>(r), lists, rule));
    }
    std::optional<SemanticType> type = f.result_type().semantic();
    if (!type) {
        for (const auto& v : out) {
            if (!v.is_null()) type = type ? join(*type, *v.type()) : *v.type();
        }
    }
    return t.with_column(Column{out_name, type.value_or(SemanticType::text)}, std::move(out));
}

}  // namespace vizform
