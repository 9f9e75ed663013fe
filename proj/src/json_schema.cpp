#include <vizform/error.hpp>
#include <vizform/json_schema.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <sstream>

namespace vizform {

namespace {

using json = nlohmann::json;

auto escape_token(const std::string& key) -> std::string {
    std::string out;
    for (char c : key) {
        if (c == '~') {
            out += "~0";
        } else if (c == '/') {
            out += "~1";
        } else {
            out.push_back(c);
        }
    }
    return out;
}

auto type_name(const json& v) -> std::string {
    switch (v.type()) {
        case json::value_t::null: return "null";
        case json::value_t::boolean: return "boolean";
        case json::value_t::number_integer:
        case json::value_t::number_unsigned: return "integer";
        case json::value_t::number_float: return "number";
        case json::value_t::string: return "string";
        case json::value_t::array: return "array";
        case json::value_t::object: return "object";
        default: return "unknown";
    }
}

auto has_type(const json& v, const std::string& t) -> bool {
    if (t == "null") return v.is_null();
    if (t == "boolean") return v.is_boolean();
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "number") return v.is_number();
    if (t == "integer") {
        if (v.is_number_integer()) return true;
        if (v.is_number_float()) {
            double d = v.get<double>();
            return std::isfinite(d) && std::floor(d) == d;
        }
        return false;
    }
    return false;
}

// Number of Unicode code points, the unit draft-07 lengths count in.
auto code_point_length(const std::string& s) -> std::size_t {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
    return n;
}

class Validator {
public:
    explicit Validator(const json& root) : root_(root) {}

    // Returns true when valid. With `out` null the walk stops at the first failure.
    auto check(const json& schema, const json& inst, const std::string& ipath, const std::string& spath,
               std::vector<SchemaViolation>* out) -> bool {
        if (schema.is_boolean()) {
            if (schema.get<bool>()) return true;
            return fail(out, ipath, spath, "no value is allowed here");
        }
        if (!schema.is_object()) return true;
        if (auto ref = schema.find("$ref"); ref != schema.end()) {
            const auto& target = resolve(ref->get<std::string>());
            return check(target, inst, ipath, ref->get<std::string>(), out);
        }
        bool ok = true;
        auto step = [&](bool valid) {
            ok = ok && valid;
            return valid || out != nullptr;
        };

        if (auto t = schema.find("type"); t != schema.end()) {
            bool match = false;
            if (t->is_string()) {
                match = has_type(inst, t->get<std::string>());
            } else {
                for (const auto& each : *t) match = match || has_type(inst, each.get<std::string>());
            }
            if (!step(match || fail(out, ipath, spath + "/type",
                                    "expected type " + t->dump() + ", got " + type_name(inst)))) {
                return false;
            }
        }
        if (auto e = schema.find("enum"); e != schema.end()) {
            bool found = std::find(e->begin(), e->end(), inst) != e->end();
            if (!step(found || fail(out, ipath, spath + "/enum", inst.dump() + " is not one of " + e->dump()))) {
                return false;
            }
        }
        if (auto c = schema.find("const"); c != schema.end()) {
            if (!step(*c == inst || fail(out, ipath, spath + "/const", "expected " + c->dump()))) return false;
        }
        if (auto any = schema.find("anyOf"); any != schema.end()) {
            bool matched = false;
            for (const auto& branch : *any) {
                if (check(branch, inst, ipath, spath, nullptr)) {
                    matched = true;
                    break;
                }
            }
            if (!step(matched || fail(out, ipath, spath + "/anyOf", "value matches none of the alternatives"))) {
                return false;
            }
        }
        if (auto one = schema.find("oneOf"); one != schema.end()) {
            int matched = 0;
            for (const auto& branch : *one) matched += check(branch, inst, ipath, spath, nullptr) ? 1 : 0;
            if (!step(matched == 1 || fail(out, ipath, spath + "/oneOf",
                                           "value matches " + std::to_string(matched) +
                                               " alternatives, expected exactly one"))) {
                return false;
            }
        }
        if (auto all = schema.find("allOf"); all != schema.end()) {
            for (std::size_t i = 0; i < all->size(); ++i) {
                if (!step(check((*all)[i], inst, ipath, spath + "/allOf/" + std::to_string(i), out))) return false;
            }
        }
        if (auto no = schema.find("not"); no != schema.end()) {
            if (!step(!check(*no, inst, ipath, spath, nullptr) ||
                      fail(out, ipath, spath + "/not", "value matches a forbidden schema"))) {
                return false;
            }
        }
        if (auto cond = schema.find("if"); cond != schema.end()) {
            bool holds = check(*cond, inst, ipath, spath, nullptr);
            const char* branch = holds ? "then" : "else";
            if (auto b = schema.find(branch); b != schema.end()) {
                if (!step(check(*b, inst, ipath, spath + "/" + branch, out))) return false;
            }
        }
        if (inst.is_object() && !check_object(schema, inst, ipath, spath, out, step)) return false;
        if (inst.is_array() && !check_array(schema, inst, ipath, spath, out, step)) return false;
        if (inst.is_number() && !check_number(schema, inst, ipath, spath, out, step)) return false;
        if (inst.is_string() && !check_string(schema, inst, ipath, spath, out, step)) return false;
        return ok;
    }

private:
    static auto fail(std::vector<SchemaViolation>* out, const std::string& ipath, const std::string& spath,
                     std::string message) -> bool {
        if (out) out->push_back(SchemaViolation{ipath.empty() ? "/" : ipath, spath, std::move(message)});
        return false;
    }

    template <typename Step>
    auto check_object(const json& schema, const json& inst, const std::string& ipath, const std::string& spath,
                      std::vector<SchemaViolation>* out, Step& step) -> bool {
        if (auto req = schema.find("required"); req != schema.end()) {
            for (const auto& name : *req) {
                if (!step(inst.contains(name.get<std::string>()) ||
                          fail(out, ipath, spath + "/required", "missing property '" + name.get<std::string>() + "'"))) {
                    return false;
                }
            }
        }
        if (auto mn = schema.find("minProperties"); mn != schema.end()) {
            if (!step(inst.size() >= mn->get<std::size_t>() ||
                      fail(out, ipath, spath + "/minProperties", "too few properties"))) {
                return false;
            }
        }
        if (auto mx = schema.find("maxProperties"); mx != schema.end()) {
            if (!step(inst.size() <= mx->get<std::size_t>() ||
                      fail(out, ipath, spath + "/maxProperties", "too many properties"))) {
                return false;
            }
        }
        if (auto names = schema.find("propertyNames"); names != schema.end()) {
            for (auto it = inst.begin(); it != inst.end(); ++it) {
                if (!step(check(*names, json(it.key()), ipath, spath + "/propertyNames", out))) return false;
            }
        }
        if (auto deps = schema.find("dependencies"); deps != schema.end()) {
            for (auto d = deps->begin(); d != deps->end(); ++d) {
                if (!inst.contains(d.key())) continue;
                auto dpath = spath + "/dependencies/" + escape_token(d.key());
                if (d->is_array()) {
                    for (const auto& needed : *d) {
                        if (!step(inst.contains(needed.get<std::string>()) ||
                                  fail(out, ipath, dpath, "property '" + d.key() + "' requires '" +
                                                              needed.get<std::string>() + "'"))) {
                            return false;
                        }
                    }
                } else if (!step(check(*d, inst, ipath, dpath, out))) {
                    return false;
                }
            }
        }
        auto props = schema.find("properties");
        auto patterns = schema.find("patternProperties");
        auto additional = schema.find("additionalProperties");
        for (auto it = inst.begin(); it != inst.end(); ++it) {
            auto child = ipath + "/" + escape_token(it.key());
            bool covered = false;
            if (props != schema.end()) {
                if (auto p = props->find(it.key()); p != props->end()) {
                    covered = true;
                    if (!step(check(*p, it.value(), child, spath + "/properties/" + escape_token(it.key()), out))) {
                        return false;
                    }
                }
            }
            if (patterns != schema.end()) {
                for (auto pp = patterns->begin(); pp != patterns->end(); ++pp) {
                    if (std::regex_search(it.key(), regex(pp.key()))) {
                        covered = true;
                        if (!step(check(pp.value(), it.value(), child,
                                        spath + "/patternProperties/" + escape_token(pp.key()), out))) {
                            return false;
                        }
                    }
                }
            }
            if (!covered && additional != schema.end()) {
                if (additional->is_boolean() && !additional->get<bool>()) {
                    if (!step(fail(out, child, spath + "/additionalProperties",
                                   "property '" + it.key() + "' is not allowed"))) {
                        return false;
                    }
                } else if (!step(check(*additional, it.value(), child, spath + "/additionalProperties", out))) {
                    return false;
                }
            }
        }
        return true;
    }

    template <typename Step>
    auto check_array(const json& schema, const json& inst, const std::string& ipath, const std::string& spath,
                     std::vector<SchemaViolation>* out, Step& step) -> bool {
        if (auto mn = schema.find("minItems"); mn != schema.end()) {
            if (!step(inst.size() >= mn->get<std::size_t>() ||
                      fail(out, ipath, spath + "/minItems", "expected at least " + mn->dump() + " items"))) {
                return false;
            }
        }
        if (auto mx = schema.find("maxItems"); mx != schema.end()) {
            if (!step(inst.size() <= mx->get<std::size_t>() ||
                      fail(out, ipath, spath + "/maxItems", "expected at most " + mx->dump() + " items"))) {
                return false;
            }
        }
        if (auto u = schema.find("uniqueItems"); u != schema.end() && u->get<bool>()) {
            for (std::size_t i = 0; i < inst.size(); ++i) {
                for (std::size_t j = i + 1; j < inst.size(); ++j) {
                    if (!step(inst[i] != inst[j] || fail(out, ipath, spath + "/uniqueItems", "items are not unique"))) {
                        return false;
                    }
                }
            }
        }
        if (auto c = schema.find("contains"); c != schema.end()) {
            bool found = std::any_of(inst.begin(), inst.end(),
                                     [&](const json& item) { return check(*c, item, ipath, spath, nullptr); });
            if (!step(found || fail(out, ipath, spath + "/contains", "no item matches the contains schema"))) {
                return false;
            }
        }
        auto items = schema.find("items");
        if (items == schema.end()) return true;
        if (items->is_array()) {
            for (std::size_t i = 0; i < inst.size(); ++i) {
                auto child = ipath + "/" + std::to_string(i);
                if (i < items->size()) {
                    if (!step(check((*items)[i], inst[i], child, spath + "/items/" + std::to_string(i), out))) {
                        return false;
                    }
                } else if (auto extra = schema.find("additionalItems"); extra != schema.end()) {
                    if (!step(check(*extra, inst[i], child, spath + "/additionalItems", out))) return false;
                }
            }
            return true;
        }
        for (std::size_t i = 0; i < inst.size(); ++i) {
            if (!step(check(*items, inst[i], ipath + "/" + std::to_string(i), spath + "/items", out))) return false;
        }
        return true;
    }

    template <typename Step>
    auto check_number(const json& schema, const json& inst, const std::string& ipath, const std::string& spath,
                      std::vector<SchemaViolation>* out, Step& step) -> bool {
        double v = inst.get<double>();
        auto bound = [&](const char* key, auto ok, const char* words) {
            auto b = schema.find(key);
            if (b == schema.end() || !b->is_number()) return true;
            return step(ok(v, b->template get<double>()) ||
                        fail(out, ipath, spath + "/" + key, inst.dump() + " " + words + " " + b->dump()));
        };
        return bound("minimum", [](double x, double b) { return x >= b; }, "is less than") &&
               bound("maximum", [](double x, double b) { return x <= b; }, "is greater than") &&
               bound("exclusiveMinimum", [](double x, double b) { return x > b; }, "is not greater than") &&
               bound("exclusiveMaximum", [](double x, double b) { return x < b; }, "is not less than") &&
               bound("multipleOf", [](double x, double b) {
                   double q = x / b;
                   return std::fabs(q - std::round(q)) < 1e-9;
               }, "is not a multiple of");
    }

    template <typename Step>
    auto check_string(const json& schema, const json& inst, const std::string& ipath, const std::string& spath,
                      std::vector<SchemaViolation>* out, Step& step) -> bool {
        const auto& s = inst.get_ref<const std::string&>();
        if (auto mn = schema.find("minLength"); mn != schema.end()) {
            if (!step(code_point_length(s) >= mn->get<std::size_t>() ||
                      fail(out, ipath, spath + "/minLength", "string is too short"))) {
                return false;
            }
        }
        if (auto mx = schema.find("maxLength"); mx != schema.end()) {
            if (!step(code_point_length(s) <= mx->get<std::size_t>() ||
                      fail(out, ipath, spath + "/maxLength", "string is too long"))) {
                return false;
            }
        }
        if (auto p = schema.find("pattern"); p != schema.end()) {
            if (!step(std::regex_search(s, regex(p->get<std::string>())) ||
                      fail(out, ipath, spath + "/pattern", "string does not match " + p->dump()))) {
                return false;
            }
        }
        return true;
    }

    auto resolve(const std::string& ref) -> const json& {
        if (ref == "#") return root_;
        if (ref.rfind("#/", 0) != 0) {
            throw Error(ErrorCode::invalid_spec, "unsupported schema reference '" + ref + "'");
        }
        auto ptr = json::json_pointer(ref.substr(1));
        if (!root_.contains(ptr)) {
            throw Error(ErrorCode::invalid_spec, "dangling schema reference '" + ref + "'");
        }
        return root_.at(ptr);
    }

    static auto regex(const std::string& pattern) -> const std::regex& {
        static std::mutex mutex;
        static std::map<std::string, std::regex> cache;
        std::lock_guard lock(mutex);
        auto it = cache.find(pattern);
        if (it == cache.end()) it = cache.emplace(pattern, std::regex(pattern, std::regex::ECMAScript)).first;
        return it->second;
    }

    const json& root_;
};

}  // namespace

JsonSchema::JsonSchema(nlohmann::json document) : doc_(std::move(document)) {}

auto JsonSchema::load(const std::filesystem::path& path) -> JsonSchema {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot read schema " + path.string());
    }
    try {
        return JsonSchema(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::io_error, "schema " + path.string() + " is not valid JSON: " + e.what());
    }
}

auto JsonSchema::validate(const nlohmann::json& instance, std::string_view ref) const -> std::vector<SchemaViolation> {
    std::vector<SchemaViolation> out;
    Validator v(doc_);
    if (ref.empty()) {
        v.check(doc_, instance, "", "", &out);
    } else {
        nlohmann::json wrapper = {{"$ref", std::string(ref)}};
        v.check(wrapper, instance, "", "", &out);
    }
    return out;
}

auto JsonSchema::is_valid(const nlohmann::json& instance, std::string_view ref) const -> bool {
    Validator v(doc_);
    if (ref.empty()) return v.check(doc_, instance, "", "", nullptr);
    nlohmann::json wrapper = {{"$ref", std::string(ref)}};
    return v.check(wrapper, instance, "", "", nullptr);
}

auto describe(const std::vector<SchemaViolation>& violations, std::size_t limit) -> std::string {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size() && i < limit; ++i) {
        if (i) os << "; ";
        os << violations[i].instance_path << ": " << violations[i].message;
    }
    if (violations.size() > limit) os << "; ... (" << violations.size() - limit << " more)";
    return os.str();
}

}  // namespace vizform
