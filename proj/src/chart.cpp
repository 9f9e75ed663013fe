#include <vizform/chart.hpp>
#include <vizform/error.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <map>
#include <regex>
#include <set>

namespace vizform {

namespace {

using json = nlohmann::json;

std::atomic<std::size_t> g_emitted{0};

constexpr std::array<std::pair<Channel, std::string_view>, 8> kChannels{{{Channel::x, "x"},
                                                                          {Channel::y, "y"},
                                                                          {Channel::x2, "x2"},
                                                                          {Channel::y2, "y2"},
                                                                          {Channel::color, "color"},
                                                                          {Channel::size, "size"},
                                                                          {Channel::column, "column"},
                                                                          {Channel::row, "row"}}};

constexpr std::array<std::pair<Aggregate, std::string_view>, 6> kAggregates{{{Aggregate::count, "count"},
                                                                              {Aggregate::sum, "sum"},
                                                                              {Aggregate::avg, "avg"},
                                                                              {Aggregate::median, "median"},
                                                                              {Aggregate::min, "min"},
                                                                              {Aggregate::max, "max"}}};

constexpr std::array<std::pair<ChannelType, std::string_view>, 4> kChannelTypes{
    {{ChannelType::quantitative, "quantitative"},
     {ChannelType::temporal, "temporal"},
     {ChannelType::nominal, "nominal"},
     {ChannelType::ordinal, "ordinal"}}};

const std::vector<Aggregate> kAllAggregates{Aggregate::count, Aggregate::sum,  Aggregate::avg,
                                            Aggregate::median, Aggregate::min, Aggregate::max};

const std::regex kPlaceholder(R"(^\{\{channel:([A-Za-z0-9_]+)\}\}$)");

auto placeholder(Channel c) -> std::string {
    return "{{channel:" + std::string(to_string(c)) + "}}";
}

auto slot(Channel c, bool required) -> ChannelSlot {
    bool facet = c == Channel::column || c == Channel::row;
    return ChannelSlot{c, required, facet ? std::vector<Aggregate>{} : kAllAggregates};
}

// Built-in template from a skeleton; `required` lists required channels, the
// other placeholder channels are optional.
auto builtin(std::string id, json skeleton, std::set<Channel> required) -> ChartTemplate {
    ChartTemplate t{std::move(id), std::move(skeleton), {}, false};
    std::set<Channel> seen;
    std::function<void(const json&)> walk = [&](const json& node) {
        if (node.is_string()) {
            std::smatch m;
            const auto& s = node.get_ref<const std::string&>();
            if (std::regex_match(s, m, kPlaceholder)) seen.insert(*channel_from_string(m[1].str()));
        } else if (node.is_structured()) {
            for (const auto& child : node) walk(child);
        }
    };
    walk(t.skeleton);
    for (const auto& [c, _] : kChannels) {
        if (seen.count(c)) t.channels.push_back(slot(c, required.count(c) > 0));
    }
    return t;
}

auto xy_skeleton(json mark, std::initializer_list<Channel> channels) -> json {
    json enc = json::object();
    for (auto c : channels) enc[std::string(to_string(c))] = placeholder(c);
    return {{"mark", std::move(mark)}, {"encoding", std::move(enc)}};
}

auto make_catalog() -> std::vector<ChartTemplate> {
    using C = Channel;
    std::vector<ChartTemplate> out;
    out.push_back(builtin("scatter", xy_skeleton("circle", {C::x, C::y, C::color, C::size}), {C::x, C::y}));
    out.push_back(builtin("bubble", xy_skeleton("circle", {C::x, C::y, C::color, C::size}), {C::x, C::y, C::size}));
    json ranged = {
        {"encoding", {{"x", placeholder(C::x)}, {"color", placeholder(C::color)}}},
        {"layer",
         {{{"mark", "rule"}, {"encoding", {{"y", placeholder(C::y)}, {"y2", placeholder(C::y2)}}}},
          {{"mark", {{"type", "point"}, {"filled", true}}}, {"encoding", {{"y", placeholder(C::y)}}}},
          {{"mark", {{"type", "point"}, {"filled", true}}}, {"encoding", {{"y", placeholder(C::y2)}}}}}}};
    out.push_back(builtin("ranged-dot", ranged, {C::x, C::y, C::y2}));
    out.push_back(builtin("bar", xy_skeleton("bar", {C::x, C::y, C::color}), {C::x, C::y}));
    out.push_back(builtin("stacked-bar", xy_skeleton("bar", {C::x, C::y, C::color}), {C::x, C::y, C::color}));
    auto layered = xy_skeleton({{"type", "bar"}, {"opacity", 0.7}}, {C::x, C::y, C::color});
    out.push_back(builtin("layered-bar", layered, {C::x, C::y, C::color}));
    out.push_back(builtin("grouped-bar", xy_skeleton("bar", {C::x, C::y, C::color, C::column}),
                          {C::x, C::y, C::color, C::column}));
    json histogram = {{"mark", "bar"},
                      {"encoding",
                       {{"x", placeholder(C::x)},
                        {"y", {{"aggregate", "count"}, {"type", "quantitative"}}},
                        {"color", placeholder(C::color)}}}};
    out.push_back(builtin("histogram", histogram, {C::x}));
    out.push_back(builtin("line", xy_skeleton("line", {C::x, C::y, C::color}), {C::x, C::y}));
    out.push_back(builtin("line-with-dots", xy_skeleton({{"type", "line"}, {"point", true}}, {C::x, C::y, C::color}),
                          {C::x, C::y}));
    out.push_back(builtin("heatmap", xy_skeleton("rect", {C::x, C::y, C::color}), {C::x, C::y, C::color}));
    out.push_back(builtin("custom",
                          xy_skeleton("point", {C::x, C::y, C::x2, C::y2, C::color, C::size, C::column, C::row}), {}));
    for (auto& t : out) {
        if (t.id == "histogram") t.slot_mut(Channel::x).allowed_aggregates.clear();
    }
    return out;
}

// Backslash-escapes the characters Vega-Lite reads as nested-field access.
auto escape_field(const std::string& name) -> std::string {
    std::string out;
    for (char c : name) {
        if (c == '.' || c == '[' || c == ']' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

auto vega_aggregate(Aggregate a) -> std::string {
    return a == Aggregate::avg ? "mean" : std::string(to_string(a));
}

struct Resolved {
    const Encoding* encoding;
    ChannelType type;
};

// Encoding definition placed at `key` of a Vega-Lite encoding block.
auto definition(const Resolved& r, const std::string& key, const ChartTemplate& tmpl) -> json {
    const auto& e = *r.encoding;
    bool secondary = key == "x2" || key == "y2";
    json def = json::object();
    if (e.aggregate == Aggregate::count) {
        def["aggregate"] = "count";
        if (!secondary) def["type"] = "quantitative";
        return def;
    }
    def["field"] = escape_field(e.field);
    if (e.aggregate) def["aggregate"] = vega_aggregate(*e.aggregate);
    if (secondary) return def;
    bool implicit_nominal = key == "color" && r.type == ChannelType::nominal && !e.type_override;
    if (!implicit_nominal) def["type"] = std::string(to_string(r.type));
    if (!tmpl.custom && tmpl.id == "histogram" && key == "x" && r.type == ChannelType::quantitative) def["bin"] = true;
    if (!tmpl.custom && tmpl.id == "layered-bar" && key == "y") def["stack"] = nullptr;
    return def;
}

auto fill(const json& node, const std::string& key, const std::map<Channel, Resolved>& filled,
          const ChartTemplate& tmpl) -> std::optional<json> {
    if (node.is_string()) {
        std::smatch m;
        const auto& s = node.get_ref<const std::string&>();
        if (std::regex_match(s, m, kPlaceholder)) {
            auto c = channel_from_string(m[1].str());
            auto it = c ? filled.find(*c) : filled.end();
            if (it == filled.end()) return std::nullopt;
            return definition(it->second, key, tmpl);
        }
        return node;
    }
    if (node.is_object()) {
        json out = json::object();
        for (auto it = node.begin(); it != node.end(); ++it) {
            if (auto v = fill(it.value(), it.key(), filled, tmpl)) out[it.key()] = std::move(*v);
        }
        return out;
    }
    if (node.is_array()) {
        json out = json::array();
        for (const auto& child : node) {
            if (auto v = fill(child, key, filled, tmpl)) out.push_back(std::move(*v));
        }
        return out;
    }
    return node;
}

}  // namespace

auto ChartTemplate::slot(Channel c) const -> const ChannelSlot* {
    auto it = std::find_if(channels.begin(), channels.end(), [&](const ChannelSlot& s) { return s.channel == c; });
    return it == channels.end() ? nullptr : &*it;
}

auto ChartTemplate::slot_mut(Channel c) -> ChannelSlot& {
    return *std::find_if(channels.begin(), channels.end(), [&](const ChannelSlot& s) { return s.channel == c; });
}

auto to_string(Channel c) -> std::string_view {
    for (const auto& [k, v] : kChannels) {
        if (k == c) return v;
    }
    return "x";
}

auto to_string(Aggregate a) -> std::string_view {
    for (const auto& [k, v] : kAggregates) {
        if (k == a) return v;
    }
    return "count";
}

auto to_string(ChannelType t) -> std::string_view {
    for (const auto& [k, v] : kChannelTypes) {
        if (k == t) return v;
    }
    return "nominal";
}

auto channel_from_string(std::string_view s) -> std::optional<Channel> {
    for (const auto& [k, v] : kChannels) {
        if (v == s) return k;
    }
    return std::nullopt;
}

auto aggregate_from_string(std::string_view s) -> std::optional<Aggregate> {
    if (s == "mean") return Aggregate::avg;
    for (const auto& [k, v] : kAggregates) {
        if (v == s) return k;
    }
    return std::nullopt;
}

auto channel_type_from_string(std::string_view s) -> std::optional<ChannelType> {
    for (const auto& [k, v] : kChannelTypes) {
        if (v == s) return k;
    }
    return std::nullopt;
}

auto infer_channel_type(SemanticType t) -> ChannelType {
    switch (t) {
        case SemanticType::date:
        case SemanticType::datetime: return ChannelType::temporal;
        case SemanticType::integer:
        case SemanticType::floating: return ChannelType::quantitative;
        default: return ChannelType::nominal;
    }
}

auto encoding_to_json(const Encoding& e) -> nlohmann::json {
    json j = {{"channel", to_string(e.channel)}};
    if (!e.field.empty()) j["field"] = e.field;
    if (e.aggregate) j["aggregate"] = to_string(*e.aggregate);
    if (e.type_override) j["type"] = to_string(*e.type_override);
    return j;
}

auto encoding_from_json(const nlohmann::json& j) -> Encoding {
    auto bad = [&](const std::string& msg) { return Error(ErrorCode::invalid_encoding, msg, {{"encoding", j}}); };
    if (!j.is_object() || !j.contains("channel") || !j["channel"].is_string()) {
        throw bad("an encoding needs a channel name");
    }
    Encoding e;
    auto c = channel_from_string(j["channel"].get<std::string>());
    if (!c) throw bad("unknown channel '" + j["channel"].get<std::string>() + "'");
    e.channel = *c;
    for (const char* key : {"field", "concept"}) {
        if (j.contains(key)) {
            if (!j[key].is_string()) throw bad(std::string(key) + " must be a string");
            e.field = j[key].get<std::string>();
        }
    }
    if (j.contains("aggregate") && !j["aggregate"].is_null()) {
        auto a = j["aggregate"].is_string() ? aggregate_from_string(j["aggregate"].get<std::string>()) : std::nullopt;
        if (!a) throw bad("unknown aggregate " + j["aggregate"].dump());
        e.aggregate = a;
    }
    if (j.contains("type") && !j["type"].is_null()) {
        auto t = j["type"].is_string() ? channel_type_from_string(j["type"].get<std::string>()) : std::nullopt;
        if (!t) throw bad("unknown channel type " + j["type"].dump());
        e.type_override = t;
    }
    return e;
}

auto list_templates() -> const std::vector<ChartTemplate>& {
    static const std::vector<ChartTemplate> catalog = make_catalog();
    return catalog;
}

auto find_builtin_template(std::string_view id) -> const ChartTemplate* {
    for (const auto& t : list_templates()) {
        if (t.id == id) return &t;
    }
    return nullptr;
}

auto register_custom_template(std::string id, std::string_view doc) -> ChartTemplate {
    json skeleton;
    try {
        skeleton = json::parse(doc);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::invalid_template, std::string("template is not valid JSON: ") + e.what());
    }
    if (!skeleton.is_object()) {
        throw Error(ErrorCode::invalid_template, "a template must be a JSON object");
    }
    std::set<Channel> seen;
    std::function<void(const json&)> walk = [&](const json& node) {
        if (node.is_string()) {
            static const std::regex loose(R"(\{\{channel:([^}]*)\}\})");
            const auto& s = node.get_ref<const std::string&>();
            std::smatch m;
            if (!std::regex_search(s, m, loose)) return;
            auto c = channel_from_string(m[1].str());
            if (!c) {
                throw Error(ErrorCode::invalid_template, "unsupported channel '" + m[1].str() + "' in placeholder",
                            {{"placeholder", s}});
            }
            if (!std::regex_match(s, kPlaceholder)) {
                throw Error(ErrorCode::invalid_template, "a placeholder must be the whole string value",
                            {{"placeholder", s}});
            }
            seen.insert(*c);
        } else if (node.is_structured()) {
            for (const auto& child : node) walk(child);
        }
    };
    walk(skeleton);
    if (seen.empty()) {
        throw Error(ErrorCode::invalid_template, "template has no {{channel:<name>}} placeholders");
    }
    ChartTemplate t{std::move(id), std::move(skeleton), {}, true};
    for (const auto& [c, _] : kChannels) {
        if (seen.count(c)) t.channels.push_back(slot(c, true));
    }
    return t;
}

void check_encodings(const ChartTemplate& tmpl, const std::vector<Encoding>& encodings) {
    std::set<Channel> used;
    for (const auto& e : encodings) {
        auto name = std::string(to_string(e.channel));
        const auto* s = tmpl.slot(e.channel);
        if (!s) {
            throw Error(ErrorCode::invalid_encoding, "template '" + tmpl.id + "' has no " + name + " channel",
                        {{"channel", name}});
        }
        if (!used.insert(e.channel).second) {
            throw Error(ErrorCode::invalid_encoding, "channel " + name + " is encoded twice", {{"channel", name}});
        }
        if (e.aggregate && std::find(s->allowed_aggregates.begin(), s->allowed_aggregates.end(), *e.aggregate) ==
                               s->allowed_aggregates.end()) {
            throw Error(ErrorCode::invalid_encoding,
                        "aggregate " + std::string(to_string(*e.aggregate)) + " is not allowed on " + name,
                        {{"channel", name}});
        }
        if (e.aggregate == Aggregate::count && !e.field.empty()) {
            throw Error(ErrorCode::invalid_encoding, "count takes no field", {{"channel", name}});
        }
        if (e.aggregate != Aggregate::count && e.field.empty()) {
            throw Error(ErrorCode::invalid_encoding, "channel " + name + " needs a field", {{"channel", name}});
        }
    }
    for (const auto& s : tmpl.channels) {
        if (s.required && !used.count(s.channel)) {
            auto name = std::string(to_string(s.channel));
            throw Error(ErrorCode::missing_required_channel,
                        "template '" + tmpl.id + "' requires the " + name + " channel", {{"channel", name}});
        }
    }
    if (encodings.empty()) {
        throw Error(ErrorCode::missing_required_channel, "at least one channel must be encoded");
    }
}

auto assemble_spec(const ChartTemplate& tmpl, const std::vector<Encoding>& encodings, const Table& t) -> nlohmann::json {
    check_encodings(tmpl, encodings);
    std::map<Channel, Resolved> filled;
    for (const auto& e : encodings) {
        auto type = e.type_override.value_or(ChannelType::quantitative);
        if (e.aggregate != Aggregate::count) {
            auto col = t.find_column(e.field);
            if (!col) {
                throw Error(ErrorCode::unknown_concept_in_encoding,
                            "'" + e.field + "' is not a column of the working table", {{"field", e.field}});
            }
            auto semantic = t.columns()[*col].type;
            if (e.aggregate && !is_numeric(semantic)) {
                throw Error(ErrorCode::aggregate_on_non_quantitative,
                            std::string(to_string(*e.aggregate)) + " needs a numeric field, '" + e.field + "' is " +
                                std::string(to_string(semantic)),
                            {{"field", e.field}});
            }
            if (!e.type_override) type = infer_channel_type(semantic);
        }
        filled.emplace(e.channel, Resolved{&e, type});
    }
    json doc = *fill(tmpl.skeleton, "", filled, tmpl);
    json values = json::array();
    for (const auto& row : t.rows()) {
        json obj = json::object();
        for (std::size_t c = 0; c < t.column_count(); ++c) obj[t.columns()[c].name] = value_to_json(row[c]);
        values.push_back(std::move(obj));
    }
    doc["$schema"] = std::string(kVegaLiteSchemaUrl);
    doc["data"] = {{"values", std::move(values)}};
    auto violations = vega_lite_schema().validate(doc);
    if (!violations.empty()) {
        throw Error(ErrorCode::invalid_spec, "assembled spec fails the Vega-Lite schema: " + describe(violations),
                    {{"template", tmpl.id}});
    }
    ++g_emitted;
    return doc;
}

auto schema_dir() -> std::string {
    if (const char* dir = std::getenv("VIZFORM_SCHEMA_DIR"); dir != nullptr && *dir != '\0') return dir;
    return VIZFORM_DEFAULT_SCHEMA_DIR;
}

auto vega_lite_schema() -> const JsonSchema& {
    static const JsonSchema schema = JsonSchema::load(schema_dir() + "/vega-lite-v5.20.1.json");
    return schema;
}

auto emitted_spec_count() -> std::size_t {
    return g_emitted.load();
}

}  // namespace vizform
