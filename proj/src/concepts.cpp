#include <vizform/concepts.hpp>

#include <vizform/error.hpp>

#include <algorithm>
#include <unordered_set>

namespace vizform {

using nlohmann::json;

auto to_string(ConceptKind kind) -> std::string_view {
    switch (kind) {
        case ConceptKind::original: return "original";
        case ConceptKind::derived: return "derived";
        case ConceptKind::custom: return "custom";
    }
    return "original";
}

auto concept_kind_from_string(std::string_view s) -> std::optional<ConceptKind> {
    for (auto k : {ConceptKind::original, ConceptKind::derived, ConceptKind::custom}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

auto sample_examples(std::span<const Value> values, std::size_t limit) -> std::vector<Value> {
    std::vector<Value> out;
    std::unordered_set<std::string> seen;
    for (const auto& v : values) {
        if (out.size() >= limit) {
            break;
        }
        if (!v.is_null() && seen.insert(v.canonical_key()).second) {
            out.push_back(v);
        }
    }
    return out;
}

auto infer_example_type(std::span<const Value> values) -> std::pair<SemanticType, std::vector<Value>> {
    std::vector<std::string> raw;
    for (const auto& v : values) {
        if (!v.is_null()) {
            raw.push_back(v.render());
        }
    }
    auto type = infer_type(raw);
    std::vector<Value> out;
    out.reserve(raw.size());
    for (const auto& r : raw) {
        out.push_back(parse_as(r, type));
    }
    return {type, out};
}

auto ConceptShelf::find(std::string_view ref) const -> const DataConcept* {
    for (const auto& c : concepts_) {
        if (c.id == ref) {
            return &c;
        }
    }
    for (const auto& c : concepts_) {
        if (c.name == ref) {
            return &c;
        }
    }
    return nullptr;
}

auto ConceptShelf::get(std::string_view ref) const -> const DataConcept& {
    if (const auto* c = find(ref)) {
        return *c;
    }
    throw Error(ErrorCode::unknown_concept, "no concept named '" + std::string(ref) + "'",
                {{"concept", std::string(ref)}});
}

auto ConceptShelf::mutable_get(std::string_view id) -> DataConcept& {
    return const_cast<DataConcept&>(get(id));
}

auto ConceptShelf::dependents(std::string_view id) const -> std::vector<std::string> {
    std::vector<std::string> out;
    for (const auto& c : concepts_) {
        if (std::find(c.sources.begin(), c.sources.end(), id) != c.sources.end()) {
            out.push_back(c.id);
        }
    }
    return out;
}

void ConceptShelf::check_name(const std::string& name) const {
    if (trim(name).empty()) {
        throw Error(ErrorCode::malformed_input, "concept name must not be empty");
    }
    for (const auto& c : concepts_) {
        if (c.name == name) {
            throw Error(ErrorCode::duplicate_name, "a concept named '" + name + "' already exists",
                        {{"name", name}, {"id", c.id}});
        }
    }
}

auto ConceptShelf::next_id() -> std::string {
    return "c" + std::to_string(++counter_);
}

auto ConceptShelf::load_original_concepts(const Table& t, const std::string& table_id) -> std::vector<DataConcept> {
    for (const auto& col : t.columns()) {
        check_name(col.name);
    }
    std::vector<DataConcept> out;
    for (std::size_t i = 0; i < t.column_count(); ++i) {
        DataConcept c;
        c.id = next_id();
        c.name = t.columns()[i].name;
        c.kind = ConceptKind::original;
        c.semantic_type = t.columns()[i].type;
        auto values = t.column_values(i);
        c.example_values = sample_examples(values);
        c.resolution = Resolution{table_id, c.name};
        concepts_.push_back(c);
        out.push_back(std::move(c));
    }
    return out;
}

auto ConceptShelf::create_custom_concept(std::string name, std::span<const Value> examples) -> const DataConcept& {
    check_name(name);
    auto [type, coerced] = infer_example_type(examples);
    if (coerced.empty()) {
        throw Error(ErrorCode::empty_examples, "custom concept '" + name + "' needs at least one example value",
                    {{"name", name}});
    }
    DataConcept c;
    c.id = next_id();
    c.name = std::move(name);
    c.kind = ConceptKind::custom;
    c.semantic_type = type;
    c.example_values = sample_examples(coerced);
    concepts_.push_back(std::move(c));
    return concepts_.back();
}

auto ConceptShelf::create_derived_concept(std::string name, std::span<const std::string> source_refs,
                                          std::string description, std::string_view formula_text,
                                          std::vector<Value> examples) -> const DataConcept& {
    check_name(name);
    if (source_refs.empty()) {
        throw Error(ErrorCode::malformed_input, "a derived concept needs at least one source");
    }
    std::vector<std::string> sources;
    std::vector<SemanticType> types;
    bool all_known = true;
    for (const auto& ref : source_refs) {
        const auto& s = get(ref);
        if (std::find(sources.begin(), sources.end(), s.id) != sources.end()) {
            throw Error(ErrorCode::malformed_input, "source '" + s.name + "' is listed twice");
        }
        sources.push_back(s.id);
        types.push_back(s.semantic_type);
        all_known = all_known && s.known();
    }
    auto formula = parse_formula(formula_text, types);
    if (formula.params().size() != sources.size()) {
        throw Error(ErrorCode::type_mismatch,
                    "formula takes " + std::to_string(formula.params().size()) + " parameters but " +
                        std::to_string(sources.size()) + " sources were given",
                    {{"expected", sources.size()}, {"actual", formula.params().size()}});
    }
    DataConcept c;
    c.id = next_id();
    c.name = std::move(name);
    c.kind = ConceptKind::derived;
    c.semantic_type = formula.result_type().semantic().value_or(SemanticType::text);
    c.example_values = sample_examples(examples);
    c.sources = std::move(sources);
    c.description = std::move(description);
    c.formula = std::move(formula);
    if (all_known) {
        c.resolution = Resolution{"", c.name};
    }
    concepts_.push_back(std::move(c));
    return concepts_.back();
}

auto ConceptShelf::resolve_concepts(std::span<const std::string> refs, const std::string& table_id, const Table& t,
                                    const std::map<std::string, std::string>& binding) -> std::vector<std::string> {
    std::vector<std::string> targets;
    std::vector<std::string> missing;
    for (const auto& ref : refs) {
        const auto& c = get(ref);
        if (c.known() || c.kind == ConceptKind::derived) {
            continue;
        }
        auto it = binding.find(c.name);
        if (it == binding.end() || !t.find_column(it->second)) {
            missing.push_back(c.name);
        } else {
            targets.push_back(c.id);
        }
    }
    if (!missing.empty()) {
        throw Error(ErrorCode::binding_incomplete, "no column bound for unknown concept '" + missing.front() + "'",
                    {{"concepts", missing}});
    }
    std::vector<std::string> changed;
    for (const auto& id : targets) {
        auto& c = mutable_get(id);
        const auto& column = binding.at(c.name);
        auto index = t.column_index(column);
        c.resolution = Resolution{table_id, column};
        c.semantic_type = t.columns()[index].type;
        std::vector<Value> kept;
        for (const auto& v : c.example_values) {
            if (auto coerced = coerce(v, c.semantic_type); !coerced.is_null()) {
                kept.push_back(std::move(coerced));
            }
        }
        c.example_values = std::move(kept);
        changed.push_back(id);
    }
    // Derived concepts may depend on other derived concepts: iterate to a fixpoint.
    for (bool progress = true; progress;) {
        progress = false;
        for (auto& c : concepts_) {
            if (c.known() || c.kind != ConceptKind::derived) {
                continue;
            }
            bool ready = std::all_of(c.sources.begin(), c.sources.end(),
                                     [&](const std::string& s) { return get(s).known(); });
            if (ready) {
                c.resolution = Resolution{t.find_column(c.name) ? table_id : "", c.name};
                changed.push_back(c.id);
                progress = true;
            }
        }
    }
    return changed;
}

void ConceptShelf::place(std::string_view id, Resolution where, SemanticType type, std::vector<Value> examples) {
    auto& c = mutable_get(id);
    c.resolution = std::move(where);
    c.semantic_type = type;
    if (!examples.empty()) {
        c.example_values = sample_examples(examples);
    }
}

void ConceptShelf::remove(std::string_view ref) {
    const auto& c = get(ref);
    if (auto deps = dependents(c.id); !deps.empty()) {
        throw Error(ErrorCode::concept_in_use, "concept '" + c.name + "' is a source of other concepts",
                    {{"concept", c.id}, {"dependents", deps}});
    }
    auto id = c.id;
    concepts_.erase(std::remove_if(concepts_.begin(), concepts_.end(), [&](const auto& x) { return x.id == id; }),
                    concepts_.end());
}

auto concept_to_json(const DataConcept& c) -> json {
    json j = {{"id", c.id}, {"name", c.name}, {"kind", to_string(c.kind)}, {"type", to_string(c.semantic_type)},
              {"known", c.known()}};
    auto examples = json::array();
    for (const auto& v : c.example_values) {
        examples.push_back(value_to_json(v));
    }
    j["examples"] = std::move(examples);
    j["resolution"] = c.resolution ? json{{"table", c.resolution->table_id}, {"column", c.resolution->column}}
                                   : json(nullptr);
    if (c.kind == ConceptKind::derived) {
        j["sources"] = c.sources;
        j["description"] = c.description;
        j["formula"] = c.formula ? c.formula->source() : "";
        auto params = json::array();
        if (c.formula) {
            for (const auto& p : c.formula->params()) {
                params.push_back(p.type.str());
            }
        }
        j["param_types"] = std::move(params);
    }
    return j;
}

auto ConceptShelf::to_json() const -> json {
    auto items = json::array();
    for (const auto& c : concepts_) {
        items.push_back(concept_to_json(c));
    }
    return {{"counter", counter_}, {"items", std::move(items)}};
}

auto ConceptShelf::from_json(const json& j) -> ConceptShelf {
    ConceptShelf shelf;
    try {
        shelf.counter_ = j.at("counter").get<std::size_t>();
        for (const auto& item : j.at("items")) {
            DataConcept c;
            c.id = item.at("id").get<std::string>();
            c.name = item.at("name").get<std::string>();
            auto kind = concept_kind_from_string(item.at("kind").get<std::string>());
            auto type = semantic_type_from_string(item.at("type").get<std::string>());
            if (!kind || !type) {
                throw Error(ErrorCode::malformed_input, "bad concept kind or type for '" + c.name + "'");
            }
            c.kind = *kind;
            c.semantic_type = *type;
            for (const auto& v : item.at("examples")) {
                c.example_values.push_back(value_from_json(v, c.semantic_type));
            }
            if (const auto& r = item.at("resolution"); !r.is_null()) {
                c.resolution = Resolution{r.at("table").get<std::string>(), r.at("column").get<std::string>()};
            }
            if (c.kind == ConceptKind::derived) {
                c.sources = item.at("sources").get<std::vector<std::string>>();
                c.description = item.at("description").get<std::string>();
                std::vector<SemanticType> types;
                for (const auto& p : item.at("param_types")) {
                    auto t = semantic_type_from_string(p.get<std::string>());
                    types.push_back(t.value_or(SemanticType::text));
                }
                c.formula = parse_formula(item.at("formula").get<std::string>(), types);
            }
            shelf.concepts_.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::malformed_input, std::string("malformed concept shelf: ") + e.what());
    }
    return shelf;
}

}  // namespace vizform
