#include <vizform/session.hpp>

#include <vizform/error.hpp>

#include <algorithm>
#include <charconv>
#include <functional>
#include <set>

namespace vizform {

using nlohmann::json;

namespace {

auto encoding_to_request_json(const Encoding& e) -> json {
    auto j = encoding_to_json(e);
    if (j.contains("field")) {
        j["concept"] = j["field"];
        j.erase("field");
    }
    return j;
}

auto values_to_json(const std::vector<Value>& values) -> json {
    auto out = json::array();
    for (const auto& v : values) {
        out.push_back(value_to_json(v));
    }
    return out;
}

auto row_to_json(const Row& row) -> json {
    return values_to_json(row);
}

auto provenance_from_json(const json& j) -> Provenance {
    Provenance p;
    p.program = j.at("program").get<std::string>();
    for (const auto& f : j.at("formulas")) {
        p.formulas.push_back({f.at("concept").get<std::string>(), f.at("formula").get<std::string>()});
    }
    for (const auto& b : j.at("binding")) {
        p.binding.emplace_back(b.at("concept").get<std::string>(), b.at("column").get<std::string>());
    }
    p.steps = j.at("steps").get<std::vector<std::string>>();
    p.input_table = j.at("input_table").get<std::string>();
    return p;
}

auto encodings_from_json(const json& j) -> std::vector<Encoding> {
    std::vector<Encoding> out;
    for (const auto& e : j) {
        out.push_back(encoding_from_json(e));
    }
    return out;
}

auto encodings_to_json(const std::vector<Encoding>& encodings) -> json {
    auto out = json::array();
    for (const auto& e : encodings) {
        out.push_back(encoding_to_json(e));
    }
    return out;
}

auto candidate_from_json(const json& j) -> ChartCandidate {
    ChartCandidate c;
    c.id = j.at("id").get<std::string>();
    c.version = j.at("version").get<std::uint64_t>();
    c.template_id = j.at("template").get<std::string>();
    c.encodings = encodings_from_json(j.at("encodings"));
    c.table = table_from_json(j.at("table"));
    c.spec = j.at("spec");
    c.provenance = provenance_from_json(j.at("provenance"));
    return c;
}

auto saved_chart_from_json(const json& j) -> SavedChart {
    SavedChart c;
    c.id = j.at("id").get<std::string>();
    c.template_id = j.at("template").get<std::string>();
    c.encodings = encodings_from_json(j.at("encodings"));
    c.table_id = j.at("table").get<std::string>();
    c.spec = j.at("spec");
    c.provenance = provenance_from_json(j.at("provenance"));
    return c;
}

auto table_number(const std::string& id) -> std::size_t {
    std::size_t n = 0;
    std::from_chars(id.data() + 1, id.data() + id.size(), n);
    return n;
}

/// Parses the session version out of a candidate id "k<version>-<n>".
auto candidate_version(const std::string& id) -> std::optional<std::uint64_t> {
    if (id.size() < 4 || id[0] != 'k') {
        return std::nullopt;
    }
    auto dash = id.find('-');
    if (dash == std::string::npos) {
        return std::nullopt;
    }
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(id.data() + 1, id.data() + dash, v);
    if (ec != std::errc() || ptr != id.data() + dash) {
        return std::nullopt;
    }
    return v;
}

}  // namespace

auto chart_request_to_json(const ChartRequest& r) -> json {
    auto encodings = json::array();
    for (const auto& e : r.encodings) {
        encodings.push_back(encoding_to_request_json(e));
    }
    return {{"template", r.template_id}, {"encodings", std::move(encodings)}};
}

auto chart_request_from_json(const json& j) -> ChartRequest {
    if (!j.is_object() || !j.contains("template") || !j["template"].is_string()) {
        throw Error(ErrorCode::malformed_input, "a chart request needs a template id");
    }
    if (!j.contains("encodings") || !j["encodings"].is_array()) {
        throw Error(ErrorCode::malformed_input, "a chart request needs an encodings array");
    }
    return {j["template"].get<std::string>(), encodings_from_json(j["encodings"])};
}

auto example_relation_to_json(const ExampleRelation& e) -> json {
    auto rows = json::array();
    for (const auto& r : e.rows) {
        rows.push_back(row_to_json(r));
    }
    return {{"columns", e.columns}, {"rows", std::move(rows)}};
}

auto example_relation_from_json(const json& j) -> ExampleRelation {
    auto bad = [] { return Error(ErrorCode::malformed_input, "an example relation is {columns: [...], rows: [[...]]}"); };
    if (!j.is_object() || !j.contains("columns") || !j.contains("rows") || !j["columns"].is_array() ||
        !j["rows"].is_array()) {
        throw bad();
    }
    ExampleRelation e;
    for (const auto& c : j["columns"]) {
        if (!c.is_string()) throw bad();
        e.columns.push_back(c.get<std::string>());
    }
    for (const auto& r : j["rows"]) {
        if (!r.is_array()) throw bad();
        Row row;
        for (const auto& v : r) {
            row.push_back(value_from_json(v));
        }
        e.rows.push_back(std::move(row));
    }
    return e;
}

auto provenance_to_json(const Provenance& p) -> json {
    auto formulas = json::array();
    for (const auto& f : p.formulas) {
        formulas.push_back({{"concept", f.concept_name}, {"formula", f.formula}});
    }
    auto binding = json::array();
    for (const auto& [concept_name, column] : p.binding) {
        binding.push_back({{"concept", concept_name}, {"column", column}});
    }
    return {{"program", p.program}, {"formulas", std::move(formulas)}, {"binding", std::move(binding)},
            {"steps", p.steps}, {"input_table", p.input_table}};
}

auto candidate_to_json(const ChartCandidate& c, bool include_table) -> json {
    json j = {{"id", c.id},
              {"version", c.version},
              {"template", c.template_id},
              {"encodings", encodings_to_json(c.encodings)},
              {"spec", c.spec},
              {"provenance", provenance_to_json(c.provenance)}};
    if (include_table) {
        j["table"] = table_to_json(c.table);
    }
    return j;
}

auto outcome_to_json(const FormulateOutcome& o) -> json {
    if (o.needs_example) {
        auto rows = json::array();
        for (const auto& r : o.needs_example->prefilled) {
            rows.push_back(row_to_json(r));
        }
        return {{"status", "needs_example_relation"}, {"columns", o.needs_example->columns}, {"prefilled", rows}};
    }
    auto candidates = json::array();
    for (const auto& c : o.candidates) {
        candidates.push_back(candidate_to_json(c));
    }
    return {{"status", "ready"}, {"candidates", std::move(candidates)}};
}

auto saved_chart_to_json(const SavedChart& c) -> json {
    return {{"id", c.id},
            {"template", c.template_id},
            {"encodings", encodings_to_json(c.encodings)},
            {"table", c.table_id},
            {"spec", c.spec},
            {"provenance", provenance_to_json(c.provenance)}};
}

// ---- session ---------------------------------------------------------------

auto Session::create(std::string id, Table input) -> Session {
    Session s;
    s.id_ = std::move(id);
    auto tid = s.add_table(std::move(input));
    s.current_ = tid;
    s.shelf_.load_original_concepts(s.tables_.at(tid), tid);
    s.record({{"op", "create"}, {"id", s.id_}, {"table", table_to_json(s.tables_.at(tid))}});
    return s;
}

auto Session::current_table() const -> const Table& {
    return tables_.at(current_);
}

auto Session::table(const std::string& id) const -> const Table& {
    auto it = tables_.find(id);
    if (it == tables_.end()) {
        throw Error(ErrorCode::not_found, "no table '" + id + "' in session", {{"table", id}});
    }
    return it->second;
}

auto Session::table_ids() const -> std::vector<std::string> {
    std::vector<std::string> ids;
    for (const auto& [id, _] : tables_) {
        ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end(),
              [](const auto& a, const auto& b) { return table_number(a) < table_number(b); });
    return ids;
}

auto Session::find_template(const std::string& id) const -> const ChartTemplate& {
    for (const auto& t : templates_) {
        if (t.id == id) {
            return t;
        }
    }
    if (const auto* t = find_builtin_template(id)) {
        return *t;
    }
    throw Error(ErrorCode::not_found, "no chart template '" + id + "'", {{"template", id}});
}

auto Session::add_table(Table t) -> std::string {
    auto tid = "t" + std::to_string(++table_counter_);
    tables_.emplace(tid, t.renamed(tid));
    return tid;
}

void Session::bump() {
    ++version_;
    pending_.clear();
}

void Session::record(json entry) {
    entry["seq"] = log_.size();
    log_.push_back(std::move(entry));
}

auto Session::create_custom_concept(std::string name, const std::vector<Value>& examples) -> DataConcept {
    auto c = shelf_.create_custom_concept(std::move(name), examples);
    bump();
    record({{"op", "custom_concept"}, {"name", c.name}, {"examples", values_to_json(c.example_values)}});
    return c;
}

auto Session::materialize(const Table& t, const DataConcept& c, std::vector<AppliedFormula>* applied) const
    -> std::optional<Table> {
    if (t.find_column(c.name)) {
        return t;
    }
    if (c.kind != ConceptKind::derived || !c.formula) {
        return std::nullopt;
    }
    std::optional<Table> out = t;
    std::vector<std::string> names;
    for (const auto& sid : c.sources) {
        const auto& s = shelf_.get(sid);
        out = materialize(*out, s, applied);
        if (!out) {
            return std::nullopt;
        }
        names.push_back(s.name);
    }
    auto extended = apply_derivation(*out, *c.formula, names, c.name);
    if (applied) {
        applied->push_back({c.name, c.formula->source()});
    }
    return extended;
}

auto Session::locate(const std::vector<const DataConcept*>& concepts, bool include_derived) const
    -> std::optional<std::string> {
    std::vector<std::string> order{current_};
    for (const auto* c : concepts) {
        if (c && c->resolution && !c->resolution->table_id.empty()) {
            order.push_back(c->resolution->table_id);
        }
    }
    auto ids = table_ids();
    order.insert(order.end(), ids.rbegin(), ids.rend());
    std::set<std::string> tried;
    for (const auto& tid : order) {
        if (!tried.insert(tid).second) {
            continue;
        }
        const auto& t = tables_.at(tid);
        bool ok = std::all_of(concepts.begin(), concepts.end(), [&](const DataConcept* c) {
            if (!c) return true;
            if (t.find_column(c->name)) return true;
            if (!include_derived || c->kind != ConceptKind::derived) return false;
            try {
                return materialize(t, *c, nullptr).has_value();
            } catch (const Error&) {
                return false;
            }
        });
        if (ok) {
            return tid;
        }
    }
    return std::nullopt;
}

void Session::extend_known_derived() {
    Table t = current_table();
    std::vector<std::string> added;
    for (const auto& c : shelf_.concepts()) {
        if (c.kind != ConceptKind::derived || !c.resolution || !c.resolution->table_id.empty()) {
            continue;
        }
        auto out = materialize(t, c, nullptr);
        if (out) {
            t = std::move(*out);
            added.push_back(c.id);
        }
    }
    if (added.empty()) {
        return;
    }
    current_ = add_table(std::move(t));
    const auto& cur = current_table();
    for (const auto& id : added) {
        const auto& c = shelf_.get(id);
        auto index = cur.column_index(c.name);
        auto values = cur.column_values(index);
        shelf_.place(id, {current_, c.name}, cur.columns()[index].type, values);
    }
    // Derived columns pulled in as intermediate sources are placed too.
    for (const auto& c : shelf_.concepts()) {
        if (c.kind == ConceptKind::derived && c.resolution && c.resolution->table_id.empty()) {
            if (auto index = cur.find_column(c.name)) {
                shelf_.place(c.id, {current_, c.name}, cur.columns()[*index].type, cur.column_values(*index));
            }
        }
    }
}

auto Session::derivation_request(const std::vector<std::string>& sources, std::string description,
                                 std::string target_name) const -> DerivationRequest {
    DerivationRequest req;
    req.description = std::move(description);
    req.target_name = std::move(target_name);
    std::vector<const DataConcept*> concepts;
    for (const auto& ref : sources) {
        concepts.push_back(&shelf_.get(ref));
    }
    std::optional<Table> home;
    if (auto tid = locate(concepts, true)) {
        home = tables_.at(*tid);
        for (const auto* c : concepts) {
            home = materialize(*home, *c, nullptr);
        }
    }
    for (const auto* c : concepts) {
        DerivationSource s{c->name, c->semantic_type, {}};
        if (home) {
            auto values = home->column_values(home->column_index(c->name));
            values.resize(std::min<std::size_t>(values.size(), 3));
            s.samples = std::move(values);
            s.type = home->columns()[home->column_index(c->name)].type;
        } else {
            s.samples.assign(c->example_values.begin(),
                             c->example_values.begin() + std::min<std::ptrdiff_t>(3, c->example_values.size()));
        }
        req.sources.push_back(std::move(s));
    }
    return req;
}

auto Session::preview_derivation(const std::vector<std::string>& sources, std::string description, std::string name,
                                 GenerationBackend& backend) -> std::vector<CandidateFormula> {
    std::vector<std::string> ids;
    for (const auto& ref : sources) {
        ids.push_back(shelf_.get(ref).id);
    }
    auto req = derivation_request(ids, description, name);
    std::vector<PromptExchange> exchanges;
    json entry = {{"op", "derive_preview"}, {"sources", ids}, {"description", description}, {"name", name}};
    auto log_exchanges = [&] {
        auto out = json::array();
        for (const auto& x : exchanges) {
            out.push_back({{"prompt", x.prompt}, {"completions", x.completions}});
        }
        entry["exchanges"] = std::move(out);
    };
    try {
        auto candidates = generate_candidates(req, backend, &exchanges);
        log_exchanges();
        auto texts = json::array();
        for (const auto& c : candidates) {
            texts.push_back(c.source_text);
        }
        entry["candidates"] = std::move(texts);
        entry["origin"] = to_string(backend.origin());
        record(std::move(entry));
        return candidates;
    } catch (const Error& e) {
        log_exchanges();
        entry["error"] = {{"code", to_string(e.code())}, {"message", e.what()}, {"details", e.details()}};
        record(std::move(entry));
        throw;
    }
}

void Session::append_audit(json entry) {
    if (entry.value("op", "") != "derive_preview") {
        throw Error(ErrorCode::malformed_input, "only derive previews are audit entries");
    }
    entry.erase("seq");
    record(std::move(entry));
}

auto Session::commit_derived_concept(std::string name, const std::vector<std::string>& sources,
                                     std::string description, const std::string& formula_text,
                                     CandidateOrigin origin) -> DataConcept {
    std::vector<std::string> ids;
    for (const auto& ref : sources) {
        ids.push_back(shelf_.get(ref).id);
    }
    json entry = {{"op", "derive_commit"},
                  {"name", name},
                  {"sources", ids},
                  {"description", description},
                  {"formula", formula_text},
                  {"origin", to_string(origin)}};
    auto id = shelf_.create_derived_concept(std::move(name), ids, std::move(description), formula_text).id;
    extend_known_derived();
    bump();
    record(std::move(entry));
    return shelf_.get(id);
}

void Session::delete_concept(const std::string& ref) {
    const auto& c = shelf_.get(ref);
    for (const auto& chart : charts_) {
        bool used = std::any_of(chart.encodings.begin(), chart.encodings.end(),
                                [&](const Encoding& e) { return e.field == c.name; });
        if (used) {
            throw Error(ErrorCode::concept_in_use, "concept '" + c.name + "' is used by saved chart " + chart.id,
                        {{"concept", c.id}, {"chart", chart.id}});
        }
    }
    auto id = c.id;
    shelf_.remove(id);
    bump();
    record({{"op", "delete_concept"}, {"concept", id}});
}

auto Session::register_template(std::string id, const std::string& doc) -> ChartTemplate {
    bool taken = find_builtin_template(id) != nullptr ||
                 std::any_of(templates_.begin(), templates_.end(), [&](const auto& t) { return t.id == id; });
    if (taken) {
        throw Error(ErrorCode::duplicate_name, "a template named '" + id + "' already exists", {{"template", id}});
    }
    auto tmpl = register_custom_template(id, doc);
    templates_.push_back(tmpl);
    template_docs_.push_back(doc);
    bump();
    record({{"op", "register_template"}, {"id", id}, {"doc", doc}});
    return tmpl;
}

auto Session::resolve_request(const ChartRequest& request) const -> Resolved {
    Resolved r;
    r.tmpl = &find_template(request.template_id);
    for (const auto& e : request.encodings) {
        Encoding named = e;
        if (e.field.empty()) {
            r.concepts.push_back(nullptr);
        } else {
            const auto& c = shelf_.get(e.field);
            r.concepts.push_back(&c);
            named.field = c.name;
        }
        r.encodings.push_back(std::move(named));
    }
    check_encodings(*r.tmpl, r.encodings);
    return r;
}

auto Session::example_columns(const ChartRequest& request) const -> std::vector<std::string> {
    auto r = resolve_request(request);
    std::vector<std::string> out;
    std::function<void(const DataConcept&)> expand = [&](const DataConcept& c) {
        if (c.kind == ConceptKind::derived) {
            for (const auto& s : c.sources) {
                expand(shelf_.get(s));
            }
        } else if (std::find(out.begin(), out.end(), c.name) == out.end()) {
            out.push_back(c.name);
        }
    };
    for (const auto* c : r.concepts) {
        if (c) {
            expand(*c);
        }
    }
    return out;
}

auto Session::build_candidate(const Resolved& r, Table t, Provenance p) const -> ChartCandidate {
    ChartCandidate c;
    c.template_id = r.tmpl->id;
    c.encodings = r.encodings;
    c.spec = assemble_spec(*r.tmpl, r.encodings, t);
    c.table = std::move(t);
    c.provenance = std::move(p);
    return c;
}

auto Session::next_candidate_id() -> std::string {
    return "k" + std::to_string(version_) + "-" + std::to_string(++candidate_counter_);
}

auto Session::formulate(const ChartRequest& request) -> FormulateOutcome {
    auto r = resolve_request(request);
    FormulateOutcome outcome;
    bool any_unknown = std::any_of(r.concepts.begin(), r.concepts.end(),
                                   [](const DataConcept* c) { return c && !c->known(); });
    if (any_unknown) {
        auto columns = example_columns(request);
        const DataConcept* pick = nullptr;
        for (const auto& name : columns) {
            const auto& c = shelf_.get(name);
            if (!c.known() && (!pick || c.example_values.size() > pick->example_values.size())) {
                pick = &c;
            }
        }
        if (!pick || pick->example_values.empty()) {
            throw Error(ErrorCode::no_unknown_examples, "no unknown concept has example values to prefill",
                        {{"columns", columns}});
        }
        auto col = static_cast<std::size_t>(std::find(columns.begin(), columns.end(), pick->name) - columns.begin());
        NeedsExampleRelation needs{columns, {}};
        for (std::size_t i = 0; i < 2; ++i) {
            Row row(columns.size(), Value::null());
            if (i < pick->example_values.size()) {
                row[col] = pick->example_values[i];
            }
            needs.prefilled.push_back(std::move(row));
        }
        outcome.needs_example = std::move(needs);
        record({{"op", "formulate"}, {"request", chart_request_to_json(request)}});
        return outcome;
    }
    auto tid = locate(r.concepts, true);
    if (!tid) {
        std::vector<std::string> names;
        for (const auto* c : r.concepts) {
            if (c) names.push_back(c->name);
        }
        throw Error(ErrorCode::concepts_not_co_located, "no table holds all encoded concepts together",
                    {{"concepts", names}});
    }
    Table t = tables_.at(*tid);
    Provenance p;
    p.input_table = *tid;
    for (const auto* c : r.concepts) {
        if (c) {
            t = *materialize(t, *c, &p.formulas);
        }
    }
    p.steps.assign(p.formulas.size(), "derive");
    auto candidate = build_candidate(r, std::move(t), std::move(p));
    candidate.id = next_candidate_id();
    candidate.version = version_;
    pending_.push_back(candidate);
    outcome.candidates.push_back(std::move(candidate));
    record({{"op", "formulate"}, {"request", chart_request_to_json(request)}});
    return outcome;
}

auto Session::compute_candidates(const ChartRequest& request, const ExampleRelation& e,
                                 const SynthesisLimits& limits) const -> std::vector<ChartCandidate> {
    auto r = resolve_request(request);
    auto expected = example_columns(request);
    {
        std::vector<std::string> a = expected;
        std::vector<std::string> b = e.columns;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b) {
            throw Error(ErrorCode::invalid_example, "example relation columns do not match the chart request",
                        {{"expected", expected}, {"actual", e.columns}});
        }
    }
    std::vector<const DataConcept*> known_bases;
    for (const auto& name : expected) {
        const auto& c = shelf_.get(name);
        if (c.known()) {
            known_bases.push_back(&c);
        }
    }
    auto tid = locate(known_bases, false);
    if (!tid) {
        throw Error(ErrorCode::concepts_not_co_located, "no table holds the known example columns together",
                    {{"columns", expected}});
    }
    const auto& input = tables_.at(*tid);
    auto results = synthesize(input, e, limits);
    std::vector<ChartCandidate> out;
    json failures = json::array();
    for (const auto& res : results) {
        try {
            Provenance p;
            p.input_table = *tid;
            p.program = to_string(*res.program);
            p.steps.push_back("reshape");
            Table t = res.output;
            for (std::size_t i = 0; i < e.columns.size(); ++i) {
                p.binding.emplace_back(e.columns[i], res.binding[i]);
                if (res.binding[i] != e.columns[i]) {
                    t = t.with_column_renamed(res.binding[i], e.columns[i]);
                }
            }
            for (const auto* c : r.concepts) {
                if (!c) continue;
                auto m = materialize(t, *c, &p.formulas);
                if (!m) {
                    throw Error(ErrorCode::unknown_concept_in_encoding,
                                "concept '" + c->name + "' is not available in the reshaped table",
                                {{"concept", c->name}});
                }
                t = std::move(*m);
            }
            p.steps.insert(p.steps.end(), p.formulas.size(), "derive");
            out.push_back(build_candidate(r, std::move(t), std::move(p)));
        } catch (const Error& err) {
            failures.push_back({{"program", to_string(*res.program)},
                                {"code", to_string(err.code())},
                                {"message", err.what()}});
        }
    }
    if (out.empty()) {
        const auto& first = failures.front();
        throw Error(ErrorCode::no_program, "every synthesized program failed to produce a chart",
                    {{"candidate_errors", failures}, {"first_error", first}});
    }
    return out;
}

auto Session::adopt_candidates(std::vector<ChartCandidate> candidates, std::uint64_t version,
                               const ChartRequest& request, const ExampleRelation& e) -> std::vector<ChartCandidate> {
    if (version != version_) {
        throw Error(ErrorCode::stale_candidate, "the session changed while candidates were computed",
                    {{"computed_at", version}, {"current", version_}});
    }
    for (auto& c : candidates) {
        c.id = next_candidate_id();
        c.version = version_;
        pending_.push_back(c);
    }
    record({{"op", "complete_formulate"},
            {"request", chart_request_to_json(request)},
            {"example", example_relation_to_json(e)}});
    return candidates;
}

auto Session::complete_formulate(const ChartRequest& request, const ExampleRelation& e,
                                 const SynthesisLimits& limits) -> std::vector<ChartCandidate> {
    return adopt_candidates(compute_candidates(request, e, limits), version_, request, e);
}

auto Session::save_chart(const std::string& candidate_id) -> SavedChart {
    auto it = std::find_if(pending_.begin(), pending_.end(), [&](const auto& c) { return c.id == candidate_id; });
    if (it == pending_.end()) {
        auto v = candidate_version(candidate_id);
        if (v && *v < version_) {
            throw Error(ErrorCode::stale_candidate, "candidate " + candidate_id + " predates the current session state",
                        {{"candidate", candidate_id}, {"version", version_}});
        }
        throw Error(ErrorCode::not_found, "no pending candidate " + candidate_id, {{"candidate", candidate_id}});
    }
    ChartCandidate c = *it;
    auto tid = add_table(c.table);
    current_ = tid;
    const auto& t = tables_.at(tid);
    std::vector<std::string> bound;
    std::map<std::string, std::string> binding;
    for (const auto& [concept_name, _] : c.provenance.binding) {
        bound.push_back(concept_name);
        binding[concept_name] = concept_name;
    }
    auto changed = shelf_.resolve_concepts(bound, tid, t, binding);
    for (const auto& id : changed) {
        const auto& concept_ref = shelf_.get(id);
        if (concept_ref.kind == ConceptKind::derived && !concept_ref.resolution->table_id.empty()) {
            auto index = t.column_index(concept_ref.name);
            shelf_.place(id, *concept_ref.resolution, t.columns()[index].type, t.column_values(index));
        }
    }
    SavedChart chart{"chart" + std::to_string(++chart_counter_), c.template_id, c.encodings, tid, c.spec,
                     c.provenance};
    charts_.push_back(chart);
    extend_known_derived();
    bump();
    record({{"op", "save_chart"}, {"candidate", candidate_id}});
    return chart;
}

// ---- persistence -----------------------------------------------------------

auto Session::to_json() const -> json {
    json tables = json::object();
    for (const auto& [id, t] : tables_) {
        tables[id] = table_to_json(t);
    }
    auto charts = json::array();
    for (const auto& c : charts_) {
        charts.push_back(saved_chart_to_json(c));
    }
    auto templates = json::array();
    for (std::size_t i = 0; i < templates_.size(); ++i) {
        templates.push_back({{"id", templates_[i].id}, {"doc", template_docs_[i]}});
    }
    auto pending = json::array();
    for (const auto& c : pending_) {
        pending.push_back(candidate_to_json(c));
    }
    return {{"format", "vizform-session"},
            {"format_version", kSessionFormatVersion},
            {"id", id_},
            {"version", version_},
            {"current_table", current_},
            {"tables", std::move(tables)},
            {"concepts", shelf_.to_json()},
            {"charts", std::move(charts)},
            {"templates", std::move(templates)},
            {"pending", std::move(pending)},
            {"counters", {{"table", table_counter_}, {"chart", chart_counter_}, {"candidate", candidate_counter_}}},
            {"log", log_},
            {"idempotency", idempotency}};
}

auto Session::from_json(const json& j) -> Session {
    if (!j.is_object() || j.value("format", "") != "vizform-session") {
        throw Error(ErrorCode::malformed_input, "not a session document");
    }
    if (j.value("format_version", 0) != kSessionFormatVersion) {
        throw Error(ErrorCode::malformed_input, "unsupported session format version",
                    {{"format_version", j.value("format_version", 0)}});
    }
    Session s;
    try {
        s.id_ = j.at("id").get<std::string>();
        s.version_ = j.at("version").get<std::uint64_t>();
        s.current_ = j.at("current_table").get<std::string>();
        for (const auto& [id, t] : j.at("tables").items()) {
            s.tables_.emplace(id, table_from_json(t));
        }
        s.shelf_ = ConceptShelf::from_json(j.at("concepts"));
        for (const auto& c : j.at("charts")) {
            s.charts_.push_back(saved_chart_from_json(c));
        }
        for (const auto& t : j.at("templates")) {
            auto doc = t.at("doc").get<std::string>();
            s.templates_.push_back(register_custom_template(t.at("id").get<std::string>(), doc));
            s.template_docs_.push_back(doc);
        }
        for (const auto& c : j.at("pending")) {
            s.pending_.push_back(candidate_from_json(c));
        }
        const auto& counters = j.at("counters");
        s.table_counter_ = counters.at("table").get<std::size_t>();
        s.chart_counter_ = counters.at("chart").get<std::size_t>();
        s.candidate_counter_ = counters.at("candidate").get<std::size_t>();
        s.log_ = j.at("log");
        s.idempotency = j.value("idempotency", json::object());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::malformed_input, std::string("malformed session document: ") + e.what());
    }
    if (!s.tables_.count(s.current_)) {
        throw Error(ErrorCode::malformed_input, "session current table '" + s.current_ + "' is missing");
    }
    return s;
}

auto Session::replay(const json& log) -> Session {
    if (!log.is_array() || log.empty() || log[0].value("op", "") != "create") {
        throw Error(ErrorCode::malformed_input, "a session log starts with a create entry");
    }
    auto s = create(log[0].at("id").get<std::string>(), table_from_json(log[0].at("table")));
    for (std::size_t i = 1; i < log.size(); ++i) {
        const auto& entry = log[i];
        auto op = entry.at("op").get<std::string>();
        auto refs = [&](const char* key) { return entry.at(key).get<std::vector<std::string>>(); };
        if (op == "custom_concept") {
            std::vector<Value> examples;
            for (const auto& v : entry.at("examples")) {
                examples.push_back(value_from_json(v));
            }
            s.create_custom_concept(entry.at("name").get<std::string>(), examples);
        } else if (op == "derive_preview") {
            s.log_.push_back(entry);
        } else if (op == "derive_commit") {
            auto origin_name = entry.at("origin").get<std::string>();
            auto origin = origin_name == "remote"        ? CandidateOrigin::remote
                          : origin_name == "user-edited" ? CandidateOrigin::user_edited
                                                         : CandidateOrigin::offline;
            s.commit_derived_concept(entry.at("name").get<std::string>(), refs("sources"),
                                     entry.at("description").get<std::string>(),
                                     entry.at("formula").get<std::string>(), origin);
        } else if (op == "delete_concept") {
            s.delete_concept(entry.at("concept").get<std::string>());
        } else if (op == "register_template") {
            s.register_template(entry.at("id").get<std::string>(), entry.at("doc").get<std::string>());
        } else if (op == "formulate") {
            s.formulate(chart_request_from_json(entry.at("request")));
        } else if (op == "complete_formulate") {
            s.complete_formulate(chart_request_from_json(entry.at("request")),
                                 example_relation_from_json(entry.at("example")));
        } else if (op == "save_chart") {
            s.save_chart(entry.at("candidate").get<std::string>());
        } else {
            throw Error(ErrorCode::malformed_input, "unknown log operation '" + op + "'");
        }
    }
    return s;
}

}  // namespace vizform
