#include <vizform/codegen.hpp>
#include <vizform/error.hpp>

#include <algorithm>
#include <cctype>
#include <future>
#include <regex>
#include <set>
#include <sstream>

namespace vizform {

namespace {

constexpr int kCompletionsPerPrompt = 5;
constexpr std::size_t kMaxSamples = 3;

auto lower(std::string s) -> std::string {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

auto words_of(std::string_view text) -> std::vector<std::string> {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

auto quote(std::string_view text) -> std::string {
    std::string out = "'";
    for (char c : text) {
        out.push_back(c);
        if (c == '\'') out.push_back('\'');
    }
    return out + "'";
}

auto render_sample(const Value& v) -> std::string {
    if (v.is_null()) return "null";
    return v.is_text() ? quote(v.as_text()) : v.render();
}

auto simple_header(const std::vector<std::string>& params) -> std::string {
    std::string out = "fn(";
    for (std::size_t i = 0; i < params.size(); ++i) out += (i ? ", " : "") + params[i];
    return out + ") =";
}

auto analytical_header(const std::vector<std::string>& params) -> std::string {
    std::string out = "fn(";
    for (const auto& p : params) out += p + ", ";
    out += "index";
    for (const auto& p : params) out += ", " + p + "_list";
    return out + ") =";
}

// Cuts a completion at its first blank line.
auto clean_completion(const std::string& text) -> std::string {
    static const std::regex blank_line(R"(\n[ \t\r]*\n)");
    std::smatch m;
    std::string body = text;
    if (std::regex_search(text, m, blank_line)) {
        body = text.substr(0, static_cast<std::size_t>(m.position(0)));
    }
    return std::string(trim(body));
}

auto full_source(const std::string& header, const std::string& completion) -> std::string {
    auto body = clean_completion(completion);
    if (body.rfind("fn(", 0) == 0 || body.rfind("fn (", 0) == 0) return body;
    return header + " " + body;
}

auto source_types(const DerivationRequest& req) -> std::vector<SemanticType> {
    std::vector<SemanticType> out;
    for (const auto& s : req.sources) out.push_back(s.type);
    return out;
}

struct Rejection {
    std::string source_text;
    std::string reason;
    std::string message;
};

// Parses and executes one formula text on the sample tuples; returns the
// candidate or the reason it was dropped.
auto try_candidate(const DerivationRequest& req, const std::vector<std::vector<Value>>& tuples,
                   const std::string& source, CandidateOrigin origin) -> std::variant<CandidateFormula, Rejection> {
    auto types = source_types(req);
    try {
        auto f = parse_formula(source, types);
        std::vector<std::vector<Value>> lists;
        if (f.analytical()) {
            lists.resize(req.sources.size());
            for (const auto& t : tuples) {
                for (std::size_t i = 0; i < t.size(); ++i) lists[i].push_back(t[i]);
            }
        }
        CandidateFormula c{f, source, {}, origin};
        bool any_value = tuples.empty();
        for (std::size_t i = 0; i < tuples.size(); ++i) {
            // Three samples cannot fill a real window, so the filter clamps.
            auto out = eval_row(f, tuples[i], static_cast<std::int64_t>(i), lists, WindowRule::clamp);
            any_value = any_value || !out.is_null();
            c.sample_outputs.push_back(SampleOutput{tuples[i], out});
        }
        if (!any_value) {
            return Rejection{source, "AllNullOutput", "the formula returned null on every sample"};
        }
        return c;
    } catch (const Error& e) {
        return Rejection{source, std::string(to_string(e.code())), e.what()};
    }
}

auto output_key(const CandidateFormula& c) -> std::string {
    if (c.sample_outputs.empty()) return "\x02" + c.source_text;
    std::string key;
    for (const auto& s : c.sample_outputs) key += s.output.canonical_key() + "\x1f";
    return key;
}

auto rejected_error(const std::vector<Rejection>& rejections) -> Error {
    nlohmann::json reasons = nlohmann::json::array();
    for (const auto& r : rejections) {
        reasons.push_back({{"source_text", r.source_text}, {"reason", r.reason}, {"message", r.message}});
    }
    return Error(ErrorCode::all_candidates_rejected,
                 std::to_string(rejections.size()) + " candidate formula(s) were generated and none survived",
                 {{"rejections", reasons}});
}

// ---------------------------------------------------------------- offline rules

struct PromptParam {
    std::string ident;
    std::string concept_name;
    std::optional<SemanticType> type;
};

struct ParsedPrompt {
    std::string description;
    std::vector<PromptParam> params;
    bool analytical = false;
};

constexpr std::string_view kGrammarLine = "# Formula language:";
constexpr std::string_view kFunctionsLine = "# Functions:";
constexpr std::string_view kParamLine = "# @param ";
constexpr std::string_view kConceptLine = "#   concept: ";

auto parse_prompt(const std::string& prompt) -> ParsedPrompt {
    ParsedPrompt out;
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(kGrammarLine, 0) == 0 || line.rfind(kFunctionsLine, 0) == 0) continue;
        if (line.rfind(kParamLine, 0) == 0) {
            auto rest = line.substr(kParamLine.size());
            auto ident = rest.substr(0, rest.find(' '));
            if (ident != "index" && !ident.ends_with("_list")) out.params.push_back(PromptParam{ident, ident, {}});
            continue;
        }
        if (line.rfind(kConceptLine, 0) == 0 && !out.params.empty()) {
            auto rest = line.substr(kConceptLine.size());
            auto open = rest.rfind(" (");
            if (open != std::string::npos && rest.ends_with(")")) {
                out.params.back().concept_name = rest.substr(0, open);
                out.params.back().type = semantic_type_from_string(rest.substr(open + 2, rest.size() - open - 3));
            } else {
                out.params.back().concept_name = rest;
            }
            continue;
        }
        if (line.rfind("fn(", 0) == 0) {
            out.analytical = line.find("index") != std::string::npos;
            continue;
        }
        if (line.rfind("# ", 0) == 0 && out.description.empty()) {
            out.description = line.substr(2);
        }
    }
    return out;
}

// Distinguishing labels for two concepts: words the names share are dropped,
// so "Seattle Temp" and "Atlanta Temp" become "Seattle" and "Atlanta".
auto distinct_labels(const std::string& a, const std::string& b) -> std::pair<std::string, std::string> {
    auto wa = words_of(a);
    auto wb = words_of(b);
    auto strip = [](const std::vector<std::string>& mine, const std::vector<std::string>& other) {
        std::string out;
        for (const auto& w : mine) {
            bool shared = std::any_of(other.begin(), other.end(), [&](const auto& o) { return lower(o) == lower(w); });
            if (!shared) out += (out.empty() ? "" : " ") + w;
        }
        return out;
    };
    auto la = strip(wa, wb);
    auto lb = strip(wb, wa);
    if (la.empty() || lb.empty()) return {a, b};
    return {la, lb};
}

auto has_any(const std::set<std::string>& words, std::initializer_list<const char*> keys) -> bool {
    return std::any_of(keys.begin(), keys.end(), [&](const char* k) { return words.count(k) > 0; });
}

auto offline_rules(const ParsedPrompt& p) -> std::vector<std::string> {
    std::vector<std::string> out;
    if (p.params.empty()) return out;
    auto desc = lower(p.description);
    auto tokens = words_of(desc);
    std::set<std::string> words(tokens.begin(), tokens.end());
    const auto& a = p.params[0].ident;

    static const std::regex n_day(R"((\d+)[- ]?days?\b)");
    std::smatch window;
    bool moving = has_any(words, {"moving", "avg", "average"}) && std::regex_search(desc, window, n_day);

    if (p.analytical) {
        if (moving) {
            auto n = std::stol(window[1].str());
            if (n >= 1 && n <= 10000) {
                if (has_any(words, {"center", "centered", "before", "after"})) {
                    out.push_back("list_avg(slice(" + a + "_list, index - " + std::to_string(n / 2) + ", index + " +
                                  std::to_string((n + 1) / 2) + "))");
                }
                out.push_back("list_avg(slice(" + a + "_list, index - " + std::to_string(n - 1) + ", index + 1))");
            }
        }
        if (has_any(words, {"percentile", "rank"})) {
            out.push_back("percentile_rank(" + a + "_list, " + a + ")");
        }
        return out;
    }

    if (has_any(words, {"diff", "difference", "minus", "subtract"}) && p.params.size() >= 2) {
        const auto& b = p.params[1].ident;
        out.push_back(a + " - " + b);
        out.push_back("abs(" + a + " - " + b + ")");
    }
    if (has_any(words, {"warmer", "larger", "greater", "which"}) && p.params.size() == 2) {
        const auto& b = p.params[1].ident;
        auto [la, lb] = distinct_labels(p.params[0].concept_name, p.params[1].concept_name);
        out.push_back("if " + a + " > " + b + " then " + quote(la) + " else (if " + b + " > " + a + " then " +
                      quote(lb) + " else 'Same')");
    }
    if (!moving) {
        for (const char* part : {"year", "month", "day"}) {
            if (words.count(part) == 0) continue;
            for (const auto& param : p.params) {
                if (param.type && is_temporal(*param.type)) {
                    out.push_back(std::string(part) + "(" + param.ident + ")");
                    break;
                }
            }
        }
    }
    return out;
}

}  // namespace

auto to_string(CandidateOrigin origin) -> std::string_view {
    switch (origin) {
        case CandidateOrigin::remote: return "remote";
        case CandidateOrigin::offline: return "offline";
        case CandidateOrigin::user_edited: return "user-edited";
    }
    return "offline";
}

void validate_request(const DerivationRequest& req) {
    if (req.sources.empty()) {
        throw Error(ErrorCode::malformed_input, "a derivation needs at least one source concept");
    }
    if (trim(req.description).empty()) {
        throw Error(ErrorCode::malformed_input, "a derivation needs a description");
    }
}

auto OfflineBackend::complete(const std::string& prompt, int n) -> std::vector<std::string> {
    auto out = offline_rules(parse_prompt(prompt));
    if (n >= 0 && out.size() > static_cast<std::size_t>(n)) out.resize(static_cast<std::size_t>(n));
    return out;
}

auto backend_config_from_json(const nlohmann::json& j) -> BackendConfig {
    BackendConfig c;
    auto kind = j.value("kind", std::string("offline"));
    if (kind == "remote") {
        c.kind = BackendConfig::Kind::remote;
    } else if (kind != "offline") {
        throw Error(ErrorCode::malformed_input, "unknown backend kind '" + kind + "'");
    }
    c.remote.endpoint = j.value("endpoint", c.remote.endpoint);
    c.remote.model = j.value("model", c.remote.model);
    c.remote.api_key_env = j.value("api_key_env", c.remote.api_key_env);
    c.remote.timeout = std::chrono::seconds(j.value("timeout_seconds", static_cast<int>(c.remote.timeout.count())));
    return c;
}

auto make_backend(const BackendConfig& config) -> std::unique_ptr<GenerationBackend> {
    if (config.kind == BackendConfig::Kind::remote) {
        return std::make_unique<RemoteBackend>(config.remote);
    }
    return std::make_unique<OfflineBackend>();
}

auto parameter_names(const std::vector<DerivationSource>& sources) -> std::vector<std::string> {
    auto builtins = builtin_names();
    std::set<std::string> taken(builtins.begin(), builtins.end());
    taken.insert("index");
    taken.insert("fn");
    std::vector<std::string> out;
    for (const auto& s : sources) {
        std::string ident;
        for (const auto& w : words_of(s.concept_name)) {
            if (ident.empty()) {
                ident = lower(w);
            } else {
                ident += static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
                ident += w.substr(1);
            }
        }
        if (ident.empty() || std::isdigit(static_cast<unsigned char>(ident[0]))) ident = "p" + ident;
        auto candidate = ident;
        for (int k = 2; taken.count(candidate) > 0 || is_reserved_word(candidate); ++k) {
            candidate = ident + std::to_string(k);
        }
        taken.insert(candidate);
        out.push_back(candidate);
    }
    return out;
}

auto build_prompts(const DerivationRequest& req) -> Prompts {
    auto params = parameter_names(req.sources);
    std::string preamble;
    preamble += std::string(kGrammarLine) +
                " fn(params) = one expression; operators + - * / % == != < <= > >= and or not; "
                "if c then a else b; let x = e in body; text in 'single quotes'.\n";
    preamble += std::string(kFunctionsLine);
    for (const auto& name : builtin_names()) preamble += " " + name;
    preamble += "\n";
    std::string description = "# ";
    for (char c : req.description) description.push_back(c == '\n' ? ' ' : c);
    preamble += description + "\n";
    for (std::size_t i = 0; i < req.sources.size(); ++i) {
        const auto& s = req.sources[i];
        preamble += std::string(kParamLine) + params[i] + " examples: ";
        for (std::size_t k = 0; k < s.samples.size() && k < kMaxSamples; ++k) {
            preamble += (k ? ", " : "") + render_sample(s.samples[k]);
        }
        preamble += "\n" + std::string(kConceptLine) + s.concept_name + " (" + std::string(to_string(s.type)) + ")\n";
    }
    Prompts p;
    p.simple = preamble + simple_header(params);
    p.analytical = preamble + std::string(kParamLine) + "index the row index\n";
    for (const auto& name : params) {
        p.analytical += std::string(kParamLine) + name + "_list the list of all " + name + "\n";
    }
    p.analytical += analytical_header(params);
    return p;
}

auto sample_tuples(const DerivationRequest& req) -> std::vector<std::vector<Value>> {
    std::size_t count = kMaxSamples;
    for (const auto& s : req.sources) count = std::min(count, s.samples.size());
    std::vector<std::vector<Value>> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        for (const auto& s : req.sources) out[i].push_back(s.samples[i]);
    }
    return out;
}

auto generate_candidates(const DerivationRequest& req, GenerationBackend& backend, std::vector<PromptExchange>* log)
    -> std::vector<CandidateFormula> {
    validate_request(req);
    auto prompts = build_prompts(req);
    auto params = parameter_names(req.sources);

    auto analytical = std::async(std::launch::async, [&] { return backend.complete(prompts.analytical, kCompletionsPerPrompt); });
    std::vector<std::string> simple_completions;
    try {
        simple_completions = backend.complete(prompts.simple, kCompletionsPerPrompt);
    } catch (...) {
        analytical.wait();
        throw;
    }
    auto analytical_completions = analytical.get();
    if (log) {
        log->push_back(PromptExchange{prompts.simple, simple_completions});
        log->push_back(PromptExchange{prompts.analytical, analytical_completions});
    }

    auto tuples = sample_tuples(req);
    std::vector<CandidateFormula> out;
    std::vector<Rejection> rejected;
    std::set<std::string> seen;
    auto consider = [&](const std::string& header, const std::vector<std::string>& completions) {
        for (const auto& text : completions) {
            auto result = try_candidate(req, tuples, full_source(header, text), backend.origin());
            if (auto* r = std::get_if<Rejection>(&result)) {
                rejected.push_back(std::move(*r));
                continue;
            }
            auto& c = std::get<CandidateFormula>(result);
            if (seen.insert(output_key(c)).second) out.push_back(std::move(c));
        }
    };
    consider(simple_header(params), simple_completions);
    consider(analytical_header(params), analytical_completions);
    if (out.empty()) throw rejected_error(rejected);
    return out;
}

auto make_candidate(const DerivationRequest& req, const std::string& text, CandidateOrigin origin) -> CandidateFormula {
    validate_request(req);
    auto source = full_source(simple_header(parameter_names(req.sources)), text);
    // Surface parse and type errors with their own codes.
    parse_formula(source, source_types(req));
    auto result = try_candidate(req, sample_tuples(req), source, origin);
    if (auto* r = std::get_if<Rejection>(&result)) throw rejected_error({*r});
    return std::get<CandidateFormula>(std::move(result));
}

auto candidate_to_json(const CandidateFormula& c) -> nlohmann::json {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : c.sample_outputs) {
        nlohmann::json inputs = nlohmann::json::array();
        for (const auto& v : s.inputs) inputs.push_back(value_to_json(v));
        samples.push_back({{"inputs", inputs}, {"output", value_to_json(s.output)}});
    }
    return {{"source_text", c.source_text},
            {"analytical", c.formula.analytical()},
            {"result_type", c.formula.result_type().str()},
            {"sample_outputs", samples},
            {"origin", to_string(c.origin)}};
}

}  // namespace vizform
