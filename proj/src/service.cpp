#include <vizform/service.hpp>

#include <vizform/chart.hpp>
#include <vizform/session.hpp>

#include <httplib.h>

#include <charconv>
#include <future>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <thread>
#include <unordered_map>

namespace vizform {

using nlohmann::json;

auto service_config_from_json(const json& j) -> ServiceConfig {
    ServiceConfig c;
    if (!j.is_object()) {
        throw Error(ErrorCode::malformed_input, "service config must be a JSON object");
    }
    try {
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.data_dir = j.value("data_dir", c.data_dir.string());
        c.max_body_bytes = j.value("max_body_bytes", c.max_body_bytes);
        if (j.contains("backend")) {
            c.backend = backend_config_from_json(j["backend"]);
        }
        c.codegen_timeout = std::chrono::seconds(j.value("codegen_timeout_seconds", c.codegen_timeout.count()));
        c.cors_origins = j.value("cors_origins", c.cors_origins);
        if (j.contains("synthesis")) {
            const auto& s = j["synthesis"];
            c.synthesis.max_depth = s.value("max_depth", c.synthesis.max_depth);
            c.synthesis.timeout = std::chrono::milliseconds(s.value("timeout_ms", c.synthesis.timeout.count()));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::malformed_input, std::string("bad service config: ") + e.what());
    }
    return c;
}

auto http_status(ErrorCode code) -> int {
    switch (code) {
        case ErrorCode::malformed_input:
        case ErrorCode::empty_header:
        case ErrorCode::duplicate_column: return 400;
        case ErrorCode::not_found: return 404;
        case ErrorCode::duplicate_name:
        case ErrorCode::stale_candidate:
        case ErrorCode::concept_in_use: return 409;
        case ErrorCode::too_large: return 413;
        case ErrorCode::io_error:
        case ErrorCode::invalid_spec: return 500;
        case ErrorCode::backend_unavailable: return 502;
        case ErrorCode::timeout: return 504;
        default: return 422;
    }
}

auto ok_envelope(json payload) -> json {
    return {{"ok", true}, {"payload", std::move(payload)}};
}

auto error_envelope(const Error& e) -> json {
    json details = e.details().is_null() ? json::object() : e.details();
    if (!details.is_object()) {
        details = {{"value", details}};
    }
    return {{"ok", false}, {"error", {{"code", to_string(e.code())}, {"message", e.what()}, {"details", details}}}};
}

auto session_state_json(const Session& s) -> json {
    auto tables = json::array();
    for (const auto& id : s.table_ids()) {
        const auto& t = s.table(id);
        auto columns = json::array();
        for (const auto& c : t.columns()) {
            columns.push_back({{"name", c.name}, {"type", to_string(c.type)}});
        }
        tables.push_back({{"id", id}, {"columns", columns}, {"row_count", t.row_count()}});
    }
    auto concepts = json::array();
    for (const auto& c : s.shelf().concepts()) {
        concepts.push_back(concept_to_json(c));
    }
    auto charts = json::array();
    for (const auto& c : s.charts()) {
        charts.push_back(saved_chart_to_json(c));
    }
    auto templates = json::array();
    for (const auto& t : s.custom_templates()) {
        templates.push_back(t.id);
    }
    auto pending = json::array();
    for (const auto& c : s.pending()) {
        pending.push_back(candidate_to_json(c, false));
    }
    return {{"id", s.id()},         {"version", s.version()},  {"current_table", s.current_table_id()},
            {"tables", tables},     {"concepts", concepts},     {"charts", charts},
            {"templates", templates}, {"pending", pending},    {"log", s.log()}};
}

auto api_schema() -> const JsonSchema& {
    static const JsonSchema schema = JsonSchema::load(schema_dir() + "/api/api-v1.json");
    return schema;
}

namespace {

constexpr std::size_t kMaxIdempotencyRecords = 200;

struct Reply {
    int status = 200;
    json body;
};

auto reply_ok(json payload, int status = 200) -> Reply {
    return {status, ok_envelope(std::move(payload))};
}

auto reply_error(const Error& e) -> Reply {
    return {http_status(e.code()), error_envelope(e)};
}

auto parse_body(const httplib::Request& req) -> json {
    if (req.body.empty()) {
        throw Error(ErrorCode::malformed_input, "request body is empty");
    }
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded()) {
        throw Error(ErrorCode::malformed_input, "request body is not valid JSON");
    }
    if (!j.is_object()) {
        throw Error(ErrorCode::malformed_input, "request body must be a JSON object");
    }
    return j;
}

auto require_string(const json& j, const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) {
        throw Error(ErrorCode::malformed_input, std::string("'") + key + "' must be a string", {{"field", key}});
    }
    return j[key].get<std::string>();
}

auto require_strings(const json& j, const char* key) -> std::vector<std::string> {
    if (!j.contains(key) || !j[key].is_array() ||
        !std::all_of(j[key].begin(), j[key].end(), [](const json& x) { return x.is_string(); })) {
        throw Error(ErrorCode::malformed_input, std::string("'") + key + "' must be an array of strings",
                    {{"field", key}});
    }
    return j[key].get<std::vector<std::string>>();
}

auto origin_from_string(const std::string& s) -> CandidateOrigin {
    if (s == "remote") return CandidateOrigin::remote;
    if (s == "offline") return CandidateOrigin::offline;
    if (s == "user-edited") return CandidateOrigin::user_edited;
    throw Error(ErrorCode::malformed_input, "unknown formula origin '" + s + "'");
}

auto body_digest(const std::string& body) -> std::string {
    return std::to_string(std::hash<std::string>{}(body));
}

auto query_size(const httplib::Request& req, const char* key, std::size_t fallback) -> std::size_t {
    if (!req.has_param(key)) {
        return fallback;
    }
    auto raw = req.get_param_value(key);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
    if (ec != std::errc() || ptr != raw.data() + raw.size()) {
        throw Error(ErrorCode::invalid_argument, std::string("'") + key + "' must be a non-negative integer",
                    {{"parameter", key}, {"value", raw}});
    }
    return value;
}

void remember(json& records, const std::string& key, const std::string& digest, const Reply& reply) {
    std::uint64_t seq = 0;
    for (const auto& [_, r] : records.items()) {
        seq = std::max(seq, r.value("seq", std::uint64_t{0}) + 1);
    }
    records[key] = {{"digest", digest}, {"status", reply.status}, {"body", reply.body}, {"seq", seq}};
    while (records.size() > kMaxIdempotencyRecords) {
        auto oldest = records.begin();
        for (auto it = records.begin(); it != records.end(); ++it) {
            if (it.value()["seq"] < oldest.value()["seq"]) oldest = it;
        }
        records.erase(oldest.key());
    }
}

auto replayed(const json& records, const std::string& key, const std::string& digest) -> std::optional<Reply> {
    if (key.empty() || !records.contains(key)) {
        return std::nullopt;
    }
    const auto& r = records[key];
    if (r["digest"] != digest) {
        throw Error(ErrorCode::idempotency_conflict, "idempotency key reused with a different request",
                    {{"key", key}});
    }
    return Reply{r["status"].get<int>(), r["body"]};
}

}  // namespace

struct Service::Impl {
    struct Slot {
        std::shared_mutex mu;
        std::optional<Session> session;
    };

    ServiceConfig config;
    BackendFactory backends;
    SessionStore store;
    httplib::Server server;
    std::thread thread;

    std::mutex slots_mu;
    std::unordered_map<std::string, std::shared_ptr<Slot>> slots;
    std::mutex create_mu;

    Impl(ServiceConfig c, BackendFactory b) : config(std::move(c)), backends(std::move(b)), store(config.data_dir) {
        if (!backends) {
            auto backend_config = config.backend;
            backend_config.remote.timeout = std::min(backend_config.remote.timeout, config.codegen_timeout);
            backends = [backend_config] { return make_backend(backend_config); };
        }
        routes();
    }

    auto slot(const std::string& id) -> std::shared_ptr<Slot> {
        if (!valid_session_id(id)) {
            throw Error(ErrorCode::not_found, "no session '" + id + "'", {{"session", id}});
        }
        std::shared_ptr<Slot> s;
        {
            std::lock_guard lock(slots_mu);
            auto& entry = slots[id];
            if (!entry) entry = std::make_shared<Slot>();
            s = entry;
        }
        std::unique_lock lock(s->mu);
        if (!s->session) {
            try {
                s->session = store.load(id);
            } catch (const Error&) {
                std::lock_guard slots_lock(slots_mu);
                slots.erase(id);
                throw;
            }
        }
        return s;
    }

    auto read(const std::string& id) -> Session {
        auto s = slot(id);
        std::shared_lock lock(s->mu);
        return *s->session;
    }

    /// Applies `fn` to a copy of the session, persists the copy and swaps it
    /// in. Nothing changes if `fn` throws.
    auto mutate(const std::string& id, const httplib::Request& req, const std::function<Reply(Session&)>& fn)
        -> Reply {
        auto s = slot(id);
        std::unique_lock lock(s->mu);
        auto key = req.get_header_value("Idempotency-Key");
        auto digest = body_digest(req.method + " " + req.path + " " + req.body);
        if (auto r = replayed(s->session->idempotency, key, digest)) {
            return *r;
        }
        Session copy = *s->session;
        auto reply = fn(copy);
        if (!key.empty()) {
            remember(copy.idempotency, key, digest, reply);
        }
        store.save(copy);
        s->session = std::move(copy);
        return reply;
    }

    // ---- handlers ------------------------------------------------------------

    auto create_session(const httplib::Request& req) -> Reply {
        if (req.body.size() > config.max_body_bytes) {
            throw Error(ErrorCode::too_large, "upload exceeds the size limit",
                        {{"limit", config.max_body_bytes}, {"size", req.body.size()}});
        }
        if (trim(req.body).empty()) {
            throw Error(ErrorCode::malformed_input, "upload is empty");
        }
        std::lock_guard lock(create_mu);
        auto key = req.get_header_value("Idempotency-Key");
        auto digest = body_digest(req.body);
        auto records_path = config.data_dir / "idempotency.json";
        json records = json::object();
        if (!key.empty() && std::filesystem::exists(records_path)) {
            records = json::parse(read_file(records_path), nullptr, false);
            if (records.is_discarded() || !records.is_object()) records = json::object();
            if (auto r = replayed(records, key, digest)) {
                return *r;
            }
        }
        auto content_type = req.get_header_value("Content-Type");
        std::string name = req.has_param("name") ? req.get_param_value("name") : "upload";
        Table t;
        if (content_type.rfind("application/json", 0) == 0) {
            auto j = json::parse(req.body, nullptr, false);
            if (j.is_discarded()) {
                throw Error(ErrorCode::malformed_input, "upload is not valid JSON");
            }
            if (j.is_array()) {
                t = parse_table(req.body, TableFormat::json_rows, name);
            } else if (j.is_object()) {
                auto format = table_format_from_string(j.value("format", "csv"));
                if (!format) {
                    throw Error(ErrorCode::malformed_input, "format must be csv or json-rows");
                }
                name = j.value("name", name);
                const auto& content = j.contains("content") ? j["content"] : json();
                if (content.is_string()) {
                    t = parse_table(content.get<std::string>(), *format, name);
                } else if (content.is_array() && *format == TableFormat::json_rows) {
                    t = parse_table(content.dump(), *format, name);
                } else {
                    throw Error(ErrorCode::malformed_input, "upload object needs a 'content' string or row array");
                }
            } else {
                throw Error(ErrorCode::malformed_input, "JSON upload must be an array of rows or an object");
            }
        } else {
            t = parse_table(req.body, TableFormat::csv, name);
        }
        std::string id;
        do {
            id = new_session_id();
        } while (store.exists(id));
        auto session = Session::create(id, std::move(t));
        store.save(session);
        {
            std::lock_guard slots_lock(slots_mu);
            auto entry = std::make_shared<Slot>();
            entry->session = session;
            slots[id] = entry;
        }
        auto reply = reply_ok({{"session", session_state_json(session)}}, 201);
        if (!key.empty()) {
            remember(records, key, digest, reply);
            write_file_atomic(records_path, records.dump());
        }
        return reply;
    }

    auto table_page(const httplib::Request& req, const std::string& id) -> Reply {
        auto s = read(id);
        auto offset = query_size(req, "offset", 0);
        auto limit = query_size(req, "limit", 100);
        if (limit == 0 || limit > 10000) {
            throw Error(ErrorCode::invalid_argument, "limit must be between 1 and 10000", {{"limit", limit}});
        }
        auto table_id = req.has_param("table") ? req.get_param_value("table") : s.current_table_id();
        const auto& t = s.table(table_id);
        auto page = table_to_json(t.slice_rows(offset, limit));
        return reply_ok({{"table", table_id},
                         {"offset", offset},
                         {"limit", limit},
                         {"total_rows", t.row_count()},
                         {"columns", page["columns"]},
                         {"rows", page["rows"]}});
    }

    auto derive_preview(const httplib::Request& req, const std::string& id) -> Reply {
        auto body = parse_body(req);
        auto sources = require_strings(body, "sources");
        auto description = require_string(body, "description");
        auto name = body.value("name", std::string("Derived"));
        auto copy = read(id);
        auto backend = std::shared_ptr<GenerationBackend>(backends());
        // Codegen runs detached so an expired request does not block the worker.
        auto task = std::make_shared<std::packaged_task<std::pair<std::vector<CandidateFormula>, json>()>>(
            [copy, backend, sources, description, name]() mutable {
                auto candidates = copy.preview_derivation(sources, description, name, *backend);
                return std::make_pair(std::move(candidates), copy.log().back());
            });
        auto future = task->get_future();
        std::thread([task] { (*task)(); }).detach();
        if (future.wait_for(config.codegen_timeout) != std::future_status::ready) {
            throw Error(ErrorCode::timeout, "formula generation timed out",
                        {{"timeout_seconds", config.codegen_timeout.count()}});
        }
        auto [candidates, audit] = future.get();
        {
            auto s = slot(id);
            std::unique_lock lock(s->mu);
            Session updated = *s->session;
            updated.append_audit(audit);
            store.save(updated);
            s->session = std::move(updated);
        }
        auto list = json::array();
        for (const auto& c : candidates) {
            list.push_back(candidate_to_json(c));
        }
        return reply_ok({{"candidates", list}});
    }

    auto complete(const httplib::Request& req, const std::string& id) -> Reply {
        auto body = parse_body(req);
        auto request = chart_request_from_json(body);
        if (!body.contains("example")) {
            throw Error(ErrorCode::malformed_input, "'example' is required");
        }
        auto example = example_relation_from_json(body["example"]);
        // Synthesis runs on a snapshot; adoption re-checks the version.
        auto snapshot = read(id);
        auto computed = snapshot.compute_candidates(request, example, config.synthesis);
        return mutate(id, req, [&](Session& s) {
            auto adopted = s.adopt_candidates(computed, snapshot.version(), request, example);
            FormulateOutcome outcome{adopted, std::nullopt};
            return reply_ok(outcome_to_json(outcome));
        });
    }

    // ---- routing -------------------------------------------------------------

    void send(httplib::Response& res, const Reply& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    }

    auto guarded(std::function<Reply(const httplib::Request&, const std::string&)> fn) {
        return [this, fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
            try {
                auto id = req.matches.size() > 1 ? std::string(req.matches[1]) : std::string();
                send(res, fn(req, id));
            } catch (const Error& e) {
                send(res, reply_error(e));
            } catch (const std::exception& e) {
                send(res, reply_error(Error(ErrorCode::io_error, std::string("internal error: ") + e.what())));
            }
        };
    }

    void routes() {
        server.set_payload_max_length(config.max_body_bytes * 4 + 1024);
        server.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            auto origin = req.get_header_value("Origin");
            if (origin.empty()) return;
            bool allowed = std::any_of(config.cors_origins.begin(), config.cors_origins.end(),
                                       [&](const std::string& o) { return o == "*" || o == origin; });
            if (allowed) {
                res.set_header("Access-Control-Allow-Origin", origin);
                res.set_header("Vary", "Origin");
            }
        });
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
            res.status = 204;
            res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type, Idempotency-Key");
        });
        server.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) return;
            if (res.status == 404) {
                send(res, reply_error(Error(ErrorCode::not_found, "no route " + req.method + " " + req.path)));
            } else if (res.status == 413) {
                send(res, reply_error(Error(ErrorCode::too_large, "request body exceeds the size limit")));
            }
        });

        server.Get("/health", guarded([](const auto&, const auto&) { return reply_ok({{"status", "ok"}}); }));
        server.Get("/templates", guarded([](const auto&, const auto&) {
            auto list = json::array();
            for (const auto& t : list_templates()) {
                auto channels = json::array();
                for (const auto& slot : t.channels) {
                    auto aggregates = json::array();
                    for (auto a : slot.allowed_aggregates) aggregates.push_back(to_string(a));
                    channels.push_back({{"channel", to_string(slot.channel)},
                                        {"required", slot.required},
                                        {"aggregates", aggregates}});
                }
                list.push_back({{"id", t.id}, {"channels", channels}});
            }
            return reply_ok({{"templates", list}});
        }));
        server.Post("/sessions", guarded([this](const auto& req, const auto&) { return create_session(req); }));
        server.Get(R"(/sessions/([^/]+))", guarded([this](const auto&, const std::string& id) {
            return reply_ok({{"session", session_state_json(read(id))}});
        }));
        server.Get(R"(/sessions/([^/]+)/table)",
                   guarded([this](const auto& req, const std::string& id) { return table_page(req, id); }));
        server.Post(R"(/sessions/([^/]+)/concepts/custom)", guarded([this](const auto& req, const std::string& id) {
            auto body = parse_body(req);
            auto name = require_string(body, "name");
            if (!body.contains("examples") || !body["examples"].is_array()) {
                throw Error(ErrorCode::malformed_input, "'examples' must be an array", {{"field", "examples"}});
            }
            std::vector<Value> examples;
            for (const auto& v : body["examples"]) examples.push_back(value_from_json(v));
            return mutate(id, req, [&](Session& s) {
                return reply_ok({{"concept", concept_to_json(s.create_custom_concept(name, examples))}}, 201);
            });
        }));
        server.Post(R"(/sessions/([^/]+)/concepts/derive/preview)",
                    guarded([this](const auto& req, const std::string& id) { return derive_preview(req, id); }));
        auto commit = guarded([this](const auto& req, const std::string& id) {
            auto body = parse_body(req);
            auto name = require_string(body, "name");
            auto sources = require_strings(body, "sources");
            auto formula = require_string(body, "formula");
            auto description = body.value("description", std::string());
            auto origin = origin_from_string(body.value("origin", std::string("user-edited")));
            return mutate(id, req, [&](Session& s) {
                auto c = s.commit_derived_concept(name, sources, description, formula, origin);
                return reply_ok({{"concept", concept_to_json(c)}, {"current_table", s.current_table_id()}}, 201);
            });
        });
        server.Post(R"(/sessions/([^/]+)/concepts/derive)", commit);
        server.Post(R"(/sessions/([^/]+)/concepts/derive/commit)", commit);
        server.Delete(R"(/sessions/([^/]+)/concepts/([^/]+))", guarded([this](const auto& req, const std::string& id) {
            std::string ref = req.matches[2];
            return mutate(id, req, [&](Session& s) {
                s.delete_concept(ref);
                return reply_ok({{"deleted", ref}});
            });
        }));
        server.Post(R"(/sessions/([^/]+)/templates)", guarded([this](const auto& req, const std::string& id) {
            auto body = parse_body(req);
            auto tid = require_string(body, "id");
            if (!body.contains("template")) {
                throw Error(ErrorCode::malformed_input, "'template' is required", {{"field", "template"}});
            }
            auto doc = body["template"].is_string() ? body["template"].template get<std::string>() : body["template"].dump();
            return mutate(id, req, [&](Session& s) {
                auto t = s.register_template(tid, doc);
                auto channels = json::array();
                for (const auto& slot : t.channels) channels.push_back(to_string(slot.channel));
                return reply_ok({{"template", {{"id", t.id}, {"channels", channels}}}}, 201);
            });
        }));
        server.Post(R"(/sessions/([^/]+)/formulate)", guarded([this](const auto& req, const std::string& id) {
            auto request = chart_request_from_json(parse_body(req));
            return mutate(id, req, [&](Session& s) { return reply_ok(outcome_to_json(s.formulate(request))); });
        }));
        server.Post(R"(/sessions/([^/]+)/formulate/complete)",
                    guarded([this](const auto& req, const std::string& id) { return complete(req, id); }));
        server.Post(R"(/sessions/([^/]+)/charts/save)", guarded([this](const auto& req, const std::string& id) {
            auto body = parse_body(req);
            auto candidate = body.contains("candidate_id") ? require_string(body, "candidate_id")
                                                           : require_string(body, "candidate");
            return mutate(id, req, [&](Session& s) {
                auto chart = s.save_chart(candidate);
                auto concepts = json::array();
                for (const auto& c : s.shelf().concepts()) concepts.push_back(concept_to_json(c));
                return reply_ok({{"chart", saved_chart_to_json(chart)},
                                 {"current_table", s.current_table_id()},
                                 {"concepts", concepts}},
                                201);
            });
        }));
    }
};

Service::Service(ServiceConfig config, BackendFactory backends)
    : config_(config), impl_(std::make_unique<Impl>(std::move(config), std::move(backends))) {}

Service::~Service() {
    stop();
}

auto Service::start() -> int {
    int port = config_.port == 0 ? impl_->server.bind_to_any_port(config_.host)
                                 : (impl_->server.bind_to_port(config_.host, config_.port) ? config_.port : -1);
    if (port < 0) {
        throw Error(ErrorCode::io_error, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void Service::run() {
    if (!impl_->server.listen(config_.host, config_.port)) {
        throw Error(ErrorCode::io_error, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
}

void Service::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

}  // namespace vizform
