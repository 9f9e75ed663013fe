#include "http_script.hpp"

#include <vizform/error.hpp>

#include <catch_amalgamated.hpp>

#include <atomic>
#include <thread>

using namespace vizform;
using namespace vizform::testing;
using nlohmann::json;

namespace {

auto upload_t0(ApiClient& api) -> std::string {
    auto r = api.send("POST", "POST /sessions", "/sessions", read_file(fixture_path("t0.csv")), "text/csv");
    REQUIRE(r.status == 201);
    return r.payload()["session"]["id"].get<std::string>();
}

auto custom(ApiClient& api, const std::string& sid, const std::string& name, json examples,
            const httplib::Headers& headers = {}) -> ApiResponse {
    return api.post("POST /sessions/{id}/concepts/custom", "/sessions/" + sid + "/concepts/custom",
                    {{"name", name}, {"examples", std::move(examples)}}, headers);
}

class SlowBackend final : public GenerationBackend {
public:
    auto complete(const std::string& prompt, int n) -> std::vector<std::string> override {
        std::this_thread::sleep_for(std::chrono::milliseconds(2500));
        return OfflineBackend().complete(prompt, n);
    }
    [[nodiscard]] auto origin() const -> CandidateOrigin override { return CandidateOrigin::remote; }
};

class DownBackend final : public GenerationBackend {
public:
    auto complete(const std::string&, int) -> std::vector<std::string> override {
        throw Error(ErrorCode::backend_unavailable, "connection refused", {{"retryable", true}});
    }
    [[nodiscard]] auto origin() const -> CandidateOrigin override { return CandidateOrigin::remote; }
};

}  // namespace

TEST_CASE("the published API schema is a well-formed draft-07 document") {
    const auto& doc = api_schema().document();
    REQUIRE(doc.contains("routes"));
    for (const auto& [route, defs] : doc["routes"].items()) {
        for (const auto& [_, name] : defs.items()) {
            INFO(route);
            CHECK(doc["definitions"].contains(name.get<std::string>()));
        }
    }
}

TEST_CASE("the weather walkthrough runs over HTTP across restarts") {
    ServiceHarness harness;
    ApiClient api(harness);
    auto result = run_walkthrough(harness, api);
    INFO(json(api.violations).dump(1));
    CHECK(api.violations.empty());
    CHECK(api.specs_checked >= 3);

    CHECK(result.pivot_candidate["provenance"]["program"].get<std::string>().rfind("(pivot_wider", 0) == 0);
    CHECK(projection(result.pivot_candidate["spec"]) == published_pivot_scatter());
    CHECK(result.difference == json({6, -2, -8}));
    CHECK(result.warmer == json({"Seattle", "Atlanta", "Atlanta"}));
    CHECK(result.moving_average == json::parse("[null, 48, null]"));
    CHECK(result.final_state["charts"].size() == 1);
    CHECK(result.elapsed.count() < 10.0);

    // The persisted log replays to the same document.
    auto stored = SessionStore(harness.dir.path).load(result.session_id);
    CHECK(Session::replay(stored.log()).to_json().at("concepts") == stored.to_json().at("concepts"));
}

TEST_CASE("errors map to HTTP statuses with an error envelope") {
    ServiceConfig config;
    config.max_body_bytes = 2048;
    ServiceHarness harness(config);
    ApiClient api(harness);
    auto sid = upload_t0(api);
    auto base = "/sessions/" + sid;

    SECTION("unknown sessions and routes are 404") {
        auto r = api.get("GET /sessions/{id}", "/sessions/s0123456789abcdef");
        CHECK(r.status == 404);
        CHECK(r.error_code() == "NotFound");
        CHECK(api.get("GET /sessions/{id}", "/sessions/..%2Fetc").status == 404);
        auto route = api.get("GET /health", "/nope");
        CHECK(route.status == 404);
        CHECK(route.error_code() == "NotFound");
    }
    SECTION("empty and malformed bodies are 400") {
        auto empty = api.send("POST", "POST /sessions", "/sessions", "", "text/csv");
        CHECK(empty.status == 400);
        CHECK(empty.error_code() == "MalformedInput");
        auto bad = api.send("POST", "POST /sessions/{id}/concepts/custom", base + "/concepts/custom", "{oops",
                            "application/json");
        CHECK(bad.status == 400);
        auto header = api.send("POST", "POST /sessions", "/sessions", "a,a\n1,2\n", "text/csv");
        CHECK(header.status == 400);
        CHECK(header.error_code() == "DuplicateColumn");
    }
    SECTION("oversized uploads are 413") {
        std::string big = "x\n";
        while (big.size() <= 4096) big += "123456789\n";
        auto r = api.send("POST", "POST /sessions", "/sessions", big, "text/csv");
        CHECK(r.status == 413);
        CHECK(r.error_code() == "TooLarge");
    }
    SECTION("bad paging arguments are 422") {
        auto zero = api.get("GET /sessions/{id}/table", base + "/table?limit=0");
        CHECK(zero.status == 422);
        CHECK(zero.error_code() == "InvalidArgument");
        CHECK(api.get("GET /sessions/{id}/table", base + "/table?offset=-1").status == 422);
        CHECK(api.get("GET /sessions/{id}/table", base + "/table?table=t9").status == 404);
        auto page = api.get("GET /sessions/{id}/table", base + "/table?offset=4&limit=5");
        REQUIRE(page.status == 200);
        CHECK(page.payload()["rows"].size() == 2);
        CHECK(page.payload()["total_rows"] == 6);
    }
    SECTION("conflicts are 409") {
        CHECK(custom(api, sid, "City", {"x"}).status == 409);
        REQUIRE(custom(api, sid, "Seattle Temp", {51, 45}).status == 201);
        REQUIRE(custom(api, sid, "Atlanta Temp", {45, 47}).status == 201);
        json body = {{"template", "scatter"},
                     {"encodings", {{{"channel", "x"}, {"concept", "Seattle Temp"}},
                                    {{"channel", "y"}, {"concept", "Atlanta Temp"}}}},
                     {"example", {{"columns", {"Seattle Temp", "Atlanta Temp"}}, {"rows", {{51, 45}, {45, 47}}}}}};
        auto done = api.post("POST /sessions/{id}/formulate/complete", base + "/formulate/complete", body);
        REQUIRE(done.status == 200);
        const auto& cands = done.payload()["candidates"];
        REQUIRE(cands.size() >= 2);
        CHECK(api.post("POST /sessions/{id}/charts/save", base + "/charts/save", {{"candidate_id", cands[0]["id"]}})
                  .status == 201);
        auto stale = api.post("POST /sessions/{id}/charts/save", base + "/charts/save", {{"candidate_id", cands[1]["id"]}});
        CHECK(stale.status == 409);
        CHECK(stale.error_code() == "StaleCandidate");
        auto in_use = api.del("DELETE /sessions/{id}/concepts/{concept}", base + "/concepts/Seattle%20Temp");
        CHECK(in_use.status == 409);
        CHECK(in_use.error_code() == "ConceptInUse");
    }
    SECTION("semantic failures are 422") {
        auto r = custom(api, sid, "Empty", json::array({nullptr}));
        CHECK(r.status == 422);
        CHECK(r.error_code() == "EmptyExamples");
        auto parse = api.post("POST /sessions/{id}/concepts/derive", base + "/concepts/derive",
                              {{"name", "Bad"}, {"sources", {"Temperature"}}, {"formula", "fn(t) = t +"}});
        CHECK(parse.status == 422);
        CHECK(parse.error_code() == "ParseError");
        CHECK(parse.body["error"]["details"].is_object());
        auto gone = api.del("DELETE /sessions/{id}/concepts/{concept}", base + "/concepts/Nope");
        CHECK(gone.status == 422);
        CHECK(gone.error_code() == "UnknownConcept");
    }
    INFO(json(api.violations).dump(1));
    CHECK(api.violations.empty());
}

TEST_CASE("uploads accept CSV, JSON rows and a JSON envelope") {
    ServiceHarness harness;
    ApiClient api(harness);
    auto rows = api.send("POST", "POST /sessions", "/sessions", R"([{"a": 1, "b": "x"}, {"a": 2, "b": "y"}])",
                         "application/json");
    REQUIRE(rows.status == 201);
    CHECK(rows.payload()["session"]["tables"][0]["row_count"] == 2);
    auto wrapped = api.post("POST /sessions", "/sessions",
                            {{"name", "W"}, {"format", "csv"}, {"content", "k,v\n1,2\n3,4\n5,6\n"}});
    REQUIRE(wrapped.status == 201);
    CHECK(wrapped.payload()["session"]["tables"][0]["row_count"] == 3);
    auto bad = api.post("POST /sessions", "/sessions", {{"format", "xml"}, {"content", "x"}});
    CHECK(bad.status == 400);
    CHECK(api.get("GET /health", "/health").payload()["status"] == "ok");
    CHECK(api.get("GET /templates", "/templates").payload()["templates"].size() >= 5);
    // The schema rejects the bad request as well; nothing else is flagged.
    REQUIRE(api.violations.size() == 1);
    CHECK(api.violations[0].find("/format") != std::string::npos);
}

TEST_CASE("idempotency keys replay the first response") {
    ServiceHarness harness;
    ApiClient api(harness);
    httplib::Headers key{{"Idempotency-Key", "k-1"}};
    auto first = api.send("POST", "POST /sessions", "/sessions", read_file(fixture_path("t0.csv")), "text/csv", key);
    auto again = api.send("POST", "POST /sessions", "/sessions", read_file(fixture_path("t0.csv")), "text/csv", key);
    REQUIRE(first.status == 201);
    CHECK(again.body == first.body);
    auto sid = first.payload()["session"]["id"].get<std::string>();

    httplib::Headers add{{"Idempotency-Key", "add-seattle"}};
    auto a = custom(api, sid, "Seattle Temp", {51, 45}, add);
    harness.restart();
    auto b = custom(api, sid, "Seattle Temp", {51, 45}, add);
    CHECK(a.status == 201);
    CHECK(b.status == 201);
    CHECK(b.body == a.body);
    auto conflict = custom(api, sid, "Seattle Temp", {1}, add);
    CHECK(conflict.status == 422);
    CHECK(conflict.error_code() == "IdempotencyConflict");
    auto state = api.get("GET /sessions/{id}", "/sessions/" + sid).payload()["session"];
    CHECK(state["concepts"].size() == 4);
    CHECK(state["version"] == 1);
    CHECK(api.violations.empty());
}

TEST_CASE("CORS headers follow the configured origins") {
    ServiceConfig config;
    config.cors_origins = {"http://localhost:5173"};
    ServiceHarness harness(config);
    httplib::Client client("127.0.0.1", harness.port);
    auto allowed = client.Get("/health", {{"Origin", "http://localhost:5173"}});
    REQUIRE(allowed);
    CHECK(allowed->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
    auto other = client.Get("/health", {{"Origin", "http://evil.example"}});
    REQUIRE(other);
    CHECK_FALSE(other->has_header("Access-Control-Allow-Origin"));
    auto preflight = client.Options("/sessions", {{"Origin", "http://localhost:5173"}});
    REQUIRE(preflight);
    CHECK(preflight->status == 204);
    CHECK(preflight->get_header_value("Access-Control-Allow-Headers").find("Idempotency-Key") != std::string::npos);
}

TEST_CASE("formula generation failures surface as 504 and 502") {
    ServiceConfig config;
    config.codegen_timeout = std::chrono::seconds(1);
    std::atomic<bool> slow{true};
    ServiceHarness harness(config, [&]() -> std::unique_ptr<GenerationBackend> {
        if (slow) return std::make_unique<SlowBackend>();
        return std::make_unique<DownBackend>();
    });
    ApiClient api(harness);
    auto sid = upload_t0(api);
    json body = {{"sources", {"Temperature"}}, {"description", "double it"}, {"name", "Twice"}};
    auto path = "/sessions/" + sid + "/concepts/derive/preview";
    auto timed_out = api.post("POST /sessions/{id}/concepts/derive/preview", path, body);
    CHECK(timed_out.status == 504);
    CHECK(timed_out.error_code() == "Timeout");
    slow = false;
    auto down = api.post("POST /sessions/{id}/concepts/derive/preview", path, body);
    CHECK(down.status == 502);
    CHECK(down.error_code() == "BackendUnavailable");
    CHECK(api.get("GET /sessions/{id}", "/sessions/" + sid).status == 200);
    CHECK(api.violations.empty());
}

TEST_CASE("concurrent mutations of one session are serialized") {
    ServiceHarness harness;
    ApiClient setup(harness);
    auto sid = upload_t0(setup);
    constexpr int kThreads = 8;
    std::atomic<int> created{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < kThreads; ++i) {
        threads.emplace_back([&, i] {
            ApiClient api(harness);
            for (int j = 0; j < 3; ++j) {
                auto name = "C" + std::to_string(i) + "_" + std::to_string(j);
                if (custom(api, sid, name, {i, j}).status == 201) ++created;
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(created == kThreads * 3);
    auto state = setup.get("GET /sessions/{id}", "/sessions/" + sid).payload()["session"];
    CHECK(state["version"] == kThreads * 3);
    CHECK(state["concepts"].size() == 3 + kThreads * 3);
    harness.restart();
    CHECK(setup.get("GET /sessions/{id}", "/sessions/" + sid).payload()["session"] == state);
}
