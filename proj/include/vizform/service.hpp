#pragma once

#include <vizform/codegen.hpp>
#include <vizform/error.hpp>
#include <vizform/json_schema.hpp>
#include <vizform/session_store.hpp>
#include <vizform/synthesizer.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vizform {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8765;  // 0 picks a free port
    std::filesystem::path data_dir = "vizform-data";
    std::size_t max_body_bytes = 8U << 20U;
    BackendConfig backend;
    std::chrono::seconds codegen_timeout{30};
    SynthesisLimits synthesis;
    std::vector<std::string> cors_origins;  // "*" allows any origin
};

/// Reads {host, port, data_dir, max_body_bytes, backend: {...},
/// codegen_timeout_seconds, cors_origins, synthesis: {max_depth, timeout_ms}}.
/// Missing keys keep their defaults.
auto service_config_from_json(const nlohmann::json& j) -> ServiceConfig;

/// HTTP status for an error code.
auto http_status(ErrorCode code) -> int;

/// The published API schema (schemas/api/api-v1.json), loaded once. Request
/// and response shapes live under "#/definitions"; "routes" maps each
/// endpoint to its definitions.
auto api_schema() -> const JsonSchema&;

/// {"ok": true, "payload": ...} and {"ok": false, "error": {code, message, details}}.
auto ok_envelope(nlohmann::json payload) -> nlohmann::json;
auto error_envelope(const Error& e) -> nlohmann::json;

/// The GET /sessions/{id} payload.
auto session_state_json(const Session& s) -> nlohmann::json;

using BackendFactory = std::function<std::unique_ptr<GenerationBackend>()>;

/// JSON-over-HTTP facade over sessions stored in a data directory.
/// Requests on different sessions run in parallel; mutations of one session
/// are serialized and persisted before the response is sent.
class Service {
public:
    explicit Service(ServiceConfig config, BackendFactory backends = {});
    ~Service();
    Service(const Service&) = delete;
    auto operator=(const Service&) -> Service& = delete;

    /// Binds and serves on a background thread. Returns the bound port.
    /// Throws Error(io_error) if the address cannot be bound.
    auto start() -> int;
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();

    [[nodiscard]] auto config() const -> const ServiceConfig& { return config_; }

private:
    struct Impl;
    ServiceConfig config_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace vizform
