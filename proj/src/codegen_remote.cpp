#include <httplib.h>

#include <vizform/codegen.hpp>
#include <vizform/error.hpp>

#include <cstdlib>
#include <regex>

namespace vizform {

namespace {

[[noreturn]] void unavailable(const std::string& message, bool retryable, nlohmann::json extra = nlohmann::json::object()) {
    extra["retryable"] = retryable;
    throw Error(ErrorCode::backend_unavailable, message, std::move(extra));
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {}

auto RemoteBackend::complete(const std::string& prompt, int n) -> std::vector<std::string> {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, url)) {
        unavailable("invalid completion endpoint '" + config_.endpoint + "'", false);
    }
    auto path = m[2].matched ? m[2].str() : std::string("/");

    httplib::Client client(m[1].str());
    auto seconds = static_cast<time_t>(config_.timeout.count());
    client.set_connection_timeout(seconds, 0);
    client.set_read_timeout(seconds, 0);
    client.set_write_timeout(seconds, 0);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            unavailable("environment variable " + config_.api_key_env + " holds no API key", false,
                        {{"api_key_env", config_.api_key_env}});
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    nlohmann::json body = {{"model", config_.model}, {"prompt", prompt},      {"n", n},
                           {"temperature", 0.3},      {"max_tokens", 256},     {"stop", {"\n\n"}}};

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        unavailable("completion request failed: " + httplib::to_string(res.error()), true);
    }
    if (res->status != 200) {
        bool retryable = res->status == 429 || res->status >= 500;
        unavailable("completion endpoint answered HTTP " + std::to_string(res->status), retryable,
                    {{"status", res->status}});
    }
    try {
        auto reply = nlohmann::json::parse(res->body);
        std::vector<std::string> out;
        for (const auto& choice : reply.at("choices")) {
            out.push_back(choice.at("text").get<std::string>());
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        unavailable(std::string("malformed completion response: ") + e.what(), false);
    }
}

}  // namespace vizform
