#pragma once

#include <vizform/formula.hpp>

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace vizform {

struct DerivationSource {
    std::string concept_name;
    SemanticType type = SemanticType::text;
    std::vector<Value> samples;  // at most 3 are used
};

struct DerivationRequest {
    std::string description;
    std::vector<DerivationSource> sources;
    std::string target_name;
};

/// Throws Error(malformed_input) when there are no sources or the description is blank.
void validate_request(const DerivationRequest& req);

enum class CandidateOrigin { remote, offline, user_edited };

auto to_string(CandidateOrigin origin) -> std::string_view;

struct SampleOutput {
    std::vector<Value> inputs;
    Value output;
};

struct CandidateFormula {
    Formula formula;
    std::string source_text;
    std::vector<SampleOutput> sample_outputs;
    CandidateOrigin origin = CandidateOrigin::offline;
};

/// Produces completion texts for a prompt.
class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    /// Up to `n` completions. Throws Error(backend_unavailable) with a
    /// `retryable` flag in the details when the backend cannot answer.
    virtual auto complete(const std::string& prompt, int n) -> std::vector<std::string> = 0;
    [[nodiscard]] virtual auto origin() const -> CandidateOrigin = 0;
};

/// Deterministic keyword rules over the prompt's description line.
class OfflineBackend final : public GenerationBackend {
public:
    auto complete(const std::string& prompt, int n) -> std::vector<std::string> override;
    [[nodiscard]] auto origin() const -> CandidateOrigin override { return CandidateOrigin::offline; }
};

struct RemoteConfig {
    /// Full URL of an OpenAI-compatible completions endpoint.
    std::string endpoint = "https://api.openai.com/v1/completions";
    std::string model = "gpt-3.5-turbo-instruct";
    /// Name of the environment variable holding the API key; empty for none.
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::seconds timeout{20};
};

class RemoteBackend final : public GenerationBackend {
public:
    explicit RemoteBackend(RemoteConfig config);
    auto complete(const std::string& prompt, int n) -> std::vector<std::string> override;
    [[nodiscard]] auto origin() const -> CandidateOrigin override { return CandidateOrigin::remote; }

private:
    RemoteConfig config_;
};

struct BackendConfig {
    enum class Kind { offline, remote };
    Kind kind = Kind::offline;
    RemoteConfig remote;
};

auto backend_config_from_json(const nlohmann::json& j) -> BackendConfig;
auto make_backend(const BackendConfig& config) -> std::unique_ptr<GenerationBackend>;

/// Lower-camel-case identifiers for the source concepts, made unique and
/// kept clear of reserved words, builtin names and `index`.
auto parameter_names(const std::vector<DerivationSource>& sources) -> std::vector<std::string>;

struct Prompts {
    std::string simple;
    std::string analytical;
};

auto build_prompts(const DerivationRequest& req) -> Prompts;

struct PromptExchange {
    std::string prompt;
    std::vector<std::string> completions;
};

/// Queries both prompts for 5 completions each, then parses, executes on the
/// sample tuples, filters and deduplicates. Simple-prompt candidates come
/// first. `log`, when given, receives each prompt with its raw completions.
/// Throws Error(all_candidates_rejected) with per-candidate reasons when
/// nothing survives.
auto generate_candidates(const DerivationRequest& req, GenerationBackend& backend,
                         std::vector<PromptExchange>* log = nullptr) -> std::vector<CandidateFormula>;

/// Runs one formula text through the same parse-and-execute filter. The text
/// may be a full formula or a body continuing the simple-prompt header. Throws the parse or
/// type error, or Error(all_candidates_rejected) when execution fails.
auto make_candidate(const DerivationRequest& req, const std::string& text, CandidateOrigin origin)
    -> CandidateFormula;

/// Sample tuples the filter executes a candidate on: the i-th sample of every source.
auto sample_tuples(const DerivationRequest& req) -> std::vector<std::vector<Value>>;

auto candidate_to_json(const CandidateFormula& c) -> nlohmann::json;

}  // namespace vizform
