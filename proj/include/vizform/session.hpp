#pragma once

#include <vizform/chart.hpp>
#include <vizform/codegen.hpp>
#include <vizform/concepts.hpp>
#include <vizform/synthesizer.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vizform {

/// A chart request as sent by clients: encoding fields name shelf concepts
/// (by id or name).
struct ChartRequest {
    std::string template_id;
    std::vector<Encoding> encodings;
};

auto chart_request_to_json(const ChartRequest& r) -> nlohmann::json;
/// Reads {"template", "encodings": [{"channel", "concept" | "field", ...}]}.
auto chart_request_from_json(const nlohmann::json& j) -> ChartRequest;

auto example_relation_to_json(const ExampleRelation& e) -> nlohmann::json;
/// Reads {"columns": [...], "rows": [[...], ...]}; null cells stay Null.
auto example_relation_from_json(const nlohmann::json& j) -> ExampleRelation;

struct AppliedFormula {
    std::string concept_name;
    std::string formula;
};

/// How a candidate table was produced. `steps` records the pipeline order
/// ("reshape" then "derive").
struct Provenance {
    std::string program = "none";
    std::vector<AppliedFormula> formulas;
    std::vector<std::pair<std::string, std::string>> binding;  // concept name -> reshaped column
    std::vector<std::string> steps;
    std::string input_table;
};

struct ChartCandidate {
    std::string id;
    std::uint64_t version = 0;
    std::string template_id;
    std::vector<Encoding> encodings;  // fields are concept names
    Table table;
    nlohmann::json spec;
    Provenance provenance;
};

struct NeedsExampleRelation {
    std::vector<std::string> columns;
    std::vector<Row> prefilled;
};

struct FormulateOutcome {
    std::vector<ChartCandidate> candidates;
    std::optional<NeedsExampleRelation> needs_example;

    [[nodiscard]] auto ready() const -> bool { return !needs_example.has_value(); }
};

struct SavedChart {
    std::string id;
    std::string template_id;
    std::vector<Encoding> encodings;
    std::string table_id;
    nlohmann::json spec;
    Provenance provenance;
};

auto provenance_to_json(const Provenance& p) -> nlohmann::json;
auto candidate_to_json(const ChartCandidate& c, bool include_table = true) -> nlohmann::json;
auto outcome_to_json(const FormulateOutcome& o) -> nlohmann::json;
auto saved_chart_to_json(const SavedChart& c) -> nlohmann::json;

inline constexpr int kSessionFormatVersion = 1;

/// One authoring session: input and snapshotted tables, the concept shelf,
/// saved charts and the event log. Not thread-safe; callers serialize
/// mutations.
///
/// Every mutation bumps version() and invalidates pending candidates. The log
/// records each operation's inputs so replay() rebuilds the same state.
class Session {
public:
    static auto create(std::string id, Table input) -> Session;

    [[nodiscard]] auto id() const -> const std::string& { return id_; }
    [[nodiscard]] auto version() const -> std::uint64_t { return version_; }
    [[nodiscard]] auto current_table_id() const -> const std::string& { return current_; }
    [[nodiscard]] auto current_table() const -> const Table&;
    /// Throws Error(not_found).
    [[nodiscard]] auto table(const std::string& id) const -> const Table&;
    [[nodiscard]] auto table_ids() const -> std::vector<std::string>;
    [[nodiscard]] auto shelf() const -> const ConceptShelf& { return shelf_; }
    [[nodiscard]] auto charts() const -> const std::vector<SavedChart>& { return charts_; }
    [[nodiscard]] auto pending() const -> const std::vector<ChartCandidate>& { return pending_; }
    [[nodiscard]] auto custom_templates() const -> const std::vector<ChartTemplate>& { return templates_; }
    [[nodiscard]] auto log() const -> const nlohmann::json& { return log_; }
    /// Built-in or session template. Throws Error(not_found).
    [[nodiscard]] auto find_template(const std::string& id) const -> const ChartTemplate&;

    auto create_custom_concept(std::string name, const std::vector<Value>& examples) -> DataConcept;

    /// The codegen request for deriving from `sources`: samples come from the
    /// first rows of a table holding all sources, else from example values.
    [[nodiscard]] auto derivation_request(const std::vector<std::string>& sources, std::string description,
                                          std::string target_name) const -> DerivationRequest;
    /// Runs codegen and records the prompts and completions in the log.
    /// Does not change the session version.
    auto preview_derivation(const std::vector<std::string>& sources, std::string description, std::string name,
                            GenerationBackend& backend) -> std::vector<CandidateFormula>;
    /// Appends an audit-only log entry (one produced by preview_derivation on
    /// a copy of this session).
    void append_audit(nlohmann::json entry);
    auto commit_derived_concept(std::string name, const std::vector<std::string>& sources, std::string description,
                                const std::string& formula_text, CandidateOrigin origin) -> DataConcept;
    /// Throws Error(concept_in_use) when a derived concept or saved chart uses it.
    void delete_concept(const std::string& ref);

    auto register_template(std::string id, const std::string& doc) -> ChartTemplate;

    auto formulate(const ChartRequest& request) -> FormulateOutcome;
    /// Read-only half of complete_formulate, safe to run on a copy.
    [[nodiscard]] auto compute_candidates(const ChartRequest& request, const ExampleRelation& e,
                                          const SynthesisLimits& limits = {}) const -> std::vector<ChartCandidate>;
    /// Adopts candidates computed at `version`. Throws Error(stale_candidate)
    /// if the session moved on meanwhile.
    auto adopt_candidates(std::vector<ChartCandidate> candidates, std::uint64_t version, const ChartRequest& request,
                          const ExampleRelation& e) -> std::vector<ChartCandidate>;
    auto complete_formulate(const ChartRequest& request, const ExampleRelation& e,
                            const SynthesisLimits& limits = {}) -> std::vector<ChartCandidate>;
    /// Throws Error(stale_candidate | not_found).
    auto save_chart(const std::string& candidate_id) -> SavedChart;

    /// The example-relation columns for a request: encoded non-derived
    /// concepts, with derived ones replaced by their base sources.
    [[nodiscard]] auto example_columns(const ChartRequest& request) const -> std::vector<std::string>;

    [[nodiscard]] auto to_json() const -> nlohmann::json;
    static auto from_json(const nlohmann::json& j) -> Session;
    /// Rebuilds a session by re-running the operations in `log`.
    static auto replay(const nlohmann::json& log) -> Session;

    /// Service-owned idempotency records, persisted with the session.
    nlohmann::json idempotency = nlohmann::json::object();

private:
    struct Resolved {
        const ChartTemplate* tmpl = nullptr;
        std::vector<const DataConcept*> concepts;  // parallel to encodings; null for count
        std::vector<Encoding> encodings;           // fields are concept names
    };

    auto resolve_request(const ChartRequest& request) const -> Resolved;
    auto add_table(Table t) -> std::string;
    void bump();
    void record(nlohmann::json entry);
    /// `t` extended with every missing column `c` needs, or nullopt if a base
    /// concept is absent.
    auto materialize(const Table& t, const DataConcept& c, std::vector<AppliedFormula>* applied) const
        -> std::optional<Table>;
    auto locate(const std::vector<const DataConcept*>& concepts, bool include_derived) const
        -> std::optional<std::string>;
    void extend_known_derived();
    auto build_candidate(const Resolved& r, Table t, Provenance p) const -> ChartCandidate;
    auto next_candidate_id() -> std::string;

    std::string id_;
    std::uint64_t version_ = 0;
    std::map<std::string, Table> tables_;
    std::size_t table_counter_ = 0;
    std::string current_;
    ConceptShelf shelf_;
    std::vector<SavedChart> charts_;
    std::size_t chart_counter_ = 0;
    std::vector<ChartTemplate> templates_;
    std::vector<std::string> template_docs_;
    std::vector<ChartCandidate> pending_;
    std::size_t candidate_counter_ = 0;
    nlohmann::json log_ = nlohmann::json::array();
};

}  // namespace vizform
