#pragma once

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <string_view>

namespace vizform {

enum class ErrorCode {
    // ingestion
    malformed_input,
    empty_header,
    duplicate_column,
    // reshaping
    unknown_column,
    duplicate_output_column,
    non_scalar_group,
    invalid_program,
    // synthesis
    invalid_example,
    no_program,
    timeout,
    // formula language
    parse_error,
    unknown_identifier,
    type_error,
    arity_error,
    eval_error,
    type_mismatch,
    // codegen
    backend_unavailable,
    all_candidates_rejected,
    // concepts
    duplicate_name,
    empty_examples,
    binding_incomplete,
    unknown_concept,
    concept_in_use,
    // charts
    missing_required_channel,
    unknown_concept_in_encoding,
    aggregate_on_non_quantitative,
    invalid_encoding,
    invalid_template,
    invalid_spec,
    // orchestration and service
    no_unknown_examples,
    concepts_not_co_located,
    stale_candidate,
    not_found,
    too_large,
    io_error,
    invalid_argument,
    idempotency_conflict,
};

auto to_string(ErrorCode code) -> std::string_view;

/// Domain error carrying a stable code and an optional structured payload.
///
/// Every module reports failures through this type; the service maps codes
/// onto HTTP statuses and the CLI onto exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, nlohmann::json details = nullptr)
        : std::runtime_error(message), code_(code), details_(std::move(details)) {}

    [[nodiscard]] auto code() const noexcept -> ErrorCode { return code_; }
    [[nodiscard]] auto details() const noexcept -> const nlohmann::json& { return details_; }

private:
    ErrorCode code_;
    nlohmann::json details_;
};

}  // namespace vizform
