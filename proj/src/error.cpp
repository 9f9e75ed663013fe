#include <vizform/error.hpp>

namespace vizform {

auto to_string(ErrorCode code) -> std::string_view {
    switch (code) {
        case ErrorCode::malformed_input: return "MalformedInput";
        case ErrorCode::empty_header: return "EmptyHeader";
        case ErrorCode::duplicate_column: return "DuplicateColumn";
        case ErrorCode::unknown_column: return "UnknownColumn";
        case ErrorCode::duplicate_output_column: return "DuplicateOutputColumn";
        case ErrorCode::non_scalar_group: return "NonScalarGroup";
        case ErrorCode::invalid_program: return "InvalidProgram";
        case ErrorCode::invalid_example: return "InvalidExample";
        case ErrorCode::no_program: return "NoProgram";
        case ErrorCode::timeout: return "Timeout";
        case ErrorCode::parse_error: return "ParseError";
        case ErrorCode::unknown_identifier: return "UnknownIdentifier";
        case ErrorCode::type_error: return "TypeError";
        case ErrorCode::arity_error: return "ArityError";
        case ErrorCode::eval_error: return "EvalError";
        case ErrorCode::type_mismatch: return "TypeMismatch";
        case ErrorCode::backend_unavailable: return "BackendUnavailable";
        case ErrorCode::all_candidates_rejected: return "AllCandidatesRejected";
        case ErrorCode::duplicate_name: return "DuplicateName";
        case ErrorCode::empty_examples: return "EmptyExamples";
        case ErrorCode::binding_incomplete: return "BindingIncomplete";
        case ErrorCode::unknown_concept: return "UnknownConcept";
        case ErrorCode::concept_in_use: return "ConceptInUse";
        case ErrorCode::missing_required_channel: return "MissingRequiredChannel";
        case ErrorCode::unknown_concept_in_encoding: return "UnknownConceptInEncoding";
        case ErrorCode::aggregate_on_non_quantitative: return "AggregateOnNonQuantitative";
        case ErrorCode::invalid_encoding: return "InvalidEncoding";
        case ErrorCode::invalid_template: return "InvalidTemplate";
        case ErrorCode::invalid_spec: return "InvalidSpec";
        case ErrorCode::no_unknown_examples: return "NoUnknownExamples";
        case ErrorCode::concepts_not_co_located: return "ConceptsNotCoLocated";
        case ErrorCode::stale_candidate: return "StaleCandidate";
        case ErrorCode::not_found: return "NotFound";
        case ErrorCode::too_large: return "TooLarge";
        case ErrorCode::io_error: return "IoError";
        case ErrorCode::invalid_argument: return "InvalidArgument";
        case ErrorCode::idempotency_conflict: return "IdempotencyConflict";
    }
    return "Unknown";
}

}  // namespace vizform
