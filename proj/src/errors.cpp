#include "scoper/errors.hpp"

namespace scoper {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyConfig: return "EmptyConfig";
        case ErrorCode::UnknownTag: return "UnknownTag";
        case ErrorCode::MissingVenueList: return "MissingVenueList";
        case ErrorCode::DuplicateTag: return "DuplicateTag";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::ConflictingMetadata: return "ConflictingMetadata";
        case ErrorCode::TransportError: return "TransportError";
        case ErrorCode::QuotaExceeded: return "QuotaExceeded";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::UnparsableOutput: return "UnparsableOutput";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::UnknownEid: return "UnknownEid";
        case ErrorCode::InvalidRelevanceValue: return "InvalidRelevanceValue";
        case ErrorCode::FailedBatches: return "FailedBatches";
        case ErrorCode::EvenRunCount: return "EvenRunCount";
        case ErrorCode::MissingVerdict: return "MissingVerdict";
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::EmptyStratum: return "EmptyStratum";
        case ErrorCode::IncompleteLabels: return "IncompleteLabels";
        case ErrorCode::EvenRaterCount: return "EvenRaterCount";
        case ErrorCode::EidMismatch: return "EidMismatch";
        case ErrorCode::MissingDecision: return "MissingDecision";
        case ErrorCode::MissingUpstream: return "MissingUpstream";
        case ErrorCode::ConfigMismatch: return "ConfigMismatch";
        case ErrorCode::StoreLocked: return "StoreLocked";
        case ErrorCode::IoError: return "IoError";
    }
    return "UnknownError";
}

} // namespace scoper
