#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scoper {

// Error taxonomy shared by all pipeline stages. Codes are stable identifiers
// that tests and the CLI match on; messages carry the details.
enum class ErrorCode {
    // configuration
    EmptyConfig,
    UnknownTag,
    MissingVenueList,
    DuplicateTag,
    InvalidConfig,
    // corpus
    ConflictingMetadata,
    // ingest
    TransportError,
    QuotaExceeded,
    MalformedResponse,
    // screening
    UnparsableOutput,
    CountMismatch,
    UnknownEid,
    InvalidRelevanceValue,
    FailedBatches,
    // voting
    EvenRunCount,
    MissingVerdict,
    // validation
    DomainError,
    EmptyStratum,
    IncompleteLabels,
    EvenRaterCount,
    EidMismatch,
    MissingDecision,
    // store / cli
    MissingUpstream,
    ConfigMismatch,
    StoreLocked,
    IoError,
};

std::string_view error_code_name(ErrorCode code);

class PipelineError : public std::runtime_error {
public:
    PipelineError(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace scoper
