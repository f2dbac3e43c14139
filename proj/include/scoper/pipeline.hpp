#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "scoper/config.hpp"
#include "scoper/report.hpp"
#include "scoper/store.hpp"
#include "scoper/transport.hpp"

namespace scoper::pipeline {

struct StageOutcome {
    std::string summary;          // one line for the CLI
    std::string detail;           // optional multi-line output (reports)
    bool already_complete = false;
};

// Stage implementations behind the subcommands, in pipeline order. Each
// checks its upstream artifacts (MissingUpstream), is idempotent once its
// stage flag is set, and persists results before returning.
StageOutcome fetch(RunStore& store, const Config& config, SearchTransport& transport);
StageOutcome dedup(RunStore& store);
StageOutcome screen(RunStore& store, const Config& config, LlmTransport& transport,
                    const std::string& run_label);
StageOutcome aggregate(RunStore& store, const Config& config);
StageOutcome themes(RunStore& store, const Config& config, LlmTransport& transport,
                    const std::string& run_label);
StageOutcome sample(RunStore& store, const Config& config,
                    std::optional<std::uint64_t> seed_override = std::nullopt);
StageOutcome label(RunStore& store, const std::string& rater_id, std::istream& in,
                   std::ostream& out);
StageOutcome consolidate(RunStore& store, const Config& config,
                         std::optional<std::filesystem::path> decisions_file = std::nullopt);
StageOutcome agree(RunStore& store);
StageOutcome report(RunStore& store, const Config& config);

// Assembles the summary over whatever artifacts exist; missing stages
// contribute zero counts.
RunSummary build_summary(const RunStore& store, const Config& config);

} // namespace scoper::pipeline
