#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scoper/config.hpp"
#include "scoper/transport.hpp"
#include "scoper/vote.hpp"

namespace scoper {

// A named cluster of relevant-paper justifications. Rank 1 is the most
// prominent theme of its run; ranks come from the model's own ordering.
struct Theme {
    std::string name;
    std::string explanation;
    std::string prominence_reason;
    std::vector<std::string> members; // eids
    int prominence_rank = 1;

    friend bool operator==(const Theme&, const Theme&) = default;
};

struct JustificationEntry {
    std::string eid;
    std::string justification;
};

// Splits the justification list into prompt-sized chunks (order preserved,
// chunks partition the input).
std::vector<std::vector<JustificationEntry>> chunk_justifications(
    const std::vector<JustificationEntry>& entries, int chunk_size);

// Deterministic grouping prompt over one chunk.
LlmRequest render_theme_prompt(const std::vector<JustificationEntry>& chunk,
                               const LlmSettings& llm);

struct ThemeParse {
    std::vector<Theme> themes; // ranked by response order
    std::vector<std::string> leftover_eids;
    std::vector<std::string> warnings;
};

// Decodes one theme response. Unknown member eids are dropped with a
// warning, an eid claimed by two themes stays with the first, and themes
// left with no members are removed; eids the model never assigned are
// reported as leftovers.
ThemeParse parse_themes(const std::string& raw_output,
                        const std::vector<std::string>& known_eids);

struct ExtremesSelection {
    std::vector<Theme> top;    // ranks 1..k
    std::vector<Theme> bottom; // last k ranks
    bool overlap = false;      // set when fewer than 2k themes exist
};

ExtremesSelection select_extremes(const std::vector<Theme>& ranked, int k);

struct ThemeRunResult {
    std::string run_label;
    std::vector<Theme> themes; // ranks 1..n across all chunks
    std::vector<std::string> leftover_eids;
    std::vector<std::string> warnings;
    std::size_t chunks = 0;
};

// Runs the whole theme stage for one run label over the aggregated-relevant
// papers. Chunk responses are merged in chunk order.
ThemeRunResult run_theme_stage(const std::vector<AggregatedVerdict>& aggregated,
                               const LlmSettings& llm, LlmTransport& transport,
                               const std::string& run_label);

// Export formats: JSON + a human-readable text per run, and a side-by-side
// CSV across runs for manual reconciliation.
std::string theme_report_json(const ThemeRunResult& result, int extremes_k);
std::string theme_report_text(const ThemeRunResult& result, int extremes_k);
std::string theme_comparison_csv(const std::vector<ThemeRunResult>& runs);

// Round-trips a persisted theme_report_json document.
ThemeRunResult theme_result_from_json(const std::string& text);

} // namespace scoper
