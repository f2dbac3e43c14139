#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scoper/screen.hpp"
#include "scoper/types.hpp"

namespace scoper {

// Majority-voted outcome of N independent screening runs for one paper.
struct AggregatedVerdict {
    std::string eid;
    Relevance relevance = Relevance::not_relevant;
    std::vector<std::string> tags;       // sorted
    std::vector<Relevance> vote_detail;  // per-run relevance, run order
    bool unanimous = false;
    std::string justification; // from the first run agreeing with the majority
    bool tags_union_fallback = false;

    friend bool operator==(const AggregatedVerdict&, const AggregatedVerdict&) = default;
};

// Strict-majority winner of an odd number of votes.
Relevance majority_relevance(const std::vector<Relevance>& votes);

// Tag voting: a tag survives iff it appears in a strict majority of runs.
// When that leaves a relevant paper with no tags, the union of all runs'
// tags is used instead and `union_fallback` is set.
std::vector<std::string> aggregate_tags(const std::vector<std::vector<std::string>>& per_run_tags,
                                        Relevance final_relevance, bool* union_fallback = nullptr);

// Joins N run logs into one aggregated verdict per paper, in corpus order.
// Every paper must have a verdict in every run (MissingVerdict otherwise).
std::vector<AggregatedVerdict> aggregate_runs(
    const std::vector<std::vector<ScreeningVerdict>>& runs,
    const std::vector<std::string>& corpus_eids);

struct ConsistencyStats {
    std::size_t population = 0;
    std::size_t unanimous_count = 0;
    double perfect_agreement_rate = 0.0;
};

// Per-intersection perfect-agreement rate of the model with itself across
// runs. Intersections with no papers are absent from the result.
std::map<Intersection, ConsistencyStats> self_consistency(
    const std::vector<std::vector<ScreeningVerdict>>& runs,
    const std::map<std::string, Intersection>& intersection_of_eid);

void save_aggregated(const std::filesystem::path& path,
                     const std::vector<AggregatedVerdict>& verdicts);
std::vector<AggregatedVerdict> load_aggregated(const std::filesystem::path& path);

} // namespace scoper
