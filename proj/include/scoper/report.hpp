#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scoper/types.hpp"
#include "scoper/validate.hpp"
#include "scoper/vote.hpp"

namespace scoper {

// Papers surviving each stage, tracked per intersection.
struct StageCounts {
    std::size_t collected = 0;    // raw search results before dedup
    std::size_t deduplicated = 0; // unique eids
    std::size_t batched = 0;      // papers placed into screening batches
    std::size_t screened = 0;     // papers with an aggregated verdict
    std::size_t relevant = 0;

    StageCounts& operator+=(const StageCounts& other);
};

struct StageFlow {
    std::map<Intersection, StageCounts> per_intersection;

    StageCounts totals() const;
};

// Percentage rendering used throughout the reports: two decimals, trailing
// zeros trimmed ("14.7", "22.76", "0").
std::string percent_string(double fraction);

// Per-intersection normalized tag frequencies: papers in the intersection
// carrying the tag, divided by all papers retrieved from that intersection.
// Intersections absent from `corpus_counts` (or empty) are omitted.
std::map<Intersection, std::map<std::string, double>> tag_distribution(
    const std::vector<AggregatedVerdict>& aggregated,
    const std::map<std::string, Intersection>& intersection_by_eid,
    const std::map<Intersection, std::size_t>& corpus_counts,
    const std::vector<std::string>& tag_vocabulary);

struct RelevanceRate {
    std::size_t relevant = 0;
    std::size_t total = 0;
    double rate = 0.0;
};

// Relevant / retrieved per intersection. Intersections with no retrieved
// papers are omitted.
std::map<Intersection, RelevanceRate> relevance_rates(
    const std::vector<AggregatedVerdict>& aggregated,
    const std::map<std::string, Intersection>& intersection_by_eid,
    const std::map<Intersection, std::size_t>& corpus_counts);

struct RunSummary {
    std::string model;
    int runs = 0;
    std::string config_digest;
    StageFlow flow;
    std::map<Intersection, RelevanceRate> relevance;
    std::map<Intersection, ConsistencyStats> consistency;
    std::optional<AgreementReport> agreement;
};

// Machine-readable and human-readable summaries. Identical inputs give
// identical bytes.
std::string summary_json(const RunSummary& summary);
std::string summary_text(const RunSummary& summary);

// CSV exports.
std::string tags_csv(const std::map<Intersection, std::map<std::string, double>>& distribution);
std::string rates_csv(const std::map<Intersection, RelevanceRate>& rates);
std::string plotdata_csv(
    const std::map<Intersection, std::map<std::string, double>>& distribution,
    const std::map<Intersection, RelevanceRate>& rates);

} // namespace scoper
