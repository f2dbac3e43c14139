#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "scoper/corpus.hpp"
#include "scoper/types.hpp"
#include "scoper/vote.hpp"

namespace scoper {

// Finite-population-corrected margin of error:
// z * sqrt(p(1-p)/n) * sqrt((N-n)/(N-1)). Throws DomainError outside
// 1 <= n <= N, 0 <= p <= 1, z > 0.
double margin_of_error(std::size_t population, std::size_t sample, double p, double z);

// One sampling stratum: an intersection crossed with the machine relevance
// verdict.
struct StratumKey {
    Intersection intersection;
    Relevance relevance;

    auto operator<=>(const StratumKey&) const = default;
};

struct StratumPlan {
    std::size_t population = 0;
    double exact_target = 0.0; // n * population / total, before rounding
    std::size_t target = 0;    // largest-remainder apportionment
    std::size_t actual = 0;
};

struct ValidationSample {
    std::string sample_id;
    std::uint64_t seed = 0;
    std::vector<std::string> members; // presentation order for raters
    std::map<StratumKey, StratumPlan> strata;
};

// Largest-remainder apportionment of n slots over the strata populations.
// Target counts sum to n and never exceed a stratum's population.
std::map<StratumKey, std::size_t> apportion_targets(
    const std::map<StratumKey, std::size_t>& populations, std::size_t n);

// Draws the validation sample: per-stratum uniform draws without
// replacement, then a seeded shuffle of the combined list so the
// presentation order leaks no stratum boundaries. `target_overrides`
// replaces the apportioned target for selected strata (oversampling);
// an override above the stratum population raises EmptyStratum.
ValidationSample draw_stratified_sample(
    const std::vector<PaperRecord>& corpus,
    const std::vector<AggregatedVerdict>& aggregated, std::size_t n, std::uint64_t seed,
    const std::map<StratumKey, std::size_t>& target_overrides = {});

std::string sample_to_json(const ValidationSample& sample);
ValidationSample sample_from_json(const std::string& text);

struct HumanLabel {
    std::string eid;
    std::string rater_id;
    Relevance relevance = Relevance::not_relevant;
    std::string noted_at;
};

// Label log IO. One label per (eid, rater): the first recorded line wins and
// later duplicates are dropped with a warning.
std::vector<HumanLabel> read_label_log(const std::filesystem::path& path);
void append_label(const std::filesystem::path& path, const HumanLabel& label);

// Fraction of sample members on which every rater gave the same relevance.
// Every member must carry a label from every rater (IncompleteLabels).
double human_agreement(const std::vector<HumanLabel>& labels,
                       const std::vector<std::string>& sample_members);

// Strict-majority consensus per member. Requires an odd rater count
// (EvenRaterCount) and complete labels (IncompleteLabels).
std::map<std::string, Relevance> human_consensus(const std::vector<HumanLabel>& labels,
                                                 const std::vector<std::string>& sample_members);

struct DisagreementResult {
    std::vector<std::string> eids; // ascending
    double rate = 0.0;             // |eids| / sample size
};

// Eids where the machine and human verdicts differ. Both maps must cover the
// same eids (EidMismatch).
DisagreementResult machine_human_disagreement(const std::map<std::string, Relevance>& machine,
                                              const std::map<std::string, Relevance>& human);

// Expert resolution of one machine-human disagreement. `resolution` is
// "agree_machine" (the human label yields; the disagreement is resolved) or
// "uphold_human" (the disagreement stands).
struct ExpertDecision {
    std::string eid;
    std::string resolution;
    std::string guideline_code;
    std::string note;
};

const std::vector<std::string>& default_guideline_codes(); // STRICT_SE, RETAIN_UNCERTAIN

struct AgreementReport {
    std::size_t sample_size = 0;
    std::size_t human_unanimous_count = 0;
    double human_unanimous_rate = 0.0;
    std::size_t disagreements_before = 0;
    std::size_t disagreements_after = 0;
    double disagreement_rate = 0.0; // after / sample_size
};

struct ConsolidationOutcome {
    std::vector<std::string> resolved;  // ascending
    std::vector<std::string> remaining; // ascending
    AgreementReport report;
};

// Applies expert decisions to the disagreement set. Every disagreement needs
// exactly one decision (MissingDecision); decisions outside the set raise
// UnknownEid; codes outside `allowed_codes` raise DomainError.
ConsolidationOutcome consolidate(const std::vector<std::string>& disagreements,
                                 const std::vector<ExpertDecision>& decisions,
                                 std::size_t sample_size, std::size_t human_unanimous_count,
                                 const std::vector<std::string>& allowed_codes =
                                     default_guideline_codes());

// Decision sheet IO: CSV with header eid,resolution,guideline_code,note.
std::vector<ExpertDecision> parse_decisions_csv(const std::string& text);
std::string render_decisions_csv(const std::vector<ExpertDecision>& decisions);

std::string agreement_report_json(const AgreementReport& report);
std::string agreement_report_text(const AgreementReport& report);

struct LabelSessionResult {
    std::size_t presented = 0;
    std::size_t recorded = 0;
    bool completed = false; // every sample member now labeled by this rater
};

// Interactive blind labeling: shows each still-unlabeled title (title only,
// no venue, no machine verdict) in sample order and appends answers to the
// label log. 'y'/'n' record a label, 'q' or end-of-input stops the session;
// partial progress persists.
LabelSessionResult label_session(const ValidationSample& sample,
                                 const std::map<std::string, std::string>& titles_by_eid,
                                 const std::string& rater_id,
                                 const std::filesystem::path& label_log, std::istream& in,
                                 std::ostream& out);

} // namespace scoper
