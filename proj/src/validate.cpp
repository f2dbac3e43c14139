#include "scoper/validate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

using json = nlohmann::json;

double margin_of_error(std::size_t population, std::size_t sample, double p, double z) {
    if (sample < 1 || sample > population) {
        throw PipelineError(ErrorCode::DomainError, "sample size must satisfy 1 <= n <= N");
    }
    if (p < 0.0 || p > 1.0) {
        throw PipelineError(ErrorCode::DomainError, "proportion must lie in [0, 1]");
    }
    if (z <= 0.0) {
        throw PipelineError(ErrorCode::DomainError, "critical value must be positive");
    }
    if (sample == population) return 0.0;
    double N = static_cast<double>(population);
    double n = static_cast<double>(sample);
    return z * std::sqrt(p * (1.0 - p) / n) * std::sqrt((N - n) / (N - 1.0));
}

namespace {

std::string stratum_name(const StratumKey& key) {
    return to_string(key.intersection) + "/" + to_string(key.relevance);
}

} // namespace

std::map<StratumKey, std::size_t> apportion_targets(
    const std::map<StratumKey, std::size_t>& populations, std::size_t n) {
    std::size_t total = 0;
    for (const auto& [key, pop] : populations) total += pop;
    if (n > total) {
        throw PipelineError(ErrorCode::DomainError,
                            "sample size " + std::to_string(n) + " exceeds population " +
                                std::to_string(total));
    }

    std::map<StratumKey, std::size_t> targets;
    std::vector<std::pair<std::size_t, StratumKey>> remainders; // (n*pop mod total, key)
    std::size_t assigned = 0;
    for (const auto& [key, pop] : populations) {
        std::size_t target = total == 0 ? 0 : n * pop / total;
        targets[key] = target;
        assigned += target;
        remainders.emplace_back(total == 0 ? 0 : n * pop % total, key);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [frac, key] : remainders) {
        if (assigned == n) break;
        if (targets[key] < populations.at(key)) {
            ++targets[key];
            ++assigned;
        }
    }
    return targets;
}

ValidationSample draw_stratified_sample(
    const std::vector<PaperRecord>& corpus, const std::vector<AggregatedVerdict>& aggregated,
    std::size_t n, std::uint64_t seed,
    const std::map<StratumKey, std::size_t>& target_overrides) {
    if (n > corpus.size()) {
        throw PipelineError(ErrorCode::DomainError,
                            "sample size exceeds the corpus (" + std::to_string(n) + " > " +
                                std::to_string(corpus.size()) + ")");
    }

    std::map<std::string, Relevance> verdict_by_eid;
    for (const AggregatedVerdict& verdict : aggregated) {
        verdict_by_eid.emplace(verdict.eid, verdict.relevance);
    }

    std::map<StratumKey, std::vector<const PaperRecord*>> strata;
    for (const PaperRecord& record : corpus) {
        auto it = verdict_by_eid.find(record.eid);
        if (it == verdict_by_eid.end()) {
            throw PipelineError(ErrorCode::MissingVerdict,
                                "no aggregated verdict for " + record.eid);
        }
        strata[{record.intersection, it->second}].push_back(&record);
    }

    std::map<StratumKey, std::size_t> populations;
    for (const auto& [key, members] : strata) populations[key] = members.size();
    std::map<StratumKey, std::size_t> targets = apportion_targets(populations, n);
    std::map<StratumKey, double> exact;
    std::size_t total = corpus.size();
    for (const auto& [key, pop] : populations) {
        exact[key] = total == 0 ? 0.0
                                : static_cast<double>(n) * static_cast<double>(pop) /
                                      static_cast<double>(total);
    }
    for (const auto& [key, target] : target_overrides) {
        std::size_t population = populations.count(key) ? populations.at(key) : 0;
        if (target > population) {
            throw PipelineError(ErrorCode::EmptyStratum,
                                "stratum " + stratum_name(key) + " has " +
                                    std::to_string(population) + " papers but a target of " +
                                    std::to_string(target));
        }
        targets[key] = target;
        if (!populations.count(key)) populations[key] = 0;
    }

    ValidationSample result;
    result.seed = seed;
    std::mt19937_64 rng(seed);
    std::vector<std::string> drawn;
    for (const auto& [key, members] : strata) {
        std::size_t target = targets.at(key);
        std::vector<std::size_t> picks =
            util::sample_without_replacement(rng, members.size(), target);
        for (std::size_t index : picks) drawn.push_back(members[index]->eid);
        StratumPlan plan;
        plan.population = members.size();
        plan.exact_target = exact.at(key);
        plan.target = target;
        plan.actual = target;
        result.strata[key] = plan;
    }

    // Shuffle the combined draw so the rater-facing order carries no hint of
    // stratum membership.
    std::vector<std::size_t> order =
        util::sample_without_replacement(rng, drawn.size(), drawn.size());
    result.members.reserve(drawn.size());
    for (std::size_t index : order) result.members.push_back(drawn[index]);

    std::string digest_input = std::to_string(seed);
    for (const std::string& eid : result.members) {
        digest_input += '\n';
        digest_input += eid;
    }
    result.sample_id = util::short_digest(digest_input);
    return result;
}

std::string sample_to_json(const ValidationSample& sample) {
    json strata = json::array();
    for (const auto& [key, plan] : sample.strata) {
        strata.push_back(json{{"intersection", to_string(key.intersection)},
                              {"relevance", to_string(key.relevance)},
                              {"population", plan.population},
                              {"exact_target", plan.exact_target},
                              {"target", plan.target},
                              {"actual", plan.actual}});
    }
    json doc{{"sample_id", sample.sample_id},
             {"seed", sample.seed},
             {"size", sample.members.size()},
             {"strata", strata},
             {"members", sample.members}};
    return doc.dump(2) + "\n";
}

ValidationSample sample_from_json(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw PipelineError(ErrorCode::IoError, "sample file is not valid JSON");
    }
    ValidationSample sample;
    sample.sample_id = doc.value("sample_id", "");
    sample.seed = doc.value("seed", std::uint64_t{0});
    for (const json& eid : doc.value("members", json::array())) {
        sample.members.push_back(eid.get<std::string>());
    }
    for (const json& entry : doc.value("strata", json::array())) {
        StratumKey key{intersection_from_string(entry.value("intersection", "")),
                       relevance_from_string(entry.value("relevance", ""))};
        StratumPlan plan;
        plan.population = entry.value("population", std::size_t{0});
        plan.exact_target = entry.value("exact_target", 0.0);
        plan.target = entry.value("target", std::size_t{0});
        plan.actual = entry.value("actual", std::size_t{0});
        sample.strata[key] = plan;
    }
    return sample;
}

std::vector<HumanLabel> read_label_log(const std::filesystem::path& path) {
    std::vector<HumanLabel> labels;
    if (!std::filesystem::exists(path)) return labels;
    std::set<std::pair<std::string, std::string>> seen;
    for (const json& record : util::read_jsonl(path)) {
        HumanLabel label;
        label.eid = record.value("eid", "");
        label.rater_id = record.value("rater_id", "");
        label.relevance = relevance_from_string(record.value("relevance", ""));
        label.noted_at = record.value("noted_at", "");
        if (!seen.insert({label.eid, label.rater_id}).second) {
            spdlog::warn("duplicate label for {} by {}; keeping the first", label.eid,
                         label.rater_id);
            continue;
        }
        labels.push_back(std::move(label));
    }
    return labels;
}

void append_label(const std::filesystem::path& path, const HumanLabel& label) {
    util::append_jsonl(path, json{{"eid", label.eid},
                                  {"rater_id", label.rater_id},
                                  {"relevance", to_string(label.relevance)},
                                  {"noted_at", label.noted_at}});
}

namespace {

// eid -> rater -> relevance, restricted to the sample, with completeness
// checks shared by agreement and consensus.
std::map<std::string, std::map<std::string, Relevance>> label_matrix(
    const std::vector<HumanLabel>& labels, const std::vector<std::string>& sample_members) {
    std::set<std::string> raters;
    std::map<std::string, std::map<std::string, Relevance>> matrix;
    for (const HumanLabel& label : labels) raters.insert(label.rater_id);
    if (raters.empty() && !sample_members.empty()) {
        throw PipelineError(ErrorCode::IncompleteLabels, "no labels recorded");
    }
    std::set<std::string> member_set(sample_members.begin(), sample_members.end());
    for (const HumanLabel& label : labels) {
        if (!member_set.count(label.eid)) continue;
        matrix[label.eid][label.rater_id] = label.relevance;
    }
    for (const std::string& eid : sample_members) {
        for (const std::string& rater : raters) {
            if (!matrix.count(eid) || !matrix.at(eid).count(rater)) {
                throw PipelineError(ErrorCode::IncompleteLabels,
                                    "no label for " + eid + " by rater " + rater);
            }
        }
    }
    return matrix;
}

} // namespace

double human_agreement(const std::vector<HumanLabel>& labels,
                       const std::vector<std::string>& sample_members) {
    if (sample_members.empty()) return 1.0;
    auto matrix = label_matrix(labels, sample_members);
    std::size_t unanimous = 0;
    for (const std::string& eid : sample_members) {
        const auto& row = matrix.at(eid);
        bool all_equal = true;
        for (const auto& [rater, relevance] : row) {
            if (relevance != row.begin()->second) all_equal = false;
        }
        if (all_equal) ++unanimous;
    }
    return static_cast<double>(unanimous) / static_cast<double>(sample_members.size());
}

std::map<std::string, Relevance> human_consensus(const std::vector<HumanLabel>& labels,
                                                 const std::vector<std::string>& sample_members) {
    if (sample_members.empty()) return {};
    auto matrix = label_matrix(labels, sample_members);
    std::size_t rater_count = matrix.begin()->second.size();
    if (rater_count % 2 == 0) {
        throw PipelineError(ErrorCode::EvenRaterCount,
                            "consensus needs an odd rater count, got " +
                                std::to_string(rater_count));
    }
    std::map<std::string, Relevance> consensus;
    for (const std::string& eid : sample_members) {
        std::size_t relevant = 0;
        for (const auto& [rater, relevance] : matrix.at(eid)) {
            if (relevance == Relevance::relevant) ++relevant;
        }
        consensus[eid] =
            2 * relevant > rater_count ? Relevance::relevant : Relevance::not_relevant;
    }
    return consensus;
}

DisagreementResult machine_human_disagreement(const std::map<std::string, Relevance>& machine,
                                              const std::map<std::string, Relevance>& human) {
    for (const auto& [eid, relevance] : machine) {
        if (!human.count(eid)) {
            throw PipelineError(ErrorCode::EidMismatch, "no human label for " + eid);
        }
    }
    for (const auto& [eid, relevance] : human) {
        if (!machine.count(eid)) {
            throw PipelineError(ErrorCode::EidMismatch, "no machine verdict for " + eid);
        }
    }
    DisagreementResult result;
    for (const auto& [eid, relevance] : machine) {
        if (human.at(eid) != relevance) result.eids.push_back(eid);
    }
    result.rate = machine.empty() ? 0.0
                                  : static_cast<double>(result.eids.size()) /
                                        static_cast<double>(machine.size());
    return result;
}

const std::vector<std::string>& default_guideline_codes() {
    static const std::vector<std::string> codes{"STRICT_SE", "RETAIN_UNCERTAIN"};
    return codes;
}

ConsolidationOutcome consolidate(const std::vector<std::string>& disagreements,
                                 const std::vector<ExpertDecision>& decisions,
                                 std::size_t sample_size, std::size_t human_unanimous_count,
                                 const std::vector<std::string>& allowed_codes) {
    std::set<std::string> open(disagreements.begin(), disagreements.end());
    std::set<std::string> decided;
    ConsolidationOutcome outcome;

    for (const ExpertDecision& decision : decisions) {
        if (!open.count(decision.eid)) {
            throw PipelineError(ErrorCode::UnknownEid,
                                "decision for " + decision.eid +
                                    ", which is not a recorded disagreement");
        }
        if (!decided.insert(decision.eid).second) {
            throw PipelineError(ErrorCode::DomainError,
                                "more than one decision for " + decision.eid);
        }
        if (decision.resolution.empty()) {
            throw PipelineError(ErrorCode::MissingDecision,
                                "decision for " + decision.eid + " has no resolution");
        }
        if (decision.resolution != "agree_machine" && decision.resolution != "uphold_human") {
            throw PipelineError(ErrorCode::DomainError,
                                "unknown resolution \"" + decision.resolution + "\" for " +
                                    decision.eid);
        }
        if (std::find(allowed_codes.begin(), allowed_codes.end(), decision.guideline_code) ==
            allowed_codes.end()) {
            throw PipelineError(ErrorCode::DomainError,
                                "unknown guideline code \"" + decision.guideline_code +
                                    "\" for " + decision.eid);
        }
        if (decision.resolution == "agree_machine") {
            outcome.resolved.push_back(decision.eid);
        } else {
            outcome.remaining.push_back(decision.eid);
        }
    }

    for (const std::string& eid : disagreements) {
        if (!decided.count(eid)) {
            throw PipelineError(ErrorCode::MissingDecision, "no decision recorded for " + eid);
        }
    }

    std::sort(outcome.resolved.begin(), outcome.resolved.end());
    std::sort(outcome.remaining.begin(), outcome.remaining.end());
    outcome.report.sample_size = sample_size;
    outcome.report.human_unanimous_count = human_unanimous_count;
    outcome.report.human_unanimous_rate =
        sample_size == 0 ? 0.0
                         : static_cast<double>(human_unanimous_count) /
                               static_cast<double>(sample_size);
    outcome.report.disagreements_before = disagreements.size();
    outcome.report.disagreements_after = outcome.remaining.size();
    outcome.report.disagreement_rate =
        sample_size == 0 ? 0.0
                         : static_cast<double>(outcome.remaining.size()) /
                               static_cast<double>(sample_size);
    return outcome;
}

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            row_started = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            row_started = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (row_started || !field.empty()) {
                row.push_back(std::move(field));
                field.clear();
                rows.push_back(std::move(row));
                row.clear();
                row_started = false;
            }
        } else {
            field += c;
            row_started = true;
        }
    }
    if (row_started || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

std::vector<ExpertDecision> parse_decisions_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows = parse_csv(text);
    if (rows.empty() || rows.front() != std::vector<std::string>{"eid", "resolution",
                                                                 "guideline_code", "note"}) {
        throw PipelineError(ErrorCode::IoError,
                            "decision sheet must start with header "
                            "eid,resolution,guideline_code,note");
    }
    std::vector<ExpertDecision> decisions;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::vector<std::string> row = rows[i];
        if (row.size() > 4) {
            throw PipelineError(ErrorCode::IoError,
                                "decision sheet row " + std::to_string(i + 1) +
                                    " has more than 4 fields");
        }
        row.resize(4);
        decisions.push_back({row[0], row[1], row[2], row[3]});
    }
    return decisions;
}

std::string render_decisions_csv(const std::vector<ExpertDecision>& decisions) {
    std::string csv = "eid,resolution,guideline_code,note\n";
    for (const ExpertDecision& decision : decisions) {
        csv += util::csv_field(decision.eid) + "," + util::csv_field(decision.resolution) + "," +
               util::csv_field(decision.guideline_code) + "," + util::csv_field(decision.note) +
               "\n";
    }
    return csv;
}

std::string agreement_report_json(const AgreementReport& report) {
    json doc{{"sample_size", report.sample_size},
             {"human_unanimous_count", report.human_unanimous_count},
             {"human_unanimous_rate", report.human_unanimous_rate},
             {"disagreements_before", report.disagreements_before},
             {"disagreements_after", report.disagreements_after},
             {"disagreement_rate", report.disagreement_rate}};
    return doc.dump(2) + "\n";
}

std::string agreement_report_text(const AgreementReport& report) {
    char buf[256];
    std::string text;
    text += "Validation sample: " + std::to_string(report.sample_size) + " papers\n";
    std::snprintf(buf, sizeof buf, "Human raters unanimous on %zu (rate %.2f)\n",
                  report.human_unanimous_count, report.human_unanimous_rate);
    text += buf;
    text += "Machine-human disagreements: " + std::to_string(report.disagreements_before) +
            " before consolidation, " + std::to_string(report.disagreements_after) + " after\n";
    std::snprintf(buf, sizeof buf, "Final disagreement rate: %.2f\n", report.disagreement_rate);
    text += buf;
    return text;
}

LabelSessionResult label_session(const ValidationSample& sample,
                                 const std::map<std::string, std::string>& titles_by_eid,
                                 const std::string& rater_id,
                                 const std::filesystem::path& label_log, std::istream& in,
                                 std::ostream& out) {
    std::set<std::string> already;
    for (const HumanLabel& label : read_label_log(label_log)) {
        if (label.rater_id == rater_id) already.insert(label.eid);
    }

    std::vector<std::string> pending;
    for (const std::string& eid : sample.members) {
        if (!already.count(eid)) pending.push_back(eid);
    }

    LabelSessionResult result;
    out << "Rater " << rater_id << ": " << already.size() << " of " << sample.members.size()
        << " sample titles already labeled.\n";
    if (pending.empty()) {
        out << "Nothing left to label.\n";
        result.completed = true;
        return result;
    }
    out << "Answer y (relevant), n (not relevant), or q to stop. Progress is saved after "
           "every answer.\n";

    std::size_t position = already.size();
    for (const std::string& eid : pending) {
        auto title = titles_by_eid.find(eid);
        if (title == titles_by_eid.end()) {
            throw PipelineError(ErrorCode::UnknownEid,
                                "sample member " + eid + " has no title in the corpus");
        }
        ++result.presented;
        ++position;
        out << "\n[" << position << "/" << sample.members.size() << "] " << title->second
            << "\n";

        bool answered = false;
        bool stop = false;
        while (!answered) {
            out << "Relevant? [y/n/q] " << std::flush;
            std::string line;
            if (!std::getline(in, line)) {
                stop = true;
                break;
            }
            std::string answer = util::to_lower(util::trim(line));
            if (answer == "y" || answer == "yes") {
                append_label(label_log,
                             {eid, rater_id, Relevance::relevant, util::iso8601_now()});
                ++result.recorded;
                answered = true;
            } else if (answer == "n" || answer == "no") {
                append_label(label_log,
                             {eid, rater_id, Relevance::not_relevant, util::iso8601_now()});
                ++result.recorded;
                answered = true;
            } else if (answer == "q" || answer == "quit") {
                stop = true;
                break;
            } else {
                out << "Unrecognized answer.\n";
            }
        }
        if (stop) break;
    }

    result.completed = already.size() + result.recorded == sample.members.size();
    out << "\nSession over: " << result.recorded << " new labels recorded"
        << (result.completed ? "; sample fully labeled by this rater.\n" : ".\n");
    return result;
}

} // namespace scoper
