#include "scoper/vote.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

using json = nlohmann::json;

Relevance majority_relevance(const std::vector<Relevance>& votes) {
    if (votes.empty() || votes.size() % 2 == 0) {
        throw PipelineError(ErrorCode::EvenRunCount,
                            "majority voting needs an odd number of votes, got " +
                                std::to_string(votes.size()));
    }
    std::size_t relevant = 0;
    for (Relevance v : votes) {
        if (v == Relevance::relevant) ++relevant;
    }
    return 2 * relevant > votes.size() ? Relevance::relevant : Relevance::not_relevant;
}

std::vector<std::string> aggregate_tags(const std::vector<std::vector<std::string>>& per_run_tags,
                                        Relevance final_relevance, bool* union_fallback) {
    if (union_fallback) *union_fallback = false;
    if (final_relevance == Relevance::not_relevant) return {};

    std::map<std::string, std::size_t> counts;
    for (const std::vector<std::string>& run_tags : per_run_tags) {
        std::set<std::string> unique(run_tags.begin(), run_tags.end());
        for (const std::string& tag : unique) ++counts[tag];
    }
    std::vector<std::string> majority;
    for (const auto& [tag, count] : counts) {
        if (2 * count > per_run_tags.size()) majority.push_back(tag);
    }
    if (!majority.empty()) return majority; // std::map iteration is already sorted

    std::vector<std::string> all;
    for (const auto& [tag, count] : counts) all.push_back(tag);
    if (union_fallback) *union_fallback = true;
    return all;
}

std::vector<AggregatedVerdict> aggregate_runs(
    const std::vector<std::vector<ScreeningVerdict>>& runs,
    const std::vector<std::string>& corpus_eids) {
    if (runs.empty() || runs.size() % 2 == 0) {
        throw PipelineError(ErrorCode::EvenRunCount,
                            "aggregation needs an odd number of runs, got " +
                                std::to_string(runs.size()));
    }
    std::vector<std::map<std::string, const ScreeningVerdict*>> by_eid(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) {
        for (const ScreeningVerdict& verdict : runs[r]) {
            by_eid[r][verdict.eid] = &verdict;
        }
    }

    std::vector<AggregatedVerdict> aggregated;
    aggregated.reserve(corpus_eids.size());
    for (const std::string& eid : corpus_eids) {
        std::vector<const ScreeningVerdict*> verdicts;
        for (std::size_t r = 0; r < runs.size(); ++r) {
            auto it = by_eid[r].find(eid);
            if (it == by_eid[r].end()) {
                throw PipelineError(ErrorCode::MissingVerdict,
                                    "eid " + eid + " has no verdict in run " +
                                        std::to_string(r + 1));
            }
            verdicts.push_back(it->second);
        }

        AggregatedVerdict out;
        out.eid = eid;
        for (const ScreeningVerdict* v : verdicts) out.vote_detail.push_back(v->relevance);
        out.relevance = majority_relevance(out.vote_detail);
        out.unanimous = std::all_of(out.vote_detail.begin(), out.vote_detail.end(),
                                    [&](Relevance v) { return v == out.vote_detail.front(); });
        std::vector<std::vector<std::string>> per_run_tags;
        for (const ScreeningVerdict* v : verdicts) per_run_tags.push_back(v->tags);
        out.tags = aggregate_tags(per_run_tags, out.relevance, &out.tags_union_fallback);
        for (const ScreeningVerdict* v : verdicts) {
            if (v->relevance == out.relevance) {
                out.justification = v->justification;
                break;
            }
        }
        aggregated.push_back(std::move(out));
    }
    return aggregated;
}

std::map<Intersection, ConsistencyStats> self_consistency(
    const std::vector<std::vector<ScreeningVerdict>>& runs,
    const std::map<std::string, Intersection>& intersection_of_eid) {
    if (runs.empty()) {
        throw PipelineError(ErrorCode::MissingVerdict, "no runs to analyze");
    }
    std::vector<std::map<std::string, Relevance>> by_eid(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) {
        for (const ScreeningVerdict& verdict : runs[r]) {
            by_eid[r][verdict.eid] = verdict.relevance;
        }
    }
    std::map<Intersection, ConsistencyStats> stats;
    for (const auto& [eid, intersection] : intersection_of_eid) {
        bool unanimous = true;
        Relevance first{};
        for (std::size_t r = 0; r < runs.size(); ++r) {
            auto it = by_eid[r].find(eid);
            if (it == by_eid[r].end()) {
                throw PipelineError(ErrorCode::MissingVerdict,
                                    "eid " + eid + " has no verdict in run " +
                                        std::to_string(r + 1));
            }
            if (r == 0) {
                first = it->second;
            } else if (it->second != first) {
                unanimous = false;
            }
        }
        ConsistencyStats& s = stats[intersection];
        ++s.population;
        if (unanimous) ++s.unanimous_count;
    }
    for (auto& [intersection, s] : stats) {
        s.perfect_agreement_rate =
            static_cast<double>(s.unanimous_count) / static_cast<double>(s.population);
    }
    return stats;
}

void save_aggregated(const std::filesystem::path& path,
                     const std::vector<AggregatedVerdict>& verdicts) {
    std::vector<json> lines;
    lines.reserve(verdicts.size());
    for (const AggregatedVerdict& v : verdicts) {
        json detail = json::array();
        for (Relevance r : v.vote_detail) detail.push_back(to_string(r));
        json line{{"eid", v.eid},
                  {"relevance", to_string(v.relevance)},
                  {"tags", v.tags},
                  {"vote_detail", detail},
                  {"unanimous", v.unanimous},
                  {"justification", v.justification}};
        if (v.tags_union_fallback) line["tags_union_fallback"] = true;
        lines.push_back(std::move(line));
    }
    util::write_jsonl_atomic(path, lines);
}

std::vector<AggregatedVerdict> load_aggregated(const std::filesystem::path& path) {
    std::vector<AggregatedVerdict> verdicts;
    for (const json& line : util::read_jsonl(path)) {
        AggregatedVerdict v;
        v.eid = line.at("eid").get<std::string>();
        v.relevance = relevance_from_string(line.at("relevance").get<std::string>());
        v.tags = line.at("tags").get<std::vector<std::string>>();
        for (const json& r : line.at("vote_detail")) {
            v.vote_detail.push_back(relevance_from_string(r.get<std::string>()));
        }
        v.unanimous = line.at("unanimous").get<bool>();
        v.justification = line.at("justification").get<std::string>();
        v.tags_union_fallback = line.value("tags_union_fallback", false);
        verdicts.push_back(std::move(v));
    }
    return verdicts;
}

} // namespace scoper
