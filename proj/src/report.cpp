#include "scoper/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

using json = nlohmann::json;

StageCounts& StageCounts::operator+=(const StageCounts& other) {
    collected += other.collected;
    deduplicated += other.deduplicated;
    batched += other.batched;
    screened += other.screened;
    relevant += other.relevant;
    return *this;
}

StageCounts StageFlow::totals() const {
    StageCounts total;
    for (const auto& [intersection, counts] : per_intersection) total += counts;
    return total;
}

std::string percent_string(double fraction) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    std::string text = buf;
    while (!text.empty() && text.back() == '0') text.pop_back();
    if (!text.empty() && text.back() == '.') text.pop_back();
    return text.empty() ? "0" : text;
}

std::map<Intersection, std::map<std::string, double>> tag_distribution(
    const std::vector<AggregatedVerdict>& aggregated,
    const std::map<std::string, Intersection>& intersection_by_eid,
    const std::map<Intersection, std::size_t>& corpus_counts,
    const std::vector<std::string>& tag_vocabulary) {
    std::map<Intersection, std::map<std::string, std::size_t>> counts;
    for (const AggregatedVerdict& verdict : aggregated) {
        auto home = intersection_by_eid.find(verdict.eid);
        if (home == intersection_by_eid.end()) {
            throw PipelineError(ErrorCode::UnknownEid,
                                "aggregated verdict for " + verdict.eid +
                                    ", which is not in the corpus");
        }
        for (const std::string& tag : verdict.tags) {
            ++counts[home->second][tag];
        }
    }

    std::map<Intersection, std::map<std::string, double>> distribution;
    for (const auto& [intersection, total] : corpus_counts) {
        if (total == 0) continue;
        std::map<std::string, double>& frequencies = distribution[intersection];
        for (const std::string& tag : tag_vocabulary) frequencies[tag] = 0.0;
        auto tagged = counts.find(intersection);
        if (tagged == counts.end()) continue;
        for (const auto& [tag, count] : tagged->second) {
            frequencies[tag] = static_cast<double>(count) / static_cast<double>(total);
        }
    }
    return distribution;
}

std::map<Intersection, RelevanceRate> relevance_rates(
    const std::vector<AggregatedVerdict>& aggregated,
    const std::map<std::string, Intersection>& intersection_by_eid,
    const std::map<Intersection, std::size_t>& corpus_counts) {
    std::map<Intersection, std::size_t> relevant;
    for (const AggregatedVerdict& verdict : aggregated) {
        if (verdict.relevance != Relevance::relevant) continue;
        auto home = intersection_by_eid.find(verdict.eid);
        if (home == intersection_by_eid.end()) {
            throw PipelineError(ErrorCode::UnknownEid,
                                "aggregated verdict for " + verdict.eid +
                                    ", which is not in the corpus");
        }
        ++relevant[home->second];
    }

    std::map<Intersection, RelevanceRate> rates;
    for (const auto& [intersection, total] : corpus_counts) {
        if (total == 0) continue;
        RelevanceRate rate;
        rate.total = total;
        rate.relevant = relevant.count(intersection) ? relevant.at(intersection) : 0;
        rate.rate = static_cast<double>(rate.relevant) / static_cast<double>(total);
        rates[intersection] = rate;
    }
    return rates;
}

namespace {

json counts_to_json(const StageCounts& counts) {
    return json{{"collected", counts.collected},
                {"deduplicated", counts.deduplicated},
                {"batched", counts.batched},
                {"screened", counts.screened},
                {"relevant", counts.relevant}};
}

} // namespace

std::string summary_json(const RunSummary& summary) {
    json flow = json::object();
    for (const auto& [intersection, counts] : summary.flow.per_intersection) {
        flow[to_string(intersection)] = counts_to_json(counts);
    }
    flow["total"] = counts_to_json(summary.flow.totals());

    json relevance = json::object();
    for (const auto& [intersection, rate] : summary.relevance) {
        relevance[to_string(intersection)] = json{{"relevant", rate.relevant},
                                                  {"total", rate.total},
                                                  {"rate", rate.rate},
                                                  {"percent", percent_string(rate.rate)}};
    }

    json consistency = json::object();
    for (const auto& [intersection, stats] : summary.consistency) {
        consistency[to_string(intersection)] =
            json{{"population", stats.population},
                 {"unanimous", stats.unanimous_count},
                 {"perfect_agreement_rate", stats.perfect_agreement_rate}};
    }

    json doc{{"model", summary.model},
             {"runs", summary.runs},
             {"config_digest", summary.config_digest},
             {"flow", flow},
             {"relevance", relevance},
             {"consistency", consistency}};
    if (summary.agreement) {
        const AgreementReport& agreement = *summary.agreement;
        doc["agreement"] = json{{"sample_size", agreement.sample_size},
                                {"human_unanimous_count", agreement.human_unanimous_count},
                                {"human_unanimous_rate", agreement.human_unanimous_rate},
                                {"disagreements_before", agreement.disagreements_before},
                                {"disagreements_after", agreement.disagreements_after},
                                {"disagreement_rate", agreement.disagreement_rate}};
    }
    return doc.dump(2) + "\n";
}

std::string summary_text(const RunSummary& summary) {
    std::ostringstream out;
    out << "Pipeline summary (model " << summary.model << ", " << summary.runs
        << " runs, config " << summary.config_digest << ")\n\n";

    out << "Stage flow:\n";
    char line[160];
    std::snprintf(line, sizeof line, "  %-12s %10s %13s %8s %9s %9s\n", "intersection",
                  "collected", "deduplicated", "batched", "screened", "relevant");
    out << line;
    auto emit_counts = [&](const std::string& label, const StageCounts& counts) {
        std::snprintf(line, sizeof line, "  %-12s %10zu %13zu %8zu %9zu %9zu\n", label.c_str(),
                      counts.collected, counts.deduplicated, counts.batched, counts.screened,
                      counts.relevant);
        out << line;
    };
    for (const auto& [intersection, counts] : summary.flow.per_intersection) {
        emit_counts(to_string(intersection), counts);
    }
    emit_counts("total", summary.flow.totals());

    if (!summary.relevance.empty()) {
        out << "\nRelevance:\n";
        std::size_t total_relevant = 0;
        std::size_t total_papers = 0;
        for (const auto& [intersection, rate] : summary.relevance) {
            out << "  " << to_string(intersection) << ": " << rate.relevant << " of "
                << rate.total << " relevant (" << percent_string(rate.rate) << "%)\n";
            total_relevant += rate.relevant;
            total_papers += rate.total;
        }
        if (total_papers > 0) {
            out << "  total: " << total_relevant << " of " << total_papers << " relevant ("
                << percent_string(static_cast<double>(total_relevant) /
                                  static_cast<double>(total_papers))
                << "%)\n";
        }
    }

    if (!summary.consistency.empty()) {
        out << "\nSelf-consistency (runs unanimous on relevance):\n";
        for (const auto& [intersection, stats] : summary.consistency) {
            std::snprintf(line, sizeof line, "  %s: %.2f (%zu of %zu)\n",
                          to_string(intersection).c_str(), stats.perfect_agreement_rate,
                          stats.unanimous_count, stats.population);
            out << line;
        }
    }

    if (summary.agreement) {
        out << "\nValidation:\n";
        std::istringstream agreement(agreement_report_text(*summary.agreement));
        std::string text_line;
        while (std::getline(agreement, text_line)) out << "  " << text_line << "\n";
    }
    return out.str();
}

std::string tags_csv(const std::map<Intersection, std::map<std::string, double>>& distribution) {
    // Row order: tag, then intersection, so the two bars of one tag sit
    // together as in the figure this feeds.
    std::vector<std::string> tags;
    for (const auto& [intersection, frequencies] : distribution) {
        for (const auto& [tag, frequency] : frequencies) tags.push_back(tag);
    }
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());

    std::string csv = "tag,intersection,frequency\n";
    char value[32];
    for (const std::string& tag : tags) {
        for (const auto& [intersection, frequencies] : distribution) {
            auto it = frequencies.find(tag);
            if (it == frequencies.end()) continue;
            std::snprintf(value, sizeof value, "%.6f", it->second);
            csv += util::csv_field(tag) + "," + to_string(intersection) + "," + value + "\n";
        }
    }
    return csv;
}

std::string rates_csv(const std::map<Intersection, RelevanceRate>& rates) {
    std::string csv = "intersection,relevant,total,rate\n";
    for (const auto& [intersection, rate] : rates) {
        csv += to_string(intersection) + "," + std::to_string(rate.relevant) + "," +
               std::to_string(rate.total) + "," + percent_string(rate.rate) + "\n";
    }
    return csv;
}

std::string plotdata_csv(
    const std::map<Intersection, std::map<std::string, double>>& distribution,
    const std::map<Intersection, RelevanceRate>& rates) {
    std::string csv = "series,x,y\n";
    char value[32];
    for (const auto& [intersection, frequencies] : distribution) {
        for (const auto& [tag, frequency] : frequencies) {
            std::snprintf(value, sizeof value, "%.6f", frequency);
            csv += "tag_frequency/" + to_string(intersection) + "," + util::csv_field(tag) +
                   "," + value + "\n";
        }
    }
    for (const auto& [intersection, rate] : rates) {
        std::snprintf(value, sizeof value, "%.6f", rate.rate);
        csv += "relevance_rate," + to_string(intersection) + "," + value + "\n";
    }
    return csv;
}

} // namespace scoper
