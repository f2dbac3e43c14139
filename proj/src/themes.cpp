#include "scoper/themes.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

using json = nlohmann::json;

std::vector<std::vector<JustificationEntry>> chunk_justifications(
    const std::vector<JustificationEntry>& entries, int chunk_size) {
    if (chunk_size < 1) {
        throw PipelineError(ErrorCode::DomainError, "chunk size must be at least 1");
    }
    std::vector<std::vector<JustificationEntry>> chunks;
    for (std::size_t begin = 0; begin < entries.size(); begin += chunk_size) {
        std::size_t end = std::min(entries.size(), begin + chunk_size);
        chunks.emplace_back(entries.begin() + begin, entries.begin() + end);
    }
    return chunks;
}

LlmRequest render_theme_prompt(const std::vector<JustificationEntry>& chunk,
                               const LlmSettings& llm) {
    if (chunk.empty()) {
        throw PipelineError(ErrorCode::DomainError, "cannot render a theme prompt for no papers");
    }

    std::string body;
    body += "You are grouping papers from a scoping review by the justifications produced "
            "during title screening.\n\n";
    body += "Group the papers below into themes based on their justifications. Give every "
            "theme a meaningful name, an explanation, and a reason for its prominence. "
            "Order the themes from most prominent to least prominent.\n\n";
    body += "Papers (eid: justification):\n";
    for (const JustificationEntry& entry : chunk) {
        body += "- " + entry.eid + ": " + entry.justification + "\n";
    }
    body += "\nReply with exactly one JSON object and no other text, following this schema:\n";
    body += R"({"themes":[{"name":"<short label>","explanation":"<text>",)"
            R"("prominence_reason":"<text>","members":["<eid>",...]},...]})"
            "\n\nRules:\n";
    body += "- Order the \"themes\" array from most prominent to least prominent.\n";
    body += "- Assign every eid to exactly one theme.\n";
    body += "- \"members\" lists eids exactly as given above.\n";

    LlmRequest request;
    request.model = llm.model;
    request.system_text = "You are an expert in humanities and software engineering.";
    request.user_text = body;
    request.params = llm.sampling_params;
    return request;
}

ThemeParse parse_themes(const std::string& raw_output,
                        const std::vector<std::string>& known_eids) {
    json parsed = util::parse_model_json(raw_output);
    if (!parsed.is_object() || !parsed.contains("themes") || !parsed["themes"].is_array()) {
        throw PipelineError(ErrorCode::UnparsableOutput, "expected {\"themes\": [...]}");
    }

    std::set<std::string> known(known_eids.begin(), known_eids.end());
    std::set<std::string> assigned;
    ThemeParse result;

    for (const json& entry : parsed["themes"]) {
        if (!entry.is_object()) {
            throw PipelineError(ErrorCode::UnparsableOutput, "theme entry is not an object");
        }
        Theme theme;
        theme.name = entry.value("name", "");
        theme.explanation = entry.value("explanation", "");
        theme.prominence_reason = entry.value("prominence_reason", "");
        if (entry.contains("members") && entry["members"].is_array()) {
            for (const json& member : entry["members"]) {
                if (!member.is_string()) continue;
                std::string eid = member.get<std::string>();
                if (!known.count(eid)) {
                    result.warnings.push_back("theme \"" + theme.name +
                                              "\" names unknown eid " + eid + "; dropped");
                    continue;
                }
                if (assigned.count(eid)) {
                    result.warnings.push_back("eid " + eid +
                                              " appears in more than one theme; kept in the "
                                              "first");
                    continue;
                }
                assigned.insert(eid);
                theme.members.push_back(eid);
            }
        }
        if (theme.members.empty()) {
            result.warnings.push_back("theme \"" + theme.name + "\" has no members; dropped");
            continue;
        }
        theme.prominence_rank = static_cast<int>(result.themes.size()) + 1;
        result.themes.push_back(std::move(theme));
    }

    for (const std::string& eid : known_eids) {
        if (!assigned.count(eid)) result.leftover_eids.push_back(eid);
    }
    for (const std::string& warning : result.warnings) spdlog::warn("{}", warning);
    return result;
}

ExtremesSelection select_extremes(const std::vector<Theme>& ranked, int k) {
    if (k < 1) {
        throw PipelineError(ErrorCode::DomainError, "extremes window must be at least 1");
    }
    ExtremesSelection selection;
    std::size_t take = std::min<std::size_t>(k, ranked.size());
    selection.top.assign(ranked.begin(), ranked.begin() + take);
    selection.bottom.assign(ranked.end() - take, ranked.end());
    selection.overlap = ranked.size() < 2 * static_cast<std::size_t>(k);
    return selection;
}

ThemeRunResult run_theme_stage(const std::vector<AggregatedVerdict>& aggregated,
                               const LlmSettings& llm, LlmTransport& transport,
                               const std::string& run_label) {
    std::vector<JustificationEntry> entries;
    for (const AggregatedVerdict& verdict : aggregated) {
        if (verdict.relevance == Relevance::relevant) {
            entries.push_back({verdict.eid, verdict.justification});
        }
    }

    ThemeRunResult result;
    result.run_label = run_label;
    if (entries.empty()) return result;

    std::vector<std::vector<JustificationEntry>> chunks =
        chunk_justifications(entries, llm.theme_chunk);
    result.chunks = chunks.size();

    std::vector<std::string> raw_outputs(chunks.size());
    std::size_t wave = std::max(1, llm.max_concurrent_batches);
    for (std::size_t begin = 0; begin < chunks.size(); begin += wave) {
        std::size_t end = std::min(chunks.size(), begin + wave);
        std::vector<std::future<std::string>> inflight;
        for (std::size_t i = begin; i < end; ++i) {
            char slot[32];
            std::snprintf(slot, sizeof slot, "/chunk-%04zu", i);
            std::string slot_name = "themes/" + run_label + slot;
            LlmRequest request = render_theme_prompt(chunks[i], llm);
            inflight.push_back(std::async(std::launch::async,
                                          [&transport, request, slot_name]() {
                                              return transport.complete(request, slot_name);
                                          }));
        }
        for (std::size_t i = begin; i < end; ++i) {
            raw_outputs[i] = inflight[i - begin].get();
        }
    }

    for (std::size_t i = 0; i < chunks.size(); ++i) {
        std::vector<std::string> chunk_eids;
        for (const JustificationEntry& entry : chunks[i]) chunk_eids.push_back(entry.eid);
        ThemeParse parse = parse_themes(raw_outputs[i], chunk_eids);
        for (Theme& theme : parse.themes) {
            theme.prominence_rank = static_cast<int>(result.themes.size()) + 1;
            result.themes.push_back(std::move(theme));
        }
        result.leftover_eids.insert(result.leftover_eids.end(), parse.leftover_eids.begin(),
                                    parse.leftover_eids.end());
        for (std::string& warning : parse.warnings) {
            result.warnings.push_back("chunk " + std::to_string(i) + ": " + std::move(warning));
        }
    }
    return result;
}

namespace {

json theme_to_json(const Theme& theme) {
    return json{{"rank", theme.prominence_rank},
                {"name", theme.name},
                {"explanation", theme.explanation},
                {"prominence_reason", theme.prominence_reason},
                {"members", theme.members}};
}

} // namespace

std::string theme_report_json(const ThemeRunResult& result, int extremes_k) {
    ExtremesSelection extremes = select_extremes(result.themes, extremes_k);
    json top = json::array();
    json bottom = json::array();
    for (const Theme& theme : extremes.top) top.push_back(theme.name);
    for (const Theme& theme : extremes.bottom) bottom.push_back(theme.name);

    json doc{{"run", result.run_label},
             {"chunks", result.chunks},
             {"themes", json::array()},
             {"leftover", result.leftover_eids},
             {"warnings", result.warnings},
             {"extremes",
              json{{"k", extremes_k}, {"top", top}, {"bottom", bottom},
                   {"overlap", extremes.overlap}}}};
    for (const Theme& theme : result.themes) doc["themes"].push_back(theme_to_json(theme));
    return doc.dump(2) + "\n";
}

std::string theme_report_text(const ThemeRunResult& result, int extremes_k) {
    std::ostringstream out;
    out << "Theme report for " << result.run_label << " (" << result.themes.size()
        << " themes from " << result.chunks << " chunk"
        << (result.chunks == 1 ? "" : "s") << ")\n\n";
    for (const Theme& theme : result.themes) {
        out << theme.prominence_rank << ". " << theme.name << "\n";
        out << "   Explanation: " << theme.explanation << "\n";
        out << "   Prominence: " << theme.prominence_reason << "\n";
        out << "   Members (" << theme.members.size() << "):";
        for (const std::string& eid : theme.members) out << " " << eid;
        out << "\n\n";
    }

    ExtremesSelection extremes = select_extremes(result.themes, extremes_k);
    out << "Top " << extremes_k << ":";
    for (const Theme& theme : extremes.top) out << " [" << theme.name << "]";
    out << "\nBottom " << extremes_k << ":";
    for (const Theme& theme : extremes.bottom) out << " [" << theme.name << "]";
    out << "\n";
    if (extremes.overlap) {
        out << "Note: fewer than " << 2 * extremes_k
            << " themes, so the top and bottom selections overlap.\n";
    }
    if (!result.leftover_eids.empty()) {
        out << "Unassigned eids (" << result.leftover_eids.size() << "):";
        for (const std::string& eid : result.leftover_eids) out << " " << eid;
        out << "\n";
    }
    if (!result.warnings.empty()) {
        out << "Warnings (" << result.warnings.size() << "):\n";
        for (const std::string& warning : result.warnings) out << "  - " << warning << "\n";
    }
    return out.str();
}

ThemeRunResult theme_result_from_json(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw PipelineError(ErrorCode::IoError, "theme report is not valid JSON");
    }
    ThemeRunResult result;
    result.run_label = doc.value("run", "");
    result.chunks = doc.value("chunks", std::size_t{0});
    for (const json& entry : doc.value("themes", json::array())) {
        Theme theme;
        theme.prominence_rank = entry.value("rank", 0);
        theme.name = entry.value("name", "");
        theme.explanation = entry.value("explanation", "");
        theme.prominence_reason = entry.value("prominence_reason", "");
        for (const json& member : entry.value("members", json::array())) {
            theme.members.push_back(member.get<std::string>());
        }
        result.themes.push_back(std::move(theme));
    }
    for (const json& eid : doc.value("leftover", json::array())) {
        result.leftover_eids.push_back(eid.get<std::string>());
    }
    for (const json& warning : doc.value("warnings", json::array())) {
        result.warnings.push_back(warning.get<std::string>());
    }
    return result;
}

std::string theme_comparison_csv(const std::vector<ThemeRunResult>& runs) {
    std::string csv = "run,rank,name,member_count,members\n";
    for (const ThemeRunResult& run : runs) {
        for (const Theme& theme : run.themes) {
            std::string members;
            for (const std::string& eid : theme.members) {
                if (!members.empty()) members += ' ';
                members += eid;
            }
            csv += util::csv_field(run.run_label) + "," +
                   std::to_string(theme.prominence_rank) + "," + util::csv_field(theme.name) +
                   "," + std::to_string(theme.members.size()) + "," + util::csv_field(members) +
                   "\n";
        }
    }
    return csv;
}

} // namespace scoper
