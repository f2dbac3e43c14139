#include "scoper/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "scoper/corpus.hpp"
#include "scoper/errors.hpp"
#include "scoper/ingest.hpp"
#include "scoper/query.hpp"
#include "scoper/screen.hpp"
#include "scoper/themes.hpp"
#include "scoper/util.hpp"
#include "scoper/validate.hpp"
#include "scoper/vote.hpp"

namespace scoper::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void require(bool present, const std::string& what, const std::string& produce_hint) {
    if (!present) {
        throw PipelineError(ErrorCode::MissingUpstream,
                            what + " not found; run `" + produce_hint + "` first");
    }
}

// Run labels follow "run-N" with 1 <= N <= configured run count.
void check_run_label(const std::string& run_label, int runs) {
    std::string prefix = "run-";
    bool ok = run_label.size() > prefix.size() && run_label.rfind(prefix, 0) == 0;
    int n = 0;
    if (ok) {
        for (std::size_t i = prefix.size(); i < run_label.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(run_label[i]))) {
                ok = false;
                break;
            }
        }
        if (ok) n = std::stoi(run_label.substr(prefix.size()));
    }
    if (!ok || n < 1 || n > runs) {
        throw PipelineError(ErrorCode::InvalidConfig,
                            "run label must be run-1 .. run-" + std::to_string(runs) + ", got " +
                                run_label);
    }
}

std::map<std::string, Intersection> intersections_by_eid(
    const std::vector<PaperRecord>& corpus) {
    std::map<std::string, Intersection> map;
    for (const PaperRecord& record : corpus) map.emplace(record.eid, record.intersection);
    return map;
}

std::map<Intersection, std::size_t> counts_by_intersection(
    const std::vector<PaperRecord>& corpus) {
    std::map<Intersection, std::size_t> counts;
    for (const PaperRecord& record : corpus) ++counts[record.intersection];
    return counts;
}

} // namespace

StageOutcome fetch(RunStore& store, const Config& config, SearchTransport& transport) {
    if (store.stage_done("fetch") && fs::exists(store.raw_corpus_path())) {
        return {"fetch: already complete (" +
                    std::to_string(util::read_jsonl(store.raw_corpus_path()).size()) +
                    " records)",
                "", true};
    }

    std::vector<PaperRecord> all;
    json per_query = json::object();
    for (const KeywordSet& set : config.keyword_sets) {
        const InclusionQuestion* question = config.find_question(set.tag);
        if (question == nullptr) {
            throw PipelineError(ErrorCode::UnknownTag, "keyword set for unknown tag " + set.tag);
        }
        // Keywords from one field are searched in the other field's venues.
        FieldOrigin venue_side =
            question->origin == FieldOrigin::SE ? FieldOrigin::PSY : FieldOrigin::SE;
        std::string query = build_query(set, config.venues_for(venue_side));
        FetchStats stats;
        std::vector<PaperRecord> records =
            fetch_all(transport, query, set.tag, config.cap_for_tag(set.tag),
                      config.search.page_size, config.search.max_inflight, &stats);
        per_query[set.tag] = json{{"query_hash", util::short_digest(query)},
                                  {"collected", records.size()},
                                  {"pages", stats.pages_fetched},
                                  {"dropped_missing_title", stats.dropped_missing_title}};
        all.insert(all.end(), records.begin(), records.end());
    }

    save_corpus(store.raw_corpus_path(), all);
    std::map<Intersection, std::size_t> collected = counts_by_intersection(all);
    json collected_json = json::object();
    for (const auto& [intersection, count] : collected) {
        collected_json[to_string(intersection)] = count;
    }
    store.manifest()["counts"]["collected"] = collected_json;
    store.manifest()["counts"]["fetch_queries"] = per_query;
    store.mark_stage_done("fetch");
    return {"fetch: " + std::to_string(all.size()) + " records from " +
                std::to_string(config.keyword_sets.size()) + " queries"};
}

StageOutcome dedup(RunStore& store) {
    if (store.stage_done("dedup") && fs::exists(store.corpus_path())) {
        return {"dedup: already complete (" +
                    std::to_string(util::read_jsonl(store.corpus_path()).size()) +
                    " unique papers)",
                "", true};
    }
    require(fs::exists(store.raw_corpus_path()), "raw corpus", "fetch");

    std::vector<PaperRecord> raw = load_corpus(store.raw_corpus_path());
    DedupResult result = deduplicate(raw);
    save_corpus(store.corpus_path(), result.records);
    std::vector<json> conflict_lines;
    for (const MetadataConflict& conflict : result.conflicts) {
        conflict_lines.push_back(json{{"eid", conflict.eid}, {"detail", conflict.detail}});
    }
    util::write_jsonl_atomic(store.conflicts_path(), conflict_lines);

    json dedup_json = json::object();
    for (const auto& [intersection, count] : counts_by_intersection(result.records)) {
        dedup_json[to_string(intersection)] = count;
    }
    store.manifest()["counts"]["deduplicated"] = dedup_json;
    store.manifest()["counts"]["duplicates_removed"] = result.duplicates_removed;
    store.manifest()["counts"]["metadata_conflicts"] = result.conflicts.size();
    store.mark_stage_done("dedup");
    return {"dedup: " + std::to_string(raw.size()) + " -> " +
            std::to_string(result.records.size()) + " unique papers (" +
            std::to_string(result.duplicates_removed) + " duplicates, " +
            std::to_string(result.conflicts.size()) + " metadata conflicts)"};
}

StageOutcome screen(RunStore& store, const Config& config, LlmTransport& transport,
                    const std::string& run_label) {
    check_run_label(run_label, config.llm.runs);
    std::string stage = "screen/" + run_label;
    if (store.stage_done(stage) && fs::exists(store.run_log_path(run_label))) {
        return {"screen " + run_label + ": already complete", "", true};
    }
    require(fs::exists(store.corpus_path()), "deduplicated corpus", "dedup");

    std::vector<PaperRecord> corpus = load_corpus(store.corpus_path());
    ScreenRunResult result =
        screen_run(corpus, config, run_label, transport, store.run_log_path(run_label));
    store.mark_stage_done(stage);
    return {"screen " + run_label + ": " + std::to_string(result.batches_total) + " batches (" +
            std::to_string(result.batches_from_log) + " already in the log), " +
            std::to_string(result.verdicts) + " verdicts"};
}

StageOutcome aggregate(RunStore& store, const Config& config) {
    if (store.stage_done("aggregate") && fs::exists(store.aggregated_path())) {
        return {"aggregate: already complete", "", true};
    }
    require(fs::exists(store.corpus_path()), "deduplicated corpus", "dedup");

    std::vector<PaperRecord> corpus = load_corpus(store.corpus_path());
    std::vector<std::string> corpus_eids;
    for (const PaperRecord& record : corpus) corpus_eids.push_back(record.eid);

    std::vector<std::vector<ScreeningVerdict>> runs;
    for (int n = 1; n <= config.llm.runs; ++n) {
        std::string run_label = "run-" + std::to_string(n);
        require(fs::exists(store.run_log_path(run_label)), "run log for " + run_label,
                "screen --run " + run_label);
        std::vector<ScreeningVerdict> verdicts = load_run_verdicts(store.run_log_path(run_label));
        if (verdicts.size() != corpus.size()) {
            throw PipelineError(ErrorCode::MissingUpstream,
                                run_label + " screened " + std::to_string(verdicts.size()) +
                                    " of " + std::to_string(corpus.size()) +
                                    " papers; run `screen --run " + run_label + "` again");
        }
        runs.push_back(std::move(verdicts));
    }

    std::vector<AggregatedVerdict> aggregated = aggregate_runs(runs, corpus_eids);
    save_aggregated(store.aggregated_path(), aggregated);

    std::map<Intersection, ConsistencyStats> consistency =
        self_consistency(runs, intersections_by_eid(corpus));
    json consistency_json = json::object();
    for (const auto& [intersection, stats] : consistency) {
        consistency_json[to_string(intersection)] =
            json{{"population", stats.population},
                 {"unanimous", stats.unanimous_count},
                 {"perfect_agreement_rate", stats.perfect_agreement_rate}};
    }
    store.manifest()["counts"]["consistency"] = consistency_json;

    std::size_t relevant = 0;
    for (const AggregatedVerdict& verdict : aggregated) {
        if (verdict.relevance == Relevance::relevant) ++relevant;
    }
    store.mark_stage_done("aggregate");
    return {"aggregate: " + std::to_string(aggregated.size()) + " verdicts (" +
            std::to_string(relevant) + " relevant) from " + std::to_string(config.llm.runs) +
            " runs"};
}

StageOutcome themes(RunStore& store, const Config& config, LlmTransport& transport,
                    const std::string& run_label) {
    check_run_label(run_label, config.llm.runs);
    std::string stage = "themes/" + run_label;
    fs::path json_path = store.themes_dir() / (run_label + ".json");
    if (store.stage_done(stage) && fs::exists(json_path)) {
        return {"themes " + run_label + ": already complete", "", true};
    }
    require(fs::exists(store.aggregated_path()), "aggregated verdicts", "aggregate");

    std::vector<AggregatedVerdict> aggregated = load_aggregated(store.aggregated_path());
    ThemeRunResult result = run_theme_stage(aggregated, config.llm, transport, run_label);
    fs::create_directories(store.themes_dir());
    util::write_file_atomic(json_path, theme_report_json(result, 3));
    util::write_file_atomic(store.themes_dir() / (run_label + ".txt"),
                            theme_report_text(result, 3));

    std::vector<ThemeRunResult> all_runs;
    for (int n = 1; n <= config.llm.runs; ++n) {
        fs::path path = store.themes_dir() / ("run-" + std::to_string(n) + ".json");
        if (fs::exists(path)) {
            all_runs.push_back(theme_result_from_json(util::read_file(path)));
        }
    }
    util::write_file_atomic(store.themes_dir() / "comparison.csv",
                            theme_comparison_csv(all_runs));

    store.mark_stage_done(stage);
    std::size_t member_count = 0;
    for (const Theme& theme : result.themes) member_count += theme.members.size();
    return {"themes " + run_label + ": " + std::to_string(result.themes.size()) +
            " themes over " + std::to_string(member_count) + " papers (" +
            std::to_string(result.chunks) + " chunks)"};
}

StageOutcome sample(RunStore& store, const Config& config,
                    std::optional<std::uint64_t> seed_override) {
    if (store.stage_done("sample") && fs::exists(store.sample_path()) && !seed_override) {
        return {"sample: already complete", "", true};
    }
    require(fs::exists(store.corpus_path()), "deduplicated corpus", "dedup");
    require(fs::exists(store.aggregated_path()), "aggregated verdicts", "aggregate");

    std::vector<PaperRecord> corpus = load_corpus(store.corpus_path());
    std::vector<AggregatedVerdict> aggregated = load_aggregated(store.aggregated_path());
    std::uint64_t seed = seed_override.value_or(store.seed());
    ValidationSample drawn = draw_stratified_sample(
        corpus, aggregated, static_cast<std::size_t>(config.sampling.size), seed);
    util::write_file_atomic(store.sample_path(), sample_to_json(drawn));
    store.manifest()["sample_seed"] = seed;
    store.mark_stage_done("sample");

    double moe = margin_of_error(corpus.size(), drawn.members.size(), 0.5, config.z_value());
    char moe_text[64];
    std::snprintf(moe_text, sizeof moe_text, "%.2f%%", moe * 100.0);
    return {"sample: " + std::to_string(drawn.members.size()) + " papers (id " +
            drawn.sample_id + ", seed " + std::to_string(seed) + ", margin of error " +
            moe_text + " at p=0.5)"};
}

StageOutcome label(RunStore& store, const std::string& rater_id, std::istream& in,
                   std::ostream& out) {
    require(fs::exists(store.sample_path()), "validation sample", "sample");
    require(fs::exists(store.corpus_path()), "deduplicated corpus", "dedup");
    if (rater_id.empty()) {
        throw PipelineError(ErrorCode::InvalidConfig, "--rater must not be empty");
    }

    ValidationSample drawn = sample_from_json(util::read_file(store.sample_path()));
    std::map<std::string, std::string> titles;
    for (const PaperRecord& record : load_corpus(store.corpus_path())) {
        titles.emplace(record.eid, record.title);
    }
    LabelSessionResult result =
        label_session(drawn, titles, rater_id, store.label_log_path(), in, out);
    if (result.completed) store.mark_stage_done("label/" + rater_id);
    return {"label " + rater_id + ": " + std::to_string(result.presented) + " presented, " +
            std::to_string(result.recorded) + " recorded" +
            (result.completed ? ", sample fully labeled" : "")};
}

StageOutcome consolidate(RunStore& store, const Config& config,
                         std::optional<fs::path> decisions_file) {
    require(fs::exists(store.sample_path()), "validation sample", "sample");
    require(fs::exists(store.label_log_path()), "label log", "label --rater <id>");
    require(fs::exists(store.aggregated_path()), "aggregated verdicts", "aggregate");

    ValidationSample drawn = sample_from_json(util::read_file(store.sample_path()));
    std::vector<HumanLabel> labels = read_label_log(store.label_log_path());
    std::vector<AggregatedVerdict> aggregated = load_aggregated(store.aggregated_path());

    std::map<std::string, Relevance> machine;
    std::set<std::string> member_set(drawn.members.begin(), drawn.members.end());
    for (const AggregatedVerdict& verdict : aggregated) {
        if (member_set.count(verdict.eid)) machine.emplace(verdict.eid, verdict.relevance);
    }

    std::map<std::string, Relevance> human = human_consensus(labels, drawn.members);
    DisagreementResult disagreements = machine_human_disagreement(machine, human);
    double unanimous_rate = human_agreement(labels, drawn.members);
    auto unanimous_count = static_cast<std::size_t>(
        std::llround(unanimous_rate * static_cast<double>(drawn.members.size())));

    json disagreements_doc{{"count", disagreements.eids.size()},
                           {"rate", disagreements.rate},
                           {"eids", disagreements.eids}};
    util::write_file_atomic(store.disagreements_path(), disagreements_doc.dump(2) + "\n");

    fs::path sheet = decisions_file.value_or(store.decisions_path());
    if (!fs::exists(sheet) && !disagreements.eids.empty()) {
        std::vector<ExpertDecision> worksheet;
        for (const std::string& eid : disagreements.eids) {
            std::string note = "machine=" + to_string(machine.at(eid)) +
                               " human=" + to_string(human.at(eid));
            worksheet.push_back({eid, "", "", note});
        }
        util::write_file_atomic(sheet, render_decisions_csv(worksheet));
        return {"consolidate: " + std::to_string(disagreements.eids.size()) +
                " disagreements (rate " + percent_string(disagreements.rate) +
                "%); fill in resolutions in " + sheet.string() + " and re-run"};
    }

    std::vector<ExpertDecision> decisions;
    if (fs::exists(sheet)) decisions = parse_decisions_csv(util::read_file(sheet));
    ConsolidationOutcome outcome =
        scoper::consolidate(disagreements.eids, decisions, drawn.members.size(),
                            unanimous_count);

    json consolidation_doc{
        {"resolved", outcome.resolved},
        {"remaining", outcome.remaining},
        {"decisions_applied", decisions.size()},
        {"report",
         {{"sample_size", outcome.report.sample_size},
          {"human_unanimous_count", outcome.report.human_unanimous_count},
          {"human_unanimous_rate", outcome.report.human_unanimous_rate},
          {"disagreements_before", outcome.report.disagreements_before},
          {"disagreements_after", outcome.report.disagreements_after},
          {"disagreement_rate", outcome.report.disagreement_rate}}}};
    util::write_file_atomic(store.consolidation_path(), consolidation_doc.dump(2) + "\n");
    store.mark_stage_done("consolidate");
    return {"consolidate: " + std::to_string(outcome.report.disagreements_before) + " -> " +
            std::to_string(outcome.report.disagreements_after) + " disagreements"};
}

StageOutcome agree(RunStore& store) {
    require(fs::exists(store.consolidation_path()), "consolidation outcome", "consolidate");

    json doc = json::parse(util::read_file(store.consolidation_path()), nullptr, false);
    if (doc.is_discarded() || !doc.contains("report")) {
        throw PipelineError(ErrorCode::IoError, "corrupt consolidation artifact");
    }
    const json& r = doc["report"];
    AgreementReport report;
    report.sample_size = r.value("sample_size", std::size_t{0});
    report.human_unanimous_count = r.value("human_unanimous_count", std::size_t{0});
    report.human_unanimous_rate = r.value("human_unanimous_rate", 0.0);
    report.disagreements_before = r.value("disagreements_before", std::size_t{0});
    report.disagreements_after = r.value("disagreements_after", std::size_t{0});
    report.disagreement_rate = r.value("disagreement_rate", 0.0);

    util::write_file_atomic(store.agreement_json_path(), agreement_report_json(report));
    std::string text = agreement_report_text(report);
    util::write_file_atomic(store.agreement_text_path(), text);
    store.mark_stage_done("agree");
    return {"agree: disagreement rate " + percent_string(report.disagreement_rate) + "% (" +
                std::to_string(report.disagreements_after) + " of " +
                std::to_string(report.sample_size) + ")",
            text};
}

RunSummary build_summary(const RunStore& store, const Config& config) {
    RunSummary summary;
    summary.model = config.llm.model;
    summary.runs = config.llm.runs;
    summary.config_digest = store.config_digest().substr(0, 12);

    const json& counts = store.manifest().contains("counts") ? store.manifest()["counts"]
                                                             : json::object();
    for (Intersection intersection : {Intersection::SE_on_PSY, Intersection::PSY_on_SE}) {
        StageCounts& flow = summary.flow.per_intersection[intersection];
        std::string key = to_string(intersection);
        if (counts.contains("collected")) {
            flow.collected = counts["collected"].value(key, std::size_t{0});
        }
        if (counts.contains("deduplicated")) {
            flow.deduplicated = counts["deduplicated"].value(key, std::size_t{0});
        }
    }

    bool any_run_log = false;
    for (int n = 1; n <= config.llm.runs; ++n) {
        if (fs::exists(store.run_log_path("run-" + std::to_string(n)))) any_run_log = true;
    }
    if (any_run_log) {
        for (auto& [intersection, flow] : summary.flow.per_intersection) {
            flow.batched = flow.deduplicated;
        }
    }

    if (fs::exists(store.corpus_path()) && fs::exists(store.aggregated_path())) {
        std::vector<PaperRecord> corpus = load_corpus(store.corpus_path());
        std::vector<AggregatedVerdict> aggregated = load_aggregated(store.aggregated_path());
        std::map<std::string, Intersection> homes = intersections_by_eid(corpus);
        for (const AggregatedVerdict& verdict : aggregated) {
            auto it = homes.find(verdict.eid);
            if (it == homes.end()) continue;
            StageCounts& flow = summary.flow.per_intersection[it->second];
            ++flow.screened;
            if (verdict.relevance == Relevance::relevant) ++flow.relevant;
        }
        summary.relevance =
            relevance_rates(aggregated, homes, counts_by_intersection(corpus));
    }

    if (counts.contains("consistency")) {
        for (const auto& [key, value] : counts["consistency"].items()) {
            ConsistencyStats stats;
            stats.population = value.value("population", std::size_t{0});
            stats.unanimous_count = value.value("unanimous", std::size_t{0});
            stats.perfect_agreement_rate = value.value("perfect_agreement_rate", 0.0);
            summary.consistency[intersection_from_string(key)] = stats;
        }
    }

    if (fs::exists(store.agreement_json_path())) {
        json doc = json::parse(util::read_file(store.agreement_json_path()), nullptr, false);
        if (!doc.is_discarded() && doc.is_object()) {
            AgreementReport report;
            report.sample_size = doc.value("sample_size", std::size_t{0});
            report.human_unanimous_count = doc.value("human_unanimous_count", std::size_t{0});
            report.human_unanimous_rate = doc.value("human_unanimous_rate", 0.0);
            report.disagreements_before = doc.value("disagreements_before", std::size_t{0});
            report.disagreements_after = doc.value("disagreements_after", std::size_t{0});
            report.disagreement_rate = doc.value("disagreement_rate", 0.0);
            summary.agreement = report;
        }
    }
    return summary;
}

StageOutcome report(RunStore& store, const Config& config) {
    RunSummary summary = build_summary(store, config);

    std::map<Intersection, std::map<std::string, double>> distribution;
    std::map<Intersection, RelevanceRate> rates = summary.relevance;
    if (fs::exists(store.corpus_path()) && fs::exists(store.aggregated_path())) {
        std::vector<PaperRecord> corpus = load_corpus(store.corpus_path());
        std::vector<AggregatedVerdict> aggregated = load_aggregated(store.aggregated_path());
        std::vector<std::string> screening_tags;
        for (const InclusionQuestion& question : config.screening_questions()) {
            screening_tags.push_back(question.tag);
        }
        distribution = tag_distribution(aggregated, intersections_by_eid(corpus),
                                        counts_by_intersection(corpus), screening_tags);
    }

    fs::create_directories(store.report_dir());
    std::string text = summary_text(summary);
    util::write_file_atomic(store.report_dir() / "summary.json", summary_json(summary));
    util::write_file_atomic(store.report_dir() / "summary.txt", text);
    util::write_file_atomic(store.report_dir() / "tags.csv", tags_csv(distribution));
    util::write_file_atomic(store.report_dir() / "rates.csv", rates_csv(rates));
    util::write_file_atomic(store.report_dir() / "plotdata.csv",
                            plotdata_csv(distribution, rates));
    store.mark_stage_done("report");
    return {"report: written to " + store.report_dir().string(), text};
}

} // namespace scoper::pipeline
