// Generates the deterministic mock fixtures under data/mock: recorded search
// pages, recorded LLM responses for 3 screening runs and 3 theme runs, blind
// rater answer scripts, and a filled consolidation decision sheet. The
// fixture universe is 40 papers; every recorded response is derived through
// the same library calls the pipeline makes, so digests and slot names always
// line up.
//
// Layout decisions encoded here (tests depend on them):
//   - 24 papers answer the SE-side query (eids 0001..0024), 20 the PSY-side
//     query (0021..0040); the 4-paper overlap exercises dedup and the
//     mixed-provenance tie rule, and eid 0021 gets a longer title variant to
//     exercise conflict logging.
//   - relevance votes follow i mod 8 (see votes_for), giving 20 relevant
//     papers (12 SE-on-PSY, 8 PSY-on-SE), unanimous and 2-1 cases both ways.
//   - eid 0033 gets disjoint tags across runs (tag-majority union fallback);
//     eid 0023 is not-relevant but claims a tag in run-3 (normalization).
//   - run-2/batch-0001 is wrapped in markdown fences (repair path).
//   - raters 2+3 flip the machine verdict at sample positions 2 and 7 (two
//     consensus disagreements); rater 2 alone flips at position 4 (broken
//     unanimity, no disagreement). The decision sheet resolves the first
//     disagreement (agree_machine) and upholds the second.

#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scoper/config.hpp"
#include "scoper/corpus.hpp"
#include "scoper/errors.hpp"
#include "scoper/pipeline.hpp"
#include "scoper/query.hpp"
#include "scoper/screen.hpp"
#include "scoper/store.hpp"
#include "scoper/themes.hpp"
#include "scoper/transport.hpp"
#include "scoper/util.hpp"
#include "scoper/validate.hpp"
#include "scoper/vote.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace scoper;

namespace {

constexpr int kPaperCount = 40;
constexpr std::uint64_t kSeed = 42;

std::string eid_of(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", i);
    return std::string("2-s2.0-") + buf;
}

int index_of(const std::string& eid) { return std::stoi(eid.substr(eid.size() - 4)); }

std::string title_of(int i) {
    static const std::vector<std::string> subjects{"Think-aloud protocols", "Mental models",
                                                   "Affective states", "Self-explanations",
                                                   "Verbal reports"};
    static const std::vector<std::string> contexts{
        "during code review",      "in pair programming",      "in requirements workshops",
        "during debugging",        "in agile retrospectives",  "under deadline pressure"};
    static const std::vector<std::string> frames{"an exploratory study", "a replication",
                                                 "evidence from industry",
                                                 "a grounded-theory analysis"};
    return subjects[(i - 1) % 5] + " " + contexts[(i - 1) % 6] + ": " + frames[(i - 1) % 4];
}

// Per-run relevance votes, runs 1..3. Period 8 covers unanimous and split
// outcomes in both directions.
std::array<bool, 3> votes_for(int i) {
    switch (i % 8) {
        case 1: return {true, true, true};
        case 2: return {true, true, false};
        case 3: return {false, false, false};
        case 4: return {false, false, true};
        case 5: return {true, true, true};
        case 6: return {false, true, true};
        case 7: return {false, false, false};
        default: return {true, false, false}; // i % 8 == 0
    }
}

bool majority_relevant(int i) {
    auto votes = votes_for(i);
    return static_cast<int>(votes[0]) + static_cast<int>(votes[1]) +
               static_cast<int>(votes[2]) >= 2;
}

std::vector<std::string> tags_for(int i, int run) {
    if (i == 33) {
        // Disjoint across runs: no tag reaches a majority, union fallback.
        if (run == 1) return {"#SE_think"};
        if (run == 2) return {"#SE_express"};
        return {"#PSY_mind"};
    }
    std::vector<std::string> tags;
    switch (i % 3) {
        case 0: tags = {"#SE_think"}; break;
        case 1: tags = {"#SE_think", "#PSY_mind"}; break;
        default: tags = {"#PSY_feel"}; break;
    }
    if (run == 2 && i % 5 == 0) tags.push_back("#SE_express");
    if (run == 3 && i % 7 == 0) {
        std::erase(tags, "#PSY_mind");
        if (tags.empty()) tags = {"#SE_think"};
    }
    return tags;
}

std::string justification_of(int i, bool relevant) {
    if (!relevant) return "Title gives no link between engineering work and cognition.";
    switch (i % 3) {
        case 0: return "Recalls how engineers reason step by step while coding.";
        case 1: return "Studies how spoken reflections reveal team decision habits.";
        default: return "Considers feelings that shape collaboration under pressure.";
    }
}

void write_search_fixtures(const Config& config, const fs::path& search_dir) {
    struct QuerySpec {
        std::string tag;
        int first;
        int last;
        FieldOrigin venue_side;
    };
    std::vector<QuerySpec> specs{{"#SE_think", 1, 24, FieldOrigin::PSY},
                                 {"#PSY_mind", 21, 40, FieldOrigin::SE}};

    for (const QuerySpec& spec : specs) {
        const KeywordSet* set = nullptr;
        for (const KeywordSet& candidate : config.keyword_sets) {
            if (candidate.tag == spec.tag) set = &candidate;
        }
        if (set == nullptr) {
            throw PipelineError(ErrorCode::UnknownTag, "mock config lacks " + spec.tag);
        }
        const std::vector<std::string>& venues = config.venues_for(spec.venue_side).venues;
        std::string query = build_query(*set, config.venues_for(spec.venue_side));
        int total = spec.last - spec.first + 1;
        for (int start = 0; start < total; start += config.search.page_size) {
            json entries = json::array();
            int end = std::min(total, start + config.search.page_size);
            for (int offset = start; offset < end; ++offset) {
                int i = spec.first + offset;
                std::string title = title_of(i);
                // The PSY-side copy of eid 0021 carries a longer title so
                // dedup has a conflict to log (longer title wins).
                if (spec.tag == "#PSY_mind" && i == 21) title += " (extended version)";
                entries.push_back(
                    json{{"eid", eid_of(i)},
                         {"dc:title", title},
                         {"prism:publicationName",
                          venues[static_cast<std::size_t>(i) % venues.size()]},
                         {"prism:coverDate", std::to_string(2010 + i % 15) + "-03-01"}});
            }
            json body{{"search-results",
                       {{"opensearch:totalResults", std::to_string(total)},
                        {"entry", entries}}}};
            std::string key = search_cache_key(config.search.endpoint, query, start);
            util::write_file_atomic(search_dir / key, body.dump());
        }
    }
}

// The deduplicated corpus the pipeline will compute from the search
// fixtures, derived by actually running fetch + dedup against them.
std::vector<PaperRecord> corpus_from_fixtures(const Config& config, const fs::path& replay_dir,
                                              const fs::path& scratch) {
    fs::remove_all(scratch);
    RunStore store = RunStore::create(scratch, config, kSeed);
    ReplaySearchTransport transport(replay_dir / "search", config.search.endpoint);
    pipeline::fetch(store, config, transport);
    pipeline::dedup(store);
    std::vector<PaperRecord> corpus = load_corpus(store.corpus_path());
    fs::remove_all(scratch);
    return corpus;
}

std::vector<std::vector<ScreeningVerdict>> write_screen_fixtures(
    const Config& config, const std::vector<PaperRecord>& corpus, const fs::path& llm_dir) {
    std::vector<BatchPaper> papers;
    for (const PaperRecord& record : corpus) papers.push_back({record.eid, record.title});
    std::vector<Batch> batches = make_batches(papers, config.llm.batch_size);
    std::vector<InclusionQuestion> questions = config.screening_questions();

    std::vector<std::vector<ScreeningVerdict>> runs;
    for (int run = 1; run <= config.llm.runs; ++run) {
        std::string run_label = "run-" + std::to_string(run);
        std::vector<ScreeningVerdict> run_verdicts;
        for (const Batch& batch : batches) {
            json results = json::array();
            for (const BatchPaper& paper : batch.papers) {
                int i = index_of(paper.eid);
                bool relevant = votes_for(i)[run - 1];
                json entry{{"eid", paper.eid},
                           {"relevance", relevant ? "relevant" : "not relevant"},
                           {"justification", justification_of(i, relevant)},
                           {"tags", relevant ? json(tags_for(i, run)) : json::array()}};
                // One rule violation for the parser to normalize away.
                if (i == 23 && run == 3) entry["tags"] = json::array({"#SE_think"});
                results.push_back(entry);

                ScreeningVerdict verdict;
                verdict.eid = paper.eid;
                verdict.run_label = run_label;
                verdict.relevance = relevant ? Relevance::relevant : Relevance::not_relevant;
                verdict.justification = justification_of(i, relevant);
                if (relevant) {
                    verdict.tags = tags_for(i, run);
                    std::sort(verdict.tags.begin(), verdict.tags.end());
                }
                run_verdicts.push_back(std::move(verdict));
            }
            std::string response = json{{"results", results}}.dump();
            if (run == 2 && batch.batch_id == 1) {
                response = "```json\n" + response + "\n```";
            }
            char slot[16];
            std::snprintf(slot, sizeof slot, "batch-%04d", batch.batch_id);
            LlmRequest request = render_screening_prompt(batch, questions, config.llm);
            write_llm_envelope(llm_dir / run_label / (std::string(slot) + ".json"), request,
                               response);
        }
        runs.push_back(std::move(run_verdicts));
    }
    return runs;
}

void write_theme_fixtures(const Config& config,
                          const std::vector<AggregatedVerdict>& aggregated,
                          const fs::path& llm_dir) {
    std::vector<JustificationEntry> entries;
    for (const AggregatedVerdict& verdict : aggregated) {
        if (verdict.relevance == Relevance::relevant) {
            entries.push_back({verdict.eid, verdict.justification});
        }
    }
    std::vector<std::vector<JustificationEntry>> chunks =
        chunk_justifications(entries, config.llm.theme_chunk);

    struct ThemeText {
        const char* name;
        const char* explanation;
        const char* reason;
    };
    static const std::vector<ThemeText> themes{
        {"Stepwise reasoning in engineering work",
         "Papers where practitioners walk through their own reasoning while coding or "
         "reviewing.",
         "Largest and most recurrent cluster across the justifications."},
        {"Talking through decisions",
         "Papers using spoken or written reflections to expose how teams decide.",
         "Frequent, and central to the verbalization methods the review maps."},
        {"Affect in collaboration",
         "Papers on feelings and moods shaping collaborative engineering work.",
         "Smallest cluster; appears mostly in retrospective settings."}};

    for (int run = 1; run <= config.llm.runs; ++run) {
        std::string run_label = "run-" + std::to_string(run);
        for (std::size_t chunk_id = 0; chunk_id < chunks.size(); ++chunk_id) {
            std::vector<std::vector<std::string>> members(themes.size());
            for (const JustificationEntry& entry : chunks[chunk_id]) {
                int i = index_of(entry.eid);
                // run-1 leaves eid 0038 unassigned (leftover reporting).
                if (run == 1 && i == 38) continue;
                members[static_cast<std::size_t>(i) % 3].push_back(entry.eid);
            }
            json theme_array = json::array();
            for (std::size_t offset = 0; offset < themes.size(); ++offset) {
                // Each run ranks the same clusters differently.
                std::size_t t = (offset + static_cast<std::size_t>(run) - 1) % themes.size();
                json theme{{"name", themes[t].name},
                           {"explanation", themes[t].explanation},
                           {"prominence_reason", themes[t].reason},
                           {"members", members[t]}};
                theme_array.push_back(theme);
            }
            std::string response = json{{"themes", theme_array}}.dump();
            char slot[16];
            std::snprintf(slot, sizeof slot, "chunk-%04zu", chunk_id);
            LlmRequest request = render_theme_prompt(chunks[chunk_id], config.llm);
            write_llm_envelope(llm_dir / "themes" / run_label / (std::string(slot) + ".json"),
                               request, response);
        }
    }
}

void write_validation_fixtures(const Config& config, const std::vector<PaperRecord>& corpus,
                               const std::vector<AggregatedVerdict>& aggregated,
                               const fs::path& out_dir) {
    ValidationSample sample = draw_stratified_sample(
        corpus, aggregated, static_cast<std::size_t>(config.sampling.size), kSeed);

    std::map<std::string, Relevance> machine;
    for (const AggregatedVerdict& verdict : aggregated) {
        machine.emplace(verdict.eid, verdict.relevance);
    }

    // Positions where raters depart from the machine verdict.
    std::set<std::size_t> both_flip{2, 7};
    std::set<std::size_t> rater2_only{4};

    for (int rater = 1; rater <= 3; ++rater) {
        std::string script;
        for (std::size_t position = 0; position < sample.members.size(); ++position) {
            bool relevant = machine.at(sample.members[position]) == Relevance::relevant;
            bool flip = (rater != 1 && both_flip.count(position)) ||
                        (rater == 2 && rater2_only.count(position));
            if (flip) relevant = !relevant;
            script += relevant ? "y\n" : "n\n";
        }
        util::write_file_atomic(out_dir / "answers" /
                                    ("rater-" + std::to_string(rater) + ".txt"),
                                script);
    }

    // Consensus (2 of 3) disagrees with the machine exactly at both_flip.
    std::vector<std::string> disagreements;
    for (std::size_t position : both_flip) disagreements.push_back(sample.members[position]);
    std::sort(disagreements.begin(), disagreements.end());

    std::vector<ExpertDecision> decisions;
    decisions.push_back({disagreements[0], "agree_machine", "STRICT_SE",
                         "title is about engineering practice on a second reading"});
    decisions.push_back({disagreements[1], "uphold_human", "RETAIN_UNCERTAIN",
                         "kept for full-text assessment"});
    util::write_file_atomic(out_dir / "decisions.csv", render_decisions_csv(decisions));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mock fixture generator for the review pipeline"};
    std::string config_path = "configs/mock.toml";
    std::string out_dir = "data/mock";
    app.add_option("--config", config_path, "Mock configuration")->capture_default_str();
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        Config config = load_config(config_path);
        validate_config(config);
        fs::path out(out_dir);
        fs::create_directories(out / "replay");

        write_search_fixtures(config, out / "replay" / "search");
        std::vector<PaperRecord> corpus =
            corpus_from_fixtures(config, out / "replay", out / ".scratch");
        if (corpus.size() != kPaperCount) {
            throw PipelineError(ErrorCode::DomainError,
                                "expected " + std::to_string(kPaperCount) +
                                    " unique papers, got " + std::to_string(corpus.size()));
        }

        std::vector<std::vector<ScreeningVerdict>> runs =
            write_screen_fixtures(config, corpus, out / "replay" / "llm");

        std::vector<std::string> corpus_eids;
        for (const PaperRecord& record : corpus) corpus_eids.push_back(record.eid);
        std::vector<AggregatedVerdict> aggregated = aggregate_runs(runs, corpus_eids);

        write_theme_fixtures(config, aggregated, out / "replay" / "llm");
        write_validation_fixtures(config, corpus, aggregated, out);

        std::size_t relevant = 0;
        for (const AggregatedVerdict& verdict : aggregated) {
            if (verdict.relevance == Relevance::relevant) ++relevant;
        }
        std::cout << "fixtures written to " << out.string() << " (" << corpus.size()
                  << " papers, " << relevant << " relevant)\n";
        return 0;
    } catch (const std::exception& error) {
        std::cerr << "fixgen error: " << error.what() << "\n";
        return 1;
    }
}
