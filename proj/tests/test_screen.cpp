#include <doctest.h>

#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "helpers.hpp"
#include "scoper/config.hpp"
#include "scoper/errors.hpp"
#include "scoper/screen.hpp"
#include "scoper/util.hpp"

using namespace scoper;
using json = nlohmann::json;
using testutil::expect_error;

namespace {

std::vector<BatchPaper> dummy_papers(std::size_t n) {
    std::vector<BatchPaper> papers;
    for (std::size_t i = 0; i < n; ++i) {
        char eid[16];
        std::snprintf(eid, sizeof(eid), "p%05zu", i);
        papers.push_back({eid, "Title " + std::to_string(i)});
    }
    return papers;
}

Batch two_paper_batch() {
    Batch batch;
    batch.batch_id = 0;
    batch.papers = {{"e1", "Alpha"}, {"e2", "Beta"}};
    return batch;
}

const std::vector<std::string> kTags{"#SE_think", "#PSY_mind"};

json result_entry(const std::string& eid, const std::string& relevance,
                  const std::string& justification, std::vector<std::string> tags) {
    return {{"eid", eid}, {"relevance", relevance}, {"justification", justification},
            {"tags", tags}};
}

std::string two_results(const json& a, const json& b) {
    return json{{"results", json::array({a, b})}}.dump();
}

// Scripted transport keyed by slot: entries are canned responses; slots not
// listed produce a valid response derived from the request's eid lines.
class ScriptedLlm : public LlmTransport {
public:
    std::map<std::string, std::string> canned;
    std::set<std::string> fail_slots; // throw TransportError
    std::vector<std::string> slots_seen;

    std::string complete(const LlmRequest& request, const std::string& slot) override {
        slots_seen.push_back(slot);
        if (fail_slots.count(slot)) {
            throw PipelineError(ErrorCode::TransportError, "scripted failure for " + slot);
        }
        auto it = canned.find(slot);
        if (it != canned.end()) return it->second;
        return default_response(request);
    }

    // All relevant, tagged #SE_think, eids scraped from the prompt's
    // "(eid X)" markers.
    static std::string default_response(const LlmRequest& request) {
        json results = json::array();
        const std::string& text = request.user_text;
        std::size_t pos = 0;
        while ((pos = text.find("(eid ", pos)) != std::string::npos) {
            pos += 5;
            std::size_t end = text.find(')', pos);
            results.push_back(result_entry(text.substr(pos, end - pos), "relevant",
                                           "Mentions reflection.", {"#SE_think"}));
        }
        return json{{"results", results}}.dump();
    }
};

Config screen_config() {
    return parse_config(R"(
[llm]
model = "mock-model"
runs = 3
batch_size = 10
max_concurrent_batches = 2
[questions.SE_think]
text = "Q1?"
[questions.PSY_mind]
text = "Q2?"
[questions.SE_human]
text = "categorization"
screening = false
[venues.SE]
titles = ["V"]
[venues.PSY]
titles = ["P"]
)");
}

std::vector<PaperRecord> screen_corpus(std::size_t n) {
    std::vector<PaperRecord> corpus;
    for (const BatchPaper& p : dummy_papers(n)) {
        PaperRecord r;
        r.eid = p.eid;
        r.title = p.title;
        r.intersection = Intersection::SE_on_PSY;
        corpus.push_back(r);
    }
    return corpus;
}

} // namespace

TEST_CASE("make_batches arithmetic") {
    SUBCASE("5386 papers, batch size 10") {
        std::vector<Batch> batches = make_batches(dummy_papers(5386), 10);
        REQUIRE(batches.size() == 539);
        for (std::size_t i = 0; i + 1 < batches.size(); ++i) {
            CHECK(batches[i].papers.size() == 10);
        }
        CHECK(batches.back().papers.size() == 6);
    }
    SUBCASE("3879 papers, batch size 10") {
        std::vector<Batch> batches = make_batches(dummy_papers(3879), 10);
        REQUIRE(batches.size() == 388);
        CHECK(batches.back().papers.size() == 9);
    }
    SUBCASE("exact multiple leaves no short batch") {
        std::vector<Batch> batches = make_batches(dummy_papers(30), 10);
        REQUIRE(batches.size() == 3);
        CHECK(batches.back().papers.size() == 10);
    }
    SUBCASE("empty corpus yields no batches") {
        CHECK(make_batches({}, 10).empty());
    }
    SUBCASE("concatenation reproduces the input and ids are ordinal") {
        std::vector<BatchPaper> papers = dummy_papers(47);
        std::vector<Batch> batches = make_batches(papers, 10);
        std::vector<BatchPaper> rebuilt;
        for (std::size_t i = 0; i < batches.size(); ++i) {
            CHECK(batches[i].batch_id == static_cast<int>(i));
            rebuilt.insert(rebuilt.end(), batches[i].papers.begin(), batches[i].papers.end());
        }
        REQUIRE(rebuilt.size() == papers.size());
        for (std::size_t i = 0; i < papers.size(); ++i) CHECK(rebuilt[i].eid == papers[i].eid);
    }
    SUBCASE("batch size must be positive") {
        expect_error(ErrorCode::DomainError, [] { make_batches(dummy_papers(3), 0); });
    }
}

TEST_CASE("screening prompt is frozen") {
    std::vector<InclusionQuestion> questions{{"#SE_think", "Q1?", FieldOrigin::SE, true},
                                             {"#PSY_mind", "Q2?", FieldOrigin::PSY, true}};
    LlmSettings llm;
    llm.model = "mock-model";
    LlmRequest request = render_screening_prompt(two_paper_batch(), questions, llm);

    CHECK(request.model == "mock-model");
    CHECK(request.system_text == "You are an expert in humanities and software engineering.");
    CHECK(request.user_text.find("- #SE_think: Q1?") != std::string::npos);
    CHECK(request.user_text.find("- #PSY_mind: Q2?") != std::string::npos);
    CHECK(request.user_text.find("1. (eid e1) Alpha") != std::string::npos);
    CHECK(request.user_text.find("2. (eid e2) Beta") != std::string::npos);
    CHECK(request.user_text.find("\"results\"") != std::string::npos);

    // Changing this digest invalidates every recorded replay fixture; if this
    // check fails after an intentional prompt edit, regenerate data/mock with
    // tools/fixgen and update the constant.
    CHECK(util::sha256_hex(request.user_text) ==
          "a6e66aa11e3f95258e3254b038f2ad9b5f0a1c3e5bbeebe6572434e02de87d7e");

    // Same inputs, same bytes.
    LlmRequest again = render_screening_prompt(two_paper_batch(), questions, llm);
    CHECK(llm_request_digest(again) == llm_request_digest(request));
}

TEST_CASE("parse_verdicts happy path matches by eid") {
    // Results arrive in reversed order; output follows batch order.
    std::string raw = two_results(
        result_entry("e2", "not relevant", "Off topic.", {}),
        result_entry("e1", "relevant", "On topic.", {"#SE_think", "#PSY_mind"}));
    VerdictParse parse = parse_verdicts(raw, two_paper_batch(), "run-1", kTags);
    REQUIRE(parse.verdicts.size() == 2);
    CHECK(parse.warnings.empty());
    CHECK(parse.verdicts[0].eid == "e1");
    CHECK(parse.verdicts[0].relevance == Relevance::relevant);
    CHECK(parse.verdicts[0].tags == std::vector<std::string>{"#PSY_mind", "#SE_think"}); // sorted
    CHECK(parse.verdicts[0].run_label == "run-1");
    CHECK(parse.verdicts[1].eid == "e2");
    CHECK(parse.verdicts[1].relevance == Relevance::not_relevant);
    CHECK(parse.verdicts[1].tags.empty());
}

TEST_CASE("parse_verdicts repairs fenced and prose-wrapped output") {
    std::string inner = two_results(result_entry("e1", "relevant", "J.", {"#SE_think"}),
                                    result_entry("e2", "not relevant", "J.", {}));
    std::string fenced = "```json\n" + inner + "\n```";
    CHECK(parse_verdicts(fenced, two_paper_batch(), "run-1", kTags).verdicts.size() == 2);

    std::string prose = "Here is my assessment:\n" + inner + "\nHope that helps.";
    CHECK(parse_verdicts(prose, two_paper_batch(), "run-1", kTags).verdicts.size() == 2);
}

TEST_CASE("parse_verdicts error taxonomy") {
    Batch batch = two_paper_batch();
    SUBCASE("garbage") {
        expect_error(ErrorCode::UnparsableOutput,
                     [&] { parse_verdicts("total nonsense", batch, "run-1", kTags); });
    }
    SUBCASE("JSON without results") {
        expect_error(ErrorCode::UnparsableOutput,
                     [&] { parse_verdicts(R"({"answers":[]})", batch, "run-1", kTags); });
    }
    SUBCASE("count mismatch") {
        std::string raw =
            json{{"results", json::array({result_entry("e1", "relevant", "J.", {})})}}.dump();
        expect_error(ErrorCode::CountMismatch,
                     [&] { parse_verdicts(raw, batch, "run-1", kTags); });
    }
    SUBCASE("eid outside the batch") {
        std::string raw = two_results(result_entry("e1", "relevant", "J.", {}),
                                      result_entry("eX", "relevant", "J.", {}));
        expect_error(ErrorCode::UnknownEid, [&] { parse_verdicts(raw, batch, "run-1", kTags); });
    }
    SUBCASE("duplicate eid") {
        std::string raw = two_results(result_entry("e1", "relevant", "J.", {}),
                                      result_entry("e1", "not relevant", "J.", {}));
        expect_error(ErrorCode::UnknownEid, [&] { parse_verdicts(raw, batch, "run-1", kTags); });
    }
    SUBCASE("bad relevance value") {
        std::string raw = two_results(result_entry("e1", "maybe", "J.", {}),
                                      result_entry("e2", "relevant", "J.", {}));
        expect_error(ErrorCode::InvalidRelevanceValue,
                     [&] { parse_verdicts(raw, batch, "run-1", kTags); });
    }
    SUBCASE("missing relevance") {
        json entry{{"eid", "e1"}, {"justification", "J."}, {"tags", json::array()}};
        std::string raw = two_results(entry, result_entry("e2", "relevant", "J.", {}));
        expect_error(ErrorCode::InvalidRelevanceValue,
                     [&] { parse_verdicts(raw, batch, "run-1", kTags); });
    }
    SUBCASE("unknown tag") {
        std::string raw = two_results(result_entry("e1", "relevant", "J.", {"#SE_made_up"}),
                                      result_entry("e2", "relevant", "J.", {"#SE_think"}));
        expect_error(ErrorCode::UnknownTag, [&] { parse_verdicts(raw, batch, "run-1", kTags); });
    }
    SUBCASE("tags not an array") {
        json entry{{"eid", "e1"}, {"relevance", "relevant"}, {"justification", "J."},
                   {"tags", "#SE_think"}};
        std::string raw = two_results(entry, result_entry("e2", "relevant", "J.", {}));
        expect_error(ErrorCode::UnparsableOutput,
                     [&] { parse_verdicts(raw, batch, "run-1", kTags); });
    }
}

TEST_CASE("parse_verdicts positional fallback") {
    // No eids at all: results map to batch order.
    json a{{"relevance", "relevant"}, {"justification", "J."}, {"tags", json::array({"#SE_think"})}};
    json b{{"relevance", "not relevant"}, {"justification", "J."}, {"tags", json::array()}};
    VerdictParse parse =
        parse_verdicts(two_results(a, b), two_paper_batch(), "run-2", kTags);
    REQUIRE(parse.verdicts.size() == 2);
    CHECK(parse.verdicts[0].eid == "e1");
    CHECK(parse.verdicts[1].eid == "e2");

    // A positional entry naming a different eid is rejected.
    json wrong{{"eid", "e9"}, {"relevance", "relevant"}, {"justification", "J."},
               {"tags", json::array()}};
    expect_error(ErrorCode::UnknownEid, [&] {
        parse_verdicts(two_results(a, wrong), two_paper_batch(), "run-2", kTags);
    });
}

TEST_CASE("parse_verdicts normalizations warn") {
    SUBCASE("not-relevant verdict with tags is cleared") {
        std::string raw = two_results(result_entry("e1", "not relevant", "J.", {"#SE_think"}),
                                      result_entry("e2", "relevant", "J.", {"#SE_think"}));
        VerdictParse parse = parse_verdicts(raw, two_paper_batch(), "run-1", kTags);
        CHECK(parse.verdicts[0].tags.empty());
        REQUIRE(parse.warnings.size() == 1);
        CHECK(parse.warnings[0].find("tags cleared") != std::string::npos);
    }
    SUBCASE("relevant verdict without justification gets a placeholder") {
        std::string raw = two_results(result_entry("e1", "relevant", "  ", {"#SE_think"}),
                                      result_entry("e2", "not relevant", "J.", {}));
        VerdictParse parse = parse_verdicts(raw, two_paper_batch(), "run-1", kTags);
        CHECK(parse.verdicts[0].justification == "(no justification provided)");
        REQUIRE(parse.warnings.size() == 1);
    }
    SUBCASE("duplicate tags are deduplicated silently") {
        std::string raw =
            two_results(result_entry("e1", "relevant", "J.", {"#SE_think", "#SE_think"}),
                        result_entry("e2", "not relevant", "J.", {}));
        VerdictParse parse = parse_verdicts(raw, two_paper_batch(), "run-1", kTags);
        CHECK(parse.verdicts[0].tags == std::vector<std::string>{"#SE_think"});
        CHECK(parse.warnings.empty());
    }
}

TEST_CASE("screen_run processes every batch and logs commit markers") {
    testutil::TempDir dir("screen");
    Config config = screen_config();
    std::vector<PaperRecord> corpus = screen_corpus(25);
    ScriptedLlm llm;

    ScreenRunResult result =
        screen_run(corpus, config, "run-1", llm, dir.path() / "run-1.jsonl");
    CHECK(result.batches_total == 3);
    CHECK(result.batches_from_log == 0);
    CHECK(result.verdicts == 25);
    CHECK(result.failed_batches.empty());
    CHECK(llm.slots_seen.size() == 3);
    CHECK(std::set<std::string>(llm.slots_seen.begin(), llm.slots_seen.end()) ==
          std::set<std::string>{"run-1/batch-0000", "run-1/batch-0001", "run-1/batch-0002"});

    // The prompt excludes the categorization question.
    std::vector<ScreeningVerdict> verdicts = load_run_verdicts(dir.path() / "run-1.jsonl");
    REQUIRE(verdicts.size() == 25);
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        CHECK(verdicts[i].eid == corpus[i].eid); // corpus order
        CHECK(verdicts[i].run_label == "run-1");
    }
}

TEST_CASE("screen_run persists successes and reports failed batches") {
    testutil::TempDir dir("screen-fail");
    Config config = screen_config();
    std::vector<PaperRecord> corpus = screen_corpus(25);
    auto log = dir.path() / "run-1.jsonl";

    ScriptedLlm failing;
    failing.fail_slots = {"run-1/batch-0001", "run-1/batch-0001-retry1"};
    try {
        screen_run(corpus, config, "run-1", failing, log);
        FAIL("expected FailedBatches");
    } catch (const PipelineError& e) {
        CHECK(e.code() == ErrorCode::FailedBatches);
        CHECK(std::string(e.what()).find("{1}") != std::string::npos);
    }
    // Batches 0 (10 papers) and 2 (5 papers) are committed and survive.
    CHECK(load_run_verdicts(log).size() == 15);

    // Resume with a healthy transport: only the failed batch is re-asked.
    ScriptedLlm healthy;
    ScreenRunResult resumed = screen_run(corpus, config, "run-1", healthy, log);
    CHECK(resumed.batches_from_log == 2);
    CHECK(resumed.verdicts == 25);
    CHECK(healthy.slots_seen == std::vector<std::string>{"run-1/batch-0001"});

    std::vector<ScreeningVerdict> verdicts = load_run_verdicts(log);
    REQUIRE(verdicts.size() == 25);
    for (std::size_t i = 0; i < verdicts.size(); ++i) CHECK(verdicts[i].eid == corpus[i].eid);

    // Re-running a completed run touches nothing.
    ScriptedLlm idle;
    ScreenRunResult done = screen_run(corpus, config, "run-1", idle, log);
    CHECK(done.batches_from_log == 3);
    CHECK(idle.slots_seen.empty());
}

TEST_CASE("screen_run re-asks an unparsable batch once under a retry slot") {
    testutil::TempDir dir("screen-retry");
    Config config = screen_config();
    std::vector<PaperRecord> corpus = screen_corpus(12);
    ScriptedLlm llm;
    llm.canned["run-2/batch-0001"] = "I cannot answer that.";

    ScreenRunResult result =
        screen_run(corpus, config, "run-2", llm, dir.path() / "run-2.jsonl");
    CHECK(result.verdicts == 12);
    CHECK(result.failed_batches.empty());
    // Both the original and the retry slot were used, in that order.
    auto first = std::find(llm.slots_seen.begin(), llm.slots_seen.end(), "run-2/batch-0001");
    auto retry = std::find(llm.slots_seen.begin(), llm.slots_seen.end(),
                           "run-2/batch-0001-retry1");
    REQUIRE(first != llm.slots_seen.end());
    REQUIRE(retry != llm.slots_seen.end());
    CHECK(first < retry);

    SUBCASE("a second unparsable answer fails the batch") {
        ScriptedLlm hopeless;
        hopeless.canned["run-3/batch-0000"] = "nonsense";
        hopeless.canned["run-3/batch-0000-retry1"] = "more nonsense";
        try {
            screen_run(corpus, config, "run-3", hopeless, dir.path() / "run-3.jsonl");
            FAIL("expected FailedBatches");
        } catch (const PipelineError& e) {
            CHECK(e.code() == ErrorCode::FailedBatches);
        }
        // The other batch still went through.
        CHECK(load_run_verdicts(dir.path() / "run-3.jsonl").size() == 2);
    }
}

TEST_CASE("load_run_verdicts ignores uncommitted batches and duplicate lines") {
    testutil::TempDir dir("runlog");
    auto log = dir.path() / "log.jsonl";
    auto verdict = [](int batch, int index, const std::string& eid,
                      const std::string& relevance) {
        return json{{"type", "verdict"}, {"run", "run-1"},  {"batch_id", batch},
                    {"index", index},    {"eid", eid},       {"relevance", relevance},
                    {"justification", "J."}, {"tags", json::array()}};
    };
    util::append_jsonl(log, verdict(0, 0, "a", "relevant"));
    util::append_jsonl(log, verdict(0, 1, "b", "not_relevant"));
    util::append_jsonl(log, json{{"type", "batch"}, {"run", "run-1"}, {"batch_id", 0}});
    util::append_jsonl(log, verdict(1, 0, "c", "relevant")); // never committed
    util::append_jsonl(log, verdict(0, 0, "a", "not_relevant")); // duplicate, ignored

    std::vector<ScreeningVerdict> verdicts = load_run_verdicts(log);
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].eid == "a");
    CHECK(verdicts[0].relevance == Relevance::relevant); // first occurrence won
    CHECK(verdicts[1].eid == "b");

    CHECK(load_run_verdicts(dir.path() / "absent.jsonl").empty());
}
