#include "scoper/screen.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <future>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::vector<Batch> make_batches(const std::vector<BatchPaper>& papers, int batch_size) {
    if (batch_size < 1) {
        throw PipelineError(ErrorCode::DomainError, "batch size must be >= 1");
    }
    std::vector<Batch> batches;
    for (std::size_t offset = 0; offset < papers.size();
         offset += static_cast<std::size_t>(batch_size)) {
        Batch batch;
        batch.batch_id = static_cast<int>(batches.size());
        std::size_t end = std::min(papers.size(), offset + static_cast<std::size_t>(batch_size));
        batch.papers.assign(papers.begin() + static_cast<std::ptrdiff_t>(offset),
                            papers.begin() + static_cast<std::ptrdiff_t>(end));
        batches.push_back(std::move(batch));
    }
    return batches;
}

LlmRequest render_screening_prompt(const Batch& batch,
                                   const std::vector<InclusionQuestion>& screening_questions,
                                   const LlmSettings& llm) {
    std::string body;
    body += "You are screening paper titles for a scoping review at the intersection of "
            "software engineering (SE) and psychology (PSY).\n\n";
    body += "For each title below, decide whether the paper could be relevant, considering "
            "only its title and the inclusion questions. A paper is relevant if at least one "
            "inclusion question can be answered \"yes\" from its title.\n\n";
    body += "Inclusion questions:\n";
    for (const InclusionQuestion& q : screening_questions) {
        body += "- " + q.tag + ": " + q.question + "\n";
    }
    body += "\nTitles:\n";
    int position = 0;
    for (const BatchPaper& paper : batch.papers) {
        body += std::to_string(++position) + ". (eid " + paper.eid + ") " + paper.title + "\n";
    }
    body += "\nReply with exactly one JSON object and no other text, in this schema:\n";
    body += "{\"results\":[{\"eid\":\"<eid>\",\"relevance\":\"relevant\"|\"not relevant\","
            "\"justification\":\"<1-2 sentences>\",\"tags\":[\"<tag>\",...]},...]}\n\n";
    body += "Rules:\n";
    body += "- Give exactly one result per title, in the order listed, copying each eid "
            "verbatim.\n";
    body += "- \"tags\" lists the inclusion questions answered \"yes\"; use only the tags "
            "listed above.\n";
    body += "- If \"relevance\" is \"not relevant\", \"tags\" must be an empty array.\n";
    body += "- \"justification\" is 1-2 sentences explaining the decision.\n";

    LlmRequest request;
    request.model = llm.model;
    request.system_text = "You are an expert in humanities and software engineering.";
    request.user_text = body;
    request.params = llm.sampling_params;
    return request;
}

VerdictParse parse_verdicts(const std::string& raw_output, const Batch& batch,
                            const std::string& run_label,
                            const std::vector<std::string>& screening_tags) {
    json parsed = util::parse_model_json(raw_output);
    if (!parsed.is_object() || !parsed.contains("results") || !parsed["results"].is_array()) {
        throw PipelineError(ErrorCode::UnparsableOutput, "expected {\"results\": [...]}");
    }
    const json& results = parsed["results"];
    if (results.size() != batch.papers.size()) {
        throw PipelineError(ErrorCode::CountMismatch,
                            "batch " + std::to_string(batch.batch_id) + " has " +
                                std::to_string(batch.papers.size()) + " papers but the model " +
                                "returned " + std::to_string(results.size()) + " results");
    }

    std::set<std::string> batch_eids;
    for (const BatchPaper& p : batch.papers) batch_eids.insert(p.eid);
    bool all_have_eid = true;
    for (const json& entry : results) {
        if (!entry.is_object() || entry.value("eid", "").empty()) {
            all_have_eid = false;
            break;
        }
    }

    // eid-keyed matching when possible; positional fallback otherwise.
    std::map<std::string, const json*> by_eid;
    if (all_have_eid) {
        for (const json& entry : results) {
            std::string eid = entry["eid"].get<std::string>();
            if (!batch_eids.count(eid)) {
                throw PipelineError(ErrorCode::UnknownEid,
                                    "result eid " + eid + " is not in the batch");
            }
            if (!by_eid.emplace(eid, &entry).second) {
                throw PipelineError(ErrorCode::UnknownEid, "duplicate result eid " + eid);
            }
        }
        if (by_eid.size() != batch.papers.size()) {
            throw PipelineError(ErrorCode::UnknownEid, "some batch papers have no result");
        }
    }

    const std::set<std::string> allowed_tags(screening_tags.begin(), screening_tags.end());
    VerdictParse out;
    for (std::size_t i = 0; i < batch.papers.size(); ++i) {
        const BatchPaper& paper = batch.papers[i];
        const json& entry = all_have_eid ? *by_eid.at(paper.eid) : results[i];
        if (!entry.is_object()) {
            throw PipelineError(ErrorCode::UnparsableOutput, "result entry is not an object");
        }
        if (!all_have_eid) {
            std::string eid = entry.value("eid", "");
            if (!eid.empty() && eid != paper.eid) {
                throw PipelineError(ErrorCode::UnknownEid,
                                    "positional result " + std::to_string(i) + " names eid " +
                                        eid + " but the batch paper is " + paper.eid);
            }
        }

        ScreeningVerdict verdict;
        verdict.eid = paper.eid;
        verdict.run_label = run_label;
        if (!entry.contains("relevance") || !entry["relevance"].is_string()) {
            throw PipelineError(ErrorCode::InvalidRelevanceValue,
                                "missing relevance for eid " + paper.eid);
        }
        verdict.relevance = relevance_from_string(entry["relevance"].get<std::string>());
        verdict.justification = entry.value("justification", "");

        if (entry.contains("tags")) {
            if (!entry["tags"].is_array()) {
                throw PipelineError(ErrorCode::UnparsableOutput, "tags must be an array");
            }
            for (const json& tag : entry["tags"]) {
                if (!tag.is_string() || !allowed_tags.count(tag.get<std::string>())) {
                    throw PipelineError(ErrorCode::UnknownTag,
                                        "tag " + tag.dump() + " is not a screening question tag");
                }
                verdict.tags.push_back(tag.get<std::string>());
            }
        }
        std::sort(verdict.tags.begin(), verdict.tags.end());
        verdict.tags.erase(std::unique(verdict.tags.begin(), verdict.tags.end()),
                           verdict.tags.end());

        if (verdict.relevance == Relevance::not_relevant && !verdict.tags.empty()) {
            out.warnings.push_back("eid " + verdict.eid +
                                   ": tags cleared on a not-relevant verdict");
            verdict.tags.clear();
        }
        if (verdict.relevance == Relevance::relevant && util::trim(verdict.justification).empty()) {
            out.warnings.push_back("eid " + verdict.eid +
                                   ": relevant verdict without justification");
            verdict.justification = "(no justification provided)";
        }
        out.verdicts.push_back(std::move(verdict));
    }
    return out;
}

namespace {

std::string batch_slot(const std::string& run_label, int batch_id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "batch-%04d", batch_id);
    return run_label + "/" + buf;
}

json verdict_line(const ScreeningVerdict& verdict, int batch_id, int index) {
    return {{"type", "verdict"},
            {"run", verdict.run_label},
            {"batch_id", batch_id},
            {"index", index},
            {"eid", verdict.eid},
            {"relevance", to_string(verdict.relevance)},
            {"justification", verdict.justification},
            {"tags", verdict.tags}};
}

struct BatchOutcome {
    int batch_id = 0;
    bool ok = false;
    std::string error;
    std::vector<ScreeningVerdict> verdicts;
    std::vector<std::string> warnings;
    std::string request_digest;
};

} // namespace

ScreenRunResult screen_run(const std::vector<PaperRecord>& corpus, const Config& config,
                           const std::string& run_label, LlmTransport& transport,
                           const fs::path& run_log) {
    std::vector<BatchPaper> papers;
    papers.reserve(corpus.size());
    for (const PaperRecord& record : corpus) papers.push_back({record.eid, record.title});
    std::vector<Batch> batches = make_batches(papers, config.llm.batch_size);

    std::set<int> committed;
    if (fs::exists(run_log)) {
        for (const json& line : util::read_jsonl(run_log)) {
            if (line.value("type", "") == "batch" && line.value("run", "") == run_label) {
                committed.insert(line.at("batch_id").get<int>());
            }
        }
    }

    const std::vector<InclusionQuestion> questions = config.screening_questions();
    std::vector<std::string> screening_tags;
    for (const InclusionQuestion& q : questions) screening_tags.push_back(q.tag);

    auto process_batch = [&](const Batch& batch) {
        BatchOutcome outcome;
        outcome.batch_id = batch.batch_id;
        LlmRequest request = render_screening_prompt(batch, questions, config.llm);
        outcome.request_digest = llm_request_digest(request);
        try {
            std::string response = transport.complete(request, batch_slot(run_label, batch.batch_id));
            try {
                VerdictParse parse = parse_verdicts(response, batch, run_label, screening_tags);
                outcome.verdicts = std::move(parse.verdicts);
                outcome.warnings = std::move(parse.warnings);
                outcome.ok = true;
            } catch (const PipelineError& parse_error) {
                // One re-ask of the whole batch under a fresh slot, then fail.
                spdlog::warn("batch {} unparsable ({}), re-asking once", batch.batch_id,
                             parse_error.what());
                std::string retry = transport.complete(
                    request, batch_slot(run_label, batch.batch_id) + "-retry1");
                VerdictParse parse = parse_verdicts(retry, batch, run_label, screening_tags);
                outcome.verdicts = std::move(parse.verdicts);
                outcome.warnings = std::move(parse.warnings);
                outcome.ok = true;
            }
        } catch (const PipelineError& e) {
            outcome.error = e.what();
        }
        return outcome;
    };

    ScreenRunResult result;
    result.batches_total = batches.size();
    result.batches_from_log = committed.size();
    result.verdicts = 0;

    std::vector<Batch> pending;
    for (const Batch& batch : batches) {
        if (!committed.count(batch.batch_id)) pending.push_back(batch);
    }

    const std::size_t wave =
        static_cast<std::size_t>(std::max(1, config.llm.max_concurrent_batches));
    for (std::size_t i = 0; i < pending.size(); i += wave) {
        std::size_t end = std::min(pending.size(), i + wave);
        std::vector<std::future<BatchOutcome>> futures;
        for (std::size_t j = i; j < end; ++j) {
            futures.push_back(std::async(std::launch::async, process_batch, pending[j]));
        }
        // Append in batch-id order regardless of completion order.
        for (auto& future : futures) {
            BatchOutcome outcome = future.get();
            if (!outcome.ok) {
                spdlog::error("batch {} failed: {}", outcome.batch_id, outcome.error);
                util::append_jsonl(run_log, {{"type", "batch_failed"},
                                             {"run", run_label},
                                             {"batch_id", outcome.batch_id},
                                             {"error", outcome.error}});
                result.failed_batches.push_back(outcome.batch_id);
                continue;
            }
            for (const std::string& warning : outcome.warnings) {
                spdlog::warn("run {}: {}", run_label, warning);
            }
            int index = 0;
            for (const ScreeningVerdict& verdict : outcome.verdicts) {
                util::append_jsonl(run_log, verdict_line(verdict, outcome.batch_id, index++));
            }
            // Commit marker goes last: a batch without it is reprocessed on resume.
            util::append_jsonl(run_log, {{"type", "batch"},
                                         {"run", run_label},
                                         {"batch_id", outcome.batch_id},
                                         {"size", outcome.verdicts.size()},
                                         {"model", config.llm.model},
                                         {"params", config.llm.sampling_params},
                                         {"request_sha256", outcome.request_digest},
                                         {"warnings", outcome.warnings},
                                         {"completed_at", util::iso8601_now()}});
        }
    }

    result.verdicts = load_run_verdicts(run_log).size();
    if (!result.failed_batches.empty()) {
        std::string ids;
        for (int id : result.failed_batches) {
            if (!ids.empty()) ids += ", ";
            ids += std::to_string(id);
        }
        throw PipelineError(ErrorCode::FailedBatches,
                            "run " + run_label + ": batches {" + ids +
                                "} failed; completed verdicts were persisted, re-run to retry");
    }
    return result;
}

std::vector<ScreeningVerdict> load_run_verdicts(const fs::path& run_log) {
    if (!fs::exists(run_log)) return {};
    std::set<int> committed;
    std::vector<json> lines = util::read_jsonl(run_log);
    for (const json& line : lines) {
        if (line.value("type", "") == "batch") committed.insert(line.at("batch_id").get<int>());
    }
    struct Keyed {
        int batch_id;
        int index;
        ScreeningVerdict verdict;
    };
    std::vector<Keyed> keyed;
    std::set<std::string> seen;
    for (const json& line : lines) {
        if (line.value("type", "") != "verdict") continue;
        int batch_id = line.at("batch_id").get<int>();
        if (!committed.count(batch_id)) continue;
        std::string eid = line.at("eid").get<std::string>();
        if (!seen.insert(eid).second) continue; // first occurrence wins
        ScreeningVerdict verdict;
        verdict.eid = eid;
        verdict.run_label = line.at("run").get<std::string>();
        verdict.relevance = relevance_from_string(line.at("relevance").get<std::string>());
        verdict.justification = line.at("justification").get<std::string>();
        verdict.tags = line.at("tags").get<std::vector<std::string>>();
        keyed.push_back({batch_id, line.at("index").get<int>(), std::move(verdict)});
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        return std::tie(a.batch_id, a.index) < std::tie(b.batch_id, b.index);
    });
    std::vector<ScreeningVerdict> verdicts;
    verdicts.reserve(keyed.size());
    for (Keyed& k : keyed) verdicts.push_back(std::move(k.verdict));
    return verdicts;
}

} // namespace scoper
