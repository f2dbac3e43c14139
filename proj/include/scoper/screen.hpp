#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scoper/config.hpp"
#include "scoper/corpus.hpp"
#include "scoper/transport.hpp"
#include "scoper/types.hpp"

namespace scoper {

struct BatchPaper {
    std::string eid;
    std::string title;
};

struct Batch {
    int batch_id = 0; // 0-based ordinal
    std::vector<BatchPaper> papers;
};

// Splits the corpus order into ceil(n / batch_size) batches; all but possibly
// the last have exactly batch_size papers and concatenation reproduces the
// input sequence.
std::vector<Batch> make_batches(const std::vector<BatchPaper>& papers, int batch_size);

// One screening outcome for one paper in one run.
struct ScreeningVerdict {
    std::string eid;
    std::string run_label;
    Relevance relevance = Relevance::not_relevant;
    std::string justification;
    std::vector<std::string> tags; // sorted; empty unless relevant

    friend bool operator==(const ScreeningVerdict&, const ScreeningVerdict&) = default;
};

// Renders the deterministic screening prompt for one batch: persona system
// message plus a user body with the screening questions, the numbered titles
// (eids included for response matching) and the required output schema.
LlmRequest render_screening_prompt(const Batch& batch,
                                   const std::vector<InclusionQuestion>& screening_questions,
                                   const LlmSettings& llm);

struct VerdictParse {
    std::vector<ScreeningVerdict> verdicts; // batch order
    std::vector<std::string> warnings;      // normalizations applied
};

// Decodes one raw model response against its batch. Applies one bounded
// repair (strip code fences, extract the first JSON value) before giving up
// with UnparsableOutput; enforces the verdict invariants, clearing tags on
// not-relevant verdicts with a warning.
VerdictParse parse_verdicts(const std::string& raw_output, const Batch& batch,
                            const std::string& run_label,
                            const std::vector<std::string>& screening_tags);

struct ScreenRunResult {
    std::size_t batches_total = 0;
    std::size_t batches_from_log = 0; // already complete when the run started
    std::size_t verdicts = 0;
    std::vector<int> failed_batches;
};

// Screens the whole corpus once under `run_label`, appending verdicts and
// batch commit records to the JSONL run log at `run_log`. Completed batches
// are never re-submitted; batches that exhaust their retries are surfaced in
// the result and the call throws FailedBatches after persisting everything
// else. Batches run up to llm.max_concurrent_batches at a time; log order is
// by batch id regardless of completion order.
ScreenRunResult screen_run(const std::vector<PaperRecord>& corpus, const Config& config,
                           const std::string& run_label, LlmTransport& transport,
                           const std::filesystem::path& run_log);

// Reads a run log back: verdicts of committed batches ordered by
// (batch_id, in-batch index), first occurrence wins.
std::vector<ScreeningVerdict> load_run_verdicts(const std::filesystem::path& run_log);

} // namespace scoper
