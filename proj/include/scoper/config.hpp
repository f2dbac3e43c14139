#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scoper/types.hpp"

namespace scoper {

// A tagged yes/no inclusion criterion. The two "_human" tags exist only to
// categorize keywords and never appear in screening prompts or verdicts.
struct InclusionQuestion {
    std::string tag; // "#SE_thinking", "#PSY_concept", ...
    std::string question;
    FieldOrigin origin = FieldOrigin::SE;
    bool is_screening_question = true;
};

struct KeywordSet {
    std::string tag;
    std::vector<std::string> keywords; // patterns; '*' matches any character run
};

struct VenueList {
    FieldOrigin field = FieldOrigin::SE;
    std::vector<std::string> venues;
};

struct SearchSettings {
    std::string endpoint = "https://api.elsevier.com/content/search/scopus";
    int se_cap = 2000;  // per-keyword-set result cap, SE-side sets
    int psy_cap = 1600; // per-keyword-set result cap, PSY-side sets
    int page_size = 25; // service's documented per-page maximum
    int max_inflight = 4;
    int retries = 3;
    double backoff_base_seconds = 1.0;
};

struct LlmSettings {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4.1";
    int runs = 3; // independent screening repetitions; must be odd
    int batch_size = 10;
    int theme_chunk = 200; // justifications per theme prompt
    int max_concurrent_batches = 2;
    int retries = 3;
    double backoff_base_seconds = 1.0;
    // Sampling parameters passed to the provider verbatim and recorded in the
    // run log. Empty map = provider defaults.
    std::map<std::string, std::string> sampling_params;
};

struct SamplingSettings {
    int size = 100;
    double confidence = 0.95;
};

struct Config {
    std::vector<InclusionQuestion> questions; // file order
    std::vector<KeywordSet> keyword_sets;     // file order
    std::optional<VenueList> venues_se;
    std::optional<VenueList> venues_psy;
    SearchSettings search;
    LlmSettings llm;
    SamplingSettings sampling;

    const InclusionQuestion* find_question(const std::string& tag) const;
    std::vector<InclusionQuestion> screening_questions() const;
    std::vector<std::string> tag_vocabulary() const;
    const VenueList& venues_for(FieldOrigin field) const;
    // Per-set result cap for the side a tag belongs to.
    int cap_for_tag(const std::string& tag) const;
    // z critical value for the configured confidence level.
    double z_value() const;
};

// Parse and validate a configuration document (TOML-like sections, see the
// shipped configs/paper.toml for the full syntax).
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);

// Structural checks: every keyword set resolves to a declared question, tags
// unique, origins match tag prefixes, both venue lists present, run count
// odd, categorization tags not marked as screening questions.
void validate_config(const Config& config);

// Digest of the effective configuration (after flag overrides). Stored in the
// run-store manifest; a mismatch on resume means the artifacts were produced
// under different settings.
std::string config_digest(const Config& config);

} // namespace scoper
