#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "scoper/config.hpp"

namespace scoper {

// Exclusive writer lock on a store directory (lock file, RAII release).
// A crash can leave the file behind; the error message names it so the
// operator can remove it after checking no other process is running.
class StoreLock {
public:
    explicit StoreLock(const std::filesystem::path& lock_file);
    ~StoreLock();

    StoreLock(const StoreLock&) = delete;
    StoreLock& operator=(const StoreLock&) = delete;

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

// On-disk layout of one review run: manifest, caches, and per-stage
// artifacts. The manifest pins the config digest; reopening with a changed
// configuration fails with ConfigMismatch unless the caller forces a fresh
// run (which clears stage artifacts but keeps the transport caches).
class RunStore {
public:
    // Creates the store directory and manifest.
    static RunStore create(const std::filesystem::path& root, const Config& config,
                           std::uint64_t seed);
    // Opens an existing store (MissingUpstream when not initialized),
    // verifying the config digest.
    static RunStore open(const std::filesystem::path& root, const Config& config,
                         bool force_new_run = false);

    const std::filesystem::path& root() const { return root_; }
    std::uint64_t seed() const;
    std::string config_digest() const;

    nlohmann::json& manifest() { return manifest_; }
    const nlohmann::json& manifest() const { return manifest_; }
    void save_manifest();

    bool stage_done(const std::string& stage) const;
    void mark_stage_done(const std::string& stage);

    // Layout.
    std::filesystem::path lock_file() const { return root_ / ".lock"; }
    std::filesystem::path manifest_path() const { return root_ / "manifest.json"; }
    std::filesystem::path search_cache_dir() const { return root_ / "cache" / "search"; }
    std::filesystem::path llm_cache_dir() const { return root_ / "cache" / "llm"; }
    std::filesystem::path raw_corpus_path() const { return root_ / "corpus.raw.jsonl"; }
    std::filesystem::path conflicts_path() const { return root_ / "conflicts.jsonl"; }
    std::filesystem::path corpus_path() const { return root_ / "corpus.jsonl"; }
    std::filesystem::path runs_dir() const { return root_ / "runs"; }
    std::filesystem::path run_log_path(const std::string& run_label) const {
        return runs_dir() / (run_label + ".jsonl");
    }
    std::filesystem::path aggregated_path() const { return root_ / "aggregated.jsonl"; }
    std::filesystem::path themes_dir() const { return root_ / "themes"; }
    std::filesystem::path sample_path() const { return root_ / "sample.json"; }
    std::filesystem::path label_log_path() const { return root_ / "labels.jsonl"; }
    std::filesystem::path disagreements_path() const { return root_ / "disagreements.json"; }
    std::filesystem::path decisions_path() const { return root_ / "decisions.csv"; }
    std::filesystem::path consolidation_path() const { return root_ / "consolidation.json"; }
    std::filesystem::path agreement_json_path() const { return root_ / "agreement.json"; }
    std::filesystem::path agreement_text_path() const { return root_ / "agreement.txt"; }
    std::filesystem::path report_dir() const { return root_ / "report"; }

private:
    RunStore(std::filesystem::path root, nlohmann::json manifest);

    std::filesystem::path root_;
    nlohmann::json manifest_;
};

} // namespace scoper
