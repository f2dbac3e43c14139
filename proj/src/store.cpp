#include "scoper/store.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>

#include <spdlog/spdlog.h>

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// True when the lock file names a process that no longer exists (a previous
// run was killed); such locks are safe to break.
bool lock_is_stale(const fs::path& path) {
    std::string content;
    try {
        content = util::read_file(path);
    } catch (const PipelineError&) {
        return false;
    }
    long pid = 0;
    try {
        pid = std::stol(util::trim(content));
    } catch (const std::exception&) {
        return false;
    }
    if (pid <= 0) return false;
    return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
}

} // namespace

StoreLock::StoreLock(const fs::path& lock_file) : path_(lock_file) {
    if (!path_.parent_path().empty()) fs::create_directories(path_.parent_path());
    for (int attempt = 0; attempt < 2; ++attempt) {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ >= 0) break;
        if (attempt == 0 && lock_is_stale(path_)) {
            spdlog::warn("breaking stale lock {} (owner is gone)", path_.string());
            std::error_code ec;
            fs::remove(path_, ec);
            continue;
        }
        throw PipelineError(ErrorCode::StoreLocked,
                            "another process holds " + path_.string() +
                                " (remove it if no other run is active)");
    }
    std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] ssize_t written = ::write(fd_, pid.data(), pid.size());
}

StoreLock::~StoreLock() {
    if (fd_ >= 0) {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
}

RunStore::RunStore(fs::path root, json manifest)
    : root_(std::move(root)), manifest_(std::move(manifest)) {}

RunStore RunStore::create(const fs::path& root, const Config& config, std::uint64_t seed) {
    fs::create_directories(root);
    json manifest{{"config_digest", scoper::config_digest(config)},
                  {"model", config.llm.model},
                  {"runs", config.llm.runs},
                  {"batch_size", config.llm.batch_size},
                  {"sampling_size", config.sampling.size},
                  {"seed", seed},
                  {"created_at", util::iso8601_now()},
                  {"stages", json::object()},
                  {"counts", json::object()}};
    RunStore store(root, std::move(manifest));
    store.save_manifest();
    return store;
}

RunStore RunStore::open(const fs::path& root, const Config& config, bool force_new_run) {
    fs::path manifest_path = root / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw PipelineError(ErrorCode::MissingUpstream,
                            root.string() + " is not an initialized store (run `init` first)");
    }
    json manifest = json::parse(util::read_file(manifest_path), nullptr, false);
    if (manifest.is_discarded() || !manifest.is_object()) {
        throw PipelineError(ErrorCode::IoError, "corrupt manifest at " + manifest_path.string());
    }

    std::string expected = scoper::config_digest(config);
    std::string recorded = manifest.value("config_digest", "");
    if (recorded != expected) {
        if (!force_new_run) {
            throw PipelineError(ErrorCode::ConfigMismatch,
                                "store was created under a different configuration (" +
                                    recorded.substr(0, 12) + "... vs " + expected.substr(0, 12) +
                                    "...); pass --force-new-run to discard its artifacts");
        }
        spdlog::warn("configuration changed; discarding stage artifacts in {} (caches kept)",
                     root.string());
        std::uint64_t seed = manifest.value("seed", std::uint64_t{42});
        for (const char* name :
             {"corpus.raw.jsonl", "conflicts.jsonl", "corpus.jsonl", "aggregated.jsonl",
              "sample.json", "labels.jsonl", "disagreements.json", "decisions.csv",
              "consolidation.json", "agreement.json", "agreement.txt"}) {
            fs::remove(root / name);
        }
        for (const char* dir : {"runs", "themes", "report"}) {
            fs::remove_all(root / dir);
        }
        return create(root, config, seed);
    }
    return RunStore(root, std::move(manifest));
}

std::uint64_t RunStore::seed() const { return manifest_.value("seed", std::uint64_t{42}); }

std::string RunStore::config_digest() const { return manifest_.value("config_digest", ""); }

void RunStore::save_manifest() {
    util::write_file_atomic(manifest_path(), manifest_.dump(2) + "\n");
}

bool RunStore::stage_done(const std::string& stage) const {
    return manifest_.contains("stages") && manifest_["stages"].value(stage, false);
}

void RunStore::mark_stage_done(const std::string& stage) {
    manifest_["stages"][stage] = true;
    save_manifest();
}

} // namespace scoper
