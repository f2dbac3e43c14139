#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "scoper/config.hpp"
#include "scoper/errors.hpp"
#include "scoper/pipeline.hpp"
#include "scoper/store.hpp"
#include "scoper/transport.hpp"

namespace {

using namespace scoper;

struct GlobalOptions {
    std::string config_path;
    std::string store_dir;
    std::string transport = "replay";
    std::string replay_dir;
    std::uint64_t seed = 42;
    bool seed_given = false;
    int runs = 0;       // 0 = use config
    int batch_size = 0; // 0 = use config
    bool force_new_run = false;
};

std::string env_or_empty(const char* name) {
    const char* value = std::getenv(name);
    return value == nullptr ? std::string() : std::string(value);
}

Config load_effective_config(const GlobalOptions& options) {
    Config config = load_config(options.config_path);
    if (options.runs > 0) config.llm.runs = options.runs;
    if (options.batch_size > 0) config.llm.batch_size = options.batch_size;
    validate_config(config);
    return config;
}

std::shared_ptr<SearchTransport> make_search_transport(const GlobalOptions& options,
                                                       const Config& config,
                                                       const RunStore& store) {
    std::shared_ptr<SearchTransport> inner;
    if (options.transport == "replay") {
        if (options.replay_dir.empty()) {
            throw PipelineError(ErrorCode::InvalidConfig,
                                "--transport replay requires --replay-dir");
        }
        inner = std::make_shared<ReplaySearchTransport>(
            std::filesystem::path(options.replay_dir) / "search", config.search.endpoint);
    } else {
        std::string key = env_or_empty("SCOPUS_API_KEY");
        if (key.empty()) {
            throw PipelineError(ErrorCode::InvalidConfig,
                                "--transport live requires SCOPUS_API_KEY in the environment");
        }
        inner = std::make_shared<LiveSearchTransport>(
            config.search.endpoint, key,
            RetryPolicy{config.search.retries, config.search.backoff_base_seconds});
    }
    return std::make_shared<CachingSearchTransport>(store.search_cache_dir(), inner);
}

std::shared_ptr<LlmTransport> make_llm_transport(const GlobalOptions& options,
                                                 const Config& config, const RunStore& store) {
    std::shared_ptr<LlmTransport> inner;
    if (options.transport == "replay") {
        if (options.replay_dir.empty()) {
            throw PipelineError(ErrorCode::InvalidConfig,
                                "--transport replay requires --replay-dir");
        }
        inner = std::make_shared<ReplayLlmTransport>(std::filesystem::path(options.replay_dir) /
                                                     "llm");
    } else {
        std::string key = env_or_empty("LLM_API_KEY");
        if (key.empty()) {
            throw PipelineError(ErrorCode::InvalidConfig,
                                "--transport live requires LLM_API_KEY in the environment");
        }
        inner = std::make_shared<LiveLlmTransport>(
            config.llm.endpoint, key,
            RetryPolicy{config.llm.retries, config.llm.backoff_base_seconds});
    }
    return std::make_shared<CachingLlmTransport>(store.llm_cache_dir(), inner);
}

void print_outcome(const pipeline::StageOutcome& outcome) {
    std::cout << outcome.summary << "\n";
    if (!outcome.detail.empty()) std::cout << "\n" << outcome.detail;
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_pattern("[%^%l%$] %v");

    CLI::App app{"LLM-assisted scoping-review pipeline"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand

    GlobalOptions options;
    app.add_option("--config", options.config_path, "Configuration file")->required();
    app.add_option("--store", options.store_dir, "Run-store directory")->required();
    app.add_option("--transport", options.transport, "Transport backend")
        ->check(CLI::IsMember({"live", "replay"}))
        ->capture_default_str();
    app.add_option("--replay-dir", options.replay_dir,
                   "Recorded-response directory for --transport replay");
    app.add_option("--seed", options.seed, "Sampling seed (recorded in the manifest)")
        ->each([&options](const std::string&) { options.seed_given = true; });
    app.add_option("--runs", options.runs, "Override the configured run count (odd)");
    app.add_option("--batch-size", options.batch_size, "Override the configured batch size");
    app.add_flag("--force-new-run", options.force_new_run,
                 "Discard stage artifacts when the configuration changed");

    CLI::App* cmd_init = app.add_subcommand("init", "Create the run store");
    CLI::App* cmd_fetch = app.add_subcommand("fetch", "Collect search results");
    CLI::App* cmd_dedup = app.add_subcommand("dedup", "Deduplicate the raw corpus");

    std::string run_label;
    CLI::App* cmd_screen = app.add_subcommand("screen", "Screen titles for one run");
    cmd_screen->add_option("--run", run_label, "Run label (run-1 .. run-N)")->required();

    CLI::App* cmd_aggregate =
        app.add_subcommand("aggregate", "Majority-vote the screening runs");

    std::string themes_run_label;
    CLI::App* cmd_themes = app.add_subcommand("themes", "Group justifications into themes");
    cmd_themes->add_option("--run", themes_run_label, "Run label (run-1 .. run-N)")->required();

    CLI::App* cmd_sample = app.add_subcommand("sample", "Draw the validation sample");

    std::string rater_id;
    CLI::App* cmd_label = app.add_subcommand("label", "Blind labeling session");
    cmd_label->add_option("--rater", rater_id, "Rater id")->required();

    std::string decisions_path;
    CLI::App* cmd_consolidate =
        app.add_subcommand("consolidate", "Resolve machine-human disagreements");
    cmd_consolidate->add_option("--decisions", decisions_path,
                                "Decision sheet (default: <store>/decisions.csv)");

    CLI::App* cmd_agree = app.add_subcommand("agree", "Export the agreement report");
    CLI::App* cmd_report = app.add_subcommand("report", "Write summary statistics");

    CLI11_PARSE(app, argc, argv);

    try {
        Config config = load_effective_config(options);

        if (cmd_init->parsed()) {
            if (std::filesystem::exists(std::filesystem::path(options.store_dir) /
                                        "manifest.json")) {
                RunStore store = RunStore::open(options.store_dir, config,
                                                options.force_new_run);
                std::cout << "store already initialized at " << store.root().string() << "\n";
                return 0;
            }
            RunStore store = RunStore::create(options.store_dir, config, options.seed);
            std::cout << "initialized store at " << store.root().string() << " (seed "
                      << store.seed() << ")\n";
            return 0;
        }

        RunStore store = RunStore::open(options.store_dir, config, options.force_new_run);

        if (cmd_fetch->parsed()) {
            StoreLock lock(store.lock_file());
            auto transport = make_search_transport(options, config, store);
            print_outcome(pipeline::fetch(store, config, *transport));
        } else if (cmd_dedup->parsed()) {
            StoreLock lock(store.lock_file());
            print_outcome(pipeline::dedup(store));
        } else if (cmd_screen->parsed()) {
            StoreLock lock(store.lock_file());
            auto transport = make_llm_transport(options, config, store);
            print_outcome(pipeline::screen(store, config, *transport, run_label));
        } else if (cmd_aggregate->parsed()) {
            StoreLock lock(store.lock_file());
            print_outcome(pipeline::aggregate(store, config));
        } else if (cmd_themes->parsed()) {
            StoreLock lock(store.lock_file());
            auto transport = make_llm_transport(options, config, store);
            print_outcome(pipeline::themes(store, config, *transport, themes_run_label));
        } else if (cmd_sample->parsed()) {
            StoreLock lock(store.lock_file());
            std::optional<std::uint64_t> seed_override;
            if (options.seed_given) seed_override = options.seed;
            print_outcome(pipeline::sample(store, config, seed_override));
        } else if (cmd_label->parsed()) {
            StoreLock lock(store.root() / (".lock-label-" + rater_id));
            print_outcome(pipeline::label(store, rater_id, std::cin, std::cout));
        } else if (cmd_consolidate->parsed()) {
            StoreLock lock(store.lock_file());
            std::optional<std::filesystem::path> decisions;
            if (!decisions_path.empty()) decisions = decisions_path;
            print_outcome(pipeline::consolidate(store, config, decisions));
        } else if (cmd_agree->parsed()) {
            StoreLock lock(store.lock_file());
            print_outcome(pipeline::agree(store));
        } else if (cmd_report->parsed()) {
            StoreLock lock(store.lock_file());
            print_outcome(pipeline::report(store, config));
        }
        return 0;
    } catch (const PipelineError& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 1;
    } catch (const std::exception& error) {
        std::cerr << "unexpected error: " << error.what() << "\n";
        return 2;
    }
}
