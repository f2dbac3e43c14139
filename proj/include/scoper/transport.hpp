#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace scoper {

// --- search service ----------------------------------------------------------

// Stable content address for one page request. Equal inputs give equal keys
// across processes and platforms; the cache stores one file per key.
std::string search_cache_key(const std::string& endpoint, const std::string& query,
                             int start_index);

class SearchTransport {
public:
    virtual ~SearchTransport() = default;
    // Raw response bytes for one page (sort=relevancy is implied by contract).
    virtual std::string fetch_page(const std::string& query, int start, int count) = 0;
    virtual const std::string& endpoint() const = 0;
};

// Serves responses from a directory of <cache_key> files; never touches the
// network. A cache directory produced by a live run is a valid replay source.
class ReplaySearchTransport : public SearchTransport {
public:
    ReplaySearchTransport(std::filesystem::path dir, std::string endpoint);
    std::string fetch_page(const std::string& query, int start, int count) override;
    const std::string& endpoint() const override { return endpoint_; }

private:
    std::filesystem::path dir_;
    std::string endpoint_;
};

struct RetryPolicy {
    int attempts = 3;
    double backoff_base_seconds = 1.0; // doubled after each failure
};

// HTTP GET against the live service with `query`, `start`, `count`,
// `sort=relevancy`; API key sent as X-ELS-APIKey.
class LiveSearchTransport : public SearchTransport {
public:
    LiveSearchTransport(std::string endpoint, std::string api_key, RetryPolicy retry = {});
    std::string fetch_page(const std::string& query, int start, int count) override;
    const std::string& endpoint() const override { return endpoint_; }

private:
    std::string endpoint_;
    std::string api_key_;
    RetryPolicy retry_;
};

// Write-through cache in front of another transport. With a warm cache a
// re-run issues zero network calls.
class CachingSearchTransport : public SearchTransport {
public:
    CachingSearchTransport(std::filesystem::path cache_dir,
                           std::shared_ptr<SearchTransport> inner);
    std::string fetch_page(const std::string& query, int start, int count) override;
    const std::string& endpoint() const override { return inner_->endpoint(); }

private:
    std::filesystem::path cache_dir_;
    std::shared_ptr<SearchTransport> inner_;
};

// --- LLM -----------------------------------------------------------------------

struct LlmRequest {
    std::string model;
    std::string system_text;
    std::string user_text;
    // Provider sampling settings, recorded verbatim in the run log. Empty map
    // means provider defaults.
    std::map<std::string, std::string> params;
};

// Digest binding a cached response to the exact request that produced it.
std::string llm_request_digest(const LlmRequest& request);

class LlmTransport {
public:
    virtual ~LlmTransport() = default;
    // `slot` is the cache/replay address of this request (e.g.
    // "run-1/batch-0003"); run labels are part of the slot so independent
    // runs never share responses.
    virtual std::string complete(const LlmRequest& request, const std::string& slot) = 0;
};

// Reads <dir>/<slot>.json envelopes: {"request_sha256": "...", "response": "..."}.
// A digest mismatch means the fixture was produced for a different prompt.
class ReplayLlmTransport : public LlmTransport {
public:
    explicit ReplayLlmTransport(std::filesystem::path dir);
    std::string complete(const LlmRequest& request, const std::string& slot) override;

private:
    std::filesystem::path dir_;
};

// Chat-completion-style HTTP endpoint; API key sent as a Bearer token.
class LiveLlmTransport : public LlmTransport {
public:
    LiveLlmTransport(std::string endpoint, std::string api_key, RetryPolicy retry = {});
    std::string complete(const LlmRequest& request, const std::string& slot) override;

private:
    std::string endpoint_;
    std::string api_key_;
    RetryPolicy retry_;
};

// Write-through cache with the same envelope format ReplayLlmTransport reads,
// so an interrupted live run resumes without re-querying completed slots.
class CachingLlmTransport : public LlmTransport {
public:
    CachingLlmTransport(std::filesystem::path cache_dir, std::shared_ptr<LlmTransport> inner);
    std::string complete(const LlmRequest& request, const std::string& slot) override;

private:
    std::filesystem::path cache_dir_;
    std::shared_ptr<LlmTransport> inner_;
};

// Writes one replay envelope; shared by the cache, the fixture generator and
// tests.
void write_llm_envelope(const std::filesystem::path& file, const LlmRequest& request,
                        const std::string& response);

} // namespace scoper
