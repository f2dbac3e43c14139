#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "scoper/transport.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <nlohmann/json.hpp>
#include <thread>

#include "httplib.h"
#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct UrlParts {
    std::string origin; // scheme://host[:port]
    std::string path;
};

UrlParts split_url(const std::string& url) {
    std::size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw PipelineError(ErrorCode::InvalidConfig, "endpoint URL needs a scheme: " + url);
    }
    std::size_t path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

void backoff_sleep(const RetryPolicy& retry, int attempt) {
    double seconds = retry.backoff_base_seconds * static_cast<double>(1 << attempt);
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

// Shared retry loop: `call` returns the body or throws; HTTP-level decisions
// are made by the callable via the exceptions below.
struct Retryable : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RateLimited : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename Call>
std::string with_retries(const RetryPolicy& retry, const std::string& what, Call&& call) {
    std::string last_error;
    bool rate_limited = false;
    for (int attempt = 0; attempt < retry.attempts; ++attempt) {
        try {
            return call();
        } catch (const RateLimited& e) {
            rate_limited = true;
            last_error = e.what();
        } catch (const Retryable& e) {
            last_error = e.what();
        }
        if (attempt + 1 < retry.attempts) {
            spdlog::warn("{} failed ({}), retrying", what, last_error);
            backoff_sleep(retry, attempt);
        }
    }
    if (rate_limited) {
        throw PipelineError(ErrorCode::QuotaExceeded, what + ": " + last_error);
    }
    throw PipelineError(ErrorCode::TransportError,
                        what + " failed after " + std::to_string(retry.attempts) +
                            " attempts: " + last_error);
}

} // namespace

// --- search ------------------------------------------------------------------

std::string search_cache_key(const std::string& endpoint, const std::string& query,
                             int start_index) {
    std::string canonical = endpoint;
    canonical += '\n';
    canonical += query;
    canonical += "\nstart=";
    canonical += std::to_string(start_index);
    return util::sha256_hex(canonical);
}

ReplaySearchTransport::ReplaySearchTransport(fs::path dir, std::string endpoint)
    : dir_(std::move(dir)), endpoint_(std::move(endpoint)) {}

std::string ReplaySearchTransport::fetch_page(const std::string& query, int start, int count) {
    (void)count;
    fs::path file = dir_ / search_cache_key(endpoint_, query, start);
    if (!fs::exists(file)) {
        throw PipelineError(ErrorCode::TransportError,
                            "replay miss: no fixture for query '" + query + "' start " +
                                std::to_string(start) + " (" + file.string() + ")");
    }
    return util::read_file(file);
}

LiveSearchTransport::LiveSearchTransport(std::string endpoint, std::string api_key,
                                         RetryPolicy retry)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), retry_(retry) {}

std::string LiveSearchTransport::fetch_page(const std::string& query, int start, int count) {
    UrlParts url = split_url(endpoint_);
    return with_retries(retry_, "search page start=" + std::to_string(start), [&] {
        httplib::Client client(url.origin);
        client.set_read_timeout(30, 0);
        httplib::Params params{{"query", query},
                               {"start", std::to_string(start)},
                               {"count", std::to_string(count)},
                               {"sort", "relevancy"}};
        httplib::Headers headers{{"X-ELS-APIKey", api_key_}, {"Accept", "application/json"}};
        auto res = client.Get(url.path, params, headers);
        if (!res) {
            throw Retryable(httplib::to_string(res.error()));
        }
        if (res->status == 429) {
            throw RateLimited("HTTP 429");
        }
        if (res->status >= 500) {
            throw Retryable("HTTP " + std::to_string(res->status));
        }
        if (res->status != 200) {
            throw PipelineError(ErrorCode::TransportError,
                                "search service returned HTTP " + std::to_string(res->status));
        }
        return res->body;
    });
}

CachingSearchTransport::CachingSearchTransport(fs::path cache_dir,
                                               std::shared_ptr<SearchTransport> inner)
    : cache_dir_(std::move(cache_dir)), inner_(std::move(inner)) {}

std::string CachingSearchTransport::fetch_page(const std::string& query, int start, int count) {
    fs::path file = cache_dir_ / search_cache_key(inner_->endpoint(), query, start);
    if (fs::exists(file)) {
        return util::read_file(file);
    }
    std::string body = inner_->fetch_page(query, start, count);
    util::write_file_atomic(file, body);
    return body;
}

// --- LLM ---------------------------------------------------------------------

std::string llm_request_digest(const LlmRequest& request) {
    std::string canonical = request.model;
    canonical += '\x1f';
    canonical += request.system_text;
    canonical += '\x1f';
    canonical += request.user_text;
    for (const auto& [key, value] : request.params) {
        canonical += '\x1f';
        canonical += key;
        canonical += '=';
        canonical += value;
    }
    return util::sha256_hex(canonical);
}

void write_llm_envelope(const fs::path& file, const LlmRequest& request,
                        const std::string& response) {
    json envelope{{"request_sha256", llm_request_digest(request)}, {"response", response}};
    util::write_file_atomic(file, envelope.dump(2) + "\n");
}

ReplayLlmTransport::ReplayLlmTransport(fs::path dir) : dir_(std::move(dir)) {}

std::string ReplayLlmTransport::complete(const LlmRequest& request, const std::string& slot) {
    fs::path file = dir_ / (slot + ".json");
    if (!fs::exists(file)) {
        throw PipelineError(ErrorCode::TransportError, "replay miss: " + file.string());
    }
    json envelope = json::parse(util::read_file(file), nullptr, false);
    if (envelope.is_discarded() || !envelope.contains("response")) {
        throw PipelineError(ErrorCode::MalformedResponse, "bad replay envelope " + file.string());
    }
    if (envelope.contains("request_sha256") &&
        envelope["request_sha256"].get<std::string>() != llm_request_digest(request)) {
        throw PipelineError(ErrorCode::TransportError,
                            "replay fixture " + file.string() +
                                " was recorded for a different request (prompt or settings "
                                "changed since it was generated)");
    }
    return envelope["response"].get<std::string>();
}

LiveLlmTransport::LiveLlmTransport(std::string endpoint, std::string api_key, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), retry_(retry) {}

std::string LiveLlmTransport::complete(const LlmRequest& request, const std::string& slot) {
    UrlParts url = split_url(endpoint_);
    json body{{"model", request.model},
              {"messages", json::array({json{{"role", "system"}, {"content", request.system_text}},
                                        json{{"role", "user"}, {"content", request.user_text}}})}};
    for (const auto& [key, value] : request.params) {
        // Settings arrive as strings; pass numerics/bools through natively.
        json parsed = json::parse(value, nullptr, false);
        if (!parsed.is_discarded() && (parsed.is_number() || parsed.is_boolean())) {
            body[key] = parsed;
        } else {
            body[key] = value;
        }
    }
    std::string payload = body.dump();
    return with_retries(retry_, "llm completion " + slot, [&] {
        httplib::Client client(url.origin);
        client.set_read_timeout(300, 0);
        httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
        auto res = client.Post(url.path, headers, payload, "application/json");
        if (!res) {
            throw Retryable(httplib::to_string(res.error()));
        }
        if (res->status == 429) {
            throw RateLimited("HTTP 429");
        }
        if (res->status >= 500) {
            throw Retryable("HTTP " + std::to_string(res->status));
        }
        if (res->status != 200) {
            throw PipelineError(ErrorCode::TransportError,
                                "llm endpoint returned HTTP " + std::to_string(res->status) +
                                    ": " + res->body);
        }
        json parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) {
            throw PipelineError(ErrorCode::MalformedResponse, "llm response is not JSON");
        }
        try {
            return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw PipelineError(ErrorCode::MalformedResponse,
                                "llm response missing choices[0].message.content");
        }
    });
}

CachingLlmTransport::CachingLlmTransport(fs::path cache_dir, std::shared_ptr<LlmTransport> inner)
    : cache_dir_(std::move(cache_dir)), inner_(std::move(inner)) {}

std::string CachingLlmTransport::complete(const LlmRequest& request, const std::string& slot) {
    fs::path file = cache_dir_ / (slot + ".json");
    if (fs::exists(file)) {
        // Reuse only if the cached entry matches this exact request.
        json envelope = json::parse(util::read_file(file), nullptr, false);
        if (!envelope.is_discarded() && envelope.contains("response") &&
            envelope.value("request_sha256", "") == llm_request_digest(request)) {
            return envelope["response"].get<std::string>();
        }
        spdlog::warn("stale llm cache entry {}, refetching", file.string());
    }
    std::string response = inner_->complete(request, slot);
    write_llm_envelope(file, request, response);
    return response;
}

} // namespace scoper
