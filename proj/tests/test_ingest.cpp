#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <nlohmann/json.hpp>
#include <thread>

#include "helpers.hpp"
#include "scoper/errors.hpp"
#include "scoper/ingest.hpp"
#include "scoper/transport.hpp"
#include "scoper/util.hpp"

using namespace scoper;
using json = nlohmann::json;
using testutil::expect_error;

namespace {

std::string page_body(long total, int first_id, int count, const char* title_prefix = "Title ") {
    json entries = json::array();
    for (int i = 0; i < count; ++i) {
        int id = first_id + i;
        entries.push_back({{"eid", "e" + std::to_string(id)},
                           {"dc:title", title_prefix + std::to_string(id)},
                           {"prism:publicationName", "Venue"},
                           {"prism:coverDate", "2021-03-01"}});
    }
    json body{{"search-results",
               {{"opensearch:totalResults", std::to_string(total)}, {"entry", entries}}}};
    return body.dump();
}

// In-memory transport: one body per start index.
class FakeSearchTransport : public SearchTransport {
public:
    explicit FakeSearchTransport(std::map<int, std::string> pages) : pages_(std::move(pages)) {}
    std::string fetch_page(const std::string&, int start, int) override {
        ++calls_;
        auto it = pages_.find(start);
        if (it == pages_.end()) {
            throw PipelineError(ErrorCode::TransportError,
                                "no page at start " + std::to_string(start));
        }
        return it->second;
    }
    const std::string& endpoint() const override { return endpoint_; }
    int calls() const { return calls_; }

private:
    std::map<int, std::string> pages_;
    std::string endpoint_ = "https://fake.test/v1";
    std::atomic<int> calls_{0};
};

} // namespace

TEST_CASE("parse_search_page reads the service schema") {
    SearchPage page = parse_search_page(page_body(42, 1, 2), "qh", 0);
    CHECK(page.total_available == 42);
    CHECK(page.query_hash == "qh");
    REQUIRE(page.entries.size() == 2);
    CHECK(page.entries[0].eid == "e1");
    CHECK(page.entries[0].title == "Title 1");
    CHECK(page.entries[0].venue == "Venue");
    CHECK(page.entries[0].year == 2021);
}

TEST_CASE("totalResults may be a number or a string") {
    json body{{"search-results", {{"opensearch:totalResults", 7}, {"entry", json::array()}}}};
    CHECK(parse_search_page(body.dump(), "qh", 0).total_available == 7);
    json text{{"search-results", {{"opensearch:totalResults", "7"}, {"entry", json::array()}}}};
    CHECK(parse_search_page(text.dump(), "qh", 0).total_available == 7);
}

TEST_CASE("error entries and missing fields") {
    json body{{"search-results",
               {{"opensearch:totalResults", "1"},
                {"entry", json::array({{{"error", "Result set was empty"}}})}}}};
    CHECK(parse_search_page(body.dump(), "qh", 0).entries.empty());

    json partial{{"search-results",
                  {{"opensearch:totalResults", "1"},
                   {"entry", json::array({{{"eid", "e1"}}})}}}};
    SearchPage page = parse_search_page(partial.dump(), "qh", 0);
    REQUIRE(page.entries.size() == 1);
    CHECK(page.entries[0].title.empty());
    CHECK(page.entries[0].year == 0);
}

TEST_CASE("malformed responses are rejected") {
    expect_error(ErrorCode::MalformedResponse, [] { parse_search_page("not json", "qh", 0); });
    expect_error(ErrorCode::MalformedResponse, [] { parse_search_page("{}", "qh", 0); });
    expect_error(ErrorCode::MalformedResponse, [] {
        parse_search_page(R"({"search-results":{"opensearch:totalResults":[1]}})", "qh", 0);
    });
}

TEST_CASE("search cache keys are stable and collision-distinct") {
    // Frozen: a cache written by one build must be readable by the next.
    CHECK(search_cache_key("https://search.example.test/v1",
                           "TITLE-ABS-KEY(\"a\") AND SRCTITLE(\"V\")", 0) ==
          "91c4edd61696cd89d9a180339d9d81b8ecbe56fe2d1fabc18dc0da2433ba01c6");

    std::string base = search_cache_key("E", "Q", 0);
    CHECK(base != search_cache_key("E", "Q", 25));
    CHECK(base != search_cache_key("E", "Q2", 0));
    CHECK(base != search_cache_key("E2", "Q", 0));
    CHECK(base == search_cache_key("E", "Q", 0));
}

TEST_CASE("fetch_all pages to the cap with sequential ranks") {
    std::map<int, std::string> pages{{0, page_body(23, 1, 10)},
                                     {10, page_body(23, 11, 10)},
                                     {20, page_body(23, 21, 3)}};
    FakeSearchTransport transport(pages);
    FetchStats stats;
    std::vector<PaperRecord> records =
        fetch_all(transport, "Q", "#SE_a", 100, 10, 2, &stats);
    REQUIRE(records.size() == 23);
    CHECK(stats.pages_fetched == 3);
    CHECK(stats.dropped_missing_title == 0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].eid == "e" + std::to_string(i + 1));
        REQUIRE(records[i].provenance.size() == 1);
        CHECK(records[i].provenance[0].rank == static_cast<int>(i + 1));
        CHECK(records[i].provenance[0].tag == "#SE_a");
        CHECK(records[i].intersection == Intersection::SE_on_PSY);
    }

    SUBCASE("cap truncates the tail") {
        FakeSearchTransport capped(pages);
        std::vector<PaperRecord> first15 = fetch_all(capped, "Q", "#SE_a", 15, 10, 2);
        REQUIRE(first15.size() == 15);
        CHECK(first15.back().eid == "e15");
        CHECK(first15.back().provenance[0].rank == 15);
        CHECK(capped.calls() == 2); // page at start=20 is never requested
    }

    SUBCASE("single page when total fits") {
        FakeSearchTransport small({{0, page_body(4, 1, 4)}});
        CHECK(fetch_all(small, "Q", "#PSY_b", 100, 10).size() == 4);
        CHECK(small.calls() == 1);
    }
}

TEST_CASE("fetch_all drops records without titles and keeps ranks dense") {
    json entries = json::array();
    entries.push_back({{"eid", "e1"}, {"dc:title", "Kept 1"}});
    entries.push_back({{"eid", "e2"}, {"dc:title", ""}});
    entries.push_back({{"eid", ""}, {"dc:title", "No eid"}});
    entries.push_back({{"eid", "e4"}, {"dc:title", "Kept 2"}});
    json body{{"search-results", {{"opensearch:totalResults", "4"}, {"entry", entries}}}};
    FakeSearchTransport transport({{0, body.dump()}});
    FetchStats stats;
    std::vector<PaperRecord> records = fetch_all(transport, "Q", "#SE_a", 10, 10, 1, &stats);
    REQUIRE(records.size() == 2);
    CHECK(records[0].eid == "e1");
    CHECK(records[1].eid == "e4");
    CHECK(records[0].provenance[0].rank == 1);
    CHECK(records[1].provenance[0].rank == 2); // dropped rows do not consume ranks
    CHECK(stats.dropped_missing_title == 2);
}

TEST_CASE("fetch_all rejects a degenerate cap") {
    FakeSearchTransport transport({{0, page_body(1, 1, 1)}});
    expect_error(ErrorCode::DomainError, [&] { fetch_all(transport, "Q", "#SE_a", 0, 10); });
}

TEST_CASE("replay transport serves recorded pages and fails loudly on misses") {
    testutil::TempDir dir("replay-search");
    std::string endpoint = "https://search.example.test/v1";
    std::string body = page_body(1, 1, 1);
    util::write_file_atomic(dir.path() / search_cache_key(endpoint, "Q", 0), body);

    ReplaySearchTransport replay(dir.path(), endpoint);
    CHECK(replay.fetch_page("Q", 0, 10) == body);
    expect_error(ErrorCode::TransportError, [&] { replay.fetch_page("Q", 10, 10); });
    expect_error(ErrorCode::TransportError, [&] { replay.fetch_page("other", 0, 10); });
}

TEST_CASE("caching transport writes through and then stops calling inner") {
    testutil::TempDir dir("cache-search");
    auto inner = std::make_shared<FakeSearchTransport>(
        std::map<int, std::string>{{0, page_body(1, 1, 1)}});
    CachingSearchTransport caching(dir.path(), inner);

    std::string first = caching.fetch_page("Q", 0, 10);
    CHECK(inner->calls() == 1);
    CHECK(caching.fetch_page("Q", 0, 10) == first);
    CHECK(inner->calls() == 1); // second read is a cache hit

    // A fresh replay transport can consume the cache directory as-is.
    ReplaySearchTransport replay(dir.path(), inner->endpoint());
    CHECK(replay.fetch_page("Q", 0, 10) == first);
}

TEST_CASE("live search transport: params, retry, quota") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::atomic<int> failures_left{0};
    std::string seen_query, seen_sort, seen_key;
    server.Get("/v1", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        if (failures_left > 0) {
            --failures_left;
            res.status = 503;
            return;
        }
        seen_query = req.get_param_value("query");
        seen_sort = req.get_param_value("sort");
        seen_key = req.get_header_value("X-ELS-APIKey");
        int start = std::stoi(req.get_param_value("start"));
        res.set_content(page_body(3, start + 1, 1), "application/json");
    });
    server.Get("/quota", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 429;
    });
    server.Get("/gone", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 404;
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    std::string origin = "http://127.0.0.1:" + std::to_string(port);
    RetryPolicy fast{3, 0.01};

    SUBCASE("success carries the contract parameters") {
        LiveSearchTransport live(origin + "/v1", "secret-key", fast);
        std::string body = live.fetch_page("QUERY X", 0, 25);
        CHECK(parse_search_page(body, "qh", 0).entries.size() == 1);
        CHECK(seen_query == "QUERY X");
        CHECK(seen_sort == "relevancy");
        CHECK(seen_key == "secret-key");
    }
    SUBCASE("5xx retries with backoff until success") {
        failures_left = 2;
        LiveSearchTransport live(origin + "/v1", "k", fast);
        CHECK_NOTHROW(live.fetch_page("Q", 0, 25));
        CHECK(hits == 3);
    }
    SUBCASE("persistent 5xx exhausts attempts") {
        failures_left = 99;
        LiveSearchTransport live(origin + "/v1", "k", fast);
        expect_error(ErrorCode::TransportError, [&] { live.fetch_page("Q", 0, 25); });
        CHECK(hits == 3);
    }
    SUBCASE("429 maps to QuotaExceeded") {
        LiveSearchTransport live(origin + "/quota", "k", fast);
        expect_error(ErrorCode::QuotaExceeded, [&] { live.fetch_page("Q", 0, 25); });
    }
    SUBCASE("other client errors fail immediately") {
        LiveSearchTransport live(origin + "/gone", "k", fast);
        int before = hits;
        expect_error(ErrorCode::TransportError, [&] { live.fetch_page("Q", 0, 25); });
        CHECK(hits == before + 1);
    }

    server.stop();
    thread.join();
}

TEST_CASE("live llm transport: body, auth, content extraction") {
    httplib::Server server;
    std::string seen_auth, seen_body;
    std::atomic<int> failures_left{0};
    server.Post("/chat", [&](const httplib::Request& req, httplib::Response& res) {
        if (failures_left > 0) {
            --failures_left;
            res.status = 500;
            return;
        }
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        json reply{{"choices",
                    json::array({{{"message", {{"role", "assistant"}, {"content", "OUT"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    server.Post("/broken", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json", "text/plain");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    std::string origin = "http://127.0.0.1:" + std::to_string(port);
    RetryPolicy fast{3, 0.01};
    LlmRequest request{"m1", "SYS", "USER", {{"temperature", "0.2"}, {"mode", "strict"}}};

    SUBCASE("success") {
        LiveLlmTransport live(origin + "/chat", "tok", fast);
        CHECK(live.complete(request, "run-1/batch-0000") == "OUT");
        CHECK(seen_auth == "Bearer tok");
        json body = json::parse(seen_body);
        CHECK(body["model"] == "m1");
        CHECK(body["messages"][0]["role"] == "system");
        CHECK(body["messages"][0]["content"] == "SYS");
        CHECK(body["messages"][1]["content"] == "USER");
        CHECK(body["temperature"] == doctest::Approx(0.2)); // numeric passthrough
        CHECK(body["mode"] == "strict");                    // strings stay strings
    }
    SUBCASE("retries after 5xx") {
        failures_left = 1;
        LiveLlmTransport live(origin + "/chat", "tok", fast);
        CHECK(live.complete(request, "s") == "OUT");
    }
    SUBCASE("non-JSON body is MalformedResponse") {
        LiveLlmTransport live(origin + "/broken", "tok", fast);
        expect_error(ErrorCode::MalformedResponse, [&] { live.complete(request, "s"); });
    }

    server.stop();
    thread.join();
}

TEST_CASE("llm replay and caching transports bind responses to request digests") {
    testutil::TempDir dir("llm-replay");
    LlmRequest request{"m", "sys", "user", {}};

    write_llm_envelope(dir.path() / "run-1" / "batch-0000.json", request, "REPLY");
    ReplayLlmTransport replay(dir.path());
    CHECK(replay.complete(request, "run-1/batch-0000") == "REPLY");

    // Same slot, different prompt: the recorded digest no longer matches.
    LlmRequest changed = request;
    changed.user_text = "user CHANGED";
    expect_error(ErrorCode::TransportError, [&] { replay.complete(changed, "run-1/batch-0000"); });
    expect_error(ErrorCode::TransportError, [&] { replay.complete(request, "run-1/missing"); });

    // Caching transport: hit inner once, then replay from disk; a digest
    // mismatch refetches instead of serving the stale entry.
    testutil::TempDir cache_dir("llm-cache");
    class CountingLlm : public LlmTransport {
    public:
        std::string complete(const LlmRequest& r, const std::string&) override {
            ++calls;
            return "live:" + r.user_text;
        }
        int calls = 0;
    };
    auto inner = std::make_shared<CountingLlm>();
    CachingLlmTransport caching(cache_dir.path() / "llm", inner);
    CHECK(caching.complete(request, "run-1/batch-0000") == "live:user");
    CHECK(caching.complete(request, "run-1/batch-0000") == "live:user");
    CHECK(inner->calls == 1);
    CHECK(caching.complete(changed, "run-1/batch-0000") == "live:user CHANGED");
    CHECK(inner->calls == 2);
}

TEST_CASE("llm request digest covers every request field") {
    LlmRequest base{"m", "s", "u", {{"a", "1"}}};
    std::string digest = llm_request_digest(base);
    LlmRequest model = base;
    model.model = "m2";
    LlmRequest system = base;
    system.system_text = "s2";
    LlmRequest user = base;
    user.user_text = "u2";
    LlmRequest params = base;
    params.params["a"] = "2";
    CHECK(digest != llm_request_digest(model));
    CHECK(digest != llm_request_digest(system));
    CHECK(digest != llm_request_digest(user));
    CHECK(digest != llm_request_digest(params));
    CHECK(digest == llm_request_digest(base));
}
