#pragma once

#include <string>
#include <vector>

#include "scoper/corpus.hpp"
#include "scoper/transport.hpp"

namespace scoper {

// One decoded page of search results.
struct SearchPage {
    std::string query_hash;
    int start_index = 0;
    struct Entry {
        std::string eid;
        std::string title;
        std::string venue;
        int year = 0;
    };
    std::vector<Entry> entries;
    long total_available = 0;
};

// Decodes a raw search-service response body. Throws MalformedResponse when
// the body is not the expected search schema.
SearchPage parse_search_page(const std::string& body, const std::string& query_hash,
                             int start_index);

struct FetchStats {
    std::size_t pages_fetched = 0;
    std::size_t dropped_missing_title = 0;
};

// Pages through one query until `cap` records are collected or the service
// runs out of results. Records carry provenance {tag, query_hash, rank} with
// ranks 1..k in service relevance order; entries without titles are dropped
// (title-only screening cannot use them). Up to `max_inflight` page requests
// run concurrently; assembly order is deterministic by start index.
std::vector<PaperRecord> fetch_all(SearchTransport& transport, const std::string& query,
                                   const std::string& tag, int cap, int page_size,
                                   int max_inflight = 4, FetchStats* stats = nullptr);

} // namespace scoper
