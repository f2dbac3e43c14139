#include "scoper/ingest.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <future>
#include <nlohmann/json.hpp>

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

using json = nlohmann::json;

namespace {

long read_total(const json& results) {
    const json& total = results.at("opensearch:totalResults");
    if (total.is_number()) return total.get<long>();
    if (total.is_string()) {
        try {
            return std::stol(total.get<std::string>());
        } catch (const std::exception&) {
        }
    }
    throw PipelineError(ErrorCode::MalformedResponse, "unreadable opensearch:totalResults");
}

int year_from_cover_date(const std::string& date) {
    if (date.size() < 4) return 0;
    try {
        return std::stoi(date.substr(0, 4));
    } catch (const std::exception&) {
        return 0;
    }
}

} // namespace

SearchPage parse_search_page(const std::string& body, const std::string& query_hash,
                             int start_index) {
    json parsed = json::parse(body, nullptr, false);
    if (parsed.is_discarded()) {
        throw PipelineError(ErrorCode::MalformedResponse, "search response is not JSON");
    }
    SearchPage page;
    page.query_hash = query_hash;
    page.start_index = start_index;
    try {
        const json& results = parsed.at("search-results");
        page.total_available = read_total(results);
        if (results.contains("entry")) {
            for (const json& entry : results.at("entry")) {
                // An empty result set is sometimes encoded as one error entry.
                if (entry.contains("error")) continue;
                SearchPage::Entry out;
                out.eid = entry.value("eid", "");
                out.title = entry.value("dc:title", "");
                out.venue = entry.value("prism:publicationName", "");
                out.year = year_from_cover_date(entry.value("prism:coverDate", ""));
                page.entries.push_back(std::move(out));
            }
        }
    } catch (const json::exception& e) {
        throw PipelineError(ErrorCode::MalformedResponse,
                            std::string("unexpected search schema: ") + e.what());
    }
    return page;
}

std::vector<PaperRecord> fetch_all(SearchTransport& transport, const std::string& query,
                                   const std::string& tag, int cap, int page_size,
                                   int max_inflight, FetchStats* stats) {
    if (cap < 1) {
        throw PipelineError(ErrorCode::DomainError, "fetch cap must be >= 1");
    }
    const std::string query_hash = util::short_digest(query);
    const Intersection intersection = intersection_of_tag(tag);

    auto fetch_one = [&](int start) {
        std::string body = transport.fetch_page(query, start, page_size);
        return parse_search_page(body, query_hash, start);
    };

    std::vector<SearchPage> pages;
    SearchPage first = fetch_one(0);
    long total = first.total_available;
    pages.push_back(std::move(first));

    // The first page reveals how many more are needed; fetch the rest in
    // bounded waves, assembled by start index.
    long wanted = std::min<long>(cap, total);
    std::vector<int> starts;
    for (int start = page_size; start < wanted; start += page_size) starts.push_back(start);
    for (std::size_t i = 0; i < starts.size(); i += static_cast<std::size_t>(max_inflight)) {
        std::size_t end = std::min(starts.size(), i + static_cast<std::size_t>(max_inflight));
        std::vector<std::future<SearchPage>> wave;
        for (std::size_t j = i; j < end; ++j) {
            wave.push_back(std::async(std::launch::async, fetch_one, starts[j]));
        }
        for (auto& f : wave) pages.push_back(f.get());
    }
    std::sort(pages.begin(), pages.end(),
              [](const SearchPage& a, const SearchPage& b) { return a.start_index < b.start_index; });

    std::vector<PaperRecord> records;
    records.reserve(static_cast<std::size_t>(wanted > 0 ? wanted : 0));
    int rank = 0;
    for (const SearchPage& page : pages) {
        for (const SearchPage::Entry& entry : page.entries) {
            if (static_cast<int>(records.size()) >= cap) break;
            if (entry.title.empty()) {
                if (stats) ++stats->dropped_missing_title;
                spdlog::warn("dropping record {} with no title (query {})",
                             entry.eid.empty() ? "<no eid>" : entry.eid, query_hash);
                continue;
            }
            if (entry.eid.empty()) {
                if (stats) ++stats->dropped_missing_title;
                spdlog::warn("dropping record without eid (query {})", query_hash);
                continue;
            }
            PaperRecord record;
            record.eid = entry.eid;
            record.title = entry.title;
            record.venue = entry.venue;
            record.year = entry.year;
            record.intersection = intersection;
            record.provenance.push_back({tag, query_hash, ++rank});
            records.push_back(std::move(record));
        }
    }
    if (stats) stats->pages_fetched = pages.size();
    return records;
}

} // namespace scoper
