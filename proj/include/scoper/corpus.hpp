#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scoper/types.hpp"

namespace scoper {

// Where one query hit came from: the inclusion-question tag whose keyword
// set produced the query, a digest of the executed query string, and the
// 1-based position in that query's relevance-sorted result list.
struct QueryProvenance {
    std::string tag;
    std::string query_hash;
    int rank = 1;

    friend auto operator<=>(const QueryProvenance&, const QueryProvenance&) = default;
};

struct PaperRecord {
    std::string eid;
    std::string title;
    std::string venue;
    int year = 0;
    Intersection intersection = Intersection::SE_on_PSY;
    std::vector<QueryProvenance> provenance; // kept sorted and unique

    friend bool operator==(const PaperRecord&, const PaperRecord&) = default;
};

// Non-fatal anomaly observed while merging duplicate eids.
struct MetadataConflict {
    std::string eid;
    std::string detail;
};

struct DedupResult {
    std::vector<PaperRecord> records; // ascending eid
    std::vector<MetadataConflict> conflicts;
    std::size_t duplicates_removed = 0;
};

// Collapses records to one per eid. Provenance sets are unioned, the longer
// title wins on conflict (logged), and the intersection is recomputed from
// the merged provenance. Output order is ascending eid regardless of input
// order.
DedupResult deduplicate(const std::vector<PaperRecord>& records);

struct CorpusCounts {
    std::size_t se_on_psy = 0;
    std::size_t psy_on_se = 0;
    std::size_t total() const { return se_on_psy + psy_on_se; }
    std::size_t for_intersection(Intersection i) const {
        return i == Intersection::SE_on_PSY ? se_on_psy : psy_on_se;
    }
};

CorpusCounts corpus_counts(const std::vector<PaperRecord>& corpus);

// JSON Lines persistence; field names are part of the artifact contract.
void save_corpus(const std::filesystem::path& path, const std::vector<PaperRecord>& corpus);
std::vector<PaperRecord> load_corpus(const std::filesystem::path& path);

} // namespace scoper
