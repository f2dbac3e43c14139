#include "scoper/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

using json = nlohmann::json;

namespace {

Intersection derive_intersection(const PaperRecord& merged, std::vector<MetadataConflict>& conflicts) {
    std::size_t se_side = 0, psy_side = 0;
    for (const QueryProvenance& p : merged.provenance) {
        (intersection_of_tag(p.tag) == Intersection::SE_on_PSY ? se_side : psy_side)++;
    }
    if (se_side > 0 && psy_side > 0) {
        // Impossible when queries are partitioned by venue list; resolve by
        // majority (ties to SE-on-PSY) and report the anomaly.
        conflicts.push_back({merged.eid, "provenance spans both intersections (" +
                                             std::to_string(se_side) + " SE-side, " +
                                             std::to_string(psy_side) + " PSY-side)"});
        spdlog::warn("eid {}: provenance spans both intersections", merged.eid);
    }
    return se_side >= psy_side ? Intersection::SE_on_PSY : Intersection::PSY_on_SE;
}

} // namespace

DedupResult deduplicate(const std::vector<PaperRecord>& records) {
    for (const PaperRecord& r : records) {
        if (r.eid.empty()) {
            throw PipelineError(ErrorCode::ConflictingMetadata, "record with empty eid");
        }
    }
    DedupResult result;
    std::map<std::string, PaperRecord> by_eid; // ascending eid
    for (const PaperRecord& r : records) {
        auto [it, inserted] = by_eid.emplace(r.eid, r);
        if (inserted) continue;
        PaperRecord& kept = it->second;
        ++result.duplicates_removed;
        if (!r.title.empty() && !kept.title.empty() && r.title != kept.title) {
            result.conflicts.push_back({r.eid, "conflicting titles: \"" + kept.title +
                                                   "\" vs \"" + r.title + "\""});
            spdlog::warn("eid {}: conflicting titles, keeping the longer one", r.eid);
        }
        if (r.title.size() > kept.title.size()) {
            kept.title = r.title;
            kept.venue = r.venue;
            kept.year = r.year;
        }
        kept.provenance.insert(kept.provenance.end(), r.provenance.begin(), r.provenance.end());
    }
    result.records.reserve(by_eid.size());
    for (auto& [eid, record] : by_eid) {
        std::sort(record.provenance.begin(), record.provenance.end());
        record.provenance.erase(std::unique(record.provenance.begin(), record.provenance.end()),
                                record.provenance.end());
        record.intersection = derive_intersection(record, result.conflicts);
        result.records.push_back(std::move(record));
    }
    return result;
}

CorpusCounts corpus_counts(const std::vector<PaperRecord>& corpus) {
    CorpusCounts counts;
    for (const PaperRecord& r : corpus) {
        (r.intersection == Intersection::SE_on_PSY ? counts.se_on_psy : counts.psy_on_se)++;
    }
    return counts;
}

void save_corpus(const std::filesystem::path& path, const std::vector<PaperRecord>& corpus) {
    std::vector<json> lines;
    lines.reserve(corpus.size());
    for (const PaperRecord& r : corpus) {
        json provenance = json::array();
        for (const QueryProvenance& p : r.provenance) {
            provenance.push_back({{"tag", p.tag}, {"query_hash", p.query_hash}, {"rank", p.rank}});
        }
        lines.push_back({{"eid", r.eid},
                         {"title", r.title},
                         {"venue", r.venue},
                         {"year", r.year},
                         {"intersection", to_string(r.intersection)},
                         {"provenance", provenance}});
    }
    util::write_jsonl_atomic(path, lines);
}

std::vector<PaperRecord> load_corpus(const std::filesystem::path& path) {
    std::vector<PaperRecord> corpus;
    for (const json& line : util::read_jsonl(path)) {
        PaperRecord r;
        r.eid = line.at("eid").get<std::string>();
        r.title = line.at("title").get<std::string>();
        r.venue = line.at("venue").get<std::string>();
        r.year = line.at("year").get<int>();
        r.intersection = intersection_from_string(line.at("intersection").get<std::string>());
        for (const json& p : line.at("provenance")) {
            r.provenance.push_back({p.at("tag").get<std::string>(),
                                    p.at("query_hash").get<std::string>(),
                                    p.at("rank").get<int>()});
        }
        corpus.push_back(std::move(r));
    }
    return corpus;
}

} // namespace scoper
