#include "scoper/query.hpp"

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

namespace {

void append_quoted_list(std::string& out, const std::vector<std::string>& items,
                        const char* what) {
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].find('"') != std::string::npos) {
            throw PipelineError(ErrorCode::InvalidConfig,
                                std::string(what) + " '" + items[i] +
                                    "' contains a double quote; the search grammar's escaping "
                                    "rules are undefined, rejecting");
        }
        if (i > 0) out += " OR ";
        out += '"';
        out += items[i];
        out += '"';
    }
}

} // namespace

std::string build_query(const KeywordSet& keyword_set, const VenueList& venue_list) {
    if (keyword_set.keywords.empty()) {
        throw PipelineError(ErrorCode::EmptyConfig, "keyword set " + keyword_set.tag + " is empty");
    }
    if (venue_list.venues.empty()) {
        throw PipelineError(ErrorCode::EmptyConfig, "venue list is empty");
    }
    std::string out = "TITLE-ABS-KEY(";
    append_quoted_list(out, keyword_set.keywords, "keyword");
    out += ") AND SRCTITLE(";
    append_quoted_list(out, venue_list.venues, "venue");
    out += ")";
    return out;
}

bool glob_match(std::string_view pattern, std::string_view token) {
    // Two-pointer wildcard match with backtracking to the last '*'.
    std::size_t p = 0, t = 0;
    std::size_t star = std::string_view::npos, star_t = 0;
    while (t < token.size()) {
        if (p < pattern.size() && (pattern[p] == token[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            star_t = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++star_t;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

bool keyword_matches(std::string_view pattern, std::string_view text) {
    if (pattern.empty()) {
        throw PipelineError(ErrorCode::DomainError, "keyword pattern must be non-empty");
    }
    const std::vector<std::string> words = util::tokenize(util::to_lower(pattern));
    const std::vector<std::string> tokens = util::tokenize(util::to_lower(text));
    if (words.empty() || tokens.size() < words.size()) return false;
    for (std::size_t start = 0; start + words.size() <= tokens.size(); ++start) {
        bool all = true;
        for (std::size_t j = 0; j < words.size(); ++j) {
            if (!glob_match(words[j], tokens[start + j])) {
                all = false;
                break;
            }
        }
        if (all) return true;
    }
    return false;
}

} // namespace scoper
