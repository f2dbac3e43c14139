#pragma once

#include <string>
#include <string_view>

#include "scoper/config.hpp"

namespace scoper {

// Renders the search-service query for one keyword set against one venue
// list: TITLE-ABS-KEY("k1" OR "k2") AND SRCTITLE("v1" OR "v2"). Keyword and
// venue order is preserved from the configuration.
std::string build_query(const KeywordSet& keyword_set, const VenueList& venue_list);

// Local evaluation of the service's wildcard semantics. A single-word
// pattern matches iff some whitespace-delimited token of `text`, lowercased,
// equals the pattern with each '*' expanded to an arbitrary (possibly empty)
// character run. A multi-word pattern matches iff a contiguous token run
// matches it word by word.
bool keyword_matches(std::string_view pattern, std::string_view text);

// '*'-glob match of a whole token (both sides already lowercased).
bool glob_match(std::string_view pattern, std::string_view token);

} // namespace scoper
