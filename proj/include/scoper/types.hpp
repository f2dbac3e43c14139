#pragma once

#include <string>
#include <string_view>

namespace scoper {

// Which side of the field intersection a paper belongs to. SE_on_PSY means
// "matched SE keywords, published in a PSY venue"; PSY_on_SE the reverse.
enum class Intersection { SE_on_PSY, PSY_on_SE };

enum class Relevance { relevant, not_relevant };

std::string to_string(Intersection intersection);
std::string to_string(Relevance relevance);

// Wire form used in verdict JSON: "relevant" / "not relevant".
std::string relevance_wire_value(Relevance relevance);

Intersection intersection_from_string(const std::string& text);
Relevance relevance_from_string(const std::string& text);

// Tag prefixes partition the vocabulary into the two field origins.
enum class FieldOrigin { SE, PSY };

std::string to_string(FieldOrigin origin);
FieldOrigin origin_from_string(const std::string& text);

// Origin implied by an inclusion-question tag ("#SE_..." / "#PSY_...").
FieldOrigin origin_of_tag(const std::string& tag);

// SE-side keywords are searched against PSY venues and vice versa, so a
// provenance tag fully determines the intersection of the record it found.
Intersection intersection_of_tag(const std::string& tag);

} // namespace scoper
