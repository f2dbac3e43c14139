#include "scoper/types.hpp"

#include "scoper/errors.hpp"

namespace scoper {

std::string to_string(Intersection intersection) {
    return intersection == Intersection::SE_on_PSY ? "SE-on-PSY" : "PSY-on-SE";
}

std::string to_string(Relevance relevance) {
    return relevance == Relevance::relevant ? "relevant" : "not_relevant";
}

std::string relevance_wire_value(Relevance relevance) {
    return relevance == Relevance::relevant ? "relevant" : "not relevant";
}

Intersection intersection_from_string(const std::string& text) {
    if (text == "SE-on-PSY" || text == "SE_on_PSY") return Intersection::SE_on_PSY;
    if (text == "PSY-on-SE" || text == "PSY_on_SE") return Intersection::PSY_on_SE;
    throw PipelineError(ErrorCode::InvalidConfig, "unknown intersection '" + text + "'");
}

Relevance relevance_from_string(const std::string& text) {
    if (text == "relevant") return Relevance::relevant;
    if (text == "not relevant" || text == "not_relevant") return Relevance::not_relevant;
    throw PipelineError(ErrorCode::InvalidRelevanceValue, "unknown relevance '" + text + "'");
}

std::string to_string(FieldOrigin origin) {
    return origin == FieldOrigin::SE ? "SE" : "PSY";
}

FieldOrigin origin_from_string(const std::string& text) {
    if (text == "SE") return FieldOrigin::SE;
    if (text == "PSY") return FieldOrigin::PSY;
    throw PipelineError(ErrorCode::InvalidConfig, "unknown field origin '" + text + "'");
}

FieldOrigin origin_of_tag(const std::string& tag) {
    if (tag.rfind("#SE_", 0) == 0) return FieldOrigin::SE;
    if (tag.rfind("#PSY_", 0) == 0) return FieldOrigin::PSY;
    throw PipelineError(ErrorCode::UnknownTag,
                        "tag '" + tag + "' must start with #SE_ or #PSY_");
}

Intersection intersection_of_tag(const std::string& tag) {
    return origin_of_tag(tag) == FieldOrigin::SE ? Intersection::SE_on_PSY
                                                 : Intersection::PSY_on_SE;
}

} // namespace scoper
