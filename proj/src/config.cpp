#include "scoper/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <variant>

#include "scoper/errors.hpp"
#include "scoper/util.hpp"

namespace scoper {

namespace {

using Value = std::variant<std::string, long long, double, bool, std::vector<std::string>>;

struct Entry {
    std::string section;
    std::string key;
    Value value;
    std::size_t line = 0;
};

[[noreturn]] void syntax_error(std::size_t line, const std::string& what) {
    throw PipelineError(ErrorCode::InvalidConfig,
                        "config line " + std::to_string(line) + ": " + what);
}

// Strips a trailing comment, honoring quoted strings.
std::string strip_comment(const std::string& line) {
    bool in_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_quote = !in_quote;
        if (c == '#' && !in_quote) return line.substr(0, i);
    }
    return line;
}

std::string parse_quoted(const std::string& raw, std::size_t line, std::size_t& pos) {
    if (raw[pos] != '"') syntax_error(line, "expected opening quote");
    std::string out;
    ++pos;
    while (pos < raw.size()) {
        char c = raw[pos];
        if (c == '\\') {
            if (pos + 1 >= raw.size()) syntax_error(line, "dangling escape");
            char e = raw[pos + 1];
            switch (e) {
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                default: syntax_error(line, std::string("unknown escape \\") + e);
            }
            pos += 2;
            continue;
        }
        if (c == '"') {
            ++pos;
            return out;
        }
        out.push_back(c);
        ++pos;
    }
    syntax_error(line, "unterminated string");
}

std::vector<std::string> parse_array(const std::string& raw, std::size_t line) {
    std::vector<std::string> out;
    std::size_t pos = 1; // past '['
    while (true) {
        while (pos < raw.size() && std::isspace(static_cast<unsigned char>(raw[pos]))) ++pos;
        if (pos >= raw.size()) syntax_error(line, "unterminated array");
        if (raw[pos] == ']') break;
        if (raw[pos] == ',') {
            ++pos;
            continue;
        }
        if (raw[pos] != '"') syntax_error(line, "arrays may contain only quoted strings");
        out.push_back(parse_quoted(raw, line, pos));
    }
    return out;
}

Value parse_value(const std::string& raw, std::size_t line) {
    if (raw.empty()) syntax_error(line, "missing value");
    if (raw.front() == '"') {
        std::size_t pos = 0;
        std::string s = parse_quoted(raw, line, pos);
        if (!util::trim(raw.substr(pos)).empty()) syntax_error(line, "junk after string value");
        return s;
    }
    if (raw.front() == '[') return parse_array(raw, line);
    if (raw == "true") return true;
    if (raw == "false") return false;
    try {
        std::size_t used = 0;
        if (raw.find('.') == std::string::npos && raw.find('e') == std::string::npos) {
            long long v = std::stoll(raw, &used);
            if (used == raw.size()) return v;
        } else {
            double v = std::stod(raw, &used);
            if (used == raw.size()) return v;
        }
    } catch (const std::exception&) {
    }
    syntax_error(line, "cannot parse value '" + raw + "'");
}

std::vector<Entry> parse_document(const std::string& text) {
    std::vector<Entry> entries;
    std::string section;
    std::string pending; // accumulates multi-line array values
    std::string pending_key;
    std::size_t pending_line = 0;
    std::size_t lineno = 0;

    auto bracket_open = [](const std::string& s) {
        bool quote = false;
        int depth = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            char c = s[i];
            if (c == '"' && (i == 0 || s[i - 1] != '\\')) quote = !quote;
            if (quote) continue;
            if (c == '[') ++depth;
            if (c == ']') --depth;
        }
        return depth > 0;
    };

    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        std::string line = text.substr(start, nl == std::string::npos ? nl : nl - start);
        start = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        line = strip_comment(line);
        std::string stripped = util::trim(line);

        if (!pending.empty()) {
            pending += " " + stripped;
            if (bracket_open(pending)) continue;
            entries.push_back({section, pending_key, parse_value(util::trim(pending), pending_line),
                               pending_line});
            pending.clear();
            continue;
        }
        if (stripped.empty()) continue;
        if (stripped.front() == '[' && stripped.back() == ']' &&
            stripped.find('=') == std::string::npos) {
            section = util::trim(stripped.substr(1, stripped.size() - 2));
            if (section.empty()) syntax_error(lineno, "empty section name");
            continue;
        }
        std::size_t eq = std::string::npos;
        {
            bool quote = false;
            for (std::size_t i = 0; i < stripped.size(); ++i) {
                char c = stripped[i];
                if (c == '"' && (i == 0 || stripped[i - 1] != '\\')) quote = !quote;
                if (c == '=' && !quote) {
                    eq = i;
                    break;
                }
            }
        }
        if (eq == std::string::npos) syntax_error(lineno, "expected 'key = value'");
        std::string key = util::trim(stripped.substr(0, eq));
        std::string value = util::trim(stripped.substr(eq + 1));
        if (key.empty()) syntax_error(lineno, "empty key");
        if (!value.empty() && value.front() == '[' && bracket_open(value)) {
            pending = value;
            pending_key = key;
            pending_line = lineno;
            continue;
        }
        entries.push_back({section, key, parse_value(value, lineno), lineno});
    }
    if (!pending.empty()) syntax_error(pending_line, "unterminated array");
    return entries;
}

template <typename T>
T expect(const Entry& entry) {
    if (const T* v = std::get_if<T>(&entry.value)) return *v;
    syntax_error(entry.line, "unexpected type for key '" + entry.key + "'");
}

long long expect_int(const Entry& entry) {
    if (const long long* v = std::get_if<long long>(&entry.value)) return *v;
    syntax_error(entry.line, "key '" + entry.key + "' must be an integer");
}

double expect_number(const Entry& entry) {
    if (const long long* v = std::get_if<long long>(&entry.value)) return static_cast<double>(*v);
    if (const double* v = std::get_if<double>(&entry.value)) return *v;
    syntax_error(entry.line, "key '" + entry.key + "' must be a number");
}

std::string value_as_string(const Entry& entry) {
    if (const std::string* v = std::get_if<std::string>(&entry.value)) return *v;
    if (const long long* v = std::get_if<long long>(&entry.value)) return std::to_string(*v);
    if (const double* v = std::get_if<double>(&entry.value)) {
        std::string s = std::to_string(*v);
        return s;
    }
    if (const bool* v = std::get_if<bool>(&entry.value)) return *v ? "true" : "false";
    syntax_error(entry.line, "key '" + entry.key + "' must be a scalar");
}

} // namespace

const InclusionQuestion* Config::find_question(const std::string& tag) const {
    for (const InclusionQuestion& q : questions) {
        if (q.tag == tag) return &q;
    }
    return nullptr;
}

std::vector<InclusionQuestion> Config::screening_questions() const {
    std::vector<InclusionQuestion> out;
    for (const InclusionQuestion& q : questions) {
        if (q.is_screening_question) out.push_back(q);
    }
    return out;
}

std::vector<std::string> Config::tag_vocabulary() const {
    std::vector<std::string> out;
    out.reserve(questions.size());
    for (const InclusionQuestion& q : questions) out.push_back(q.tag);
    return out;
}

const VenueList& Config::venues_for(FieldOrigin field) const {
    const std::optional<VenueList>& v = field == FieldOrigin::SE ? venues_se : venues_psy;
    if (!v) {
        throw PipelineError(ErrorCode::MissingVenueList,
                            std::string("no venue list for ") + std::string(to_string(field)));
    }
    return *v;
}

int Config::cap_for_tag(const std::string& tag) const {
    return origin_of_tag(tag) == FieldOrigin::SE ? search.se_cap : search.psy_cap;
}

double Config::z_value() const {
    // Standard normal critical values for the supported confidence levels.
    if (std::abs(sampling.confidence - 0.90) < 1e-9) return 1.645;
    if (std::abs(sampling.confidence - 0.95) < 1e-9) return 1.96;
    if (std::abs(sampling.confidence - 0.99) < 1e-9) return 2.576;
    throw PipelineError(ErrorCode::InvalidConfig,
                        "unsupported confidence level (use 0.90, 0.95 or 0.99)");
}

Config parse_config(const std::string& text) {
    Config config;
    struct QuestionDraft {
        InclusionQuestion q;
        bool origin_given = false;
    };
    std::vector<std::pair<std::string, QuestionDraft>> question_drafts; // section-name order
    std::vector<std::pair<std::string, std::vector<std::string>>> keyword_drafts;

    auto question_draft = [&](const std::string& name) -> QuestionDraft& {
        for (auto& [n, d] : question_drafts) {
            if (n == name) return d;
        }
        question_drafts.push_back({name, {}});
        question_drafts.back().second.q.tag = "#" + name;
        return question_drafts.back().second;
    };

    for (const Entry& entry : parse_document(text)) {
        const std::string& section = entry.section;
        if (section == "search") {
            if (entry.key == "endpoint") config.search.endpoint = expect<std::string>(entry);
            else if (entry.key == "se_cap") config.search.se_cap = static_cast<int>(expect_int(entry));
            else if (entry.key == "psy_cap") config.search.psy_cap = static_cast<int>(expect_int(entry));
            else if (entry.key == "page_size") config.search.page_size = static_cast<int>(expect_int(entry));
            else if (entry.key == "max_inflight") config.search.max_inflight = static_cast<int>(expect_int(entry));
            else if (entry.key == "retries") config.search.retries = static_cast<int>(expect_int(entry));
            else if (entry.key == "backoff_seconds") config.search.backoff_base_seconds = expect_number(entry);
            else syntax_error(entry.line, "unknown [search] key '" + entry.key + "'");
        } else if (section == "llm") {
            if (entry.key == "endpoint") config.llm.endpoint = expect<std::string>(entry);
            else if (entry.key == "model") config.llm.model = expect<std::string>(entry);
            else if (entry.key == "runs") config.llm.runs = static_cast<int>(expect_int(entry));
            else if (entry.key == "batch_size") config.llm.batch_size = static_cast<int>(expect_int(entry));
            else if (entry.key == "theme_chunk") config.llm.theme_chunk = static_cast<int>(expect_int(entry));
            else if (entry.key == "max_concurrent_batches") config.llm.max_concurrent_batches = static_cast<int>(expect_int(entry));
            else if (entry.key == "retries") config.llm.retries = static_cast<int>(expect_int(entry));
            else if (entry.key == "backoff_seconds") config.llm.backoff_base_seconds = expect_number(entry);
            else syntax_error(entry.line, "unknown [llm] key '" + entry.key + "'");
        } else if (section == "llm.settings") {
            config.llm.sampling_params[entry.key] = value_as_string(entry);
        } else if (section == "sampling") {
            if (entry.key == "size") config.sampling.size = static_cast<int>(expect_int(entry));
            else if (entry.key == "confidence") config.sampling.confidence = expect_number(entry);
            else syntax_error(entry.line, "unknown [sampling] key '" + entry.key + "'");
        } else if (section.rfind("questions.", 0) == 0) {
            QuestionDraft& draft = question_draft(section.substr(10));
            if (entry.key == "text") draft.q.question = expect<std::string>(entry);
            else if (entry.key == "origin") {
                draft.q.origin = origin_from_string(expect<std::string>(entry));
                draft.origin_given = true;
            } else if (entry.key == "screening") draft.q.is_screening_question = expect<bool>(entry);
            else syntax_error(entry.line, "unknown question key '" + entry.key + "'");
        } else if (section.rfind("keywords.", 0) == 0) {
            std::string name = section.substr(9);
            if (entry.key != "patterns") syntax_error(entry.line, "keyword sections take 'patterns'");
            keyword_drafts.emplace_back("#" + name, expect<std::vector<std::string>>(entry));
        } else if (section == "venues.SE" || section == "venues.PSY") {
            if (entry.key != "titles") syntax_error(entry.line, "venue sections take 'titles'");
            VenueList list;
            list.field = section == "venues.SE" ? FieldOrigin::SE : FieldOrigin::PSY;
            list.venues = expect<std::vector<std::string>>(entry);
            (list.field == FieldOrigin::SE ? config.venues_se : config.venues_psy) = list;
        } else {
            syntax_error(entry.line, "unknown section [" + section + "]");
        }
    }

    for (auto& [name, draft] : question_drafts) {
        if (!draft.origin_given) draft.q.origin = origin_of_tag(draft.q.tag);
        config.questions.push_back(draft.q);
    }
    for (auto& [tag, patterns] : keyword_drafts) {
        config.keyword_sets.push_back({tag, patterns});
    }

    validate_config(config);
    return config;
}

Config load_config(const std::filesystem::path& path) {
    return parse_config(util::read_file(path));
}

void validate_config(const Config& config) {
    std::set<std::string> seen;
    for (const InclusionQuestion& q : config.questions) {
        if (!seen.insert(q.tag).second) {
            throw PipelineError(ErrorCode::DuplicateTag, "question tag " + q.tag);
        }
        if (q.question.empty()) {
            throw PipelineError(ErrorCode::InvalidConfig, "question " + q.tag + " has no text");
        }
        if (origin_of_tag(q.tag) != q.origin) {
            throw PipelineError(ErrorCode::InvalidConfig,
                                "origin of " + q.tag + " does not match its prefix");
        }
        bool categorization = q.tag == "#SE_human" || q.tag == "#PSY_human";
        if (categorization && q.is_screening_question) {
            throw PipelineError(ErrorCode::InvalidConfig,
                                q.tag + " is a categorization tag, not a screening question");
        }
    }
    std::set<std::string> keyword_tags;
    for (const KeywordSet& set : config.keyword_sets) {
        if (!config.find_question(set.tag)) {
            throw PipelineError(ErrorCode::UnknownTag,
                                "keyword set for undeclared tag " + set.tag);
        }
        if (!keyword_tags.insert(set.tag).second) {
            throw PipelineError(ErrorCode::DuplicateTag, "keyword set " + set.tag);
        }
        if (set.keywords.empty()) {
            throw PipelineError(ErrorCode::EmptyConfig, "keyword set " + set.tag + " is empty");
        }
        for (const std::string& k : set.keywords) {
            if (util::trim(k).empty()) {
                throw PipelineError(ErrorCode::EmptyConfig,
                                    "empty pattern in keyword set " + set.tag);
            }
        }
    }
    if (!config.venues_se) {
        throw PipelineError(ErrorCode::MissingVenueList, "missing [venues.SE]");
    }
    if (!config.venues_psy) {
        throw PipelineError(ErrorCode::MissingVenueList, "missing [venues.PSY]");
    }
    for (const std::optional<VenueList>& list : {config.venues_se, config.venues_psy}) {
        if (list->venues.empty()) {
            throw PipelineError(ErrorCode::EmptyConfig, "empty venue list");
        }
        std::set<std::string> unique(list->venues.begin(), list->venues.end());
        if (unique.size() != list->venues.size()) {
            throw PipelineError(ErrorCode::InvalidConfig, "duplicate venue in list");
        }
    }
    if (config.llm.runs < 1 || config.llm.runs % 2 == 0) {
        throw PipelineError(ErrorCode::EvenRunCount,
                            "llm.runs must be odd (got " + std::to_string(config.llm.runs) + ")");
    }
    if (config.llm.batch_size < 1) {
        throw PipelineError(ErrorCode::InvalidConfig, "llm.batch_size must be >= 1");
    }
    if (config.search.page_size < 1 || config.search.se_cap < 1 || config.search.psy_cap < 1) {
        throw PipelineError(ErrorCode::InvalidConfig, "search caps and page size must be >= 1");
    }
    if (config.sampling.size < 1) {
        throw PipelineError(ErrorCode::InvalidConfig, "sampling.size must be >= 1");
    }
    config.z_value(); // throws on unsupported confidence
}

std::string config_digest(const Config& config) {
    nlohmann::json doc;
    doc["questions"] = nlohmann::json::array();
    for (const InclusionQuestion& q : config.questions) {
        doc["questions"].push_back({{"tag", q.tag},
                                    {"question", q.question},
                                    {"origin", q.origin == FieldOrigin::SE ? "SE" : "PSY"},
                                    {"screening", q.is_screening_question}});
    }
    doc["keywords"] = nlohmann::json::array();
    for (const KeywordSet& set : config.keyword_sets) {
        doc["keywords"].push_back({{"tag", set.tag}, {"patterns", set.keywords}});
    }
    doc["venues"] = {{"SE", config.venues_se ? config.venues_se->venues
                                             : std::vector<std::string>{}},
                     {"PSY", config.venues_psy ? config.venues_psy->venues
                                               : std::vector<std::string>{}}};
    doc["search"] = {{"endpoint", config.search.endpoint},
                     {"se_cap", config.search.se_cap},
                     {"psy_cap", config.search.psy_cap},
                     {"page_size", config.search.page_size}};
    doc["llm"] = {{"endpoint", config.llm.endpoint},
                  {"model", config.llm.model},
                  {"runs", config.llm.runs},
                  {"batch_size", config.llm.batch_size},
                  {"theme_chunk", config.llm.theme_chunk},
                  {"sampling_params", config.llm.sampling_params}};
    doc["sampling"] = {{"size", config.sampling.size},
                       {"confidence", config.sampling.confidence}};
    return util::sha256_hex(doc.dump());
}

} // namespace scoper
