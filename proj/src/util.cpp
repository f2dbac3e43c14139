#include "scoper/util.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "scoper/errors.hpp"

namespace scoper::util {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw PipelineError(ErrorCode::IoError, "SHA-256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0x0f]);
    }
    return out;
}

std::string short_digest(std::string_view data) {
    return sha256_hex(data).substr(0, 16);
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return std::string(text.substr(begin, end - begin));
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw PipelineError(ErrorCode::IoError, "cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw PipelineError(ErrorCode::IoError, "cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw PipelineError(ErrorCode::IoError, "short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw PipelineError(ErrorCode::IoError, "cannot read " + path.string());
    }
    std::vector<json> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json record = json::parse(line, nullptr, false);
        if (record.is_discarded()) {
            throw PipelineError(ErrorCode::IoError, "invalid JSON at " + path.string() + ":" +
                                                        std::to_string(lineno));
        }
        records.push_back(std::move(record));
    }
    return records;
}

void append_jsonl(const fs::path& path, const json& record) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw PipelineError(ErrorCode::IoError, "cannot append to " + path.string());
    }
    out << record.dump() << '\n';
}

void write_jsonl_atomic(const fs::path& path, const std::vector<json>& records) {
    std::string buf;
    for (const json& record : records) {
        buf += record.dump();
        buf += '\n';
    }
    write_file_atomic(path, buf);
}

json parse_model_json(const std::string& raw) {
    json parsed = json::parse(raw, nullptr, false);
    if (!parsed.is_discarded()) return parsed;

    std::string text = trim(raw);
    if (text.rfind("```", 0) == 0) {
        std::size_t first_newline = text.find('\n');
        if (first_newline != std::string::npos) text = text.substr(first_newline + 1);
        std::size_t closing = text.rfind("```");
        if (closing != std::string::npos) text = text.substr(0, closing);
    }
    std::size_t open = text.find('{');
    std::size_t close = text.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open) {
        parsed = json::parse(text.substr(open, close - open + 1), nullptr, false);
        if (!parsed.is_discarded()) return parsed;
    }
    throw PipelineError(ErrorCode::UnparsableOutput,
                        "model output is not JSON (after one repair attempt)");
}

std::string csv_field(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') quoted += "\"\"";
        else quoted += c;
    }
    quoted += '"';
    return quoted;
}

std::string iso8601_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    if (bound == 0) {
        throw PipelineError(ErrorCode::DomainError, "uniform_below: bound must be positive");
    }
    const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
    std::uint64_t value = rng();
    while (value >= limit) value = rng();
    return value % bound;
}

std::vector<std::size_t> sample_without_replacement(std::mt19937_64& rng, std::size_t n,
                                                    std::size_t k) {
    if (k > n) {
        throw PipelineError(ErrorCode::DomainError, "sample size exceeds population");
    }
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> drawn;
    drawn.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
        std::swap(pool[i], pool[j]);
        drawn.push_back(pool[i]);
    }
    return drawn;
}

} // namespace scoper::util
