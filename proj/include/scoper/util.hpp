#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace scoper::util {

using json = nlohmann::json;

// --- digests ---------------------------------------------------------------

// Hex-encoded SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

// Short (16 hex chars) truncated SHA-256, used where a compact stable id is
// enough (query hashes, sample ids).
std::string short_digest(std::string_view data);

// --- strings ---------------------------------------------------------------

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);

// Whitespace-delimited tokens of `text`.
std::vector<std::string> tokenize(std::string_view text);

// --- filesystem ------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);

// Write via a temp file in the same directory, then rename. A crash never
// leaves a half-written artifact behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// --- JSON Lines ------------------------------------------------------------

std::vector<json> read_jsonl(const std::filesystem::path& path);
void append_jsonl(const std::filesystem::path& path, const json& record);
void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<json>& records);

// --- model output ------------------------------------------------------------

// Parse model output as JSON with one bounded repair attempt (strip markdown
// fences, then fall back to the outermost brace span). Throws
// UnparsableOutput when nothing parses.
json parse_model_json(const std::string& raw);

// Escape one CSV field (RFC 4180 quoting when needed).
std::string csv_field(std::string_view field);

// --- time ------------------------------------------------------------------

// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string iso8601_now();

// --- deterministic randomness ----------------------------------------------

// Uniform integer in [0, bound) via rejection sampling on the raw engine
// output. std::uniform_int_distribution is implementation-defined, which
// would break the bit-reproducibility contract on seeded draws.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

// Draw k distinct indices from [0, n) without replacement (partial
// Fisher-Yates); result order is the draw order.
std::vector<std::size_t> sample_without_replacement(std::mt19937_64& rng, std::size_t n,
                                                    std::size_t k);

} // namespace scoper::util
