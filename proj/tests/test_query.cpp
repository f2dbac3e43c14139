#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "scoper/config.hpp"
#include "scoper/errors.hpp"
#include "scoper/query.hpp"

using namespace scoper;
using testutil::expect_error;

namespace {

// Reference matcher: O(len(p) * len(t)) dynamic program, written independently
// of the production two-pointer algorithm.
bool glob_oracle(const std::string& p, const std::string& t) {
    std::vector<std::vector<char>> dp(p.size() + 1, std::vector<char>(t.size() + 1, 0));
    dp[0][0] = 1;
    for (std::size_t i = 1; i <= p.size(); ++i) {
        if (p[i - 1] == '*') dp[i][0] = dp[i - 1][0];
    }
    for (std::size_t i = 1; i <= p.size(); ++i) {
        for (std::size_t j = 1; j <= t.size(); ++j) {
            if (p[i - 1] == '*') {
                dp[i][j] = dp[i - 1][j] || dp[i][j - 1];
            } else {
                dp[i][j] = dp[i - 1][j - 1] && p[i - 1] == t[j - 1];
            }
        }
    }
    return dp[p.size()][t.size()];
}

std::string random_string(std::mt19937_64& rng, std::size_t max_len, bool with_star) {
    static const char alphabet[] = "abcde";
    std::size_t len = rng() % (max_len + 1);
    std::string out;
    for (std::size_t i = 0; i < len; ++i) {
        if (with_star && rng() % 4 == 0) {
            out.push_back('*');
        } else {
            out.push_back(alphabet[rng() % (sizeof(alphabet) - 1)]);
        }
    }
    return out;
}

} // namespace

TEST_CASE("build_query renders the documented shape") {
    KeywordSet set{"#SE_think", {"*verbal", "think aloud"}};
    VenueList venues{FieldOrigin::PSY, {"Journal of Applied Psychology", "Cognitive Science"}};
    CHECK(build_query(set, venues) ==
          "TITLE-ABS-KEY(\"*verbal\" OR \"think aloud\") AND "
          "SRCTITLE(\"Journal of Applied Psychology\" OR \"Cognitive Science\")");
}

TEST_CASE("build_query preserves configuration order") {
    KeywordSet set{"#SE_a", {"b", "a", "c"}};
    VenueList venues{FieldOrigin::SE, {"Z", "A"}};
    CHECK(build_query(set, venues) == "TITLE-ABS-KEY(\"b\" OR \"a\" OR \"c\") AND "
                                      "SRCTITLE(\"Z\" OR \"A\")");
}

TEST_CASE("build_query rejects degenerate inputs") {
    VenueList venues{FieldOrigin::SE, {"V"}};
    expect_error(ErrorCode::EmptyConfig, [&] { build_query(KeywordSet{"#SE_a", {}}, venues); });
    expect_error(ErrorCode::EmptyConfig,
                 [&] { build_query(KeywordSet{"#SE_a", {"k"}}, VenueList{FieldOrigin::SE, {}}); });
    expect_error(ErrorCode::InvalidConfig,
                 [&] { build_query(KeywordSet{"#SE_a", {"has\"quote"}}, venues); });
}

TEST_CASE("glob_match basics") {
    CHECK(glob_match("abc", "abc"));
    CHECK_FALSE(glob_match("abc", "abcd"));
    CHECK_FALSE(glob_match("abc", "ab"));
    CHECK(glob_match("*", ""));
    CHECK(glob_match("*", "anything"));
    CHECK(glob_match("a*", "a"));
    CHECK(glob_match("a*c", "abbbc"));
    CHECK_FALSE(glob_match("a*c", "abbbd"));
    CHECK(glob_match("*a*", "banana"));
    CHECK(glob_match("**a", "ba"));
    CHECK_FALSE(glob_match("", "x"));
    CHECK(glob_match("", ""));
}

TEST_CASE("prefix wildcard covers the verbal family") {
    // "*verbal" is the published example: it must pick up "verbal",
    // "nonverbal", "intraverbal" and reject mid-word continuations.
    CHECK(keyword_matches("*verbal", "Intraverbal behavior in dyads"));
    CHECK(keyword_matches("*verbal", "Nonverbal cues"));
    CHECK(keyword_matches("*verbal", "verbal protocols"));
    CHECK_FALSE(keyword_matches("*verbal", "verbalization of thought")); // token is "verbalization"
    CHECK(keyword_matches("verbaliz*", "verbalization of thought"));
}

TEST_CASE("multi-word patterns need a contiguous token run") {
    CHECK(keyword_matches("think aloud", "A think aloud study"));
    CHECK(keyword_matches("THINK ALOUD", "a Think Aloud study")); // case-insensitive
    CHECK_FALSE(keyword_matches("think aloud", "think very aloud"));
    CHECK(keyword_matches("mental model*", "on mental models in debugging"));
    CHECK_FALSE(keyword_matches("mental model*", "mental simulation models"));
    CHECK_FALSE(keyword_matches("think aloud", "aloud think"));
    CHECK_FALSE(keyword_matches("a b c", "a b"));
}

TEST_CASE("empty pattern is a domain error") {
    expect_error(ErrorCode::DomainError, [] { keyword_matches("", "text"); });
    // Whitespace-only patterns tokenize to nothing and match nothing.
    CHECK_FALSE(keyword_matches("   ", "text"));
}

TEST_CASE("glob_match agrees with a reference dynamic program") {
    std::mt19937_64 rng(20240817);
    std::size_t matched = 0;
    for (int i = 0; i < 20000; ++i) {
        std::string pattern = random_string(rng, 8, true);
        std::string token = random_string(rng, 10, false);
        bool expected = glob_oracle(pattern, token);
        bool actual = glob_match(pattern, token);
        if (expected) ++matched;
        if (actual != expected) {
            CAPTURE(pattern);
            CAPTURE(token);
            REQUIRE(actual == expected);
        }
    }
    CHECK(matched > 100); // the generator must exercise both outcomes
}

TEST_CASE("keyword_matches agrees with a token-level oracle") {
    std::mt19937_64 rng(911);
    const std::vector<std::string> vocab{"think", "aloud", "verbal", "nonverbal",
                                         "model", "mental", "code"};
    for (int i = 0; i < 4000; ++i) {
        // Random pattern of 1-2 words over the vocabulary with random stars.
        std::size_t words = 1 + rng() % 2;
        std::string pattern;
        std::vector<std::string> pattern_words;
        for (std::size_t w = 0; w < words; ++w) {
            std::string word = vocab[rng() % vocab.size()];
            if (rng() % 3 == 0) word = "*" + word.substr(1);
            if (rng() % 3 == 0) word = word.substr(0, word.size() - 1) + "*";
            pattern_words.push_back(word);
            if (w) pattern += " ";
            pattern += word;
        }
        std::size_t text_len = 1 + rng() % 6;
        std::string text;
        std::vector<std::string> tokens;
        for (std::size_t t = 0; t < text_len; ++t) {
            tokens.push_back(vocab[rng() % vocab.size()]);
            if (t) text += " ";
            text += tokens.back();
        }
        bool expected = false;
        if (tokens.size() >= pattern_words.size()) {
            for (std::size_t s = 0; s + pattern_words.size() <= tokens.size() && !expected; ++s) {
                bool all = true;
                for (std::size_t j = 0; j < pattern_words.size(); ++j) {
                    if (!glob_oracle(pattern_words[j], tokens[s + j])) {
                        all = false;
                        break;
                    }
                }
                expected = all;
            }
        }
        CAPTURE(pattern);
        CAPTURE(text);
        REQUIRE(keyword_matches(pattern, text) == expected);
    }
}
