#include <doctest.h>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "scoper/errors.hpp"
#include "scoper/report.hpp"

using namespace scoper;
using json = nlohmann::json;
using testutil::expect_error;

namespace {

AggregatedVerdict verdict(const std::string& eid, Relevance relevance,
                          std::vector<std::string> tags = {}) {
    AggregatedVerdict v;
    v.eid = eid;
    v.relevance = relevance;
    v.tags = std::move(tags);
    v.vote_detail = {relevance, relevance, relevance};
    v.unanimous = true;
    v.justification = "J";
    return v;
}

// The published stage counts: 16000 collected, 9265 after dedup,
// 792 of 5386 and 883 of 3879 relevant.
RunSummary paper_scale_summary() {
    RunSummary summary;
    summary.model = "mock-model";
    summary.runs = 3;
    summary.config_digest = "deadbeef";

    StageCounts se;
    se.collected = 9000;
    se.deduplicated = 5386;
    se.batched = 5386;
    se.screened = 5386;
    se.relevant = 792;
    StageCounts psy;
    psy.collected = 7000;
    psy.deduplicated = 3879;
    psy.batched = 3879;
    psy.screened = 3879;
    psy.relevant = 883;
    summary.flow.per_intersection = {{Intersection::SE_on_PSY, se},
                                     {Intersection::PSY_on_SE, psy}};

    summary.relevance = {{Intersection::SE_on_PSY, {792, 5386, 792.0 / 5386.0}},
                         {Intersection::PSY_on_SE, {883, 3879, 883.0 / 3879.0}}};
    summary.consistency = {{Intersection::SE_on_PSY, {5386, 4901, 0.91}},
                           {Intersection::PSY_on_SE, {3879, 3569, 0.92}}};
    return summary;
}

} // namespace

TEST_CASE("percent rendering trims trailing zeros") {
    CHECK(percent_string(792.0 / 5386.0) == "14.7");
    CHECK(percent_string(883.0 / 3879.0) == "22.76");
    CHECK(percent_string(0.0) == "0");
    CHECK(percent_string(1.0) == "100");
    CHECK(percent_string(0.5) == "50");
    CHECK(percent_string(0.125) == "12.5");
    CHECK(percent_string(0.2276) == "22.76");
    CHECK(percent_string(0.00004) == "0");   // rounds to 0.00
    CHECK(percent_string(0.999999) == "100"); // rounds to 100.00
}

TEST_CASE("tag distribution normalizes by retrieved papers") {
    std::vector<AggregatedVerdict> aggregated{
        verdict("s1", Relevance::relevant, {"#SE_a", "#SE_b"}),
        verdict("s2", Relevance::relevant, {"#SE_a"}),
        verdict("p1", Relevance::relevant, {"#PSY_c"}),
        verdict("p2", Relevance::not_relevant),
    };
    std::map<std::string, Intersection> homes{{"s1", Intersection::SE_on_PSY},
                                              {"s2", Intersection::SE_on_PSY},
                                              {"p1", Intersection::PSY_on_SE},
                                              {"p2", Intersection::PSY_on_SE}};
    std::map<Intersection, std::size_t> counts{{Intersection::SE_on_PSY, 10},
                                               {Intersection::PSY_on_SE, 20}};
    std::vector<std::string> vocabulary{"#SE_a", "#SE_b", "#PSY_c"};

    auto distribution = tag_distribution(aggregated, homes, counts, vocabulary);
    REQUIRE(distribution.size() == 2);
    const auto& se = distribution.at(Intersection::SE_on_PSY);
    CHECK(se.at("#SE_a") == doctest::Approx(0.2)); // 2 of 10 papers carry it
    CHECK(se.at("#SE_b") == doctest::Approx(0.1));
    CHECK(se.at("#PSY_c") == 0.0); // zero-filled from the vocabulary
    const auto& psy = distribution.at(Intersection::PSY_on_SE);
    CHECK(psy.at("#PSY_c") == doctest::Approx(0.05));
    CHECK(psy.at("#SE_a") == 0.0);

    SUBCASE("a multi-tag paper counts once per tag, not once overall") {
        // s1 contributed to both #SE_a and #SE_b above.
        CHECK(se.at("#SE_a") + se.at("#SE_b") == doctest::Approx(0.3));
    }
    SUBCASE("intersections missing from corpus counts are omitted") {
        std::map<Intersection, std::size_t> se_only{{Intersection::SE_on_PSY, 10}};
        std::vector<AggregatedVerdict> se_verdicts{aggregated[0], aggregated[1]};
        auto partial = tag_distribution(se_verdicts, homes, se_only, vocabulary);
        CHECK(partial.size() == 1);
        CHECK(partial.count(Intersection::SE_on_PSY) == 1);

        std::map<Intersection, std::size_t> zero{{Intersection::SE_on_PSY, 0}};
        CHECK(tag_distribution({}, homes, zero, vocabulary).empty());
    }
    SUBCASE("verdicts outside the corpus are rejected") {
        std::vector<AggregatedVerdict> ghost{verdict("zz", Relevance::relevant, {"#SE_a"})};
        expect_error(ErrorCode::UnknownEid,
                     [&] { tag_distribution(ghost, homes, counts, vocabulary); });
    }
}

TEST_CASE("relevance rates per intersection") {
    std::vector<AggregatedVerdict> aggregated{
        verdict("s1", Relevance::relevant),   verdict("s2", Relevance::relevant),
        verdict("s3", Relevance::relevant),   verdict("s4", Relevance::not_relevant),
        verdict("p1", Relevance::relevant),   verdict("p2", Relevance::not_relevant),
    };
    std::map<std::string, Intersection> homes{
        {"s1", Intersection::SE_on_PSY}, {"s2", Intersection::SE_on_PSY},
        {"s3", Intersection::SE_on_PSY}, {"s4", Intersection::SE_on_PSY},
        {"p1", Intersection::PSY_on_SE}, {"p2", Intersection::PSY_on_SE}};
    std::map<Intersection, std::size_t> counts{{Intersection::SE_on_PSY, 10},
                                               {Intersection::PSY_on_SE, 20}};

    auto rates = relevance_rates(aggregated, homes, counts);
    REQUIRE(rates.size() == 2);
    CHECK(rates.at(Intersection::SE_on_PSY).relevant == 3);
    CHECK(rates.at(Intersection::SE_on_PSY).total == 10);
    CHECK(rates.at(Intersection::SE_on_PSY).rate == doctest::Approx(0.3));
    CHECK(rates.at(Intersection::PSY_on_SE).relevant == 1);
    CHECK(rates.at(Intersection::PSY_on_SE).rate == doctest::Approx(0.05));

    SUBCASE("an intersection with no retrieved papers is omitted") {
        std::map<Intersection, std::size_t> zero{{Intersection::SE_on_PSY, 10},
                                                 {Intersection::PSY_on_SE, 0}};
        std::vector<AggregatedVerdict> se_only(aggregated.begin(), aggregated.begin() + 4);
        CHECK(relevance_rates(se_only, homes, zero).count(Intersection::PSY_on_SE) == 0);
    }
    SUBCASE("a verdict outside the corpus is rejected") {
        std::vector<AggregatedVerdict> ghost{verdict("zz", Relevance::relevant)};
        expect_error(ErrorCode::UnknownEid, [&] { relevance_rates(ghost, homes, counts); });
    }
}

TEST_CASE("stage flow totals recount the per-intersection rows") {
    RunSummary summary = paper_scale_summary();
    StageCounts totals = summary.flow.totals();
    CHECK(totals.collected == 16000);
    CHECK(totals.deduplicated == 9265);
    CHECK(totals.batched == 9265);
    CHECK(totals.screened == 9265);
    CHECK(totals.relevant == 1675);
    CHECK(totals.relevant == 792 + 883);
    CHECK(totals.deduplicated == 5386 + 3879);
}

TEST_CASE("summary json") {
    RunSummary summary = paper_scale_summary();
    std::string doc_text = summary_json(summary);
    json doc = json::parse(doc_text);

    CHECK(doc["model"] == "mock-model");
    CHECK(doc["runs"] == 3);
    CHECK(doc["config_digest"] == "deadbeef");
    CHECK(doc["flow"]["total"]["relevant"] == 1675);
    CHECK(doc["flow"]["total"]["deduplicated"] == 9265);
    CHECK(doc["flow"]["SE-on-PSY"]["relevant"] == 792);
    CHECK(doc["flow"]["PSY-on-SE"]["relevant"] == 883);
    CHECK(doc["relevance"]["SE-on-PSY"]["percent"] == "14.7");
    CHECK(doc["relevance"]["PSY-on-SE"]["percent"] == "22.76");
    CHECK(doc["consistency"]["SE-on-PSY"]["perfect_agreement_rate"] == doctest::Approx(0.91));
    CHECK_FALSE(doc.contains("agreement"));

    SUBCASE("agreement block appears once validation ran") {
        AgreementReport agreement;
        agreement.sample_size = 100;
        agreement.human_unanimous_count = 60;
        agreement.human_unanimous_rate = 0.60;
        agreement.disagreements_before = 44;
        agreement.disagreements_after = 13;
        agreement.disagreement_rate = 0.13;
        summary.agreement = agreement;
        json with = json::parse(summary_json(summary));
        CHECK(with["agreement"]["disagreements_before"] == 44);
        CHECK(with["agreement"]["disagreement_rate"] == doctest::Approx(0.13));
    }
    SUBCASE("identical inputs give identical bytes") {
        CHECK(summary_json(paper_scale_summary()) == doc_text);
    }
}

TEST_CASE("summary text") {
    RunSummary summary = paper_scale_summary();
    std::string text = summary_text(summary);
    CHECK(text.find("Pipeline summary (model mock-model, 3 runs, config deadbeef)") !=
          std::string::npos);
    CHECK(text.find("Stage flow:") != std::string::npos);
    CHECK(text.find("SE-on-PSY") != std::string::npos);
    CHECK(text.find("9265") != std::string::npos);
    CHECK(text.find("792 of 5386 relevant (14.7%)") != std::string::npos);
    CHECK(text.find("883 of 3879 relevant (22.76%)") != std::string::npos);
    CHECK(text.find("total: 1675 of 9265 relevant (18.08%)") != std::string::npos);
    CHECK(text.find("Self-consistency") != std::string::npos);
    CHECK(text.find("0.91 (4901 of 5386)") != std::string::npos);
    CHECK(text.find("Validation:") == std::string::npos);

    SUBCASE("validation section") {
        AgreementReport agreement;
        agreement.sample_size = 100;
        agreement.human_unanimous_count = 60;
        agreement.human_unanimous_rate = 0.60;
        agreement.disagreements_before = 44;
        agreement.disagreements_after = 13;
        agreement.disagreement_rate = 0.13;
        summary.agreement = agreement;
        std::string with = summary_text(summary);
        CHECK(with.find("Validation:") != std::string::npos);
        CHECK(with.find("Final disagreement rate: 0.13") != std::string::npos);
    }
    SUBCASE("byte determinism") {
        CHECK(summary_text(paper_scale_summary()) == text);
    }
}

TEST_CASE("csv exports") {
    std::map<Intersection, std::map<std::string, double>> distribution{
        {Intersection::SE_on_PSY, {{"#SE_a", 0.2}, {"#SE_b", 0.1}}},
        {Intersection::PSY_on_SE, {{"#SE_a", 0.05}}},
    };
    std::map<Intersection, RelevanceRate> rates{
        {Intersection::SE_on_PSY, {792, 5386, 792.0 / 5386.0}},
        {Intersection::PSY_on_SE, {883, 3879, 883.0 / 3879.0}},
    };

    SUBCASE("tags csv groups the two bars of a tag together") {
        std::string csv = tags_csv(distribution);
        CHECK(csv.find("tag,intersection,frequency\n") == 0);
        std::size_t a_se = csv.find("#SE_a,SE-on-PSY,0.200000");
        std::size_t a_psy = csv.find("#SE_a,PSY-on-SE,0.050000");
        std::size_t b_se = csv.find("#SE_b,SE-on-PSY,0.100000");
        REQUIRE(a_se != std::string::npos);
        REQUIRE(a_psy != std::string::npos);
        REQUIRE(b_se != std::string::npos);
        CHECK(a_se < a_psy); // both #SE_a rows precede any #SE_b row
        CHECK(a_psy < b_se);
        CHECK(tags_csv(distribution) == csv);
    }
    SUBCASE("rates csv uses the trimmed percent rendering") {
        std::string csv = rates_csv(rates);
        CHECK(csv.find("intersection,relevant,total,rate\n") == 0);
        CHECK(csv.find("SE-on-PSY,792,5386,14.7\n") != std::string::npos);
        CHECK(csv.find("PSY-on-SE,883,3879,22.76\n") != std::string::npos);
        CHECK(rates_csv(rates) == csv);
    }
    SUBCASE("plot data merges both series") {
        std::string csv = plotdata_csv(distribution, rates);
        CHECK(csv.find("series,x,y\n") == 0);
        CHECK(csv.find("tag_frequency/SE-on-PSY,#SE_a,0.200000\n") != std::string::npos);
        CHECK(csv.find("relevance_rate,SE-on-PSY,0.147048\n") != std::string::npos);
        CHECK(csv.find("relevance_rate,PSY-on-SE,0.227636\n") != std::string::npos);
        CHECK(plotdata_csv(distribution, rates) == csv);
    }
    SUBCASE("fields with commas are quoted") {
        std::map<Intersection, std::map<std::string, double>> odd{
            {Intersection::SE_on_PSY, {{"#SE_a,b", 1.0}}}};
        CHECK(tags_csv(odd).find("\"#SE_a,b\",SE-on-PSY") != std::string::npos);
        CHECK(plotdata_csv(odd, {}).find(",\"#SE_a,b\",") != std::string::npos);
    }
}
