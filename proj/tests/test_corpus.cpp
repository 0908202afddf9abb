#include <doctest.h>

#include <cmath>

#include "reportdpo/corpus.hpp"
#include "reportdpo/error.hpp"
#include "reportdpo/priordetect.hpp"

using namespace reportdpo;
using namespace reportdpo::corpus;

TEST_CASE("parse_report extracts findings and impression") {
    auto r = parse_report("FINDINGS: Lungs clear. IMPRESSION: Normal.");
    REQUIRE(r.findings);
    REQUIRE(r.impression);
    CHECK(*r.findings == "Lungs clear.");
    CHECK(*r.impression == "Normal.");
    CHECK_FALSE(r.indication);
}

TEST_CASE("conclusion and summary fill the impression") {
    auto r = parse_report("CONCLUSION: No acute process.");
    CHECK_FALSE(r.findings);
    REQUIRE(r.impression);
    CHECK(*r.impression == "No acute process.");

    auto s = parse_report("summary:   Stable   chest.");
    REQUIRE(s.impression);
    CHECK(*s.impression == "Stable chest.");
}

TEST_CASE("empty or headerless text gives no sections") {
    for (const char* raw : {"", "just some words with no header"}) {
        auto r = parse_report(raw);
        CHECK_FALSE(r.findings);
        CHECK_FALSE(r.impression);
        CHECK_FALSE(r.indication);
        CHECK_FALSE(r.comparison);
    }
}

TEST_CASE("first impression-class header wins") {
    auto r = parse_report("IMPRESSION: First. CONCLUSION: Second.");
    REQUIRE(r.impression);
    CHECK(*r.impression == "First.");
}

TEST_CASE("context sections and terminating headers") {
    auto r = parse_report(
        "INDICATION: Cough.\nCOMPARISON: None.\nTECHNIQUE: PA and lateral.\nFindings: Heart normal.\n"
        "Impression: No acute process.");
    CHECK(r.indication.value() == "Cough.");
    CHECK(r.comparison.value() == "None.");
    CHECK(r.findings.value() == "Heart normal.");
    CHECK(r.impression.value() == "No acute process.");
}

TEST_CASE("render then parse is the identity") {
    RadiologyReport r{"s1", "Lungs clear. Heart normal.", "Normal.", "Cough.", std::nullopt};
    auto back = parse_report(render_report(r), "s1");
    CHECK(back == r);
}

TEST_CASE("filter_split follows the split rules") {
    RadiologyReport findings_only{"a", "Lungs clear.", std::nullopt, std::nullopt, std::nullopt};
    RadiologyReport both{"b", "Lungs clear.", "Normal.", std::nullopt, std::nullopt};
    RadiologyReport neither{"c", std::nullopt, std::nullopt, "Cough.", std::nullopt};
    std::vector<RadiologyReport> all{findings_only, both, neither};

    auto train = filter_split(all, SplitRule::for_split(Split::train));
    REQUIRE(train.size() == 2);
    CHECK(train[0].study_id == "a");
    CHECK(train[1].study_id == "b");

    auto test = filter_split(all, SplitRule::for_split(Split::test));
    REQUIRE(test.size() == 1);
    CHECK(test[0].study_id == "b");

    CHECK(filter_split({}, SplitRule::for_split(Split::validation)).empty());
    CHECK_THROWS_AS(filter_split(all, SplitRule{Split::test, false}), ConfigError);
    CHECK_THROWS_AS(filter_split(all, SplitRule{Split::train, true}), ConfigError);
}

TEST_CASE("report_lines indexes findings then impression") {
    RadiologyReport r{"x", "Lungs clear. Heart normal.", "No change.", std::nullopt, std::nullopt};
    auto lines = report_lines(r);
    REQUIRE(lines.lines.size() == 3);
    CHECK(lines.findings_count == 2);
    CHECK(lines.lines[2] == "No change.");
    CHECK(join_lines({"A", "B", "C"}) == "A. B. C.");
}

TEST_CASE("prompt_text uses indication and comparison") {
    RadiologyReport r{"x", "Lungs clear.", std::nullopt, "Cough.", "Prior film."};
    CHECK(prompt_text(r) == "INDICATION: Cough. COMPARISON: Prior film.");
    CHECK(prompt_text(r, false) == "INDICATION: Cough.");
    RadiologyReport bare{"y", "Lungs clear.", std::nullopt, std::nullopt, std::nullopt};
    CHECK(prompt_text(bare).empty());
}

TEST_CASE("json round trip keeps absent sections absent") {
    RadiologyReport r{"s9", std::nullopt, "Normal.", std::nullopt, "None."};
    auto j = to_json(r);
    CHECK_FALSE(j.contains("findings"));
    CHECK(report_from_json(j) == r);
}

TEST_CASE("synthetic corpus is deterministic") {
    SynthConfig c;
    c.seed = 7;
    c.report_count = 200;
    auto a = generate_synthetic_corpus(c);
    auto b = generate_synthetic_corpus(c);
    REQUIRE(a.size() == 200);
    CHECK(a == b);
    c.seed = 8;
    CHECK(generate_synthetic_corpus(c) != a);
    c.report_count = 0;
    CHECK(generate_synthetic_corpus(c).empty());
}

TEST_CASE("prior rate 0 yields no detected prior lines") {
    SynthConfig c;
    c.seed = 3;
    c.report_count = 500;
    c.prior_line_rate = 0.0;
    for (const auto& r : generate_synthetic_corpus(c)) {
        CHECK(detect::count_prior_lines(report_text(r)) == 0);
    }
}

TEST_CASE("prior rate 1 makes every line detectable") {
    SynthConfig c;
    c.seed = 4;
    c.report_count = 500;
    c.prior_line_rate = 1.0;
    for (const auto& r : generate_synthetic_corpus(c)) {
        auto lines = report_lines(r);
        CHECK(detect::count_prior_lines(report_text(r)) == lines.lines.size());
    }
}

TEST_CASE("empirical prior fraction tracks the configured rate") {
    for (double rate : {0.2, 0.5, 0.8}) {
        SynthConfig c;
        c.seed = 11;
        c.report_count = 2500;
        c.prior_line_rate = rate;
        std::size_t lines = 0;
        std::size_t prior = 0;
        for (const auto& s : generate_synthetic_with_truth(c)) {
            for (const auto& t : s.lines) {
                ++lines;
                prior += t.kind != LineKind::none;
                CHECK(detect::KeywordSet::standard().matches(t.rendered) == (t.kind != LineKind::none));
                if (t.kind == LineKind::partial) {
                    CHECK_FALSE(detect::KeywordSet::standard().matches(t.clean));
                }
            }
        }
        REQUIRE(lines >= 10000);
        const double frac = static_cast<double>(prior) / static_cast<double>(lines);
        CHECK(std::abs(frac - rate) <= 0.03);
    }
}

TEST_CASE("synth config validation") {
    SynthConfig c;
    c.prior_line_rate = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.prior_line_rate = 0.5;
    c.min_lines = 5;
    c.max_lines = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
