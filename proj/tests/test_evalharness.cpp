#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "reportdpo/error.hpp"
#include "reportdpo/evalharness.hpp"
#include "reportdpo/text.hpp"
#include "tiny_model.hpp"

using namespace reportdpo;
using namespace reportdpo::eval;

TEST_CASE("bleu examples") {
    CHECK(bleu("lungs are clear", "lungs are clear", 1) == 1.0);
    CHECK(bleu("lungs are clear", "lungs are clear", 2) == 1.0);
    CHECK(bleu("x y z", "a b c", 1) == 0.0);
    CHECK(bleu("a b c", "a b d", 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(bleu("a b c", "a b d", 2) == doctest::Approx(0.5773502691896257).epsilon(1e-15));
    CHECK(bleu("a b", "a b c d", 1) == doctest::Approx(0.36787944117144233).epsilon(1e-15));
    CHECK(bleu("", "a b", 1) == 0.0);
    CHECK(bleu("Lungs ARE clear", "lungs are CLEAR", 2) == 1.0);
    // clipped counts: "the the the" vs "the cat"
    CHECK(bleu("the the the", "the cat", 1) == doctest::Approx(1.0 / 3.0));
    // unigram overlap but no bigram overlap
    CHECK(bleu("b a", "a b", 2) == 0.0);
    CHECK_THROWS_AS(bleu("a", "a", 0), ConfigError);
    CHECK_THROWS_AS(bleu("a", "a", 5), ConfigError);
}

TEST_CASE("bleu is invariant under consistent relabeling and bleu2 <= bleu1") {
    const std::vector<std::pair<std::string, std::string>> cases{
        {"heart is enlarged lungs clear", "heart size normal lungs clear"},
        {"a b a b c", "a b c c"},
        {"no acute process", "no acute cardiopulmonary process"},
    };
    auto relabel = [](const std::string& s) {
        std::string out;
        for (const auto& w : text::split_ws(s)) {
            out += "w_" + std::string(w.rbegin(), w.rend()) + " ";
        }
        return out;
    };
    for (const auto& [c, r] : cases) {
        CHECK(bleu(relabel(c), relabel(r), 1) == bleu(c, r, 1));
        CHECK(bleu(relabel(c), relabel(r), 2) == bleu(c, r, 2));
        CHECK(bleu(c, r, 2) <= bleu(c, r, 1));
    }
}

TEST_CASE("checkpoint selection example") {
    std::vector<RankedCandidate> c{{500, {1.0, 0.5}}, {1000, {1.2, 0.3}}, {1500, {1.3, 0.9}}};
    CHECK(select_index(c) == 0);
    std::vector<RankedCandidate> reversed{{1000, {1.2, 0.3}}, {500, {1.0, 0.5}}, {1500, {1.3, 0.9}}};
    CHECK(reversed[select_index(reversed)].iteration == 500);
    CHECK(select_index({{7, {3.0, 3.0}}}) == 0);
    std::vector<RankedCandidate> dominated{{1, {2.0, 2.0}}, {2, {1.0, 1.0}}, {3, {1.5, 3.0}}};
    CHECK(select_index(dominated) == 1);
    CHECK_THROWS_AS(select_index({}), DataError);
}

TEST_CASE("ties share the minimum rank") {
    // ranks: A (1,3)=2, B (1,2)=1.5, C (3,1)=2
    std::vector<RankedCandidate> c{{1, {0.1, 0.9}}, {2, {0.1, 0.5}}, {3, {0.4, 0.2}}};
    CHECK(select_index(c) == 1);
}

TEST_CASE("selection is invariant under monotone transforms of one metric") {
    std::vector<RankedCandidate> c{{500, {0.31, 1.2}}, {1000, {0.28, 1.5}}, {1500, {0.35, 0.4}},
                                   {2000, {0.29, 0.9}}};
    const auto base = select_index(c);
    auto t = c;
    for (auto& x : t) x.metrics.avg_prior_lines = std::exp(3 * x.metrics.avg_prior_lines) + 7;
    CHECK(select_index(t) == base);
    t = c;
    for (auto& x : t) x.metrics.accuracy_proxy = std::sqrt(x.metrics.accuracy_proxy);
    CHECK(select_index(t) == base);
}

TEST_CASE("select_checkpoint over model checkpoints") {
    auto m = tiny::jittered_model(1);
    std::vector<lm::Checkpoint> cks{{0, m, {0.5, 0.5}}, {10, m, {0.4, 0.4}}};
    CHECK(select_checkpoint(cks).iteration == 10);
}

TEST_CASE("format_estimate") {
    CHECK(format_estimate({1.34, {1.25, 1.44}}) == "1.34 (1.25, 1.44)");
    CHECK(format_estimate({0.28, {0.25, 0.33}}) == "0.28 (0.25, 0.33)");
}

namespace {

std::vector<EvalExample> examples(const std::vector<std::string>& refs) {
    std::vector<EvalExample> out;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        out.push_back({"s" + std::to_string(i), "INDICATION: cough", refs[i]});
    }
    return out;
}

}  // namespace

TEST_CASE("score_generations") {
    auto orig = examples({"Heart size is stable. Lungs are clear.", "Effusion has worsened. No pneumothorax."});
    auto proc = examples({"Lungs are clear.", "Effusion is present. No pneumothorax."});
    EvalOptions opts;
    opts.n_resamples = 200;

    std::vector<std::string> verbatim{proc[0].reference, proc[1].reference};
    auto row = score_generations("verbatim", verbatim, orig, proc, opts);
    CHECK(row.bleu1_processed.value == 1.0);
    CHECK(row.bleu2_processed.value == 1.0);
    CHECK(row.avg_lines_with_prior.value == 0.0);
    CHECK(row.pct_reports_with_prior.value == 0.0);
    CHECK(row.report_count == 2);
    CHECK(row.bleu1_original.value < 1.0);

    std::vector<std::string> priors{orig[0].reference, orig[1].reference};
    auto prow = score_generations("orig", priors, orig, proc, opts);
    CHECK(prow.avg_lines_with_prior.value == 1.0);
    CHECK(prow.pct_reports_with_prior.value == 100.0);
    CHECK(prow.bleu1_original.value == 1.0);
    for (const Estimate* e : {&prow.avg_lines_with_prior, &prow.bleu1_processed, &prow.bleu2_processed}) {
        CHECK(e->ci.lo <= e->value);
        CHECK(e->ci.hi >= e->value);
    }

    CHECK_THROWS_AS(score_generations("x", {}, {}, {}, opts), DataError);
    CHECK_THROWS_AS(score_generations("x", {"a"}, orig, proc, opts), DataError);
    auto shuffled = proc;
    std::swap(shuffled[0], shuffled[1]);
    CHECK_THROWS_AS(score_generations("x", verbatim, orig, shuffled, opts), DataError);
}

TEST_CASE("dual_eval") {
    auto m = tiny::jittered_model(4);
    auto orig = examples({"Heart is stable. Lungs clear.", "No change."});
    auto proc = examples({"Lungs clear.", "Lungs clear."});
    EvalOptions opts;
    opts.n_resamples = 100;
    opts.decode.max_tokens = 10;
    auto row = dual_eval("tiny", m, orig, proc, opts);
    CHECK(row.report_count == 2);
    CHECK(row == dual_eval("tiny", m, orig, proc, opts));
    CHECK_THROWS_AS(dual_eval("tiny", m, {}, {}, opts), DataError);
    CHECK_THROWS_AS(dual_eval("tiny", m, orig, examples({"a"}), opts), DataError);
    auto metrics = validation_metrics(m, proc, opts.decode);
    CHECK(metrics.accuracy_proxy >= 0.0);
    CHECK(metrics.accuracy_proxy <= 1.0);
}

TEST_CASE("metrics json and text rendering") {
    MetricsRow r;
    r.experiment = "dpo-g0.5";
    r.avg_lines_with_prior = {0.28, {0.25, 0.33}};
    r.pct_reports_with_prior = {21.5, {19.0, 24.25}};
    r.bleu1_original = {0.1234567890123, {0.1, 0.2}};
    r.bleu2_processed = {0.3, {0.2, 0.4}};
    r.report_count = 400;
    r.checkpoint_iteration = 2500;
    r.accuracy_proxy = 0.71;
    r.val_avg_prior_lines = 0.05;
    CHECK(row_from_json(to_json(r)) == r);
    CHECK(to_json(r).at("bleu_aggregation") == "per_report_mean");

    MetricsRow plain;
    plain.experiment = "pretrained";
    MetricsTable t{plain, r};
    CHECK(table_from_json(nlohmann::json::parse(table_json(t).dump())) == t);
    CHECK_THROWS_AS(table_from_json(nlohmann::json::object()), DataError);

    const auto text = render_table(t);
    CHECK(text.find("0.28 (0.25, 0.33)") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    const auto empty = render_table({});
    CHECK(std::count(empty.begin(), empty.end(), '\n') == 1);
    CHECK(empty.rfind("experiment", 0) == 0);
}

TEST_CASE("eval examples from reports") {
    corpus::RadiologyReport r{"z", "Lungs clear.", "Normal.", "Cough.", "None."};
    auto ex = eval_examples({r}, false);
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].prompt == "INDICATION: Cough.");
    CHECK(ex[0].reference == "Lungs clear. Normal.");
}
