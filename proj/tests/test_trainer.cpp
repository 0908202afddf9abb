#include <doctest.h>

#include <cmath>

#include "reportdpo/annotate.hpp"
#include "reportdpo/corpus.hpp"
#include "reportdpo/error.hpp"
#include "reportdpo/trainer.hpp"
#include "tiny_model.hpp"

using namespace reportdpo;
using namespace reportdpo::lm;

namespace {

struct Fixture {
    std::vector<corpus::RadiologyReport> reports;
    Vocabulary vocab;
    std::vector<LmExample> examples;
    std::vector<PairExample> pairs;
    ModelConfig model{8, 16, 128, 3};

    Fixture() {
        corpus::SynthConfig sc;
        sc.seed = 5;
        sc.report_count = 40;
        reports = corpus::generate_synthetic_corpus(sc);
        vocab = build_vocabulary(reports);
        for (const auto& r : reports) {
            examples.push_back(make_example(vocab, r));
            auto p = annotate::build_preference_pair(r, annotate::rule_based_annotate(r));
            if (p) {
                pairs.push_back(make_pair_example(vocab, *p));
            }
        }
    }
};

TrainConfig small_config(std::size_t iterations) {
    TrainConfig c;
    c.iterations = iterations;
    c.warmup_iterations = std::min<std::size_t>(iterations, 5);
    c.peak_lr = 5e-3;
    c.batch_size = 4;
    c.checkpoint_every = iterations == 0 ? 1 : iterations / 2;
    c.weight_decay = 0.0;
    return c;
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.warmup_iterations = c.iterations + 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.checkpoint_every = 700;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.gamma = 2.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.peak_lr = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("warmup schedule is exact") {
    TrainConfig c;
    c.peak_lr = 1e-3;
    c.warmup_iterations = 300;
    for (std::size_t i : {1u, 7u, 150u, 299u, 300u, 301u, 3000u}) {
        const double expected = 1e-3 * std::min(1.0, static_cast<double>(i) / 300.0);
        CHECK(c.lr_at(i) == expected);
    }
    CHECK(c.lr_at(0) == 0.0);
    c.warmup_iterations = 0;
    CHECK(c.lr_at(1) == 1e-3);
}

TEST_CASE("checkpoint iterations") {
    TrainConfig c;
    CHECK(c.checkpoint_iterations() == std::vector<std::size_t>{500, 1000, 1500, 2000, 2500, 3000});
    c.iterations = 0;
    c.warmup_iterations = 0;
    CHECK(c.checkpoint_iterations() == std::vector<std::size_t>{0});
}

TEST_CASE("train config json round trip") {
    TrainConfig c;
    c.iterations = 40;
    c.checkpoint_every = 20;
    c.gamma = 0.5;
    c.loss_mode = LossMode::standard;
    auto back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK_THROWS_AS(train_config_from_json({{"loss_mode", "other"}}), ConfigError);
    CHECK(train_config_from_json({{"gamma", 0.0}}, c).iterations == 40);
}

TEST_CASE("rmsprop step") {
    RmsProp opt(2, 0.99, 1e-8, 0.05);
    std::vector<double> p{1.0, -2.0};
    std::vector<double> g{0.5, 0.0};
    opt.step(p, g, 0.1);
    const double g0 = 0.5 + 0.05 * 1.0;
    const double g1 = 0.0 + 0.05 * -2.0;
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * g0 / (std::sqrt(0.01 * g0 * g0) + 1e-8)));
    CHECK(p[1] == doctest::Approx(-2.0 - 0.1 * g1 / (std::sqrt(0.01 * g1 * g1) + 1e-8)));
}

TEST_CASE("pair example masks broadcast lines and skip the end token") {
    auto v = tiny::vocab();
    annotate::PreferencePair p{"s", "cough", {"Heart is stable", "Lungs clear"}, {"Lungs clear"}, {true, false}, {false}};
    auto ex = make_pair_example(v, p);
    CHECK(ex.dispreferred == std::vector<TokenId>{v.id("heart"), v.id("is"), v.id("stable"), Vocabulary::kSep,
                                                  v.id("lungs"), v.id("clear."), Vocabulary::kSep, Vocabulary::kEnd});
    CHECK(ex.dispreferred_mask == dpo::RelevanceMask{true, true, true, true, false, false, false, false});
    CHECK(ex.preferred_mask == dpo::RelevanceMask{false, false, false, false});
    p.preferred_relevance.push_back(true);
    CHECK_THROWS_AS(make_pair_example(v, p), DataError);
}

TEST_CASE("pretraining reduces NLL and is deterministic") {
    Fixture f;
    auto c = small_config(60);
    auto a = pretrain(f.vocab, f.model, f.examples, c);
    auto b = pretrain(f.vocab, f.model, f.examples, c);
    CHECK(a == b);
    ToyLM fresh(f.vocab, f.model);
    CHECK(mean_nll(a, f.examples) < mean_nll(fresh, f.examples));
    CHECK(pretrain(f.vocab, f.model, f.examples, small_config(0)) == fresh);
    CHECK_THROWS_AS(pretrain(f.vocab, f.model, {}, c), DataError);
}

TEST_CASE("sft on the pretraining corpus keeps lowering NLL") {
    Fixture f;
    auto base = pretrain(f.vocab, f.model, f.examples, small_config(40));
    auto c = small_config(40);
    c.peak_lr = 1e-3;
    c.checkpoint_every = 10;
    auto cks = sft_checkpoints(base, f.examples, c);
    REQUIRE(cks.size() == 4);
    double prev = mean_nll(base, f.examples);
    for (const auto& ck : cks) {
        const double nll = mean_nll(ck.model, f.examples);
        CHECK(nll <= prev);
        prev = nll;
    }
    CHECK(sft(base, f.examples, c) == cks.back().model);
    CHECK(sft(base, f.examples, c) == sft(base, f.examples, c));
    CHECK_THROWS_AS(sft(base, {}, c), DataError);
}

TEST_CASE("dpo with zero iterations returns the input model") {
    Fixture f;
    ToyLM m = tiny::jittered_model(1);
    ToyLM base = pretrain(f.vocab, f.model, f.examples, small_config(10));
    auto run = dpo_finetune(base, base, f.pairs, small_config(0));
    REQUIRE(run.checkpoints.size() == 1);
    CHECK(run.checkpoints[0].iteration == 0);
    CHECK(run.checkpoints[0].model == base);
    CHECK_THROWS_AS(dpo_finetune(base, base, {}, small_config(4)), DataError);
    CHECK_THROWS_AS(dpo_finetune(m, base, f.pairs, small_config(4)), DataError);
}

TEST_CASE("dpo leaves the reference untouched and is deterministic") {
    Fixture f;
    const ToyLM base = pretrain(f.vocab, f.model, f.examples, small_config(10));
    const auto before = std::vector<double>(base.parameters().begin(), base.parameters().end());
    auto c = small_config(10);
    c.gamma = 0.5;
    std::size_t validations = 0;
    auto run = dpo_finetune(base, base, f.pairs, c, [&](const ToyLM&) {
        ++validations;
        return CheckpointMetrics{0.5, 1.0};
    });
    CHECK(std::equal(before.begin(), before.end(), base.parameters().begin()));
    REQUIRE(run.checkpoints.size() == 2);
    CHECK(run.checkpoints[0].iteration == 5);
    CHECK(run.checkpoints[1].iteration == 10);
    CHECK(run.checkpoints[1].metrics == CheckpointMetrics{0.5, 1.0});
    CHECK(validations == 2);
    CHECK(run.losses.size() == 10);
    CHECK(run.losses[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    auto again = dpo_finetune(base, base, f.pairs, c);
    CHECK(again.checkpoints.back().model == run.checkpoints.back().model);
}

TEST_CASE("gamma 1 weighted run equals the standard loss batch for batch") {
    Fixture f;
    const ToyLM base = pretrain(f.vocab, f.model, f.examples, small_config(10));
    auto c = small_config(10);
    c.gamma = 1.0;
    c.loss_mode = LossMode::weighted;
    auto weighted = dpo_finetune(base, base, f.pairs, c);
    c.loss_mode = LossMode::standard;
    auto standard = dpo_finetune(base, base, f.pairs, c);
    REQUIRE(weighted.losses.size() == standard.losses.size());
    for (std::size_t i = 0; i < weighted.losses.size(); ++i) {
        CHECK(weighted.losses[i] == doctest::Approx(standard.losses[i]).epsilon(1e-12));
    }
    const auto pw = weighted.checkpoints.back().model.parameters();
    const auto ps = standard.checkpoints.back().model.parameters();
    double max_diff = 0.0;
    for (std::size_t i = 0; i < pw.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(pw[i] - ps[i]));
    }
    CHECK(max_diff <= 1e-9);
}

TEST_CASE("dpo loss on a single fixed batch decreases") {
    Fixture f;
    const ToyLM base = pretrain(f.vocab, f.model, f.examples, small_config(10));
    std::vector<PairExample> one{f.pairs.front()};
    auto c = small_config(100);
    c.batch_size = 1;
    c.gamma = 0.5;
    c.peak_lr = 1e-3;
    auto run = dpo_finetune(base, base, one, c);
    CHECK(run.losses.back() < run.losses.front());
    CHECK(run.losses.back() < 0.5 * run.losses.front());
}

TEST_CASE("dpo gradient through the model matches finite differences") {
    const auto v = tiny::vocab();
    const auto pair = tiny::tiny_pair(v);
    const auto reference = tiny::jittered_model(31);
    const auto policy = tiny::jittered_model(32);
    for (double gamma : {0.0, 0.5, 1.0}) {
        TrainConfig c;
        c.beta = 0.7;
        c.gamma = gamma;
        auto r = tiny::through_model_check(policy, reference, pair, c);
        CHECK(r.checked == policy.parameter_count());
        CHECK(r.max_rel_error <= 1e-3);
    }
    TrainConfig s;
    s.beta = 0.7;
    s.loss_mode = LossMode::standard;
    CHECK(tiny::through_model_check(policy, reference, pair, s).max_rel_error <= 1e-3);
}

TEST_CASE("overflowing pairs are skipped and counted") {
    Fixture f;
    ModelConfig narrow = f.model;
    narrow.max_context = 40;
    ToyLM base(f.vocab, narrow);
    auto run = dpo_finetune(base, base, f.pairs, small_config(2));
    CHECK(run.skipped_overflow > 0);
    CHECK(run.skipped_overflow < f.pairs.size());
    narrow.max_context = 3;
    ToyLM tiny_ctx(f.vocab, narrow);
    CHECK_THROWS_AS(dpo_finetune(tiny_ctx, tiny_ctx, f.pairs, small_config(2)), DataError);
}
