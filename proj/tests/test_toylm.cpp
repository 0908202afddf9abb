#include <doctest.h>

#include <cmath>

#include "reportdpo/corpus.hpp"
#include "reportdpo/error.hpp"
#include "reportdpo/toylm.hpp"
#include "reportdpo/trainer.hpp"
#include "tiny_model.hpp"

using namespace reportdpo;
using namespace reportdpo::lm;

TEST_CASE("tokenize examples") {
    auto v = tiny::vocab();
    auto one = tokenize(v, "Lungs clear.");
    CHECK(one.ids == std::vector<TokenId>{v.id("lungs"), v.id("clear."), Vocabulary::kSep});
    REQUIRE(one.spans.size() == 1);
    CHECK(one.spans[0] == LineSpan{0, 3});

    auto empty = tokenize(v, "");
    CHECK(empty.ids.empty());
    CHECK(empty.spans.empty());

    auto two = tokenize(v, "Heart is stable. Lungs clear.");
    REQUIRE(two.spans.size() == 2);
    CHECK(two.spans[0].begin == 0);
    CHECK(two.spans[0].end == two.spans[1].begin);
    CHECK(two.spans[1].end == two.ids.size());
    CHECK(detokenize(v, two.ids) == "Heart is stable. Lungs clear.");
    CHECK(tokenize(v, "zebra").ids.front() == Vocabulary::kUnk);
}

TEST_CASE("encode_lines matches tokenize of joined lines") {
    auto v = tiny::vocab();
    std::vector<std::string> lines{"Heart is stable", "Lungs clear."};
    CHECK(encode_lines(v, lines).ids == tokenize(v, corpus::join_lines(lines)).ids);
}

TEST_CASE("vocabulary build is order independent") {
    auto a = Vocabulary::build({"b a", "c"});
    auto b = Vocabulary::build({"c", "A B"});
    CHECK(a == b);
    CHECK(a.size() == Vocabulary::kFirstWord + 3);
}

TEST_CASE("fresh model is uniform") {
    auto v = tiny::vocab();
    ToyLM m(v, ModelConfig{8, 12, 32, 3});
    std::vector<TokenId> prompt{v.id("cough")};
    std::vector<TokenId> resp{v.id("lungs"), v.id("clear."), Vocabulary::kSep, Vocabulary::kEnd};
    auto lp = m.response_logprobs(prompt, resp);
    REQUIRE(lp.size() == resp.size());
    for (double x : lp) {
        CHECK(std::abs(x + std::log(static_cast<double>(v.size()))) <= 1e-3);
    }
}

TEST_CASE("per-position distributions normalize") {
    auto m = tiny::jittered_model(5);
    auto v = m.vocab();
    std::vector<TokenId> prompt{v.id("indication:"), v.id("cough")};
    std::vector<TokenId> resp{v.id("heart"), v.id("is"), v.id("stable."), Vocabulary::kSep, Vocabulary::kEnd};
    auto d = m.response_distributions(prompt, resp);
    REQUIRE(static_cast<std::size_t>(d.rows()) == resp.size());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        CHECK(std::abs(std::log(d.row(i).array().exp().sum())) <= 1e-6);
    }
    auto lp = m.response_logprobs(prompt, resp);
    for (std::size_t i = 0; i < lp.size(); ++i) {
        CHECK(lp[i] <= 0.0);
        CHECK(lp[i] == doctest::Approx(d(static_cast<Eigen::Index>(i), resp[i])).epsilon(1e-12));
    }
}

TEST_CASE("context overflow and bad ids") {
    auto v = tiny::vocab();
    ToyLM m(v, ModelConfig{4, 4, 6, 1});
    std::vector<TokenId> prompt{v.id("cough"), v.id("cough")};
    std::vector<TokenId> ok{v.id("lungs"), Vocabulary::kEnd};
    CHECK(m.response_logprobs(prompt, ok).size() == 2);
    std::vector<TokenId> longer{v.id("lungs"), v.id("clear."), Vocabulary::kEnd};
    CHECK_THROWS_AS(m.response_logprobs(prompt, longer), ContextOverflow);
    std::vector<TokenId> bad{9999};
    CHECK_THROWS_AS(m.response_logprobs(prompt, bad), DataError);
}

TEST_CASE("model config validation") {
    CHECK_THROWS_AS((ModelConfig{0, 4, 16, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((ModelConfig{4, 4, 2, 1}.validate()), ConfigError);
}

TEST_CASE("backward matches finite differences of the token log-likelihood") {
    auto m = tiny::jittered_model(8);
    auto v = m.vocab();
    std::vector<TokenId> prompt{v.id("cough")};
    std::vector<TokenId> resp{v.id("heart"), v.id("stable."), Vocabulary::kSep, Vocabulary::kEnd};
    std::vector<double> seeds{0.3, -1.0, 0.7, 0.2};
    auto trace = m.forward(prompt, resp);
    std::vector<double> grad(m.parameter_count(), 0.0);
    m.backward(trace, seeds, grad);
    auto objective = [&](const ToyLM& model) {
        auto lp = model.response_logprobs(prompt, resp);
        double s = 0;
        for (std::size_t i = 0; i < lp.size(); ++i) s += seeds[i] * lp[i];
        return s;
    };
    auto params = m.parameters();
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double x = params[i];
        params[i] = x + h;
        const double up = objective(m);
        params[i] = x - h;
        const double down = objective(m);
        params[i] = x;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("generation") {
    auto m = tiny::jittered_model(9);
    ToyLM::DecodeOptions greedy;
    greedy.max_tokens = 12;
    const std::string prompt = "INDICATION: cough";
    CHECK(m.generate(prompt, greedy) == m.generate(prompt, greedy));
    greedy.max_tokens = 0;
    CHECK(m.generate(prompt, greedy).empty());

    ToyLM::DecodeOptions sampled{12, 1.0, 4};
    CHECK(m.generate(prompt, sampled) == m.generate(prompt, sampled));
    const std::vector<TokenId> cough{m.vocab().id("cough")};
    for (TokenId id : m.generate_ids(cough, sampled)) {
        CHECK(id != Vocabulary::kPad);
        CHECK(id != Vocabulary::kBegin);
        CHECK(id != Vocabulary::kResponse);
        CHECK(id != Vocabulary::kUnk);
    }
}

TEST_CASE("json round trip reproduces generation bit-exactly") {
    auto m = tiny::jittered_model(10);
    auto back = ToyLM::from_json(nlohmann::json::parse(m.to_json().dump()));
    CHECK(back == m);
    ToyLM::DecodeOptions d{16, 0.0, 0};
    CHECK(back.generate("INDICATION: cough", d) == m.generate("INDICATION: cough", d));
    auto bad = m.to_json();
    bad["params"].erase(0);
    CHECK_THROWS_AS(ToyLM::from_json(bad), DataError);
}

TEST_CASE("memorizing one report") {
    corpus::RadiologyReport r{"m", "Heart size is normal. Lungs are clear.", "No change.", "Cough.", std::nullopt};
    auto vocab = build_vocabulary({r});
    std::vector<LmExample> data{make_example(vocab, r)};
    TrainConfig tc;
    tc.iterations = 300;
    tc.warmup_iterations = 10;
    tc.peak_lr = 1e-2;
    tc.batch_size = 1;
    tc.weight_decay = 0.0;
    tc.checkpoint_every = 300;
    auto model = pretrain(vocab, ModelConfig{16, 32, 64, 2}, data, tc);
    CHECK(mean_nll(model, data) < 0.1);
    ToyLM::DecodeOptions d;
    CHECK(model.generate(corpus::prompt_text(r), d) == corpus::report_text(r));
}
