#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "reportdpo/error.hpp"
#include "reportdpo/pipeline.hpp"

using namespace reportdpo;
using namespace reportdpo::pipeline;
namespace fs = std::filesystem;

namespace {

ExperimentPlan tiny_plan() {
    return plan_from_json(nlohmann::json::parse(R"({
        "seed": 3,
        "corpus": {"train_count": 200, "val_count": 20, "test_count": 30},
        "model": {"embed_dim": 8, "hidden_dim": 12},
        "pretrain": {"iterations": 60, "warmup_iterations": 10, "checkpoint_every": 60},
        "finetune": {"iterations": 40, "warmup_iterations": 10, "checkpoint_every": 20, "peak_lr": 1e-4},
        "eval": {"resamples": 100, "max_tokens": 40}})"));
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool same_metrics(const eval::MetricsRow& a, const eval::MetricsRow& b) {
    return a.avg_lines_with_prior == b.avg_lines_with_prior && a.pct_reports_with_prior == b.pct_reports_with_prior &&
           a.bleu1_original == b.bleu1_original && a.bleu2_original == b.bleu2_original &&
           a.bleu1_processed == b.bleu1_processed && a.bleu2_processed == b.bleu2_processed;
}

}  // namespace

TEST_CASE("plan json round trip and validation") {
    const auto plan = tiny_plan();
    CHECK(plan.corpus.train_count == 200);
    CHECK(plan.finetune.peak_lr == 1e-4);
    CHECK(plan.gammas == std::vector<double>{1.0, 0.5, 0.0});
    CHECK(to_json(plan_from_json(to_json(plan))) == to_json(plan));
    CHECK_NOTHROW(plan.validate());

    auto bad = plan;
    bad.gammas = {1.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = plan;
    bad.finetune.checkpoint_every = 30;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = plan;
    bad.corpus.test_count = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    ExperimentPlan defaults;
    CHECK(defaults.finetune.iterations == 3000);
    CHECK(defaults.finetune.warmup_iterations == 300);
    CHECK(defaults.finetune.weight_decay == 0.05);
    CHECK(defaults.finetune.beta == 0.1);
    CHECK(dpo_run_name(0.5) == "dpo-g0.5");
    CHECK(dpo_run_name(1.0) == "dpo-g1");
}

TEST_CASE("split corpus blocks and eval sets") {
    CorpusPlan c;
    c.train_count = 30;
    c.val_count = 5;
    c.test_count = 7;
    auto s = generate_split_corpus(c, 1);
    CHECK(s.train.size() == 30);
    CHECK(s.val.size() == 5);
    CHECK(s.test.size() == 7);
    CHECK(s.train.front().study_id != s.test.front().study_id);

    auto run = annotate_split(s.test, corpus::Split::test, 0.0, 2);
    auto pairs = build_pairs(run.annotated, annotate::PairMode::eval, true);
    auto sets = eval_sets(pairs);
    REQUIRE(sets.original.size() == pairs.size());
    REQUIRE(sets.processed.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(sets.original[i].study_id == sets.processed[i].study_id);
        CHECK(detect::count_prior_lines(sets.processed[i].reference) == 0);
    }
}

TEST_CASE("checkpoint files round trip") {
    TempDir dir("reportdpo_ckpt_test");
    fs::create_directories(dir.path);
    lm::ToyLM m(lm::Vocabulary::from_words({"a", "b"}), lm::ModelConfig{4, 4, 16, 1});
    save_checkpoint(dir.path / "ckpt-000020.json", {20, m, {0.25, 1.5}}, {{"stage", "test"}});
    save_checkpoint(dir.path / "ckpt-000010.json", {10, m, {0.5, 2.0}}, {{"stage", "test"}});
    auto ck = load_checkpoint(dir.path / "ckpt-000020.json");
    CHECK(ck.iteration == 20);
    CHECK(ck.model == m);
    CHECK(ck.metrics == lm::CheckpointMetrics{0.25, 1.5});
    auto run = load_run(dir.path);
    REQUIRE(run.size() == 2);
    CHECK(run[0].iteration == 10);
    write_json(dir.path / "bare.json", m.to_json());
    CHECK(load_checkpoint(dir.path / "bare.json").iteration == 0);
    CHECK_THROWS_AS(read_json(dir.path / "missing.json"), DataError);
}

TEST_CASE("run_pipeline is deterministic and resumable") {
    TempDir a("reportdpo_pipe_a");
    TempDir b("reportdpo_pipe_b");
    const auto plan = tiny_plan();
    auto table = run_pipeline(plan, a.path);
    REQUIRE(table.size() == 5);
    CHECK(table[0].experiment == "pretrained");
    CHECK(table[1].experiment == "sft");
    CHECK(table[2].experiment == "dpo-g1");
    CHECK(table[3].experiment == "dpo-g0.5");
    CHECK(table[4].experiment == "dpo-g0");
    for (const auto& r : table) {
        CHECK(r.report_count == table[0].report_count);
    }
    CHECK(fs::exists(a.path / "results.txt"));
    CHECK(fs::exists(a.path / "runs/dpo-g0.5/selected.json"));

    run_pipeline(plan, b.path);
    CHECK(slurp(a.path / "results.json") == slurp(b.path / "results.json"));

    std::vector<std::string> log;
    auto again = run_pipeline(plan, a.path, [&](const std::string& s) { log.push_back(s); });
    CHECK(again == table);
    CHECK(std::count_if(log.begin(), log.end(),
                        [](const std::string& s) { return s.find("up to date") != std::string::npos; }) >= 8);

    // Interrupted run: one run directory and the results are gone.
    fs::remove_all(a.path / "runs/dpo-g0");
    fs::remove(a.path / "results.json");
    run_pipeline(plan, a.path);
    CHECK(slurp(a.path / "results.json") == slurp(b.path / "results.json"));
}

TEST_CASE("zero iterations everywhere gives identical rows") {
    TempDir dir("reportdpo_pipe_zero");
    auto plan = tiny_plan();
    plan.pretrain.iterations = 0;
    plan.pretrain.warmup_iterations = 0;
    plan.finetune.iterations = 0;
    plan.finetune.warmup_iterations = 0;
    auto table = run_pipeline(plan, dir.path);
    REQUIRE(table.size() == 5);
    for (std::size_t i = 1; i < table.size(); ++i) {
        INFO(table[i].experiment);
        CHECK(same_metrics(table[i], table[0]));
    }
}

TEST_CASE("stage failures name the stage") {
    TempDir dir("reportdpo_pipe_fail");
    auto plan = tiny_plan();
    plan.finetune.iterations = 0;
    plan.finetune.warmup_iterations = 0;
    run_pipeline(plan, dir.path);
    {
        std::ofstream out(dir.path / "models/pretrained.json", std::ios::trunc);
        out << "{ truncated";
    }
    fs::remove_all(dir.path / "runs");
    try {
        run_pipeline(plan, dir.path);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "sft");
    }
    CHECK(fs::exists(dir.path / "pairs/train.jsonl"));
}
