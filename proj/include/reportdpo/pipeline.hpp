#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "reportdpo/annotate.hpp"
#include "reportdpo/corpus.hpp"
#include "reportdpo/evalharness.hpp"
#include "reportdpo/trainer.hpp"

namespace reportdpo::pipeline {

struct CorpusPlan {
    std::size_t train_count = 2000;
    std::size_t val_count = 200;
    std::size_t test_count = 400;
    double prior_line_rate = 0.5;
    std::size_t min_lines = 4;
    std::size_t max_lines = 8;
};

struct AnnotatePlan {
    double miss_rate = 0.2;
    bool include_comparison = true;
};

struct EvalPlan {
    std::size_t resamples = 1000;
    std::size_t max_tokens = 96;
};

/// Everything run-all needs. Stage seeds are derived from `seed`; the seed
/// fields inside the model and training sections are ignored.
struct ExperimentPlan {
    std::uint64_t seed = 7;
    CorpusPlan corpus;
    AnnotatePlan annotate;
    lm::ModelConfig model;
    lm::TrainConfig pretrain = default_pretrain();
    /// Shared by SFT and every DPO run.
    lm::TrainConfig finetune = default_finetune();
    std::vector<double> gammas{1.0, 0.5, 0.0};
    EvalPlan eval;

    static lm::TrainConfig default_pretrain();
    static lm::TrainConfig default_finetune();

    /// Throws ConfigError.
    void validate() const;
};

nlohmann::json to_json(const ExperimentPlan& plan);
/// Missing keys keep the values from `base`.
ExperimentPlan plan_from_json(const nlohmann::json& j, ExperimentPlan base = {});
ExperimentPlan load_plan(const std::filesystem::path& path, ExperimentPlan base = {});

/// A pipeline stage failed; completed stage artifacts stay on disk.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

using Log = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Stage building blocks, shared with the individual CLI subcommands.

struct SplitCorpus {
    std::vector<corpus::RadiologyReport> train;
    std::vector<corpus::RadiologyReport> val;
    std::vector<corpus::RadiologyReport> test;
};

/// One synthetic corpus cut into consecutive train/val/test blocks.
SplitCorpus generate_split_corpus(const CorpusPlan& plan, std::uint64_t seed);

/// Applies the split rule (and the "compar" filter for train) and annotates
/// with the rule-based client. Malformed responses are dropped from the
/// result and returned in the run.
annotate::AnnotationRun annotate_split(const std::vector<corpus::RadiologyReport>& reports, corpus::Split split,
                                       annotate::AnnotatorClient& client);
annotate::AnnotationRun annotate_split(const std::vector<corpus::RadiologyReport>& reports, corpus::Split split,
                                       double miss_rate, std::uint64_t seed);

std::vector<annotate::PreferencePair> build_pairs(const std::vector<annotate::AnnotatedReport>& annotated,
                                                  annotate::PairMode mode, bool include_comparison);

/// Original and processed references for the same studies, from eval-mode pairs.
struct EvalSets {
    std::vector<eval::EvalExample> original;
    std::vector<eval::EvalExample> processed;
};
EvalSets eval_sets(const std::vector<annotate::PreferencePair>& pairs);

std::vector<lm::LmExample> preferred_examples(const lm::Vocabulary& vocab,
                                              const std::vector<annotate::PreferencePair>& pairs);
std::vector<lm::PairExample> pair_examples(const lm::Vocabulary& vocab,
                                           const std::vector<annotate::PreferencePair>& pairs);

// ---------------------------------------------------------------------------
// Files

void write_json(const std::filesystem::path& path, const nlohmann::json& j, int indent = -1);
nlohmann::json read_json(const std::filesystem::path& path);

/// Model file: {"meta": ..., "iteration": ..., "metrics": ..., "model": ...}.
void save_checkpoint(const std::filesystem::path& path, const lm::Checkpoint& ck, const nlohmann::json& meta);
/// Accepts checkpoint files and bare model dumps (iteration 0, zero metrics).
lm::Checkpoint load_checkpoint(const std::filesystem::path& path);

/// All ckpt-*.json files in a run directory, by iteration.
std::vector<lm::Checkpoint> load_run(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------

/// gen-corpus -> annotate -> build-pairs -> pretrain -> {sft, dpo per gamma}
/// -> select-checkpoint -> dual eval. Completed stages whose recorded
/// fingerprint matches the plan are reused. Writes results.json and
/// results.txt under `work_dir`. Throws StageError.
eval::MetricsTable run_pipeline(const ExperimentPlan& plan, const std::filesystem::path& work_dir,
                                const Log& log = {});

/// "dpo-g0.5" style run name.
std::string dpo_run_name(double gamma);

}  // namespace reportdpo::pipeline
