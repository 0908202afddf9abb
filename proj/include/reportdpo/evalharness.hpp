#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reportdpo/priordetect.hpp"
#include "reportdpo/toylm.hpp"
#include "reportdpo/trainer.hpp"

namespace reportdpo::eval {

/// Unsmoothed BLEU-n (n = 1 or 2) on lowercased whitespace tokens.
double bleu(std::string_view candidate, std::string_view reference, int max_n);

/// One test study: the model prompt and a reference report.
struct EvalExample {
    std::string study_id;
    std::string prompt;
    std::string reference;
};

std::vector<EvalExample> eval_examples(const std::vector<corpus::RadiologyReport>& reports,
                                       bool include_comparison = true);

struct Estimate {
    double value = 0.0;
    detect::Interval ci;
    friend bool operator==(const Estimate& a, const Estimate& b) {
        return a.value == b.value && a.ci.lo == b.ci.lo && a.ci.hi == b.ci.hi;
    }
};

struct MetricsRow {
    std::string experiment;
    Estimate avg_lines_with_prior;
    Estimate pct_reports_with_prior;
    Estimate bleu1_original;
    Estimate bleu2_original;
    Estimate bleu1_processed;
    Estimate bleu2_processed;
    std::size_t report_count = 0;
    /// Validation metrics of the selected checkpoint, when there was a choice.
    std::optional<std::size_t> checkpoint_iteration;
    std::optional<double> accuracy_proxy;
    std::optional<double> val_avg_prior_lines;

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

using MetricsTable = std::vector<MetricsRow>;

struct EvalOptions {
    std::size_t n_resamples = 1000;
    std::uint64_t seed = 0;
    lm::ToyLM::DecodeOptions decode{};
    const detect::KeywordSet* keywords = nullptr;  // standard list when null
};

/// Metrics of already generated reports against both reference sets.
/// Throws DataError when the sets are empty or disagree on studies.
MetricsRow score_generations(const std::string& experiment, const std::vector<std::string>& generated,
                             const std::vector<EvalExample>& original,
                             const std::vector<EvalExample>& processed, const EvalOptions& options);

/// Generates once per prompt and scores against both reference sets.
MetricsRow dual_eval(const std::string& experiment, const lm::ToyLM& model,
                     const std::vector<EvalExample>& original, const std::vector<EvalExample>& processed,
                     const EvalOptions& options);

/// Validation metrics stored with a checkpoint: 1 - mean BLEU-2 against the
/// processed references, and mean prior lines in the generations.
lm::CheckpointMetrics validation_metrics(const lm::ToyLM& model, const std::vector<EvalExample>& processed,
                                         const lm::ToyLM::DecodeOptions& decode = {},
                                         const detect::KeywordSet& keywords = detect::KeywordSet::standard());

struct RankedCandidate {
    std::size_t iteration = 0;
    lm::CheckpointMetrics metrics;
};

/// Index of the candidate with the lowest mean rank over the two metrics
/// (lower values rank better, ties share the minimum rank), earliest
/// iteration on ties. Throws DataError on an empty list.
std::size_t select_index(const std::vector<RankedCandidate>& candidates);

const lm::Checkpoint& select_checkpoint(const std::vector<lm::Checkpoint>& checkpoints);

/// "1.34 (1.25, 1.44)"
std::string format_estimate(const Estimate& e);

nlohmann::json to_json(const MetricsRow& row);
MetricsRow row_from_json(const nlohmann::json& j);
nlohmann::json table_json(const MetricsTable& table);
MetricsTable table_from_json(const nlohmann::json& j);

/// Aligned text table with a header line; only the header when `table` is empty.
std::string render_table(const MetricsTable& table);

}  // namespace reportdpo::eval
