#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "reportdpo/annotate.hpp"
#include "reportdpo/corpus.hpp"
#include "reportdpo/dpo.hpp"
#include "reportdpo/toylm.hpp"

namespace reportdpo::lm {

enum class LossMode {
    weighted,  // per-token weights from relevance masks and gamma
    standard,  // plain DPO on summed log-probs, masks ignored
};

struct TrainConfig {
    std::size_t iterations = 3000;
    std::size_t warmup_iterations = 300;
    double peak_lr = 1e-3;
    double beta = 0.1;
    double gamma = 1.0;
    std::size_t batch_size = 16;
    double weight_decay = 0.05;
    std::size_t checkpoint_every = 500;
    std::uint64_t seed = 1;
    double rms_decay = 0.99;
    double eps = 1e-8;
    LossMode loss_mode = LossMode::weighted;

    /// Throws ConfigError.
    void validate() const;

    /// peak_lr * min(1, i / warmup_iterations) for 1-based iteration i.
    double lr_at(std::size_t iteration) const;

    /// Iterations at which dpo_finetune saves a checkpoint.
    std::vector<std::size_t> checkpoint_iterations() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

/// RMSprop with coupled weight decay.
class RmsProp {
public:
    RmsProp(std::size_t size, double decay, double eps, double weight_decay);
    void step(std::span<double> params, std::span<double> grad, double lr);

private:
    std::vector<double> square_avg_;
    double decay_;
    double eps_;
    double weight_decay_;
};

/// One prompt/response pair for next-token training. The response ends with
/// the end token.
struct LmExample {
    std::vector<TokenId> prompt;
    std::vector<TokenId> response;
};

LmExample make_example(const Vocabulary& vocab, const std::string& prompt,
                       const std::vector<std::string>& lines);
LmExample make_example(const Vocabulary& vocab, const corpus::RadiologyReport& report,
                       bool include_comparison = true);

/// Tokenized preference pair with per-token relevance. Each line's flag covers
/// its words and its separator; the end token is never relevant.
struct PairExample {
    std::string study_id;
    std::vector<TokenId> prompt;
    std::vector<TokenId> preferred;
    dpo::RelevanceMask preferred_mask;
    std::vector<TokenId> dispreferred;
    dpo::RelevanceMask dispreferred_mask;
};

PairExample make_pair_example(const Vocabulary& vocab, const annotate::PreferencePair& pair);

/// Every word that can appear in prompts or responses of the given reports.
Vocabulary build_vocabulary(const std::vector<corpus::RadiologyReport>& reports);

/// Called after each iteration with the batch loss.
using ProgressFn = std::function<void(std::size_t iteration, double loss)>;

/// Mean per-token negative log-likelihood of the responses. Examples that
/// overflow the context are skipped.
double mean_nll(const ToyLM& model, const std::vector<LmExample>& examples);

/// Next-token training of a fresh model. Throws DataError on an empty corpus.
ToyLM pretrain(const Vocabulary& vocab, const ModelConfig& model_config,
               const std::vector<LmExample>& corpus, const TrainConfig& config,
               const ProgressFn& progress = {});

struct CheckpointMetrics {
    double accuracy_proxy = 0.0;
    double avg_prior_lines = 0.0;
    friend bool operator==(const CheckpointMetrics&, const CheckpointMetrics&) = default;
};

struct Checkpoint {
    std::size_t iteration = 0;
    ToyLM model;
    CheckpointMetrics metrics;
};

using Validator = std::function<CheckpointMetrics(const ToyLM&)>;

/// Same objective as pretrain, continuing from `model`.
ToyLM sft(const ToyLM& model, const std::vector<LmExample>& corpus, const TrainConfig& config,
          const ProgressFn& progress = {});

/// sft() with a checkpoint at every TrainConfig::checkpoint_iterations() entry.
std::vector<Checkpoint> sft_checkpoints(const ToyLM& model, const std::vector<LmExample>& corpus,
                                        const TrainConfig& config, const Validator& validate = {},
                                        const ProgressFn& progress = {});

struct DpoRun {
    std::vector<Checkpoint> checkpoints;
    std::size_t skipped_overflow = 0;
    std::vector<double> losses;
};

/// DPO fine-tuning of a copy of `model` against the frozen `reference`.
/// Throws DataError when no usable pairs remain.
DpoRun dpo_finetune(const ToyLM& model, const ToyLM& reference, const std::vector<PairExample>& pairs,
                    const TrainConfig& config, const Validator& validate = {},
                    const ProgressFn& progress = {});

/// Batch DPO loss and its parameter gradient (added into `grad`), using
/// cached reference log-probs. Exposed for gradient checks.
double dpo_batch_gradient(const ToyLM& policy, const std::vector<const PairExample*>& batch,
                          const std::vector<std::pair<std::vector<double>, std::vector<double>>>& ref_logprobs,
                          const TrainConfig& config, std::span<double> grad);

}  // namespace reportdpo::lm
