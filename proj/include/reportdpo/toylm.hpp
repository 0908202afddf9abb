#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "reportdpo/error.hpp"
#include "reportdpo/vocab.hpp"

namespace reportdpo::lm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
    std::size_t embed_dim = 48;
    std::size_t hidden_dim = 128;
    /// Longest [begin] prompt [resp] response sequence the model accepts.
    std::size_t max_context = 256;
    std::uint64_t seed = 1;

    void validate() const;
};

class ContextOverflow : public DataError {
public:
    using DataError::DataError;
};

/// Token-level language model: embedding, one GRU layer, output projection.
///
/// The model reads "<bos> prompt <resp> response" and scores response tokens
/// only. Parameters live in one flat buffer so optimizers, checkpoints and
/// finite-difference checks can treat them uniformly. The output projection
/// starts at zero, so a fresh model predicts the uniform distribution.
class ToyLM {
public:
    ToyLM(Vocabulary vocab, ModelConfig config);

    const Vocabulary& vocab() const { return vocab_; }
    const ModelConfig& config() const { return config_; }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }

    /// Forward state kept for the backward pass.
    struct Trace {
        std::vector<TokenId> inputs;
        std::vector<TokenId> targets;  // response tokens
        std::size_t first_output = 0;  // input step that predicts targets[0]
        RowMatrix x;             // T x E
        RowMatrix xproj;         // T x 3H (W_x x + b_x)
        RowMatrix hproj;         // T x 3H (W_h h_prev + b_h)
        RowMatrix gate_r;        // T x H
        RowMatrix gate_z;        // T x H
        RowMatrix cand;          // T x H
        RowMatrix hidden;        // (T + 1) x H, row 0 is h_0 = 0
        RowMatrix probs;         // n x V softmax at response positions
        std::vector<double> logprobs;  // n
    };

    /// Runs the sequence and records what backward() needs. `response` should
    /// normally end with Vocabulary::kEnd. Throws ContextOverflow.
    Trace forward(std::span<const TokenId> prompt, std::span<const TokenId> response) const;

    /// Adds d loss / d params to `grad` given d loss / d logprob_i in `seeds`.
    void backward(const Trace& trace, std::span<const double> seeds, std::span<double> grad) const;

    /// log pi(y_i | x, y_<i) for each response token.
    std::vector<double> response_logprobs(std::span<const TokenId> prompt,
                                          std::span<const TokenId> response) const;

    /// Full log-distribution over the vocabulary at each response position
    /// (n x V), for normalization checks.
    RowMatrix response_distributions(std::span<const TokenId> prompt,
                                           std::span<const TokenId> response) const;

    struct DecodeOptions {
        std::size_t max_tokens = 96;
        /// Zero means greedy (argmax, lowest id on ties).
        double temperature = 0.0;
        std::uint64_t seed = 0;
    };

    /// Generated response ids, without the final end token.
    std::vector<TokenId> generate_ids(std::span<const TokenId> prompt, const DecodeOptions& options) const;

    std::string generate(const std::string& prompt, const DecodeOptions& options) const;

    nlohmann::json to_json() const;
    static ToyLM from_json(const nlohmann::json& j);

    friend bool operator==(const ToyLM& a, const ToyLM& b) {
        return a.vocab_ == b.vocab_ && a.params_ == b.params_;
    }

private:
    struct Layout {
        std::size_t emb, w_x, w_h, b_x, b_h, w_o, b_o, total;
    };
    static Layout layout_for(std::size_t vocab, std::size_t embed, std::size_t hidden);

    void init_parameters();
    void step(const Eigen::VectorXd& x, const Eigen::VectorXd& h, Eigen::VectorXd& h_next) const;

    Vocabulary vocab_;
    ModelConfig config_;
    Layout layout_;
    std::vector<double> params_;
};

}  // namespace reportdpo::lm
