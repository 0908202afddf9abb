#include "reportdpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reportdpo/dpo.hpp"
#include "reportdpo/rng.hpp"
#include "reportdpo/text.hpp"

namespace reportdpo::lm {

void TrainConfig::validate() const {
    if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) {
        throw ConfigError("peak_lr must be positive");
    }
    if (warmup_iterations > iterations) {
        throw ConfigError("warmup_iterations exceeds iterations");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    if (checkpoint_every == 0) {
        throw ConfigError("checkpoint_every must be positive");
    }
    if (iterations > 0 && iterations % checkpoint_every != 0) {
        throw ConfigError("checkpoint_every must divide iterations");
    }
    if (weight_decay < 0.0 || !(rms_decay >= 0.0 && rms_decay < 1.0) || !(eps > 0.0)) {
        throw ConfigError("invalid optimizer constants");
    }
    dpo::DpoConfig{beta, gamma}.validate();
}

double TrainConfig::lr_at(std::size_t iteration) const {
    if (warmup_iterations == 0) {
        return peak_lr;
    }
    const double frac = static_cast<double>(iteration) / static_cast<double>(warmup_iterations);
    return peak_lr * std::min(1.0, frac);
}

std::vector<std::size_t> TrainConfig::checkpoint_iterations() const {
    if (iterations == 0) {
        return {0};
    }
    std::vector<std::size_t> out;
    for (std::size_t i = checkpoint_every; i <= iterations; i += checkpoint_every) {
        out.push_back(i);
    }
    return out;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"iterations", c.iterations},
            {"warmup_iterations", c.warmup_iterations},
            {"peak_lr", c.peak_lr},
            {"beta", c.beta},
            {"gamma", c.gamma},
            {"batch_size", c.batch_size},
            {"weight_decay", c.weight_decay},
            {"checkpoint_every", c.checkpoint_every},
            {"seed", c.seed},
            {"rms_decay", c.rms_decay},
            {"eps", c.eps},
            {"loss_mode", c.loss_mode == LossMode::weighted ? "weighted" : "standard"}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig d) {
    d.iterations = j.value("iterations", d.iterations);
    d.warmup_iterations = j.value("warmup_iterations", d.warmup_iterations);
    d.peak_lr = j.value("peak_lr", d.peak_lr);
    d.beta = j.value("beta", d.beta);
    d.gamma = j.value("gamma", d.gamma);
    d.batch_size = j.value("batch_size", d.batch_size);
    d.weight_decay = j.value("weight_decay", d.weight_decay);
    d.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    d.seed = j.value("seed", d.seed);
    d.rms_decay = j.value("rms_decay", d.rms_decay);
    d.eps = j.value("eps", d.eps);
    if (j.contains("loss_mode")) {
        const auto m = j.at("loss_mode").get<std::string>();
        if (m == "weighted") {
            d.loss_mode = LossMode::weighted;
        } else if (m == "standard") {
            d.loss_mode = LossMode::standard;
        } else {
            throw ConfigError("unknown loss_mode: " + m);
        }
    }
    return d;
}

RmsProp::RmsProp(std::size_t size, double decay, double eps, double weight_decay)
    : square_avg_(size, 0.0), decay_(decay), eps_(eps), weight_decay_(weight_decay) {}

void RmsProp::step(std::span<double> params, std::span<double> grad, double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] + weight_decay_ * params[i];
        square_avg_[i] = decay_ * square_avg_[i] + (1.0 - decay_) * g * g;
        params[i] -= lr * g / (std::sqrt(square_avg_[i]) + eps_);
    }
}

LmExample make_example(const Vocabulary& vocab, const std::string& prompt,
                       const std::vector<std::string>& lines) {
    LmExample ex;
    ex.prompt = encode_prompt(vocab, prompt);
    ex.response = encode_lines(vocab, lines).ids;
    ex.response.push_back(Vocabulary::kEnd);
    return ex;
}

LmExample make_example(const Vocabulary& vocab, const corpus::RadiologyReport& report,
                       bool include_comparison) {
    return make_example(vocab, corpus::prompt_text(report, include_comparison),
                        corpus::report_lines(report).lines);
}

namespace {

void encode_response(const Vocabulary& vocab, const std::vector<std::string>& lines,
                     const std::vector<bool>& relevance, std::vector<TokenId>& ids,
                     dpo::RelevanceMask& mask) {
    if (relevance.size() != lines.size()) {
        throw DataError("relevance flags do not match response lines");
    }
    const Tokenized tok = encode_lines(vocab, lines);
    ids = tok.ids;
    mask.assign(ids.size(), false);
    for (std::size_t l = 0; l < tok.spans.size(); ++l) {
        for (std::size_t t = tok.spans[l].begin; t < tok.spans[l].end; ++t) {
            mask[t] = relevance[l];
        }
    }
    ids.push_back(Vocabulary::kEnd);
    mask.push_back(false);
}

}  // namespace

PairExample make_pair_example(const Vocabulary& vocab, const annotate::PreferencePair& pair) {
    PairExample ex;
    ex.study_id = pair.study_id;
    ex.prompt = encode_prompt(vocab, pair.prompt_text);
    encode_response(vocab, pair.preferred, pair.preferred_relevance, ex.preferred, ex.preferred_mask);
    encode_response(vocab, pair.dispreferred, pair.dispreferred_relevance, ex.dispreferred,
                    ex.dispreferred_mask);
    return ex;
}

Vocabulary build_vocabulary(const std::vector<corpus::RadiologyReport>& reports) {
    std::vector<std::string> texts;
    texts.reserve(reports.size() * 2);
    for (const auto& r : reports) {
        texts.push_back(corpus::prompt_text(r, true));
        const auto lines = corpus::report_lines(r).lines;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            // Mirror encode_lines: interior lines lose their period, the last
            // keeps one. Add both spellings of every final word.
            const std::string bare = text::strip_final_period(lines[i]);
            texts.push_back(bare);
            texts.push_back(bare + ".");
        }
    }
    return Vocabulary::build(texts);
}

double mean_nll(const ToyLM& model, const std::vector<LmExample>& examples) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& ex : examples) {
        try {
            for (double lp : model.response_logprobs(ex.prompt, ex.response)) {
                total -= lp;
                ++count;
            }
        } catch (const ContextOverflow&) {
        }
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

namespace {

/// Epoch-wise shuffled index stream.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        rng_.shuffle(order_);
    }

    std::vector<std::size_t> next(std::size_t batch) {
        std::vector<std::size_t> out;
        out.reserve(batch);
        while (out.size() < batch) {
            if (pos_ == order_.size()) {
                rng_.shuffle(order_);
                pos_ = 0;
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    std::vector<std::size_t> order_;
    Rng rng_;
    std::size_t pos_ = 0;
};

using SnapshotFn = std::function<void(std::size_t, const ToyLM&)>;

ToyLM next_token_training(ToyLM model, const std::vector<LmExample>& corpus, const TrainConfig& config,
                          const ProgressFn& progress, const SnapshotFn& snapshot = {}) {
    config.validate();
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].prompt.size() + 2 + corpus[i].response.size() <= model.config().max_context &&
            !corpus[i].response.empty()) {
            usable.push_back(i);
        }
    }
    if (usable.empty()) {
        throw DataError("no usable training examples");
    }
    BatchSampler sampler(usable.size(), config.seed);
    RmsProp opt(model.parameter_count(), config.rms_decay, config.eps, config.weight_decay);
    std::vector<double> grad(model.parameter_count());
    for (std::size_t it = 1; it <= config.iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const auto batch = sampler.next(config.batch_size);
        std::size_t tokens = 0;
        for (std::size_t b : batch) {
            tokens += corpus[usable[b]].response.size();
        }
        const double scale = 1.0 / static_cast<double>(tokens);
        double loss = 0.0;
        for (std::size_t b : batch) {
            const auto& ex = corpus[usable[b]];
            const auto trace = model.forward(ex.prompt, ex.response);
            for (double lp : trace.logprobs) {
                loss -= lp * scale;
            }
            // loss = -sum(logp) / tokens
            const std::vector<double> seeds(trace.logprobs.size(), -scale);
            model.backward(trace, seeds, grad);
        }
        opt.step(model.parameters(), grad, config.lr_at(it));
        if (progress) {
            progress(it, loss);
        }
        if (snapshot && it % config.checkpoint_every == 0) {
            snapshot(it, model);
        }
    }
    if (snapshot && config.iterations == 0) {
        snapshot(0, model);
    }
    return model;
}

using RefCache = std::pair<std::vector<double>, std::vector<double>>;

}  // namespace

ToyLM pretrain(const Vocabulary& vocab, const ModelConfig& model_config,
               const std::vector<LmExample>& corpus, const TrainConfig& config,
               const ProgressFn& progress) {
    if (corpus.empty()) {
        throw DataError("pretrain: empty corpus");
    }
    return next_token_training(ToyLM(vocab, model_config), corpus, config, progress);
}

ToyLM sft(const ToyLM& model, const std::vector<LmExample>& corpus, const TrainConfig& config,
          const ProgressFn& progress) {
    if (corpus.empty()) {
        throw DataError("sft: empty corpus");
    }
    return next_token_training(model, corpus, config, progress);
}

std::vector<Checkpoint> sft_checkpoints(const ToyLM& model, const std::vector<LmExample>& corpus,
                                        const TrainConfig& config, const Validator& validate,
                                        const ProgressFn& progress) {
    if (corpus.empty()) {
        throw DataError("sft: empty corpus");
    }
    std::vector<Checkpoint> out;
    next_token_training(model, corpus, config, progress, [&](std::size_t it, const ToyLM& m) {
        out.push_back({it, m, validate ? validate(m) : CheckpointMetrics{}});
    });
    return out;
}

double dpo_batch_gradient(const ToyLM& policy, const std::vector<const PairExample*>& batch,
                          const std::vector<RefCache>& ref_logprobs, const TrainConfig& config,
                          std::span<double> grad) {
    if (batch.size() != ref_logprobs.size()) {
        throw DataError("reference cache does not match batch");
    }
    const dpo::DpoConfig dcfg{config.beta, config.loss_mode == LossMode::standard ? 1.0 : config.gamma};
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const PairExample& ex = *batch[b];
        const auto tw = policy.forward(ex.prompt, ex.preferred);
        const auto tl = policy.forward(ex.prompt, ex.dispreferred);
        std::vector<double> gw;
        std::vector<double> gl;
        if (config.loss_mode == LossMode::standard) {
            auto sum = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
            const double pw = sum(tw.logprobs);
            const double rw = sum(ref_logprobs[b].first);
            const double pl = sum(tl.logprobs);
            const double rl = sum(ref_logprobs[b].second);
            const double z = config.beta * ((pw - rw) - (pl - rl));
            loss += dpo::dpo_loss(pw, rw, pl, rl, config.beta) * scale;
            const double coef = config.beta * dpo::sigmoid(-z);
            gw.assign(tw.logprobs.size(), -coef);
            gl.assign(tl.logprobs.size(), coef);
        } else {
            dpo::WdpoInputs in{tw.logprobs,        ref_logprobs[b].first,  &ex.preferred_mask,
                               tl.logprobs,        ref_logprobs[b].second, &ex.dispreferred_mask};
            auto g = dpo::wdpo_grad(in, dcfg);
            loss += g.loss * scale;
            gw = std::move(g.grad_w);
            gl = std::move(g.grad_l);
        }
        for (double& v : gw) {
            v *= scale;
        }
        for (double& v : gl) {
            v *= scale;
        }
        policy.backward(tw, gw, grad);
        policy.backward(tl, gl, grad);
    }
    return loss;
}

DpoRun dpo_finetune(const ToyLM& model, const ToyLM& reference, const std::vector<PairExample>& pairs,
                    const TrainConfig& config, const Validator& validate, const ProgressFn& progress) {
    config.validate();
    if (pairs.empty()) {
        throw DataError("dpo: empty preference set");
    }
    if (!(model.vocab() == reference.vocab())) {
        throw DataError("dpo: policy and reference vocabularies differ");
    }
    DpoRun run;
    std::vector<const PairExample*> usable;
    std::vector<RefCache> cache;
    for (const auto& p : pairs) {
        try {
            RefCache c{reference.response_logprobs(p.prompt, p.preferred),
                       reference.response_logprobs(p.prompt, p.dispreferred)};
            // The policy may have a different context limit than the reference.
            const std::size_t longest = p.prompt.size() + 2 + std::max(p.preferred.size(), p.dispreferred.size());
            if (longest > model.config().max_context) {
                throw ContextOverflow("pair exceeds policy context");
            }
            usable.push_back(&p);
            cache.push_back(std::move(c));
        } catch (const ContextOverflow&) {
            ++run.skipped_overflow;
        }
    }
    if (usable.empty()) {
        throw DataError("dpo: every pair exceeds the model context");
    }

    ToyLM policy = model;
    auto snapshot = [&](std::size_t it) {
        Checkpoint ck{it, policy, {}};
        if (validate) {
            ck.metrics = validate(policy);
        }
        run.checkpoints.push_back(std::move(ck));
    };
    if (config.iterations == 0) {
        snapshot(0);
        return run;
    }

    BatchSampler sampler(usable.size(), config.seed);
    RmsProp opt(policy.parameter_count(), config.rms_decay, config.eps, config.weight_decay);
    std::vector<double> grad(policy.parameter_count());
    std::vector<const PairExample*> batch;
    std::vector<RefCache> batch_ref;
    for (std::size_t it = 1; it <= config.iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        batch.clear();
        batch_ref.clear();
        for (std::size_t i : sampler.next(config.batch_size)) {
            batch.push_back(usable[i]);
            batch_ref.push_back(cache[i]);
        }
        const double loss = dpo_batch_gradient(policy, batch, batch_ref, config, grad);
        opt.step(policy.parameters(), grad, config.lr_at(it));
        run.losses.push_back(loss);
        if (progress) {
            progress(it, loss);
        }
        if (it % config.checkpoint_every == 0) {
            snapshot(it);
        }
    }
    return run;
}

}  // namespace reportdpo::lm
