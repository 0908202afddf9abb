#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "reportdpo/rng.hpp"
#include "reportdpo/toylm.hpp"
#include "reportdpo/trainer.hpp"

namespace tiny {

using namespace reportdpo;
using namespace reportdpo::lm;

inline Vocabulary vocab() {
    return Vocabulary::from_words({"heart", "lungs", "clear", "clear.", "stable", "stable.", "is", "are",
                                   "size", "normal.", "cough", "indication:", "no", "change."});
}

/// Fresh model with every parameter jittered so no gradient path is trivially zero.
inline ToyLM jittered_model(std::uint64_t seed, std::size_t embed = 4, std::size_t hidden = 5) {
    ModelConfig mc;
    mc.embed_dim = embed;
    mc.hidden_dim = hidden;
    mc.max_context = 32;
    mc.seed = seed;
    ToyLM m(vocab(), mc);
    Rng rng(seed + 100);
    for (double& p : m.parameters()) {
        p += 0.3 * rng.normal();
    }
    return m;
}

inline PairExample tiny_pair(const Vocabulary& v) {
    PairExample p;
    p.study_id = "t";
    p.prompt = {v.id("indication:"), v.id("cough")};
    p.preferred = {v.id("lungs"), v.id("clear."), Vocabulary::kSep, Vocabulary::kEnd};
    p.preferred_mask = {false, false, false, false};
    p.dispreferred = {v.id("heart"), v.id("stable"), Vocabulary::kSep, v.id("lungs"), v.id("clear."),
                      Vocabulary::kSep, Vocabulary::kEnd};
    p.dispreferred_mask = {true, true, true, false, false, false, false};
    return p;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Central differences of the batch DPO loss against dpo_batch_gradient over
/// every parameter of `policy`.
inline GradCheck through_model_check(ToyLM policy, const ToyLM& reference, const PairExample& pair,
                                     const TrainConfig& config, double h = 1e-5) {
    std::vector<const PairExample*> batch{&pair};
    std::vector<std::pair<std::vector<double>, std::vector<double>>> ref{
        {reference.response_logprobs(pair.prompt, pair.preferred),
         reference.response_logprobs(pair.prompt, pair.dispreferred)}};
    std::vector<double> grad(policy.parameter_count(), 0.0);
    dpo_batch_gradient(policy, batch, ref, config, grad);
    std::vector<double> scratch(policy.parameter_count());
    auto params = policy.parameters();
    GradCheck out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double x = params[i];
        params[i] = x + h;
        const double up = dpo_batch_gradient(policy, batch, ref, config, scratch);
        params[i] = x - h;
        const double down = dpo_batch_gradient(policy, batch, ref, config, scratch);
        params[i] = x;
        const double fd = (up - down) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-7});
        out.max_rel_error = std::max(out.max_rel_error, std::abs(fd - grad[i]) / denom);
        ++out.checked;
    }
    return out;
}

}  // namespace tiny
