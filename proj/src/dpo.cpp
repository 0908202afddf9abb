#include "reportdpo/dpo.hpp"

#include <cmath>
#include <string>

#include "reportdpo/error.hpp"

namespace reportdpo::dpo {

void DpoConfig::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw ConfigError("beta must be positive");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw ConfigError("gamma must lie in [0, 1]");
    }
}

double weighted_logprob(std::span<const double> logprobs, const RelevanceMask& mask, double gamma) {
    if (logprobs.size() != mask.size()) {
        throw DataError("weighted_logprob: " + std::to_string(logprobs.size()) +
                        " log-probs vs " + std::to_string(mask.size()) + " mask entries");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
        sum += (mask[i] ? 1.0 : gamma) * logprobs[i];
    }
    return sum;
}

double softplus(double x) {
    // log1p(exp(x)) for x <= 0, x + log1p(exp(-x)) otherwise.
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double dpo_loss(double policy_w, double ref_w, double policy_l, double ref_l, double beta) {
    if (!std::isfinite(policy_w) || !std::isfinite(ref_w) || !std::isfinite(policy_l) ||
        !std::isfinite(ref_l) || !std::isfinite(beta)) {
        throw DataError("dpo_loss: non-finite input");
    }
    const double z = beta * ((policy_w - ref_w) - (policy_l - ref_l));
    return softplus(-z);
}

namespace {

void check_inputs(const WdpoInputs& in) {
    if (in.mask_w == nullptr || in.mask_l == nullptr) {
        throw DataError("wdpo: missing relevance mask");
    }
    if (in.policy_w.size() != in.ref_w.size() || in.policy_l.size() != in.ref_l.size()) {
        throw DataError("wdpo: policy and reference lengths differ");
    }
}

}  // namespace

double wdpo_margin(const WdpoInputs& in, const DpoConfig& config) {
    config.validate();
    check_inputs(in);
    const double fw_pi = weighted_logprob(in.policy_w, *in.mask_w, config.gamma);
    const double fw_ref = weighted_logprob(in.ref_w, *in.mask_w, config.gamma);
    const double fl_pi = weighted_logprob(in.policy_l, *in.mask_l, config.gamma);
    const double fl_ref = weighted_logprob(in.ref_l, *in.mask_l, config.gamma);
    if (!std::isfinite(fw_pi) || !std::isfinite(fw_ref) || !std::isfinite(fl_pi) ||
        !std::isfinite(fl_ref)) {
        throw DataError("wdpo: non-finite log-probabilities");
    }
    return config.beta * ((fw_pi - fw_ref) - (fl_pi - fl_ref));
}

double wdpo_loss(const WdpoInputs& in, const DpoConfig& config) {
    config.validate();
    check_inputs(in);
    return dpo_loss(weighted_logprob(in.policy_w, *in.mask_w, config.gamma),
                    weighted_logprob(in.ref_w, *in.mask_w, config.gamma),
                    weighted_logprob(in.policy_l, *in.mask_l, config.gamma),
                    weighted_logprob(in.ref_l, *in.mask_l, config.gamma), config.beta);
}

WdpoGradient wdpo_grad(const WdpoInputs& in, const DpoConfig& config) {
    WdpoGradient g;
    g.margin = wdpo_margin(in, config);
    g.loss = softplus(-g.margin);
    // d softplus(-z)/dz = -(1 - sigmoid(z)) = -sigmoid(-z)
    const double scale = config.beta * sigmoid(-g.margin);
    g.grad_w.resize(in.policy_w.size());
    g.grad_l.resize(in.policy_l.size());
    for (std::size_t i = 0; i < g.grad_w.size(); ++i) {
        g.grad_w[i] = -scale * ((*in.mask_w)[i] ? 1.0 : config.gamma);
    }
    for (std::size_t i = 0; i < g.grad_l.size(); ++i) {
        g.grad_l[i] = scale * ((*in.mask_l)[i] ? 1.0 : config.gamma);
    }
    return g;
}

}  // namespace reportdpo::dpo
