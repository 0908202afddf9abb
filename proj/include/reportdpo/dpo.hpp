#pragma once

#include <span>
#include <vector>

namespace reportdpo::dpo {

/// Per-token log-probabilities in nats (every entry <= 0).
using LogProbSequence = std::vector<double>;

/// Per-token relevance flags r_i; must match its sequence in length.
using RelevanceMask = std::vector<bool>;

struct DpoConfig {
    double beta = 0.1;
    /// Weight on irrelevant tokens; 0 skips them, 1 is the standard loss.
    double gamma = 1.0;

    /// Throws ConfigError unless beta > 0 and 0 <= gamma <= 1.
    void validate() const;
};

/// sum_i (r_i ? 1 : gamma) * logprob_i. Throws DataError on length mismatch.
double weighted_logprob(std::span<const double> logprobs, const RelevanceMask& mask, double gamma);

/// log(1 + e^x) without overflow or cancellation.
double softplus(double x);

/// Logistic function, stable for large |x|.
double sigmoid(double x);

/// -log sigmoid(beta * ((policy_w - ref_w) - (policy_l - ref_l))).
/// Throws DataError when any input is non-finite.
double dpo_loss(double policy_w, double ref_w, double policy_l, double ref_l, double beta);

/// The four sequences a weighted loss consumes. The mask for a response is
/// shared between policy and reference.
struct WdpoInputs {
    std::span<const double> policy_w;
    std::span<const double> ref_w;
    const RelevanceMask* mask_w = nullptr;
    std::span<const double> policy_l;
    std::span<const double> ref_l;
    const RelevanceMask* mask_l = nullptr;
};

/// Preference margin z = beta * [(f_w^pi - f_w^ref) - (f_l^pi - f_l^ref)].
double wdpo_margin(const WdpoInputs& in, const DpoConfig& config);

double wdpo_loss(const WdpoInputs& in, const DpoConfig& config);

struct WdpoGradient {
    double loss = 0.0;
    double margin = 0.0;
    /// d loss / d policy_w[i] and d loss / d policy_l[i].
    std::vector<double> grad_w;
    std::vector<double> grad_l;
};

/// Loss and its gradient with respect to the policy log-probabilities.
WdpoGradient wdpo_grad(const WdpoInputs& in, const DpoConfig& config);

}  // namespace reportdpo::dpo
