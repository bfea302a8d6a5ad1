#pragma once

#include <map>
#include <set>
#include <string>

namespace ccdpo {

// Sequence-level log-probabilities (sums over response tokens, nats) for a
// (chosen, rejected) preference pair under policy and frozen reference.
struct PairLogProbs {
    double policy_chosen = 0;
    double ref_chosen = 0;
    double policy_rejected = 0;
    double ref_rejected = 0;
};

// Log-probabilities of the same chosen text under three conditions: the
// aligned image, no image, and the contradictory image.
struct ContrastLogProbs {
    double policy_cond = 0;
    double ref_cond = 0;
    double policy_uncond = 0;
    double ref_uncond = 0;
    double policy_contra = 0;
    double ref_contra = 0;
};

struct LossConfig {
    double beta = 0.1;
    double beta1 = 0.1;
    double beta2 = 0.1;
    double gamma = 0.1;
};

// Loss value plus partial derivatives with respect to every consumed
// log-probability field. Gradients of reference fields are computed
// analytically but listed in `frozen`: the reference receives no update.
struct LossOut {
    double value = 0;
    std::map<std::string, double> grads;
    std::set<std::string> frozen;
};

// Numerically stable softplus(x) = log(1 + exp(x)).
double softplus(double x);
// Logistic sigmoid.
double sigmoid(double x);

// -log sigmoid(m) with m = beta * [(policy_chosen - ref_chosen) -
// (policy_rejected - ref_rejected)].
LossOut dpo_loss(const PairLogProbs& lp, double beta);

// Margin between the aligned-image and no-image conditions.
LossOut focus_loss(const ContrastLogProbs& cl, double beta1);

// Margin between the no-image and contradictory-image conditions.
LossOut reject_loss(const ContrastLogProbs& cl, double beta2);

// focus_loss + reject_loss, gradients summed fieldwise.
LossOut vision_contrastive_loss(const ContrastLogProbs& cl, double beta1, double beta2);

// base + gamma * nll_chosen; extends grads with d/d nll = gamma.
LossOut total_loss(const LossOut& base, double nll_chosen, double gamma);

}  // namespace ccdpo
