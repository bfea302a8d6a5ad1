#include "ccdpo/dpo_core.hpp"

#include <cmath>
#include <stdexcept>

namespace ccdpo {

double softplus(double x) {
    // Branchless decomposition: exact for |x| up to overflow range.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

void require_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string("non-finite input: ") + name);
}

}  // namespace

LossOut dpo_loss(const PairLogProbs& lp, double beta) {
    if (beta <= 0) throw std::invalid_argument("dpo_loss: beta must be positive");
    require_finite(lp.policy_chosen, "policy_chosen");
    require_finite(lp.ref_chosen, "ref_chosen");
    require_finite(lp.policy_rejected, "policy_rejected");
    require_finite(lp.ref_rejected, "ref_rejected");

    const double m = beta * ((lp.policy_chosen - lp.ref_chosen) -
                             (lp.policy_rejected - lp.ref_rejected));
    const double s = sigmoid(-m);  // d value / d m = -s

    LossOut out;
    out.value = softplus(-m);
    out.grads["policy_chosen"] = -beta * s;
    out.grads["policy_rejected"] = beta * s;
    out.grads["ref_chosen"] = beta * s;
    out.grads["ref_rejected"] = -beta * s;
    out.frozen = {"ref_chosen", "ref_rejected"};
    return out;
}

LossOut focus_loss(const ContrastLogProbs& cl, double beta1) {
    if (beta1 <= 0) throw std::invalid_argument("focus_loss: beta1 must be positive");
    require_finite(cl.policy_cond, "policy_cond");
    require_finite(cl.ref_cond, "ref_cond");
    require_finite(cl.policy_uncond, "policy_uncond");
    require_finite(cl.ref_uncond, "ref_uncond");

    const double m = beta1 * ((cl.policy_cond - cl.ref_cond) -
                              (cl.policy_uncond - cl.ref_uncond));
    const double s = sigmoid(-m);

    LossOut out;
    out.value = softplus(-m);
    out.grads["policy_cond"] = -beta1 * s;
    out.grads["policy_uncond"] = beta1 * s;
    out.grads["ref_cond"] = beta1 * s;
    out.grads["ref_uncond"] = -beta1 * s;
    out.frozen = {"ref_cond", "ref_uncond"};
    return out;
}

LossOut reject_loss(const ContrastLogProbs& cl, double beta2) {
    if (beta2 <= 0) throw std::invalid_argument("reject_loss: beta2 must be positive");
    require_finite(cl.policy_uncond, "policy_uncond");
    require_finite(cl.ref_uncond, "ref_uncond");
    require_finite(cl.policy_contra, "policy_contra");
    require_finite(cl.ref_contra, "ref_contra");

    const double m = beta2 * ((cl.policy_uncond - cl.ref_uncond) -
                              (cl.policy_contra - cl.ref_contra));
    const double s = sigmoid(-m);

    LossOut out;
    out.value = softplus(-m);
    out.grads["policy_uncond"] = -beta2 * s;
    out.grads["policy_contra"] = beta2 * s;
    out.grads["ref_uncond"] = beta2 * s;
    out.grads["ref_contra"] = -beta2 * s;
    out.frozen = {"ref_uncond", "ref_contra"};
    return out;
}

LossOut vision_contrastive_loss(const ContrastLogProbs& cl, double beta1, double beta2) {
    LossOut f = focus_loss(cl, beta1);
    LossOut r = reject_loss(cl, beta2);

    LossOut out;
    out.value = f.value + r.value;
    out.grads = f.grads;
    for (const auto& [k, v] : r.grads) out.grads[k] += v;
    out.frozen = f.frozen;
    out.frozen.insert(r.frozen.begin(), r.frozen.end());
    return out;
}

LossOut total_loss(const LossOut& base, double nll_chosen, double gamma) {
    if (gamma < 0) throw std::invalid_argument("total_loss: gamma must be non-negative");
    if (!(nll_chosen >= 0)) throw std::invalid_argument("total_loss: nll_chosen must be >= 0");

    LossOut out = base;
    out.value += gamma * nll_chosen;
    out.grads["nll"] = gamma;
    return out;
}

}  // namespace ccdpo
