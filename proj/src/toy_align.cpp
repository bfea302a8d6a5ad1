#include "ccdpo/toy_align.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ccdpo {

ToyPolicy ToyPolicy::zeros(std::size_t num_states, std::size_t vocab) {
    ToyPolicy p;
    p.num_states = num_states;
    p.vocab = vocab;
    p.logits.assign(num_states * vocab, 0.0);
    return p;
}

std::string to_string(ToyLevel level) {
    switch (level) {
        case ToyLevel::context: return "context";
        case ToyLevel::needle_t: return "needle_t";
        case ToyLevel::needle_v: return "needle_v";
    }
    throw std::logic_error("unreachable toy level");
}

Schedule Schedule::multi_stage(double lr, int epochs) {
    Schedule s;
    s.mode = Mode::multi_stage;
    s.stages = {{"context", lr, epochs}, {"needle_t", lr, epochs}, {"needle_v", lr, epochs}};
    return s;
}

Schedule Schedule::one_stage_mixed(double lr, int epochs) {
    Schedule s;
    s.mode = Mode::one_stage_mixed;
    s.stages = {{"mixed", lr, epochs}};
    return s;
}

namespace {

std::vector<double> log_softmax_row(const ToyPolicy& policy, int context) {
    if (context < 0 || static_cast<std::size_t>(context) >= policy.num_states)
        throw std::out_of_range("logprob: context state out of range");
    std::vector<double> row(policy.vocab);
    double mx = -1e300;
    for (std::size_t j = 0; j < policy.vocab; ++j)
        mx = std::max(mx, policy.at(static_cast<std::size_t>(context), j));
    double sum = 0;
    for (std::size_t j = 0; j < policy.vocab; ++j)
        sum += std::exp(policy.at(static_cast<std::size_t>(context), j) - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < policy.vocab; ++j)
        row[j] = policy.at(static_cast<std::size_t>(context), j) - lse;
    return row;
}

}  // namespace

double logprob(const ToyPolicy& policy, int context, const std::vector<int>& tokens) {
    const auto row = log_softmax_row(policy, context);
    double total = 0;
    for (int t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= policy.vocab)
            throw std::out_of_range("logprob: token id out of range");
        total += row[static_cast<std::size_t>(t)];
    }
    return total;
}

std::vector<double> grad_logprob(const ToyPolicy& policy, int context,
                                 const std::vector<int>& tokens) {
    const auto row = log_softmax_row(policy, context);
    std::vector<double> grad(policy.vocab, 0.0);
    for (int t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= policy.vocab)
            throw std::out_of_range("grad_logprob: token id out of range");
        grad[static_cast<std::size_t>(t)] += 1.0;
    }
    const double len = static_cast<double>(tokens.size());
    for (std::size_t j = 0; j < policy.vocab; ++j) grad[j] -= len * std::exp(row[j]);
    return grad;
}

namespace {

struct BlockPlan {
    std::size_t block_size = 0;
    std::size_t n_blocks = 0;

    std::size_t block_of_state(int state) const {
        return static_cast<std::size_t>(state - 1) % n_blocks;
    }
    int token_in_block(std::size_t block, Rng& rng) const {
        return static_cast<int>(block * block_size + rand_below(rng, block_size));
    }
};

BlockPlan make_plan(const SynthConfig& cfg) {
    BlockPlan plan;
    plan.block_size = std::max<std::size_t>(2, cfg.vocab / 4);
    plan.n_blocks = cfg.vocab / plan.block_size;
    if (plan.n_blocks < 2)
        throw std::invalid_argument("synth_dataset: vocab too small for disjoint blocks");
    return plan;
}

int sample_state_with_other_block(const BlockPlan& plan, std::size_t avoid_block,
                                  std::size_t num_states, Rng& rng) {
    int s;
    do {
        s = 1 + static_cast<int>(rand_below(rng, num_states - 1));
    } while (plan.block_of_state(s) == avoid_block);
    return s;
}

}  // namespace

std::vector<ToyPair> synth_dataset(const SynthConfig& cfg, Rng& rng) {
    if (cfg.num_states < 3 || cfg.vocab < 2)
        throw std::invalid_argument("synth_dataset: need num_states >= 3 and vocab >= 2");
    const BlockPlan plan = make_plan(cfg);

    const double total_w = cfg.mix_context + cfg.mix_needle_t + cfg.mix_needle_v;
    std::size_t n_ctx = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfg.n_pairs) * cfg.mix_context / total_w));
    std::size_t n_nt = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfg.n_pairs) * cfg.mix_needle_t / total_w));
    if (n_ctx + n_nt > cfg.n_pairs) n_nt = cfg.n_pairs - n_ctx;
    const std::size_t n_nv = cfg.n_pairs - n_ctx - n_nt;

    std::vector<ToyPair> pairs;
    pairs.reserve(cfg.n_pairs);

    auto sample_response = [&](std::size_t block) {
        std::vector<int> tokens(cfg.response_len);
        for (auto& t : tokens) t = plan.token_in_block(block, rng);
        return tokens;
    };

    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
        ToyPair p;
        if (i < n_ctx)
            p.level = ToyLevel::context;
        else if (i < n_ctx + n_nt)
            p.level = ToyLevel::needle_t;
        else
            p.level = ToyLevel::needle_v;

        p.context_w = 1 + static_cast<int>(rand_below(rng, cfg.num_states - 1));
        const std::size_t block = plan.block_of_state(p.context_w);
        p.chosen_tokens = sample_response(block);

        switch (p.level) {
            case ToyLevel::context: {
                if (rand_below(rng, 2) == 0) {
                    // Swap analogue: tokens from a different state's block.
                    int other = sample_state_with_other_block(plan, block, cfg.num_states, rng);
                    p.rejected_tokens = sample_response(plan.block_of_state(other));
                } else {
                    // Trunc analogue: drop a tail of the chosen response.
                    std::size_t keep =
                        1 + rand_below(rng, cfg.response_len > 1 ? cfg.response_len - 1 : 1);
                    p.rejected_tokens.assign(p.chosen_tokens.begin(),
                                             p.chosen_tokens.begin() + keep);
                }
                break;
            }
            case ToyLevel::needle_t: {
                // Mismatch analogue: tokens from the block complement.
                p.rejected_tokens.resize(cfg.response_len);
                const std::size_t comp = cfg.vocab - plan.block_size;
                for (auto& t : p.rejected_tokens) {
                    std::size_t r = rand_below(rng, comp);
                    if (r >= block * plan.block_size) r += plan.block_size;
                    t = static_cast<int>(r);
                }
                break;
            }
            case ToyLevel::needle_v: {
                p.context_l = sample_state_with_other_block(plan, block, cfg.num_states, rng);
                break;
            }
        }
        pairs.push_back(std::move(p));
    }

    shuffle_in_place(rng, pairs);
    return pairs;
}

namespace {

struct PairEval {
    double loss = 0;
    double margin = 0;
    double nll = 0;
};

// Evaluates one pair's loss and accumulates the analytic gradient into
// `grad` (same shape as the policy logits) when non-null.
PairEval eval_pair(const ToyPolicy& policy, const ToyPolicy& reference, const ToyPair& pair,
                   const LossConfig& cfg, std::vector<double>* grad) {
    PairEval ev;
    if (pair.level == ToyLevel::needle_v) {
        ContrastLogProbs cl;
        cl.policy_cond = logprob(policy, pair.context_w, pair.chosen_tokens);
        cl.ref_cond = logprob(reference, pair.context_w, pair.chosen_tokens);
        cl.policy_uncond = logprob(policy, 0, pair.chosen_tokens);
        cl.ref_uncond = logprob(reference, 0, pair.chosen_tokens);
        cl.policy_contra = logprob(policy, pair.context_l, pair.chosen_tokens);
        cl.ref_contra = logprob(reference, pair.context_l, pair.chosen_tokens);

        LossOut base = vision_contrastive_loss(cl, cfg.beta1, cfg.beta2);
        ev.nll = -cl.policy_cond;
        LossOut tot = total_loss(base, ev.nll, cfg.gamma);
        ev.loss = tot.value;
        ev.margin = cfg.beta1 * ((cl.policy_cond - cl.ref_cond) -
                                 (cl.policy_uncond - cl.ref_uncond)) +
                    cfg.beta2 * ((cl.policy_uncond - cl.ref_uncond) -
                                 (cl.policy_contra - cl.ref_contra));

        if (grad) {
            const auto g_tok = grad_logprob(policy, pair.context_w, pair.chosen_tokens);
            const auto g_unc = grad_logprob(policy, 0, pair.chosen_tokens);
            const auto g_con = grad_logprob(policy, pair.context_l, pair.chosen_tokens);
            const double c_cond = base.grads.at("policy_cond") - cfg.gamma;
            const double c_unc = base.grads.at("policy_uncond");
            const double c_con = base.grads.at("policy_contra");
            const std::size_t V = policy.vocab;
            for (std::size_t j = 0; j < V; ++j) {
                (*grad)[static_cast<std::size_t>(pair.context_w) * V + j] += c_cond * g_tok[j];
                (*grad)[j] += c_unc * g_unc[j];
                (*grad)[static_cast<std::size_t>(pair.context_l) * V + j] += c_con * g_con[j];
            }
        }
    } else {
        PairLogProbs lp;
        lp.policy_chosen = logprob(policy, pair.context_w, pair.chosen_tokens);
        lp.ref_chosen = logprob(reference, pair.context_w, pair.chosen_tokens);
        lp.policy_rejected = logprob(policy, pair.context_w, pair.rejected_tokens);
        lp.ref_rejected = logprob(reference, pair.context_w, pair.rejected_tokens);

        LossOut base = dpo_loss(lp, cfg.beta);
        ev.nll = -lp.policy_chosen;
        LossOut tot = total_loss(base, ev.nll, cfg.gamma);
        ev.loss = tot.value;
        ev.margin = cfg.beta * ((lp.policy_chosen - lp.ref_chosen) -
                                (lp.policy_rejected - lp.ref_rejected));

        if (grad) {
            const auto g_cho = grad_logprob(policy, pair.context_w, pair.chosen_tokens);
            const auto g_rej = grad_logprob(policy, pair.context_w, pair.rejected_tokens);
            const double c_cho = base.grads.at("policy_chosen") - cfg.gamma;
            const double c_rej = base.grads.at("policy_rejected");
            const std::size_t V = policy.vocab;
            const std::size_t off = static_cast<std::size_t>(pair.context_w) * V;
            for (std::size_t j = 0; j < V; ++j)
                (*grad)[off + j] += c_cho * g_cho[j] + c_rej * g_rej[j];
        }
    }
    return ev;
}

}  // namespace

TrainResult train(const ToyPolicy& policy_init, const std::vector<ToyPair>& pairs,
                  const Schedule& schedule, const LossConfig& loss_config) {
    if (pairs.empty()) throw std::invalid_argument("train: empty pair list");
    if (schedule.stages.empty()) throw std::invalid_argument("train: empty schedule");

    TrainResult result;
    result.policy = policy_init;

    for (const auto& stage : schedule.stages) {
        std::vector<ToyPair> stage_pairs;
        if (stage.name == "mixed") {
            stage_pairs = pairs;
        } else {
            for (const auto& p : pairs)
                if (to_string(p.level) == stage.name) stage_pairs.push_back(p);
        }
        if (stage_pairs.empty()) continue;

        // Re-anchor: the reference is the policy at stage start.
        const ToyPolicy reference = result.policy;

        for (int epoch = 0; epoch < stage.epochs; ++epoch) {
            std::vector<double> grad(result.policy.logits.size(), 0.0);
            double loss_sum = 0;
            std::size_t correct = 0;
            for (const auto& p : stage_pairs) {
                PairEval ev = eval_pair(result.policy, reference, p, loss_config, &grad);
                loss_sum += ev.loss;
                if (ev.margin > 0) ++correct;
            }
            const double n = static_cast<double>(stage_pairs.size());
            const double mean_loss = loss_sum / n;
            if (!std::isfinite(mean_loss)) {
                std::ostringstream err;
                err << "train: non-finite loss at stage " << stage.name << " epoch " << epoch;
                throw std::runtime_error(err.str());
            }
            result.history.push_back(
                {stage.name, epoch, mean_loss, static_cast<double>(correct) / n});

            const double scale = stage.learning_rate / n;
            for (std::size_t i = 0; i < grad.size(); ++i)
                result.policy.logits[i] -= scale * grad[i];
        }
    }
    return result;
}

AccuracyResult preference_accuracy(const ToyPolicy& policy, const ToyPolicy& reference,
                                   const std::vector<ToyPair>& pairs,
                                   const LossConfig& loss_config) {
    if (pairs.empty()) throw std::invalid_argument("preference_accuracy: empty pair list");
    AccuracyResult r;
    r.total = pairs.size();
    for (const auto& p : pairs) {
        PairEval ev = eval_pair(policy, reference, p, loss_config, nullptr);
        if (ev.margin > 0)
            r.accuracy += 1.0;
        else if (ev.margin == 0)
            ++r.ties;
    }
    r.accuracy /= static_cast<double>(r.total);
    return r;
}

namespace {

double rel_err(double analytic, double numeric) {
    const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
    if (scale < 1e-6) return std::fabs(analytic - numeric);  // absolute fallback
    return std::fabs(analytic - numeric) / scale;
}

double rand_range(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rand_unit(rng); }

}  // namespace

std::vector<GradCheckResult> finite_diff_check(int n_trials, double step, Rng& rng) {
    if (step <= 0) throw std::invalid_argument("finite_diff_check: step must be positive");

    std::vector<GradCheckResult> results = {
        {"dpo", 0}, {"focus", 0}, {"reject", 0}, {"vision_contrastive", 0}, {"logprob", 0}};
    GradCheckResult& dpo_r = results[0];
    GradCheckResult& focus_r = results[1];
    GradCheckResult& reject_r = results[2];
    GradCheckResult& vc_r = results[3];
    GradCheckResult& lp_r = results[4];

    for (int trial = 0; trial < n_trials; ++trial) {
        const double beta = rand_range(rng, 0.05, 0.5);

        {
            PairLogProbs lp;
            lp.policy_chosen = rand_range(rng, -5, 5);
            lp.ref_chosen = rand_range(rng, -5, 5);
            lp.policy_rejected = rand_range(rng, -5, 5);
            lp.ref_rejected = rand_range(rng, -5, 5);
            LossOut out = dpo_loss(lp, beta);
            auto field = [](PairLogProbs& p, const std::string& name) -> double& {
                if (name == "policy_chosen") return p.policy_chosen;
                if (name == "ref_chosen") return p.ref_chosen;
                if (name == "policy_rejected") return p.policy_rejected;
                return p.ref_rejected;
            };
            for (const auto& [name, g] : out.grads) {
                PairLogProbs hi = lp, lo = lp;
                field(hi, name) += step;
                field(lo, name) -= step;
                const double fd = (dpo_loss(hi, beta).value - dpo_loss(lo, beta).value) /
                                  (2 * step);
                dpo_r.max_rel_err = std::max(dpo_r.max_rel_err, rel_err(g, fd));
            }
        }

        {
            ContrastLogProbs cl;
            cl.policy_cond = rand_range(rng, -5, 5);
            cl.ref_cond = rand_range(rng, -5, 5);
            cl.policy_uncond = rand_range(rng, -5, 5);
            cl.ref_uncond = rand_range(rng, -5, 5);
            cl.policy_contra = rand_range(rng, -5, 5);
            cl.ref_contra = rand_range(rng, -5, 5);
            const double beta1 = rand_range(rng, 0.05, 0.5);
            const double beta2 = rand_range(rng, 0.05, 0.5);

            auto field = [](ContrastLogProbs& c, const std::string& name) -> double& {
                if (name == "policy_cond") return c.policy_cond;
                if (name == "ref_cond") return c.ref_cond;
                if (name == "policy_uncond") return c.policy_uncond;
                if (name == "ref_uncond") return c.ref_uncond;
                if (name == "policy_contra") return c.policy_contra;
                return c.ref_contra;
            };
            auto check = [&](GradCheckResult& res, auto&& fn) {
                LossOut out = fn(cl);
                for (const auto& [name, g] : out.grads) {
                    ContrastLogProbs hi = cl, lo = cl;
                    field(hi, name) += step;
                    field(lo, name) -= step;
                    const double fd = (fn(hi).value - fn(lo).value) / (2 * step);
                    res.max_rel_err = std::max(res.max_rel_err, rel_err(g, fd));
                }
            };
            check(focus_r, [&](const ContrastLogProbs& c) { return focus_loss(c, beta1); });
            check(reject_r, [&](const ContrastLogProbs& c) { return reject_loss(c, beta2); });
            check(vc_r, [&](const ContrastLogProbs& c) {
                return vision_contrastive_loss(c, beta1, beta2);
            });
        }

        {
            ToyPolicy policy = ToyPolicy::zeros(3, 8);
            for (auto& l : policy.logits) l = rand_range(rng, -2, 2);
            const int context = 1;
            std::vector<int> tokens(3);
            for (auto& t : tokens) t = static_cast<int>(rand_below(rng, policy.vocab));

            const auto analytic = grad_logprob(policy, context, tokens);
            for (std::size_t j = 0; j < policy.vocab; ++j) {
                ToyPolicy hi = policy, lo = policy;
                hi.at(context, j) += step;
                lo.at(context, j) -= step;
                const double fd =
                    (logprob(hi, context, tokens) - logprob(lo, context, tokens)) / (2 * step);
                lp_r.max_rel_err = std::max(lp_r.max_rel_err, rel_err(analytic[j], fd));
            }
        }
    }
    return results;
}

void dump_policy(const ToyPolicy& policy, std::ostream& os) {
    os << policy.num_states << ' ' << policy.vocab << '\n';
    os << std::setprecision(17);
    for (std::size_t s = 0; s < policy.num_states; ++s) {
        for (std::size_t j = 0; j < policy.vocab; ++j) {
            if (j) os << ' ';
            os << policy.at(s, j);
        }
        os << '\n';
    }
}

ToyPolicy load_policy(std::istream& is) {
    std::size_t num_states = 0, vocab = 0;
    if (!(is >> num_states >> vocab))
        throw std::runtime_error("load_policy: malformed dimensions header");
    ToyPolicy p = ToyPolicy::zeros(num_states, vocab);
    for (auto& l : p.logits)
        if (!(is >> l)) throw std::runtime_error("load_policy: truncated logits");
    return p;
}

}  // namespace ccdpo
