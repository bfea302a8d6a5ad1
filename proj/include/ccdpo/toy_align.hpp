#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ccdpo/dpo_core.hpp"
#include "ccdpo/rng.hpp"

namespace ccdpo {

// Tabular conditional policy: one softmax token distribution per context
// state. State 0 is reserved for the no-image condition.
struct ToyPolicy {
    std::size_t num_states = 0;
    std::size_t vocab = 0;
    std::vector<double> logits;  // row-major, num_states x vocab

    static ToyPolicy zeros(std::size_t num_states, std::size_t vocab);

    double& at(std::size_t state, std::size_t token) { return logits[state * vocab + token]; }
    double at(std::size_t state, std::size_t token) const { return logits[state * vocab + token]; }
};

enum class ToyLevel { context, needle_t, needle_v };

std::string to_string(ToyLevel level);

struct ToyPair {
    ToyLevel level = ToyLevel::context;
    int context_w = 0;       // aligned view state
    int context_l = -1;      // contradictory view state (needle_v only)
    std::vector<int> chosen_tokens;
    std::vector<int> rejected_tokens;  // empty for needle_v
};

struct StageSpec {
    std::string name;  // context | needle_t | needle_v | mixed
    double learning_rate = 0.5;
    int epochs = 200;
};

struct Schedule {
    enum class Mode { multi_stage, one_stage_mixed };
    Mode mode = Mode::multi_stage;
    std::vector<StageSpec> stages;

    static Schedule multi_stage(double lr, int epochs);
    static Schedule one_stage_mixed(double lr, int epochs);
};

// Sum over tokens of log softmax(logits[context])[token].
double logprob(const ToyPolicy& policy, int context, const std::vector<int>& tokens);

// Gradient of logprob over the context row: count_j - len * softmax[j].
std::vector<double> grad_logprob(const ToyPolicy& policy, int context,
                                 const std::vector<int>& tokens);

struct SynthConfig {
    std::size_t num_states = 32;  // includes reserved state 0
    std::size_t vocab = 16;
    std::size_t n_pairs = 2000;
    // Level mix mirroring the 27.3k : 10.8k : 3.7k dataset split.
    double mix_context = 2.0;
    double mix_needle_t = 1.0;
    double mix_needle_v = 0.35;
    std::size_t response_len = 4;
};

// Planted-structure dataset: each state owns a "true" token block; chosen
// responses draw from the aligned state's block, rejected responses from a
// different block (swap), a truncation of the chosen list (trunc), or the
// block complement (mismatch).
std::vector<ToyPair> synth_dataset(const SynthConfig& config, Rng& rng);

struct EpochRecord {
    std::string stage;
    int epoch = 0;
    double mean_loss = 0;
    double pref_acc = 0;
};

struct TrainResult {
    ToyPolicy policy;
    std::vector<EpochRecord> history;
};

// Full-batch gradient descent; the reference is re-frozen at the start of
// each stage. Throws std::runtime_error on NaN loss.
TrainResult train(const ToyPolicy& policy_init, const std::vector<ToyPair>& pairs,
                  const Schedule& schedule, const LossConfig& loss_config);

struct AccuracyResult {
    double accuracy = 0;
    std::size_t ties = 0;
    std::size_t total = 0;
};

// Fraction of pairs whose implicit reward margin is strictly positive.
AccuracyResult preference_accuracy(const ToyPolicy& policy, const ToyPolicy& reference,
                                   const std::vector<ToyPair>& pairs,
                                   const LossConfig& loss_config);

struct GradCheckResult {
    std::string kind;
    double max_rel_err = 0;
};

// Central-difference verification of all four loss gradients and the
// policy log-prob gradient. Near-zero gradient pairs fall back to an
// absolute-error comparison.
std::vector<GradCheckResult> finite_diff_check(int n_trials, double step, Rng& rng);

void dump_policy(const ToyPolicy& policy, std::ostream& os);
ToyPolicy load_policy(std::istream& is);

}  // namespace ccdpo
