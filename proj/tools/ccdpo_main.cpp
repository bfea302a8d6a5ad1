#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccdpo/io.hpp"
#include "ccdpo/pairgen.hpp"
#include "ccdpo/toy_align.hpp"

namespace {

using namespace ccdpo;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNaN = 3;

void echo_config(const std::map<std::string, std::string>& kv) {
    std::cout << "# effective-config\n";
    for (const auto& [k, v] : kv) std::cout << k << " = " << v << "\n";
    std::cout << "# end-config\n";
}

std::pair<int, int> parse_range(const std::string& s) {
    std::istringstream is(s);
    int lo = 0, hi = 0;
    char comma = 0;
    if (!(is >> lo >> comma >> hi) || comma != ',')
        throw std::runtime_error("bad range (expected \"lo,hi\"): " + s);
    return {lo, hi};
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) out.push_back(std::stod(item));
    return out;
}

struct GenPairsArgs {
    std::string config_path;
    std::string level = "all";
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<long long> count;
};

int cmd_gen_pairs(const GenPairsArgs& args) {
    std::map<std::string, std::string> kv;
    GenConfig cfg;
    try {
        kv = parse_kv_config(args.config_path);
        auto get = [&](const std::string& key, const std::string& fallback) {
            auto it = kv.find(key);
            return it == kv.end() ? fallback : it->second;
        };
        cfg.master_seed = std::stoull(get("master_seed", "42"));
        cfg.out_path = get("out", "");
        cfg.skip_log_path = get("skip_log", "");
        cfg.detailed_pool_path = get("pools.detailed", "");
        cfg.brief_pool_path = get("pools.brief", "");
        cfg.region_pool_path = get("pools.region", "");
        cfg.contrastive_pool_path = get("pools.contrastive", "");
        cfg.context_count = std::stoull(get("context.count", "0"));
        cfg.needle_t_count = std::stoull(get("needle_t.count", "0"));
        cfg.needle_v_count = std::stoull(get("needle_v.count", "0"));
        std::tie(cfg.context_n_min, cfg.context_n_max) =
            parse_range(get("context.n_range", "2,5"));
        std::tie(cfg.needle_n_min, cfg.needle_n_max) = parse_range(get("needle.n_range", "2,4"));
        auto weights = parse_doubles(get("context.perturb_weights", "1,1,1"));
        if (weights.size() != 3)
            throw std::runtime_error("context.perturb_weights needs 3 values");
        cfg.weight_trunc = weights[0];
        cfg.weight_short = weights[1];
        cfg.weight_swap = weights[2];
        cfg.max_iou = std::stod(get("needle.max_iou", "0"));

        if (args.seed) cfg.master_seed = *args.seed;
        if (!args.out.empty()) cfg.out_path = args.out;

        if (args.level == "context") {
            cfg.needle_t_count = cfg.needle_v_count = 0;
        } else if (args.level == "needle-t") {
            cfg.context_count = cfg.needle_v_count = 0;
        } else if (args.level == "needle-v") {
            cfg.context_count = cfg.needle_t_count = 0;
        } else if (args.level != "all") {
            throw std::runtime_error("unknown level: " + args.level);
        }

        if (args.count) {
            if (*args.count < 0) throw std::runtime_error("count must be non-negative");
            const auto total = static_cast<std::size_t>(*args.count);
            if (args.level == "context") {
                cfg.context_count = total;
            } else if (args.level == "needle-t") {
                cfg.needle_t_count = total;
            } else if (args.level == "needle-v") {
                cfg.needle_v_count = total;
            } else {
                // Split by the configured per-level proportions, falling
                // back to the 2 : 1 : 0.35 dataset ratio.
                double wc = static_cast<double>(cfg.context_count);
                double wt = static_cast<double>(cfg.needle_t_count);
                double wv = static_cast<double>(cfg.needle_v_count);
                if (wc + wt + wv <= 0) { wc = 2; wt = 1; wv = 0.35; }
                const double w = wc + wt + wv;
                cfg.needle_t_count =
                    static_cast<std::size_t>(std::llround(total * wt / w));
                cfg.needle_v_count =
                    static_cast<std::size_t>(std::llround(total * wv / w));
                cfg.context_count = total - cfg.needle_t_count - cfg.needle_v_count;
            }
        }
        if (cfg.out_path.empty()) throw std::runtime_error("no output path (out= or --out)");
    } catch (const std::exception& e) {
        std::cout << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    kv["master_seed"] = std::to_string(cfg.master_seed);
    kv["out"] = cfg.out_path;
    kv["context.count"] = std::to_string(cfg.context_count);
    kv["needle_t.count"] = std::to_string(cfg.needle_t_count);
    kv["needle_v.count"] = std::to_string(cfg.needle_v_count);
    echo_config(kv);

    GenResult result;
    try {
        result = run_generation(cfg);
    } catch (const std::exception& e) {
        std::cout << "generation error: " << e.what() << "\n";
        return kExitData;
    }

    std::cout << "total = " << result.stats.total << "\n";
    for (const auto& [level, s] : result.stats.per_level) {
        std::cout << level << ".count = " << s.count << "\n"
                  << level << ".images_range = [" << s.images_min << "," << s.images_max << "]\n"
                  << level << ".mean_chosen_tokens = " << s.mean_chosen_tokens << "\n"
                  << level << ".mean_rejected_tokens = " << s.mean_rejected_tokens << "\n";
    }
    std::cout << "skipped = " << result.skipped.size() << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string pred, gt, lexicon, report;
    int n = 0;  // 0 = all sequence lengths
};

int cmd_eval(const EvalArgs& args) {
    echo_config({{"pred", args.pred},
                 {"gt", args.gt},
                 {"lexicon", args.lexicon},
                 {"report", args.report},
                 {"n", std::to_string(args.n)}});
    try {
        const auto gt = load_ground_truth(args.gt);
        const auto preds = load_predictions(args.pred);
        const auto lexicon = load_lexicon(args.lexicon);

        std::map<std::string, const GroundTruthSequence*> by_id;
        for (const auto& s : gt) by_id[s.seq_id] = &s;

        std::vector<std::string> unknown;
        std::vector<SeqScores> scores;
        for (const auto& [seq_id, text] : preds) {
            auto it = by_id.find(seq_id);
            if (it == by_id.end()) {
                unknown.push_back(seq_id);
                continue;
            }
            if (args.n > 0 && it->second->n() != args.n) continue;
            scores.push_back(score_sequence(text, *it->second, lexicon));
        }
        if (!unknown.empty()) {
            std::cout << "unknown seq_ids:";
            for (const auto& id : unknown) std::cout << ' ' << id;
            std::cout << "\n";
            return kExitData;
        }
        const MetricReport report = aggregate(scores);
        if (!args.report.empty()) write_report(report, args.report);

        // Table-2 presentation: x100, column order CHAIR SCover Hal Cog.
        std::cout << std::fixed << std::setprecision(2);
        std::cout << "CHAIR " << report.chair * 100 << "  SCover " << report.scover * 100
                  << "  Hal " << report.hal * 100 << "  Cog " << report.cog * 100 << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cout << "eval error: " << e.what() << "\n";
        return kExitData;
    }
}

struct LossesArgs {
    std::string in, out;
    LossConfig config;
};

int cmd_losses(const LossesArgs& args) {
    echo_config({{"in", args.in},
                 {"out", args.out},
                 {"beta", std::to_string(args.config.beta)},
                 {"beta1", std::to_string(args.config.beta1)},
                 {"beta2", std::to_string(args.config.beta2)},
                 {"gamma", std::to_string(args.config.gamma)}});
    try {
        const std::size_t n = run_losses_batch(args.in, args.out, args.config);
        std::cout << "records = " << n << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cout << "losses error: " << e.what() << "\n";
        return kExitData;
    }
}

struct TrainToyArgs {
    std::string config_path;
    std::string schedule = "multi";
    std::uint64_t seed = 42;
    std::string history, dump;
};

int cmd_train_toy(const TrainToyArgs& args) {
    SynthConfig synth;
    LossConfig loss_config;
    double lr = 0.5, holdout = 0.2;
    int epochs = 200;
    std::map<std::string, std::string> kv;
    try {
        if (!args.config_path.empty()) kv = parse_kv_config(args.config_path);
        auto get = [&](const std::string& key, const std::string& fallback) {
            auto it = kv.find(key);
            return it == kv.end() ? fallback : it->second;
        };
        synth.num_states = std::stoull(get("toy.num_states", "32"));
        synth.vocab = std::stoull(get("toy.vocab", "16"));
        synth.n_pairs = std::stoull(get("toy.n_pairs", "2000"));
        synth.response_len = std::stoull(get("toy.response_len", "4"));
        auto mix = parse_doubles(get("toy.mix", "2,1,0.35"));
        if (mix.size() != 3) throw std::runtime_error("toy.mix needs 3 values");
        synth.mix_context = mix[0];
        synth.mix_needle_t = mix[1];
        synth.mix_needle_v = mix[2];
        lr = std::stod(get("train.lr", "0.5"));
        epochs = std::stoi(get("train.epochs", "200"));
        holdout = std::stod(get("train.holdout", "0.2"));
        loss_config.beta = std::stod(get("loss.beta", "0.1"));
        loss_config.beta1 = std::stod(get("loss.beta1", "0.1"));
        loss_config.beta2 = std::stod(get("loss.beta2", "0.1"));
        loss_config.gamma = std::stod(get("loss.gamma", "0.1"));
    } catch (const std::exception& e) {
        std::cout << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    kv["schedule"] = args.schedule;
    kv["seed"] = std::to_string(args.seed);
    kv["train.lr"] = std::to_string(lr);
    kv["train.epochs"] = std::to_string(epochs);
    echo_config(kv);

    try {
        Rng rng(args.seed);
        auto pairs = synth_dataset(synth, rng);
        const std::size_t held = static_cast<std::size_t>(
            static_cast<double>(pairs.size()) * holdout);
        std::vector<ToyPair> train_pairs(pairs.begin(), pairs.end() - held);
        std::vector<ToyPair> held_pairs(pairs.end() - held, pairs.end());

        const Schedule schedule = args.schedule == "mixed"
                                      ? Schedule::one_stage_mixed(lr, epochs)
                                      : Schedule::multi_stage(lr, epochs);
        const ToyPolicy init = ToyPolicy::zeros(synth.num_states, synth.vocab);
        TrainResult result = train(init, train_pairs, schedule, loss_config);

        if (!args.history.empty()) {
            std::ofstream out(args.history, std::ios::binary);
            if (!out) throw std::runtime_error("cannot open " + args.history);
            for (const auto& rec : result.history) {
                out << "{\"stage\": \"" << rec.stage << "\", \"epoch\": " << rec.epoch
                    << ", \"mean_loss\": " << std::setprecision(17) << rec.mean_loss
                    << ", \"pref_acc\": " << rec.pref_acc << "}\n";
            }
        }
        if (!args.dump.empty()) {
            std::ofstream out(args.dump, std::ios::binary);
            if (!out) throw std::runtime_error("cannot open " + args.dump);
            dump_policy(result.policy, out);
        }

        const AccuracyResult acc =
            preference_accuracy(result.policy, init, held_pairs, loss_config);
        std::cout << std::fixed << std::setprecision(4);
        std::cout << "held_out_preference_accuracy = " << acc.accuracy
                  << " (ties " << acc.ties << "/" << acc.total << ")\n";
        return kExitOk;
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        std::cout << "training error: " << what << "\n";
        return what.find("non-finite") != std::string::npos ? kExitNaN : kExitData;
    } catch (const std::exception& e) {
        std::cout << "training error: " << e.what() << "\n";
        return kExitData;
    }
}

struct GradCheckArgs {
    int trials = 1000;
    double step = 1e-6;
    std::uint64_t seed = 42;
};

int cmd_gradcheck(const GradCheckArgs& args) {
    echo_config({{"trials", std::to_string(args.trials)},
                 {"step", std::to_string(args.step)},
                 {"seed", std::to_string(args.seed)}});
    Rng rng(args.seed);
    const auto results = finite_diff_check(args.trials, args.step, rng);
    double worst = 0;
    std::string worst_kind;
    std::cout << std::scientific << std::setprecision(3);
    for (const auto& r : results) {
        std::cout << r.kind << " max_rel_err = " << r.max_rel_err << "\n";
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_kind = r.kind;
        }
    }
    std::cout << "worst = " << worst << " (" << worst_kind << ")\n";
    return worst <= 1e-5 ? kExitOk : kExitData;
}

int cmd_stats(const std::string& path) {
    echo_config({{"in", path}});
    try {
        const DatasetStats stats = dataset_stats(path);
        std::cout << "total = " << stats.total << "\n";
        for (const auto& [level, s] : stats.per_level) {
            std::cout << level << ".count = " << s.count << "\n"
                      << level << ".images_range = [" << s.images_min << "," << s.images_max
                      << "]\n"
                      << level << ".mean_chosen_tokens = " << s.mean_chosen_tokens << "\n"
                      << level << ".mean_rejected_tokens = " << s.mean_rejected_tokens << "\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cout << "stats error: " << e.what() << "\n";
        return kExitData;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ccdpo: multi-image preference-pair synthesis, hallucination metrics, "
                 "DPO loss oracle, and toy alignment trainer"};
    app.require_subcommand(1);

    GenPairsArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-pairs", "Generate preference pairs from caption pools");
    gen_cmd->add_option("--config", gen.config_path, "Key-value config file")->required();
    gen_cmd->add_option("--level", gen.level, "context|needle-t|needle-v|all");
    gen_cmd->add_option("--out", gen.out, "Output JSONL path (overrides config)");
    gen_cmd->add_option("--seed", gen.seed, "Master seed (overrides config)");
    gen_cmd->add_option("--count", gen.count, "Total pair count (overrides config)");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions with CHAIR/Hal/Cog/SCover");
    eval_cmd->add_option("--pred", eval.pred, "Predictions JSONL")->required();
    eval_cmd->add_option("--gt", eval.gt, "Ground-truth JSONL")->required();
    eval_cmd->add_option("--lexicon", eval.lexicon, "Object lexicon JSON")->required();
    eval_cmd->add_option("--report", eval.report, "Report output path");
    eval_cmd->add_option("--n", eval.n, "Restrict to sequences of this length");

    LossesArgs losses;
    auto* losses_cmd = app.add_subcommand("losses", "Batch loss/gradient oracle");
    losses_cmd->add_option("--in", losses.in, "Log-prob records JSONL")->required();
    losses_cmd->add_option("--out", losses.out, "Loss records JSONL")->required();
    losses_cmd->add_option("--beta", losses.config.beta, "DPO temperature");
    losses_cmd->add_option("--beta1", losses.config.beta1, "Focus temperature");
    losses_cmd->add_option("--beta2", losses.config.beta2, "Reject temperature");
    losses_cmd->add_option("--gamma", losses.config.gamma, "NLL coefficient");

    TrainToyArgs train_toy;
    auto* train_cmd = app.add_subcommand("train-toy", "Train the tabular toy policy");
    train_cmd->add_option("--config", train_toy.config_path, "Key-value config file");
    train_cmd->add_option("--schedule", train_toy.schedule, "multi|mixed");
    train_cmd->add_option("--seed", train_toy.seed, "Dataset/init seed");
    train_cmd->add_option("--history", train_toy.history, "Training history JSONL path");
    train_cmd->add_option("--dump", train_toy.dump, "Trained policy dump path");

    GradCheckArgs gradcheck;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    grad_cmd->add_option("--trials", gradcheck.trials, "Number of random trials");
    grad_cmd->add_option("--step", gradcheck.step, "Central difference step");
    grad_cmd->add_option("--seed", gradcheck.seed, "RNG seed");

    std::string stats_in;
    auto* stats_cmd = app.add_subcommand("stats", "Summarize a preference-pair file");
    stats_cmd->add_option("--in", stats_in, "Preference-pair JSONL")->required();

    CLI11_PARSE(app, argc, argv);

    if (gen_cmd->parsed()) return cmd_gen_pairs(gen);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (losses_cmd->parsed()) return cmd_losses(losses);
    if (train_cmd->parsed()) return cmd_train_toy(train_toy);
    if (grad_cmd->parsed()) return cmd_gradcheck(gradcheck);
    if (stats_cmd->parsed()) return cmd_stats(stats_in);
    return kExitConfig;
}
