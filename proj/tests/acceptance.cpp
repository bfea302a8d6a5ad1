// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Run via ctest or directly from the build tree.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ccdpo/caption_schema.hpp"
#include "ccdpo/dpo_core.hpp"
#include "ccdpo/halmetrics.hpp"
#include "ccdpo/io.hpp"
#include "ccdpo/pairgen.hpp"
#include "ccdpo/perturb.hpp"
#include "ccdpo/rng.hpp"
#include "ccdpo/toy_align.hpp"

using namespace ccdpo;

namespace {

const std::string kFixtures = FIXTURE_DIR;

struct Check {
    std::string name;
    double time_budget_s;
    std::function<bool(std::string&)> run;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// ---- criterion 1: zero-margin identities --------------------------------

bool check_zero_margin(std::string& why) {
    const double ln2 = std::log(2.0);
    PairLogProbs lp{-3.0, -3.0, -5.0, -5.0};
    ContrastLogProbs cl{-1, -1, -2, -2, -4, -4};
    const double e1 = std::fabs(dpo_loss(lp, 0.1).value - ln2);
    const double e2 = std::fabs(focus_loss(cl, 0.1).value - ln2);
    const double e3 = std::fabs(reject_loss(cl, 0.1).value - ln2);
    const double e4 = std::fabs(vision_contrastive_loss(cl, 0.1, 0.1).value - 2 * ln2);
    const double worst = std::max(std::max(e1, e2), std::max(e3, e4));
    if (worst > 1e-12) {
        std::ostringstream os;
        os << "max abs error " << worst;
        why = os.str();
        return false;
    }
    return true;
}

// ---- criterion 2: gradient verification ----------------------------------

bool check_gradients(std::string& why) {
    Rng rng(42);
    auto results = finite_diff_check(1000, 1e-6, rng);
    bool ok = results.size() == 5;
    std::ostringstream os;
    for (const auto& r : results) {
        os << r.kind << "=" << r.max_rel_err << " ";
        if (r.max_rel_err > 1e-5) ok = false;
    }
    why = os.str();
    return ok;
}

// ---- criterion 3: toy alignment end-to-end -------------------------------

bool check_toy_alignment(std::string& why) {
    SynthConfig synth;  // 32 states, 16 tokens, 2000 pairs, 2:1:0.35 mix
    Rng rng(42);
    auto pairs = synth_dataset(synth, rng);
    const std::size_t held = pairs.size() / 5;
    std::vector<ToyPair> train_pairs(pairs.begin(), pairs.end() - held);
    std::vector<ToyPair> held_pairs(pairs.end() - held, pairs.end());

    const ToyPolicy init = ToyPolicy::zeros(synth.num_states, synth.vocab);
    auto result = train(init, train_pairs, Schedule::multi_stage(0.5, 200), LossConfig{});

    std::map<std::string, std::pair<double, double>> first_last;
    for (const auto& rec : result.history) {
        auto [it, inserted] = first_last.try_emplace(rec.stage, rec.mean_loss, rec.mean_loss);
        if (!inserted) it->second.second = rec.mean_loss;
    }
    for (const auto& [stage, fl] : first_last) {
        if (fl.second >= fl.first) {
            why = "stage " + stage + " loss did not decrease";
            return false;
        }
    }
    if (first_last.size() != 3) {
        why = "expected 3 stages";
        return false;
    }

    auto acc = preference_accuracy(result.policy, init, held_pairs, LossConfig{});
    std::ostringstream os;
    os << "held-out accuracy " << acc.accuracy << " over " << acc.total << " pairs";
    why = os.str();
    return acc.accuracy >= 0.95;
}

// ---- criterion 4: metric oracle equivalence -------------------------------

// Independent token-level scorer. Restricted to single-word surfaces, so a
// plain whitespace split is a complete extraction oracle.
std::set<std::string> oracle_extract(const std::string& text, const ObjectLexicon& lex) {
    std::set<std::string> found;
    std::istringstream is(text);
    std::string w;
    while (is >> w) {
        if (lex.objects.count(w) || lex.cog_targets.count(w)) found.insert(w);
        auto it = lex.synonyms.find(w);
        if (it != lex.synonyms.end()) found.insert(it->second);
    }
    return found;
}

SeqScores oracle_score(const std::string& pred, const GroundTruthSequence& gt,
                       const ObjectLexicon& lex) {
    const int n = gt.n();
    // Manual split at "For Image k:" headers (exact casing used below).
    std::map<int, std::string> by_index;
    std::vector<std::pair<std::size_t, int>> headers;
    for (int k = 1; k <= n + 2; ++k) {
        std::string h = "For Image " + std::to_string(k) + ":";
        for (std::size_t pos = pred.find(h); pos != std::string::npos;
             pos = pred.find(h, pos + 1))
            headers.push_back({pos, k});
    }
    std::sort(headers.begin(), headers.end());
    for (std::size_t i = 0; i < headers.size(); ++i) {
        auto [pos, k] = headers[i];
        std::size_t start = pred.find(':', pos) + 1;
        std::size_t end = i + 1 < headers.size() ? headers[i + 1].first : pred.size();
        std::string body = pred.substr(start, end - start);
        while (!body.empty() && (body.front() == ' ')) body.erase(body.begin());
        while (!body.empty() && (body.back() == ' ')) body.pop_back();
        if (!by_index.count(k)) by_index[k] = body;  // duplicates keep first
    }

    SeqScores s;
    s.seq_id = gt.seq_id;
    int covered = 0;
    for (int k = 1; k <= n; ++k)
        if (by_index.count(k) && !by_index[k].empty()) ++covered;
    s.scover = static_cast<double>(covered) / n;

    for (int k = 1; k <= n; ++k) {
        // pad: nearest preceding declared caption, empty when none
        std::string text;
        for (int j = k; j >= 1; --j) {
            auto it = by_index.find(j);
            if (it != by_index.end()) {
                text = it->second;
                break;
            }
        }
        auto mentioned = oracle_extract(text, lex);
        const auto& truth = gt.images[static_cast<std::size_t>(k - 1)].objects;
        int bad = 0, cog_bad = 0;
        for (const auto& m : mentioned) {
            if (!truth.count(m)) {
                ++bad;
                if (lex.cog_targets.count(m)) ++cog_bad;
            }
        }
        if (!mentioned.empty()) {
            s.chair += static_cast<double>(bad) / static_cast<double>(mentioned.size());
            s.cog += static_cast<double>(cog_bad) / static_cast<double>(mentioned.size());
        }
        if (bad > 0) s.hal += 1;
    }
    s.chair /= n;
    s.hal /= n;
    s.cog /= n;
    return s;
}

bool check_metric_oracle(std::string& why) {
    const std::vector<std::string> vocab = {"cat",  "dog",   "lamp",  "boat",
                                            "bench", "tree", "horse", "clock"};
    ObjectLexicon lex;
    for (std::size_t i = 0; i < 6; ++i) lex.objects.insert(vocab[i]);
    lex.synonyms = {{"kitty", "cat"}, {"puppy", "dog"}};
    lex.cog_targets = {"ghost", "shadow"};

    Rng rng(4242);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rand_below(rng, 4));
        GroundTruthSequence gt;
        gt.seq_id = "t";
        for (int k = 0; k < n; ++k) {
            GtImage img;
            img.image_id = "i" + std::to_string(k);
            const std::size_t n_objs = 1 + rand_below(rng, 3);
            auto picks = sample_indices(rng, vocab.size(), n_objs);
            for (auto p : picks)
                if (p < 6) img.objects.insert(vocab[p]);
            if (img.objects.empty()) img.objects.insert(vocab[0]);
            gt.images.push_back(img);
        }

        // random prediction: subset of indices, each mentioning random words
        std::ostringstream pred;
        for (int k = 1; k <= n; ++k) {
            if (rand_unit(rng) < 0.25) continue;  // leave this index missing
            pred << "For Image " << k << ": ";
            const std::size_t n_words = rand_below(rng, 4);
            std::vector<std::string> words;
            for (std::size_t w = 0; w < n_words; ++w) {
                double r = rand_unit(rng);
                if (r < 0.6)
                    words.push_back(vocab[rand_below(rng, vocab.size())]);
                else if (r < 0.75)
                    words.push_back(rand_unit(rng) < 0.5 ? "kitty" : "puppy");
                else if (r < 0.9)
                    words.push_back(rand_unit(rng) < 0.5 ? "ghost" : "shadow");
                else
                    words.push_back("the");
            }
            for (std::size_t w = 0; w < words.size(); ++w)
                pred << (w ? " " : "") << words[w];
            pred << (k < n ? " " : "");
        }

        auto got = score_sequence(pred.str(), gt, lex);
        auto want = oracle_score(pred.str(), gt, lex);
        if (got.chair != want.chair || got.hal != want.hal || got.cog != want.cog ||
            got.scover != want.scover) {
            std::ostringstream os;
            os << "mismatch at trial " << trial << ": got chair=" << got.chair
               << " hal=" << got.hal << " cog=" << got.cog << " scover=" << got.scover
               << ", oracle chair=" << want.chair << " hal=" << want.hal
               << " cog=" << want.cog << " scover=" << want.scover << "; pred=\""
               << pred.str() << "\"";
            why = os.str();
            return false;
        }
    }
    return true;
}

// ---- criterion 5: swap sensitivity ---------------------------------------

bool check_swap_sensitivity(std::string& why) {
    auto gt = load_ground_truth(kFixtures + "/eval_gt.jsonl");
    auto lex = load_lexicon(kFixtures + "/lexicon.json");
    std::map<std::string, GroundTruthSequence> by_id;
    for (auto& g : gt) by_id[g.seq_id] = g;

    auto eval_file = [&](const std::string& name) {
        auto preds = load_predictions(kFixtures + "/" + name);
        std::vector<SeqScores> scores;
        for (const auto& [seq_id, text] : preds)
            scores.push_back(score_sequence(text, by_id.at(seq_id), lex));
        return aggregate(scores);
    };

    auto perfect = eval_file("pred_perfect.jsonl");
    auto swapped = eval_file("pred_swapped.jsonl");
    auto truncated = eval_file("pred_truncated.jsonl");

    std::ostringstream os;
    os << "perfect chair=" << perfect.chair << " swapped chair=" << swapped.chair
       << " truncated scover=" << truncated.scover;
    why = os.str();
    return perfect.chair == 0.0 && swapped.chair > 0.0 && truncated.scover == 0.75;
}

// ---- criterion 6: pipeline determinism and direction ----------------------

bool check_pipeline(std::string& why) {
    GenConfig cfg;
    cfg.master_seed = 42;
    cfg.detailed_pool_path = kFixtures + "/pool_detailed.jsonl";
    cfg.brief_pool_path = kFixtures + "/pool_brief.jsonl";
    cfg.region_pool_path = kFixtures + "/pool_region.jsonl";
    cfg.contrastive_pool_path = kFixtures + "/pool_contrastive.jsonl";
    cfg.context_count = 40;
    cfg.needle_t_count = 20;
    cfg.needle_v_count = 7;

    cfg.out_path = "acceptance_gen_a.jsonl";
    auto r1 = run_generation(cfg);
    cfg.out_path = "acceptance_gen_b.jsonl";
    run_generation(cfg);

    const std::string a = slurp("acceptance_gen_a.jsonl");
    const std::string b = slurp("acceptance_gen_b.jsonl");
    for (const char* p : {"acceptance_gen_a.jsonl", "acceptance_gen_b.jsonl",
                          "acceptance_gen_a.jsonl.skipped", "acceptance_gen_b.jsonl.skipped"})
        std::remove(p);

    if (a.empty() || a != b) {
        why = "generated files differ across identical runs";
        return false;
    }
    const auto& ctx = r1.stats.per_level.at("context");
    std::ostringstream os;
    os << "context mean chosen tokens " << ctx.mean_chosen_tokens << " vs rejected "
       << ctx.mean_rejected_tokens;
    why = os.str();
    return ctx.mean_chosen_tokens > ctx.mean_rejected_tokens;
}

// ---- criterion 7: parser round-trip ---------------------------------------

bool check_parser_roundtrip(std::string& why) {
    Rng rng(7);
    const std::vector<std::string> words = {"cat", "red", "table", "left", "near", "old"};
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rand_below(rng, 6));
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i + 1;
        shuffle_in_place(rng, order);

        std::vector<std::pair<int, std::string>> caps;
        for (int idx : order) {
            std::string text;
            const std::size_t len = 1 + rand_below(rng, 5);
            for (std::size_t w = 0; w < len; ++w)
                text += (w ? " " : "") + words[rand_below(rng, words.size())];
            text += ".";
            caps.push_back({idx, text});
        }
        const bool marked = rand_unit(rng) < 0.5;
        auto text = serialize_sequence(caps, marked);
        auto parsed = parse_sequence(text, n, marked);
        if (parsed.captions.size() != caps.size()) {
            why = "round trip lost captions at trial " + std::to_string(trial);
            return false;
        }
        for (std::size_t i = 0; i < caps.size(); ++i) {
            if (parsed.captions[i].image_index != caps[i].first ||
                parsed.captions[i].text != caps[i].second) {
                why = "round trip mismatch at trial " + std::to_string(trial);
                return false;
            }
        }

        // pad_missing idempotence on a partial parse
        std::vector<std::pair<int, std::string>> partial;
        for (const auto& c : caps)
            if (rand_unit(rng) < 0.6) partial.push_back(c);
        if (partial.empty()) partial.push_back(caps[0]);
        auto once = pad_missing(parse_sequence(serialize_sequence(partial, false), n, false));
        auto twice = pad_missing(once);
        if (once.captions != twice.captions || !twice.missing_indices.empty()) {
            why = "pad_missing not idempotent at trial " + std::to_string(trial);
            return false;
        }
    }
    return true;
}

// ---- criterion 8: perturbation invariants ----------------------------------

bool check_perturbations(std::string& why) {
    Rng rng(8);
    const std::vector<std::string> words = {"boat", "lamp", "dim", "wide", "bent"};

    // region pool for mismatch_regions, grouped by image
    auto region_pool = ingest_pool(kFixtures + "/pool_region.jsonl", PoolKind::region_level);
    std::vector<RegionEntry> pool_entries;
    for (const auto& e : region_pool.entries)
        pool_entries.push_back({e.image_id, *e.region, e.caption});

    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(rand_below(rng, 4));
        CaptionList chosen;
        std::vector<std::string> ids;
        std::map<std::string, std::string> brief;
        for (int i = 1; i <= n; ++i) {
            std::string text = words[rand_below(rng, words.size())] + " " +
                               std::to_string(trial) + "-" + std::to_string(i);
            chosen.push_back({i, text});
            std::string id = "img" + std::to_string(i);
            ids.push_back(id);
            brief[id] = "short " + std::to_string(i);
        }

        auto trunc = truncate(chosen, rng, 1 + static_cast<int>(rand_below(
                                                 rng, static_cast<std::size_t>(n - 1))));
        std::set<int> orig_idx, trunc_idx;
        for (const auto& [i, t] : chosen) orig_idx.insert(i);
        for (const auto& [i, t] : trunc) trunc_idx.insert(i);
        if (trunc_idx.size() >= orig_idx.size()) {
            why = "truncate did not shrink at trial " + std::to_string(trial);
            return false;
        }
        for (int i : trunc_idx)
            if (!orig_idx.count(i)) {
                why = "truncate invented index at trial " + std::to_string(trial);
                return false;
            }

        auto shortened = shorten(chosen, ids, brief);
        std::set<int> short_idx;
        for (const auto& [i, t] : shortened) short_idx.insert(i);
        if (short_idx != orig_idx) {
            why = "shorten changed index set at trial " + std::to_string(trial);
            return false;
        }

        auto [swapped, perm] = swap_captions(chosen, rng);
        bool identity = true;
        std::multiset<std::string> a, b;
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            if (perm[i] != i) identity = false;
            if (swapped[i].second != chosen[perm[i]].second) {
                why = "swap permutation inconsistent at trial " + std::to_string(trial);
                return false;
            }
            a.insert(chosen[i].second);
            b.insert(swapped[i].second);
        }
        if (identity || a != b) {
            why = "swap identity or multiset violation at trial " + std::to_string(trial);
            return false;
        }

        // mismatch: one random region entry per trial
        const auto& entry = pool_entries[rand_below(rng, pool_entries.size())];
        auto mismatched = mismatch_regions({entry}, pool_entries, rng, 0.0);
        if (mismatched.size() != 1 || mismatched[0].image_id != entry.image_id ||
            iou(mismatched[0].region, entry.region) > 0.0) {
            why = "mismatch_regions overlap violation at trial " + std::to_string(trial);
            return false;
        }
    }
    return true;
}

}  // namespace

int main() {
    std::vector<Check> checks = {
        {"1 zero-margin identities", 1.0, check_zero_margin},
        {"2 gradient verification", 10.0, check_gradients},
        {"3 toy alignment", 60.0, check_toy_alignment},
        {"4 metric oracle equivalence", 5.0, check_metric_oracle},
        {"5 swap sensitivity", 1.0, check_swap_sensitivity},
        {"6 pipeline determinism and direction", 5.0, check_pipeline},
        {"7 parser round-trip", 2.0, check_parser_roundtrip},
        {"8 perturbation invariants", 5.0, check_perturbations},
    };

    int failures = 0;
    for (auto& c : checks) {
        std::string detail;
        bool ok = false;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (elapsed >= c.time_budget_s) {
            ok = false;
            std::ostringstream os;
            os << detail << (detail.empty() ? "" : "; ") << "over time budget ("
               << elapsed << "s >= " << c.time_budget_s << "s)";
            detail = os.str();
        }
        std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.name;
        if (!detail.empty()) std::cout << " (" << detail << ")";
        std::cout << " [" << elapsed << "s]\n";
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
