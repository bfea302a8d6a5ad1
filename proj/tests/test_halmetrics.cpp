#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ccdpo/caption_schema.hpp"
#include "ccdpo/halmetrics.hpp"
#include "ccdpo/io.hpp"

using namespace ccdpo;

namespace {

ObjectLexicon demo_lexicon() {
    ObjectLexicon lex;
    lex.objects = {"cat", "dog", "sofa", "tree", "car", "fire hydrant", "fire", "bench"};
    lex.synonyms = {{"kitty", "cat"}, {"automobile", "car"}};
    lex.cog_targets = {"ghost", "person"};
    return lex;
}

// Independent brute-force scorer: enumerates every substring of the
// lowercased caption against every lexicon surface form and redoes the set
// arithmetic from scratch. Deliberately ignorant of extract_objects.
std::set<std::string> brute_extract(const std::string& caption, const ObjectLexicon& lex) {
    std::string lowered;
    for (char ch : caption) {
        unsigned char c = static_cast<unsigned char>(ch);
        lowered.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : ' ');
    }
    std::vector<std::string> words;
    {
        std::string cur;
        for (char c : lowered) {
            if (c == ' ') {
                if (!cur.empty()) words.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) words.push_back(cur);
    }

    std::vector<std::pair<std::vector<std::string>, std::string>> surfaces;
    auto add = [&](const std::string& surface, const std::string& canon) {
        std::vector<std::string> sw;
        std::string cur;
        for (char c : surface) {
            if (c == ' ') {
                if (!cur.empty()) sw.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            }
        }
        if (!cur.empty()) sw.push_back(cur);
        surfaces.emplace_back(sw, canon);
    };
    for (const auto& o : lex.objects) add(o, o);
    for (const auto& o : lex.cog_targets) add(o, o);
    for (const auto& [s, c] : lex.synonyms) add(s, c);

    // Greedy longest-match left-to-right, mirroring the documented rule
    // but via an O(n * surfaces) scan.
    std::set<std::string> found;
    std::size_t i = 0;
    while (i < words.size()) {
        std::size_t best_len = 0;
        std::string best_canon;
        for (const auto& [sw, canon] : surfaces) {
            if (sw.size() > words.size() - i || sw.size() <= best_len) continue;
            if (std::equal(sw.begin(), sw.end(), words.begin() + i)) {
                best_len = sw.size();
                best_canon = canon;
            }
        }
        if (best_len > 0) {
            found.insert(best_canon);
            i += best_len;
        } else {
            ++i;
        }
    }
    return found;
}

SeqScores brute_score_sequence(const std::string& pred, const GroundTruthSequence& gt,
                               const ObjectLexicon& lex) {
    const int n = gt.n();
    auto parsed = parse_sequence(pred, n, false);
    int covered = 0;
    for (const auto& c : parsed.captions)
        if (c.image_index >= 1 && c.image_index <= n && !c.text.empty()) ++covered;
    auto padded = pad_missing(parsed);

    SeqScores s;
    s.seq_id = gt.seq_id;
    s.scover = static_cast<double>(covered) / n;
    for (int i = 1; i <= n; ++i) {
        std::string text;
        for (const auto& c : padded.captions)
            if (c.image_index == i) text = c.text;
        const auto mentioned = brute_extract(text, lex);
        if (mentioned.empty()) continue;
        int halluc = 0, cog = 0;
        for (const auto& m : mentioned) {
            if (!gt.images[i - 1].objects.count(m)) {
                ++halluc;
                if (lex.cog_targets.count(m)) ++cog;
            }
        }
        s.chair += static_cast<double>(halluc) / mentioned.size();
        s.hal += halluc > 0 ? 1.0 : 0.0;
        s.cog += static_cast<double>(cog) / mentioned.size();
    }
    s.chair /= n;
    s.hal /= n;
    s.cog /= n;
    return s;
}

}  // namespace

TEST_CASE("build_context_amber samples distinct images per sequence") {
    std::vector<SingleImageAnnotation> anns;
    for (int i = 0; i < 40; ++i)
        anns.push_back({"a" + std::to_string(i), {"cat"}, "a cat"});
    Rng rng(3);
    auto seqs = build_context_amber(anns, 4, 25, rng);
    REQUIRE(seqs.size() == 25);
    for (const auto& s : seqs) {
        REQUIRE(s.n() == 4);
        std::set<std::string> ids;
        for (const auto& img : s.images) ids.insert(img.image_id);
        CHECK(ids.size() == 4);
    }
    CHECK_THROWS_AS(build_context_amber(anns, 41, 1, rng), std::invalid_argument);
}

TEST_CASE("build_context_amber n=8 variant and determinism") {
    std::vector<SingleImageAnnotation> anns;
    for (int i = 0; i < 20; ++i)
        anns.push_back({"a" + std::to_string(i), {"dog"}, "a dog"});
    Rng r1(9), r2(9);
    auto a = build_context_amber(anns, 8, 5, r1);
    auto b = build_context_amber(anns, 8, 5, r2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(a[i].images[j].image_id == b[i].images[j].image_id);
}

TEST_CASE("extract_objects maps synonyms and handles empty hits") {
    const auto lex = demo_lexicon();
    CHECK(extract_objects("A kitty sleeps on the sofa.", lex) ==
          std::set<std::string>{"cat", "sofa"});
    CHECK(extract_objects("nothing relevant here", lex).empty());
}

TEST_CASE("extract_objects prefers the longest surface form") {
    const auto lex = demo_lexicon();
    CHECK(extract_objects("a fire hydrant on the corner", lex) ==
          std::set<std::string>{"fire hydrant"});
    CHECK(extract_objects("a fire burns", lex) == std::set<std::string>{"fire"});
    // Agreement with the brute-force all-substring matcher.
    CHECK(extract_objects("the fire hydrant near a fire and an automobile", lex) ==
          brute_extract("the fire hydrant near a fire and an automobile", lex));
}

TEST_CASE("score_caption formulas") {
    const auto lex = demo_lexicon();
    auto s = score_caption("a cat and a dog", {"cat", "sofa"}, lex);
    CHECK(s.chair == doctest::Approx(0.5));
    CHECK(s.hal == 1.0);
    CHECK(s.cog == 0.0);

    s = score_caption("a cat on the sofa", {"cat", "sofa"}, lex);
    CHECK(s.chair == 0.0);
    CHECK(s.hal == 0.0);
    CHECK(s.cog == 0.0);

    s = score_caption("a ghost", {"cat"}, lex);
    CHECK(s.chair == 1.0);
    CHECK(s.hal == 1.0);
    CHECK(s.cog == 1.0);

    s = score_caption("", {"cat"}, lex);
    CHECK(s.chair == 0.0);
    CHECK(s.hal == 0.0);
}

namespace {

GroundTruthSequence disjoint_gt() {
    GroundTruthSequence gt;
    gt.seq_id = "fix";
    gt.images = {{"i1", {"cat"}, "a cat"},
                 {"i2", {"dog"}, "a dog"},
                 {"i3", {"tree"}, "a tree"},
                 {"i4", {"car"}, "a car"}};
    return gt;
}

}  // namespace

TEST_CASE("score_sequence: coverage, padding and index matching") {
    const auto lex = demo_lexicon();
    const auto gt = disjoint_gt();

    auto full = score_sequence(
        "For Image 1: a cat. For Image 2: a dog. For Image 3: a tree. For Image 4: a car.", gt,
        lex);
    CHECK(full.scover == 1.0);
    CHECK(full.chair == 0.0);
    CHECK(full.hal == 0.0);

    auto partial = score_sequence("For Image 1: a cat. For Image 2: a dog. For Image 3: a tree.",
                                  gt, lex);
    CHECK(partial.scover == doctest::Approx(0.75));
    // index 4 is padded with image 3's caption -> hallucinated there
    CHECK(partial.chair > 0.0);

    auto swapped = score_sequence(
        "For Image 1: a dog. For Image 2: a cat. For Image 3: a tree. For Image 4: a car.", gt,
        lex);
    CHECK(swapped.scover == 1.0);
    CHECK(swapped.chair > full.chair);
}

TEST_CASE("score_sequence scover 6 of 8") {
    const auto lex = demo_lexicon();
    GroundTruthSequence gt;
    gt.seq_id = "eight";
    for (int i = 0; i < 8; ++i)
        gt.images.push_back({"i" + std::to_string(i), {"cat"}, "a cat"});
    std::string pred;
    for (int i = 1; i <= 6; ++i) pred += "For Image " + std::to_string(i) + ": a cat. ";
    CHECK(score_sequence(pred, gt, lex).scover == doctest::Approx(0.75));
}

TEST_CASE("aggregate means and invariance") {
    SeqScores a{"a", 0.2, 1.0, 0.0, 1.0};
    SeqScores b{"b", 0.4, 0.0, 0.1, 0.5};
    auto r1 = aggregate({a, b});
    CHECK(r1.chair == doctest::Approx(0.3));
    CHECK(r1.scover == doctest::Approx(0.75));
    auto r2 = aggregate({b, a});
    CHECK(r1.chair == r2.chair);
    CHECK(r1.hal == r2.hal);
    auto single = aggregate({a});
    CHECK(single.chair == a.chair);
    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}

TEST_CASE("monotonicity: adding a hallucinated object never lowers CHAIR") {
    const auto lex = demo_lexicon();
    const auto gt = disjoint_gt();
    const std::string base =
        "For Image 1: a cat. For Image 2: a dog. For Image 3: a tree. For Image 4: a car.";
    const std::string worse =
        "For Image 1: a cat and a bench. For Image 2: a dog. For Image 3: a tree. "
        "For Image 4: a car.";
    CHECK(score_sequence(worse, gt, lex).chair >= score_sequence(base, gt, lex).chair);
}

TEST_CASE("property: oracle equivalence on randomized tiny instances") {
    const auto lex = demo_lexicon();
    std::vector<std::string> lex_words(lex.objects.begin(), lex.objects.end());
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rand_below(rng, 3));
        GroundTruthSequence gt;
        gt.seq_id = "t" + std::to_string(trial);
        for (int i = 0; i < n; ++i) {
            GtImage img;
            img.image_id = "img" + std::to_string(i);
            const int k = 1 + static_cast<int>(rand_below(rng, 3));
            for (int j = 0; j < k; ++j)
                img.objects.insert(lex_words[rand_below(rng, lex_words.size())]);
            gt.images.push_back(std::move(img));
        }
        // Random prediction: some indices present, random object words.
        std::string pred;
        for (int i = 1; i <= n; ++i) {
            if (rand_below(rng, 4) == 0) continue;  // omit
            pred += "For Image " + std::to_string(i) + ": ";
            const int k = static_cast<int>(rand_below(rng, 4));
            for (int j = 0; j < k; ++j)
                pred += "a " + lex_words[rand_below(rng, lex_words.size())] + " ";
            pred += "here. ";
        }
        const auto fast = score_sequence(pred, gt, lex);
        const auto slow = brute_score_sequence(pred, gt, lex);
        CHECK(fast.chair == doctest::Approx(slow.chair).epsilon(1e-15));
        CHECK(fast.hal == doctest::Approx(slow.hal).epsilon(1e-15));
        CHECK(fast.cog == doctest::Approx(slow.cog).epsilon(1e-15));
        CHECK(fast.scover == doctest::Approx(slow.scover).epsilon(1e-15));
    }
}

TEST_CASE("fixture files: perfect, swapped and empty predictions") {
    const std::string dir = FIXTURE_DIR;
    const auto gt = load_ground_truth(dir + "/eval_gt.jsonl");
    const auto lex = load_lexicon(dir + "/lexicon.json");
    REQUIRE(!gt.empty());
    std::map<std::string, const GroundTruthSequence*> by_id;
    for (const auto& s : gt) by_id[s.seq_id] = &s;

    auto run = [&](const std::string& pred_file) {
        std::vector<SeqScores> scores;
        for (const auto& [id, text] : load_predictions(dir + "/" + pred_file))
            scores.push_back(score_sequence(text, *by_id.at(id), lex));
        return aggregate(scores);
    };

    const auto perfect = run("pred_perfect.jsonl");
    CHECK(perfect.chair == 0.0);
    CHECK(perfect.hal == 0.0);
    CHECK(perfect.cog == 0.0);
    CHECK(perfect.scover == 1.0);

    const auto swapped = run("pred_swapped.jsonl");
    CHECK(swapped.chair > 0.0);

    const auto empty = run("pred_empty.jsonl");
    CHECK(empty.scover == 0.0);

    const auto truncated = run("pred_truncated.jsonl");
    CHECK(truncated.scover == doctest::Approx(0.75));
}
