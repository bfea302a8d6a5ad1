#include "ccdpo/halmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

#include "ccdpo/caption_schema.hpp"

namespace ccdpo {

std::vector<GroundTruthSequence> build_context_amber(
    const std::vector<SingleImageAnnotation>& annotations, int n, int count, Rng& rng) {
    if (n < 1) throw std::invalid_argument("build_context_amber: n must be >= 1");
    if (count < 1) throw std::invalid_argument("build_context_amber: count must be >= 1");
    if (static_cast<int>(annotations.size()) < n)
        throw std::invalid_argument("build_context_amber: fewer annotations than n");

    std::vector<GroundTruthSequence> out;
    out.reserve(count);
    for (int s = 0; s < count; ++s) {
        GroundTruthSequence seq;
        std::ostringstream id;
        id << "seq-" << n << "-" << s;
        seq.seq_id = id.str();
        for (auto i : sample_indices(rng, annotations.size(), static_cast<std::size_t>(n))) {
            const auto& a = annotations[i];
            seq.images.push_back({a.image_id, a.objects, a.caption});
        }
        out.push_back(std::move(seq));
    }
    return out;
}

namespace {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

}  // namespace

std::set<std::string> extract_objects(const std::string& caption, const ObjectLexicon& lexicon) {
    // Surface forms: canonical objects, cog targets, and synonym keys.
    std::map<std::vector<std::string>, std::string> surfaces;
    std::size_t max_len = 1;
    auto add_surface = [&](const std::string& surface, const std::string& canonical) {
        auto words = split_words(surface);
        if (words.empty()) return;
        for (auto& w : words)
            for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        max_len = std::max(max_len, words.size());
        surfaces.emplace(std::move(words), canonical);
    };
    for (const auto& o : lexicon.objects) add_surface(o, o);
    for (const auto& o : lexicon.cog_targets) add_surface(o, o);
    for (const auto& [surface, canonical] : lexicon.synonyms) add_surface(surface, canonical);

    const auto words = tokenize(caption);
    std::set<std::string> found;
    std::size_t i = 0;
    while (i < words.size()) {
        bool matched = false;
        // Longest match first.
        for (std::size_t len = std::min(max_len, words.size() - i); len >= 1; --len) {
            std::vector<std::string> span(words.begin() + i, words.begin() + i + len);
            auto it = surfaces.find(span);
            if (it != surfaces.end()) {
                found.insert(it->second);
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return found;
}

CaptionScores score_caption(const std::string& pred_caption,
                            const std::set<std::string>& gt_objects,
                            const ObjectLexicon& lexicon) {
    const auto mentioned = extract_objects(pred_caption, lexicon);
    if (mentioned.empty()) return {};

    std::size_t hallucinated = 0;
    std::size_t cog_hits = 0;
    for (const auto& m : mentioned) {
        if (gt_objects.count(m)) continue;
        ++hallucinated;
        if (lexicon.cog_targets.count(m)) ++cog_hits;
    }

    CaptionScores s;
    s.chair = static_cast<double>(hallucinated) / static_cast<double>(mentioned.size());
    s.hal = hallucinated > 0 ? 1.0 : 0.0;
    s.cog = static_cast<double>(cog_hits) / static_cast<double>(mentioned.size());
    return s;
}

SeqScores score_sequence(const std::string& pred_text, const GroundTruthSequence& gt,
                         const ObjectLexicon& lexicon) {
    const int n = gt.n();
    ParsedCaptions parsed = parse_sequence(pred_text, n, false);

    int covered = 0;
    for (const auto& c : parsed.captions)
        if (c.image_index >= 1 && c.image_index <= n && !c.text.empty()) ++covered;

    ParsedCaptions padded = pad_missing(parsed);
    std::map<int, const IndexedCaption*> by_index;
    for (const auto& c : padded.captions) by_index[c.image_index] = &c;

    SeqScores s;
    s.seq_id = gt.seq_id;
    s.scover = static_cast<double>(covered) / n;
    for (int i = 1; i <= n; ++i) {
        // Matching is by declared index (Context-AMBER rule); padded and
        // empty captions score against their matched image as-is.
        const auto cs = score_caption(by_index.at(i)->text, gt.images[i - 1].objects, lexicon);
        s.chair += cs.chair;
        s.hal += cs.hal;
        s.cog += cs.cog;
    }
    s.chair /= n;
    s.hal /= n;
    s.cog /= n;
    return s;
}

MetricReport aggregate(const std::vector<SeqScores>& scores) {
    if (scores.empty()) throw std::invalid_argument("aggregate: empty score list");
    MetricReport r;
    r.per_sequence = scores;
    for (const auto& s : scores) {
        r.chair += s.chair;
        r.hal += s.hal;
        r.cog += s.cog;
        r.scover += s.scover;
    }
    const double n = static_cast<double>(scores.size());
    r.chair /= n;
    r.hal /= n;
    r.cog /= n;
    r.scover /= n;
    return r;
}

}  // namespace ccdpo
