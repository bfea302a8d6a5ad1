#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "ccdpo/rng.hpp"

namespace ccdpo {

struct GtImage {
    std::string image_id;
    std::set<std::string> objects;  // canonical object strings
    std::string reference_caption;
};

struct GroundTruthSequence {
    std::string seq_id;
    std::vector<GtImage> images;

    int n() const { return static_cast<int>(images.size()); }
};

// AMBER-style object lexicon: canonical objects, surface-form synonyms and
// the set of "commonly imagined" targets used by Cog.
struct ObjectLexicon {
    std::set<std::string> objects;
    std::map<std::string, std::string> synonyms;  // surface form -> canonical
    std::set<std::string> cog_targets;
};

struct SeqScores {
    std::string seq_id;
    double chair = 0;
    double hal = 0;
    double cog = 0;
    double scover = 0;
};

struct MetricReport {
    double chair = 0;
    double hal = 0;
    double cog = 0;
    double scover = 0;
    std::vector<SeqScores> per_sequence;
};

struct SingleImageAnnotation {
    std::string image_id;
    std::set<std::string> objects;
    std::string caption;
};

// Concatenates single-image annotations into multi-image ground-truth
// sequences of n distinct images each; deterministic under seed.
std::vector<GroundTruthSequence> build_context_amber(
    const std::vector<SingleImageAnnotation>& annotations, int n, int count, Rng& rng);

// Greedy left-to-right maximal multi-word match over lowercased,
// punctuation-stripped text; synonyms map to canonical forms.
std::set<std::string> extract_objects(const std::string& caption, const ObjectLexicon& lexicon);

struct CaptionScores {
    double chair = 0;
    double hal = 0;
    double cog = 0;
};

CaptionScores score_caption(const std::string& pred_caption,
                            const std::set<std::string>& gt_objects,
                            const ObjectLexicon& lexicon);

// Parses the structured prediction, computes SCover before padding, then
// scores each declared index against that index's ground-truth image and
// averages over the sequence.
SeqScores score_sequence(const std::string& pred_text, const GroundTruthSequence& gt,
                         const ObjectLexicon& lexicon);

// Unweighted means across sequences; throws std::invalid_argument on empty
// input.
MetricReport aggregate(const std::vector<SeqScores>& scores);

}  // namespace ccdpo
