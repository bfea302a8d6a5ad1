#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ccdpo/rng.hpp"

namespace ccdpo {

// Rectangular or point visual-prompt locus, normalized to [0,1].
struct Region {
    enum class Kind { bbox, point };
    Kind kind = Kind::bbox;
    double x = 0, y = 0, w = 0, h = 0;
    std::string label;

    bool valid() const {
        if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > 1 || y + h > 1) return false;
        if (kind == Kind::point && (w != 0 || h != 0)) return false;
        return true;
    }
    bool operator==(const Region&) const = default;
};

enum class PerturbationKind { trunc, short_, swap, region_mismatch, image_contrast };

std::string to_string(PerturbationKind k);
PerturbationKind perturbation_from_string(const std::string& s);

using CaptionList = std::vector<std::pair<int, std::string>>;

// Removes k_drop entries uniformly without replacement; survivors keep
// their original indices and relative order.
CaptionList truncate(const CaptionList& chosen, Rng& rng, int k_drop);

// Replaces each detailed caption with the image's brief caption; index set
// is preserved. image_ids maps position -> image id for pool lookup.
CaptionList shorten(const CaptionList& chosen, const std::vector<std::string>& image_ids,
                    const std::map<std::string, std::string>& brief_pool);

// Samples a non-identity permutation p uniformly; rejected caption at
// position i is the chosen caption at position p[i]. Returns (list, p).
std::pair<CaptionList, std::vector<std::size_t>> swap_captions(const CaptionList& chosen,
                                                               Rng& rng);

// Intersection over union. Point-in-box counts as 1, coincident points 1.
double iou(const Region& a, const Region& b);

struct RegionEntry {
    std::string image_id;
    Region region;
    std::string caption;
};

// For each chosen (image, region, caption), draws a pool region on the SAME
// image with iou <= max_iou and returns its caption as the mismatch.
// Throws std::runtime_error naming the image when no candidate qualifies.
std::vector<RegionEntry> mismatch_regions(const std::vector<RegionEntry>& chosen,
                                          const std::vector<RegionEntry>& pool, Rng& rng,
                                          double max_iou);

struct ContrastEntry {
    std::string image_id;
    std::string counterpart_image_id;
    std::string caption;
};

// Looks up the designated contradictory counterpart of the aligned image.
// Returns (v_w, v_l); throws std::runtime_error when no counterpart exists.
std::pair<std::string, std::string> contrast_pair(const std::string& aligned_image,
                                                  const std::vector<ContrastEntry>& pool);

}  // namespace ccdpo
