#include "ccdpo/perturb.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace ccdpo {

std::string to_string(PerturbationKind k) {
    switch (k) {
        case PerturbationKind::trunc: return "trunc";
        case PerturbationKind::short_: return "short";
        case PerturbationKind::swap: return "swap";
        case PerturbationKind::region_mismatch: return "region_mismatch";
        case PerturbationKind::image_contrast: return "image_contrast";
    }
    throw std::logic_error("unreachable perturbation kind");
}

PerturbationKind perturbation_from_string(const std::string& s) {
    if (s == "trunc") return PerturbationKind::trunc;
    if (s == "short") return PerturbationKind::short_;
    if (s == "swap") return PerturbationKind::swap;
    if (s == "region_mismatch") return PerturbationKind::region_mismatch;
    if (s == "image_contrast") return PerturbationKind::image_contrast;
    throw std::invalid_argument("unknown perturbation kind: " + s);
}

CaptionList truncate(const CaptionList& chosen, Rng& rng, int k_drop) {
    const int n = static_cast<int>(chosen.size());
    if (n < 2) throw std::invalid_argument("truncate: need at least 2 captions");
    if (k_drop < 1 || k_drop >= n)
        throw std::invalid_argument("truncate: k_drop must be in [1, N-1]");

    auto drop = sample_indices(rng, static_cast<std::size_t>(n), static_cast<std::size_t>(k_drop));
    std::vector<bool> dropped(n, false);
    for (auto i : drop) dropped[i] = true;

    CaptionList out;
    for (int i = 0; i < n; ++i)
        if (!dropped[i]) out.push_back(chosen[i]);
    return out;
}

CaptionList shorten(const CaptionList& chosen, const std::vector<std::string>& image_ids,
                    const std::map<std::string, std::string>& brief_pool) {
    if (image_ids.size() != chosen.size())
        throw std::invalid_argument("shorten: image_ids length mismatch");
    CaptionList out;
    out.reserve(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        auto it = brief_pool.find(image_ids[i]);
        if (it == brief_pool.end())
            throw std::runtime_error("shorten: no brief caption for image " + image_ids[i]);
        out.emplace_back(chosen[i].first, it->second);
    }
    return out;
}

std::pair<CaptionList, std::vector<std::size_t>> swap_captions(const CaptionList& chosen,
                                                               Rng& rng) {
    const std::size_t n = chosen.size();
    if (n < 2) throw std::invalid_argument("swap: need at least 2 captions");

    // Uniform over non-identity permutations by rejection.
    std::vector<std::size_t> p(n);
    bool identity = true;
    do {
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        shuffle_in_place(rng, p);
        identity = true;
        for (std::size_t i = 0; i < n; ++i)
            if (p[i] != i) { identity = false; break; }
    } while (identity);

    CaptionList out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(chosen[i].first, chosen[p[i]].second);
    return {out, p};
}

double iou(const Region& a, const Region& b) {
    if (!a.valid() || !b.valid()) throw std::invalid_argument("iou: invalid region");

    const double area_a = a.w * a.h;
    const double area_b = b.w * b.h;

    // Point semantics: containment or coincidence, never fractional.
    if (area_a == 0 && area_b == 0) return (a.x == b.x && a.y == b.y) ? 1.0 : 0.0;
    if (area_a == 0) return (a.x >= b.x && a.x <= b.x + b.w && a.y >= b.y && a.y <= b.y + b.h)
                                ? 1.0 : 0.0;
    if (area_b == 0) return (b.x >= a.x && b.x <= a.x + a.w && b.y >= a.y && b.y <= a.y + a.h)
                                ? 1.0 : 0.0;

    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    return inter / (area_a + area_b - inter);
}

std::vector<RegionEntry> mismatch_regions(const std::vector<RegionEntry>& chosen,
                                          const std::vector<RegionEntry>& pool, Rng& rng,
                                          double max_iou) {
    std::vector<RegionEntry> out;
    out.reserve(chosen.size());
    for (const auto& c : chosen) {
        std::vector<const RegionEntry*> candidates;
        for (const auto& p : pool) {
            if (p.image_id != c.image_id) continue;
            if (p.region == c.region && p.caption == c.caption) continue;
            if (iou(c.region, p.region) <= max_iou) candidates.push_back(&p);
        }
        if (candidates.empty())
            throw std::runtime_error("mismatch_regions: no non-overlapping candidate for image " +
                                     c.image_id);
        const RegionEntry* pick = candidates[rand_below(rng, candidates.size())];
        // Rejected caption comes from the mismatched region; the visual
        // prompt metadata still marks the chosen region.
        out.push_back({c.image_id, pick->region, pick->caption});
    }
    return out;
}

std::pair<std::string, std::string> contrast_pair(const std::string& aligned_image,
                                                  const std::vector<ContrastEntry>& pool) {
    for (const auto& e : pool) {
        if (e.image_id == aligned_image && !e.counterpart_image_id.empty())
            return {e.image_id, e.counterpart_image_id};
    }
    throw std::runtime_error("contrast_pair: no contradictory counterpart for image " +
                             aligned_image);
}

}  // namespace ccdpo
