#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccdpo/perturb.hpp"
#include "ccdpo/rng.hpp"

namespace ccdpo {

enum class PoolKind { image_level_detailed, image_level_brief, region_level, contrastive };

std::string to_string(PoolKind k);

struct PoolEntry {
    std::string image_id;
    std::string image_path;
    std::string caption;
    std::optional<Region> region;
    std::optional<std::string> counterpart_image_id;
};

struct CaptionPool {
    PoolKind kind = PoolKind::image_level_detailed;
    std::vector<PoolEntry> entries;

    // Distinct image ids in first-seen order (region pools may carry
    // several entries per image).
    std::vector<std::string> image_ids;
    std::multimap<std::string, std::size_t> by_image;

    std::size_t size() const { return entries.size(); }
};

enum class PairLevel { context, needle_t, needle_v };

std::string to_string(PairLevel level);

struct PairImage {
    std::string image_id;
    std::string image_path;
    std::optional<Region> region;
    std::optional<std::string> prompt_style;  // bbox | point
};

struct PairMeta {
    std::uint64_t seed = 0;
    int n_images = 0;
    std::string generator_version;
    std::string template_id;
};

struct PreferencePair {
    std::string id;
    PairLevel level = PairLevel::context;
    PerturbationKind perturbation = PerturbationKind::trunc;
    std::string instruction;
    std::vector<PairImage> images;
    std::optional<std::vector<PairImage>> contrast_images;  // needle_v only
    std::string chosen;
    std::optional<std::string> rejected;  // absent for needle_v
    PairMeta meta;
};

// Line-delimited pool file; throws std::runtime_error with the offending
// line number on malformed records or duplicate keys.
CaptionPool ingest_pool(const std::string& path, PoolKind kind);

struct SequenceSample {
    std::vector<PoolEntry> entries;  // one per image, draw order
};

// N drawn uniformly from [n_min, n_max], then N distinct images without
// replacement; region pools pick one region entry per image uniformly.
SequenceSample sample_sequence(const CaptionPool& pool, int n_min, int n_max, Rng& rng);

PreferencePair build_context_pair(const SequenceSample& seq, const CaptionPool* brief_pool,
                                  PerturbationKind perturbation, Rng& rng);

PreferencePair build_needle_t_pair(const SequenceSample& seq, const CaptionPool& region_pool,
                                   Rng& rng, double max_iou);

PreferencePair build_needle_v_pair(const SequenceSample& seq, const CaptionPool& contrastive_pool,
                                   Rng& rng);

// Validates level invariants; throws std::runtime_error on violation.
void validate_pair(const PreferencePair& pair);

std::string pair_to_json_line(const PreferencePair& pair);
PreferencePair pair_from_json_line(const std::string& line);

std::size_t emit_jsonl(const std::vector<PreferencePair>& pairs, const std::string& path);

struct LevelStats {
    std::size_t count = 0;
    int images_min = 0;
    int images_max = 0;
    double mean_chosen_tokens = 0;
    double mean_rejected_tokens = 0;  // 0 when no rejected responses
};

struct DatasetStats {
    std::size_t total = 0;
    std::map<std::string, LevelStats> per_level;
};

DatasetStats dataset_stats(const std::string& path);

// Generation driver shared by the CLI and the acceptance suite.
struct GenConfig {
    std::uint64_t master_seed = 42;
    std::string detailed_pool_path;
    std::string brief_pool_path;
    std::string region_pool_path;
    std::string contrastive_pool_path;
    std::string out_path;
    std::string skip_log_path;  // defaults to out_path + ".skipped"
    std::size_t context_count = 0;
    std::size_t needle_t_count = 0;
    std::size_t needle_v_count = 0;
    int context_n_min = 2, context_n_max = 5;
    int needle_n_min = 2, needle_n_max = 4;
    double weight_trunc = 1, weight_short = 1, weight_swap = 1;
    double max_iou = 0.0;
};

struct GenResult {
    DatasetStats stats;
    std::vector<std::string> skipped;  // one reason line per skipped pair
};

GenResult run_generation(const GenConfig& config);

}  // namespace ccdpo
