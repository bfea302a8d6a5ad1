#include "ccdpo/pairgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ccdpo/caption_schema.hpp"

namespace ccdpo {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kGeneratorVersion = "ccdpo-1.0.0";

constexpr const char* kContextInstruction =
    "Please sequentially describe each of the images shown above. "
    "Use the format: For Image *:<description>.";
constexpr const char* kNeedleTInstruction = "Please describe the marked area in each image.";
constexpr const char* kNeedleVInstruction = "Describe the following images.";

std::size_t token_count(const std::string& s) {
    std::istringstream is(s);
    std::string w;
    std::size_t n = 0;
    while (is >> w) ++n;
    return n;
}

std::string region_key(const Region& r) {
    std::ostringstream os;
    os << (r.kind == Region::Kind::bbox ? "b" : "p") << ':' << r.x << ',' << r.y << ',' << r.w
       << ',' << r.h;
    return os.str();
}

json region_to_json(const Region& r) {
    json j;
    j["kind"] = r.kind == Region::Kind::bbox ? "bbox" : "point";
    j["x"] = r.x;
    j["y"] = r.y;
    j["w"] = r.w;
    j["h"] = r.h;
    return j;
}

Region region_from_json(const json& j) {
    Region r;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "bbox")
        r.kind = Region::Kind::bbox;
    else if (kind == "point")
        r.kind = Region::Kind::point;
    else
        throw std::runtime_error("unknown region kind: " + kind);
    r.x = j.at("x").get<double>();
    r.y = j.at("y").get<double>();
    r.w = j.at("w").get<double>();
    r.h = j.at("h").get<double>();
    if (!r.valid()) throw std::runtime_error("invalid region geometry");
    return r;
}

json image_to_json(const PairImage& img) {
    json j;
    j["image_id"] = img.image_id;
    j["image_path"] = img.image_path;
    j["region"] = img.region ? region_to_json(*img.region) : json(nullptr);
    if (img.prompt_style) j["prompt_style"] = *img.prompt_style;
    return j;
}

PairImage image_from_json(const json& j) {
    PairImage img;
    img.image_id = j.at("image_id").get<std::string>();
    img.image_path = j.at("image_path").get<std::string>();
    if (!j.at("region").is_null()) img.region = region_from_json(j.at("region"));
    if (j.contains("prompt_style")) img.prompt_style = j.at("prompt_style").get<std::string>();
    return img;
}

}  // namespace

std::string to_string(PoolKind k) {
    switch (k) {
        case PoolKind::image_level_detailed: return "image_level_detailed";
        case PoolKind::image_level_brief: return "image_level_brief";
        case PoolKind::region_level: return "region_level";
        case PoolKind::contrastive: return "contrastive";
    }
    throw std::logic_error("unreachable pool kind");
}

std::string to_string(PairLevel level) {
    switch (level) {
        case PairLevel::context: return "context";
        case PairLevel::needle_t: return "needle_t";
        case PairLevel::needle_v: return "needle_v";
    }
    throw std::logic_error("unreachable pair level");
}

CaptionPool ingest_pool(const std::string& path, PoolKind kind) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest_pool: cannot open " + path);

    CaptionPool pool;
    pool.kind = kind;
    std::set<std::string> seen_keys;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fail = [&](const std::string& why) {
            std::ostringstream err;
            err << "ingest_pool: " << path << ":" << lineno << ": " << why;
            throw std::runtime_error(err.str());
        };

        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(std::string("malformed JSON: ") + e.what());
        }

        PoolEntry e;
        try {
            e.image_id = j.at("image_id").get<std::string>();
            e.image_path = j.at("image_path").get<std::string>();
            e.caption = j.at("caption").get<std::string>();
            if (j.contains("region") && !j.at("region").is_null())
                e.region = region_from_json(j.at("region"));
            if (j.contains("counterpart_image_id") && !j.at("counterpart_image_id").is_null())
                e.counterpart_image_id = j.at("counterpart_image_id").get<std::string>();
        } catch (const std::exception& ex) {
            fail(std::string("schema violation: ") + ex.what());
        }
        if (e.image_id.empty()) fail("empty image_id");
        if (kind == PoolKind::region_level && !e.region) fail("region pool entry missing region");
        if (kind == PoolKind::contrastive) {
            if (!e.counterpart_image_id) fail("contrastive entry missing counterpart_image_id");
            if (*e.counterpart_image_id == e.image_id)
                fail("counterpart_image_id equals image_id");
        }

        std::string key = e.image_id;
        if (kind == PoolKind::region_level) key += "|" + region_key(*e.region);
        if (!seen_keys.insert(key).second) fail("duplicate key " + key);

        if (!pool.by_image.count(e.image_id)) pool.image_ids.push_back(e.image_id);
        pool.by_image.emplace(e.image_id, pool.entries.size());
        pool.entries.push_back(std::move(e));
    }
    return pool;
}

SequenceSample sample_sequence(const CaptionPool& pool, int n_min, int n_max, Rng& rng) {
    if (n_min < 2 || n_max < n_min)
        throw std::invalid_argument("sample_sequence: n_range must satisfy 2 <= min <= max");
    if (pool.image_ids.size() < static_cast<std::size_t>(n_max))
        throw std::runtime_error("sample_sequence: pool too small for n_max=" +
                                 std::to_string(n_max));

    const int n = n_min + static_cast<int>(rand_below(rng, static_cast<std::uint64_t>(
                                                               n_max - n_min + 1)));
    SequenceSample seq;
    for (auto idx : sample_indices(rng, pool.image_ids.size(), static_cast<std::size_t>(n))) {
        const std::string& image_id = pool.image_ids[idx];
        auto [lo, hi] = pool.by_image.equal_range(image_id);
        std::vector<std::size_t> options;
        for (auto it = lo; it != hi; ++it) options.push_back(it->second);
        seq.entries.push_back(pool.entries[options[rand_below(rng, options.size())]]);
    }
    return seq;
}

PreferencePair build_context_pair(const SequenceSample& seq, const CaptionPool* brief_pool,
                                  PerturbationKind perturbation, Rng& rng) {
    const int n = static_cast<int>(seq.entries.size());
    CaptionList chosen;
    std::vector<std::string> image_ids;
    for (int i = 0; i < n; ++i) {
        chosen.emplace_back(i + 1, seq.entries[i].caption);
        image_ids.push_back(seq.entries[i].image_id);
    }

    CaptionList rejected;
    switch (perturbation) {
        case PerturbationKind::trunc: {
            const int k_drop = 1 + static_cast<int>(rand_below(
                                       rng, static_cast<std::uint64_t>(n - 1)));
            rejected = truncate(chosen, rng, k_drop);
            break;
        }
        case PerturbationKind::short_: {
            if (!brief_pool)
                throw std::runtime_error("build_context_pair: shorten requires a brief pool");
            std::map<std::string, std::string> briefs;
            for (const auto& e : brief_pool->entries) briefs.emplace(e.image_id, e.caption);
            rejected = shorten(chosen, image_ids, briefs);
            break;
        }
        case PerturbationKind::swap:
            rejected = swap_captions(chosen, rng).first;
            break;
        default:
            throw std::invalid_argument("build_context_pair: not a context-level perturbation");
    }

    PreferencePair pair;
    pair.level = PairLevel::context;
    pair.perturbation = perturbation;
    pair.instruction = kContextInstruction;
    for (const auto& e : seq.entries) pair.images.push_back({e.image_id, e.image_path, {}, {}});
    pair.chosen = serialize_sequence(chosen, false);
    pair.rejected = serialize_sequence(rejected, false);
    pair.meta.n_images = n;
    pair.meta.generator_version = kGeneratorVersion;
    pair.meta.template_id = "context_v1";
    return pair;
}

PreferencePair build_needle_t_pair(const SequenceSample& seq, const CaptionPool& region_pool,
                                   Rng& rng, double max_iou) {
    const int n = static_cast<int>(seq.entries.size());
    std::vector<RegionEntry> chosen_regions;
    for (const auto& e : seq.entries) chosen_regions.push_back({e.image_id, *e.region, e.caption});

    std::vector<RegionEntry> pool_regions;
    for (const auto& e : region_pool.entries)
        pool_regions.push_back({e.image_id, *e.region, e.caption});

    const auto mismatched = mismatch_regions(chosen_regions, pool_regions, rng, max_iou);

    CaptionList chosen, rejected;
    for (int i = 0; i < n; ++i) {
        chosen.emplace_back(i + 1, seq.entries[i].caption);
        rejected.emplace_back(i + 1, mismatched[i].caption);
    }

    PreferencePair pair;
    pair.level = PairLevel::needle_t;
    pair.perturbation = PerturbationKind::region_mismatch;
    pair.instruction = kNeedleTInstruction;
    for (const auto& e : seq.entries) {
        PairImage img{e.image_id, e.image_path, e.region, {}};
        // Prompt geometry is metadata only; style is bbox or point per entry.
        if (e.region->kind == Region::Kind::point)
            img.prompt_style = "point";
        else
            img.prompt_style = rand_below(rng, 2) == 0 ? "bbox" : "point";
        pair.images.push_back(std::move(img));
    }
    pair.chosen = serialize_sequence(chosen, true);
    pair.rejected = serialize_sequence(rejected, true);
    pair.meta.n_images = n;
    pair.meta.generator_version = kGeneratorVersion;
    pair.meta.template_id = "needle_t_v1";
    return pair;
}

PreferencePair build_needle_v_pair(const SequenceSample& seq, const CaptionPool& contrastive_pool,
                                   Rng& rng) {
    (void)rng;
    const int n = static_cast<int>(seq.entries.size());
    CaptionList chosen;
    PreferencePair pair;
    pair.level = PairLevel::needle_v;
    pair.perturbation = PerturbationKind::image_contrast;
    pair.instruction = kNeedleVInstruction;
    pair.contrast_images.emplace();

    for (int i = 0; i < n; ++i) {
        const auto& e = seq.entries[i];
        if (!e.counterpart_image_id)
            throw std::runtime_error("build_needle_v_pair: no counterpart for image " +
                                     e.image_id);
        chosen.emplace_back(i + 1, e.caption);
        pair.images.push_back({e.image_id, e.image_path, {}, {}});

        // Counterpart path comes from its own pool entry when present.
        std::string counter_path;
        auto it = contrastive_pool.by_image.find(*e.counterpart_image_id);
        if (it != contrastive_pool.by_image.end())
            counter_path = contrastive_pool.entries[it->second].image_path;
        pair.contrast_images->push_back({*e.counterpart_image_id, counter_path, {}, {}});
    }
    pair.chosen = serialize_sequence(chosen, false);
    pair.meta.n_images = n;
    pair.meta.generator_version = kGeneratorVersion;
    pair.meta.template_id = "needle_v_v1";
    return pair;
}

void validate_pair(const PreferencePair& pair) {
    auto fail = [&](const std::string& why) {
        throw std::runtime_error("validate_pair: " + pair.id + ": " + why);
    };
    const int n = pair.meta.n_images;
    if (n < 1 || static_cast<std::size_t>(n) != pair.images.size())
        fail("n_images does not match image list");

    switch (pair.level) {
        case PairLevel::context:
            if (pair.perturbation != PerturbationKind::trunc &&
                pair.perturbation != PerturbationKind::short_ &&
                pair.perturbation != PerturbationKind::swap)
                fail("context level requires trunc/short/swap");
            if (!pair.rejected) fail("context level requires a rejected response");
            break;
        case PairLevel::needle_t:
            if (pair.perturbation != PerturbationKind::region_mismatch)
                fail("needle_t level requires region_mismatch");
            if (!pair.rejected) fail("needle_t level requires a rejected response");
            for (const auto& img : pair.images)
                if (!img.region) fail("needle_t image missing region");
            break;
        case PairLevel::needle_v:
            if (pair.perturbation != PerturbationKind::image_contrast)
                fail("needle_v level requires image_contrast");
            if (pair.rejected) fail("needle_v level must not carry a rejected response");
            if (!pair.contrast_images || pair.contrast_images->size() != pair.images.size())
                fail("needle_v requires contrast_images matching images");
            break;
    }

    const bool marked = pair.level == PairLevel::needle_t;
    const auto parsed = parse_sequence(pair.chosen, n, marked);
    if (!parsed.missing_indices.empty()) fail("chosen response does not cover all indices");
}

std::string pair_to_json_line(const PreferencePair& pair) {
    json j;
    j["id"] = pair.id;
    j["level"] = to_string(pair.level);
    j["perturbation"] = to_string(pair.perturbation);
    j["instruction"] = pair.instruction;
    j["images"] = json::array();
    for (const auto& img : pair.images) j["images"].push_back(image_to_json(img));
    if (pair.contrast_images) {
        j["contrast_images"] = json::array();
        for (const auto& img : *pair.contrast_images)
            j["contrast_images"].push_back(image_to_json(img));
    }
    j["chosen"] = pair.chosen;
    j["rejected"] = pair.rejected ? json(*pair.rejected) : json(nullptr);
    j["meta"] = {{"seed", pair.meta.seed},
                 {"n_images", pair.meta.n_images},
                 {"generator_version", pair.meta.generator_version},
                 {"template_id", pair.meta.template_id}};
    return j.dump();
}

PreferencePair pair_from_json_line(const std::string& line) {
    json j = json::parse(line);
    PreferencePair pair;
    pair.id = j.at("id").get<std::string>();
    const std::string level = j.at("level").get<std::string>();
    if (level == "context")
        pair.level = PairLevel::context;
    else if (level == "needle_t")
        pair.level = PairLevel::needle_t;
    else if (level == "needle_v")
        pair.level = PairLevel::needle_v;
    else
        throw std::runtime_error("unknown pair level: " + level);
    pair.perturbation = perturbation_from_string(j.at("perturbation").get<std::string>());
    pair.instruction = j.at("instruction").get<std::string>();
    for (const auto& img : j.at("images")) pair.images.push_back(image_from_json(img));
    if (j.contains("contrast_images")) {
        pair.contrast_images.emplace();
        for (const auto& img : j.at("contrast_images"))
            pair.contrast_images->push_back(image_from_json(img));
    }
    pair.chosen = j.at("chosen").get<std::string>();
    if (!j.at("rejected").is_null()) pair.rejected = j.at("rejected").get<std::string>();
    const auto& meta = j.at("meta");
    pair.meta.seed = meta.at("seed").get<std::uint64_t>();
    pair.meta.n_images = meta.at("n_images").get<int>();
    pair.meta.generator_version = meta.at("generator_version").get<std::string>();
    pair.meta.template_id = meta.at("template_id").get<std::string>();
    return pair;
}

std::size_t emit_jsonl(const std::vector<PreferencePair>& pairs, const std::string& path) {
    std::vector<const PreferencePair*> ordered;
    ordered.reserve(pairs.size());
    for (const auto& p : pairs) ordered.push_back(&p);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto* a, const auto* b) { return a->id < b->id; });

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("emit_jsonl: cannot open " + path);
    for (const auto* p : ordered) {
        validate_pair(*p);
        out << pair_to_json_line(*p) << '\n';
    }
    if (!out) throw std::runtime_error("emit_jsonl: write failure on " + path);
    return pairs.size();
}

DatasetStats dataset_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("dataset_stats: cannot open " + path);

    DatasetStats stats;
    struct Acc {
        std::size_t chosen_tokens = 0;
        std::size_t rejected_tokens = 0;
        std::size_t rejected_count = 0;
    };
    std::map<std::string, Acc> acc;

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        PreferencePair pair = pair_from_json_line(line);
        const std::string level = to_string(pair.level);
        auto& ls = stats.per_level[level];
        auto& a = acc[level];
        const int n = pair.meta.n_images;
        if (ls.count == 0) {
            ls.images_min = n;
            ls.images_max = n;
        } else {
            ls.images_min = std::min(ls.images_min, n);
            ls.images_max = std::max(ls.images_max, n);
        }
        ++ls.count;
        ++stats.total;
        a.chosen_tokens += token_count(pair.chosen);
        if (pair.rejected) {
            a.rejected_tokens += token_count(*pair.rejected);
            ++a.rejected_count;
        }
    }
    for (auto& [level, ls] : stats.per_level) {
        const auto& a = acc[level];
        ls.mean_chosen_tokens = static_cast<double>(a.chosen_tokens) / ls.count;
        if (a.rejected_count)
            ls.mean_rejected_tokens = static_cast<double>(a.rejected_tokens) / a.rejected_count;
    }
    return stats;
}

namespace {

std::string pair_id(const char* prefix, std::size_t i) {
    std::ostringstream os;
    os << prefix << '-';
    os.width(6);
    os.fill('0');
    os << i;
    return os.str();
}

}  // namespace

GenResult run_generation(const GenConfig& config) {
    if (config.out_path.empty()) throw std::invalid_argument("run_generation: out path required");

    std::optional<CaptionPool> detailed, brief, region, contrastive;
    if (config.context_count > 0) {
        detailed = ingest_pool(config.detailed_pool_path, PoolKind::image_level_detailed);
        if (config.weight_short > 0)
            brief = ingest_pool(config.brief_pool_path, PoolKind::image_level_brief);
    }
    if (config.needle_t_count > 0)
        region = ingest_pool(config.region_pool_path, PoolKind::region_level);
    if (config.needle_v_count > 0)
        contrastive = ingest_pool(config.contrastive_pool_path, PoolKind::contrastive);

    std::vector<PreferencePair> pairs;
    GenResult result;
    std::uint64_t global_index = 0;

    const double wsum = config.weight_trunc + config.weight_short + config.weight_swap;
    if (config.context_count > 0 && wsum <= 0)
        throw std::invalid_argument("run_generation: perturbation weights sum to zero");

    for (std::size_t i = 0; i < config.context_count; ++i, ++global_index) {
        const std::uint64_t seed = derive_seed(config.master_seed, global_index);
        Rng rng(seed);
        const double u = rand_unit(rng) * wsum;
        PerturbationKind kind = PerturbationKind::swap;
        if (u < config.weight_trunc)
            kind = PerturbationKind::trunc;
        else if (u < config.weight_trunc + config.weight_short)
            kind = PerturbationKind::short_;
        try {
            auto seq = sample_sequence(*detailed, config.context_n_min, config.context_n_max, rng);
            auto pair =
                build_context_pair(seq, brief ? &*brief : nullptr, kind, rng);
            pair.id = pair_id("ctx", i);
            pair.meta.seed = seed;
            pairs.push_back(std::move(pair));
        } catch (const std::exception& e) {
            result.skipped.push_back(pair_id("ctx", i) + ": " + e.what());
        }
    }

    for (std::size_t i = 0; i < config.needle_t_count; ++i, ++global_index) {
        const std::uint64_t seed = derive_seed(config.master_seed, global_index);
        Rng rng(seed);
        try {
            auto seq = sample_sequence(*region, config.needle_n_min, config.needle_n_max, rng);
            auto pair = build_needle_t_pair(seq, *region, rng, config.max_iou);
            pair.id = pair_id("nt", i);
            pair.meta.seed = seed;
            pairs.push_back(std::move(pair));
        } catch (const std::exception& e) {
            result.skipped.push_back(pair_id("nt", i) + ": " + e.what());
        }
    }

    for (std::size_t i = 0; i < config.needle_v_count; ++i, ++global_index) {
        const std::uint64_t seed = derive_seed(config.master_seed, global_index);
        Rng rng(seed);
        try {
            auto seq =
                sample_sequence(*contrastive, config.needle_n_min, config.needle_n_max, rng);
            auto pair = build_needle_v_pair(seq, *contrastive, rng);
            pair.id = pair_id("nv", i);
            pair.meta.seed = seed;
            pairs.push_back(std::move(pair));
        } catch (const std::exception& e) {
            result.skipped.push_back(pair_id("nv", i) + ": " + e.what());
        }
    }

    emit_jsonl(pairs, config.out_path);

    const std::string skip_path =
        config.skip_log_path.empty() ? config.out_path + ".skipped" : config.skip_log_path;
    std::ofstream skip_out(skip_path, std::ios::binary);
    if (!skip_out) throw std::runtime_error("run_generation: cannot open " + skip_path);
    for (const auto& s : result.skipped) skip_out << s << '\n';

    result.stats = dataset_stats(config.out_path);
    return result;
}

}  // namespace ccdpo
