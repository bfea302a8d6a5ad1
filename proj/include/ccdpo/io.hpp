#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ccdpo/dpo_core.hpp"
#include "ccdpo/halmetrics.hpp"

namespace ccdpo {

// Flat key-value config: one "key = value" per line, '#' comments, dotted
// section keys.
std::map<std::string, std::string> parse_kv_config(const std::string& path);

// Line-delimited {"seq_id", "images":[{"image_id","objects","caption"}]}.
std::vector<GroundTruthSequence> load_ground_truth(const std::string& path);

// Line-delimited {"seq_id", "text"}.
std::vector<std::pair<std::string, std::string>> load_predictions(const std::string& path);

// {"objects":[...], "synonyms":{...}, "cog_targets":[...]}.
ObjectLexicon load_lexicon(const std::string& path);

void write_report(const MetricReport& report, const std::string& path);

// Batch loss oracle: reads {"pair_id","kind":"pair"|"contrast",...numeric
// fields...}, writes {"pair_id","loss","grads":{...}}. Optional "nll" field
// adds the gamma-weighted NLL term. Throws std::runtime_error with the
// line number on malformed records. Returns the record count.
std::size_t run_losses_batch(const std::string& in_path, const std::string& out_path,
                             const LossConfig& config);

}  // namespace ccdpo
