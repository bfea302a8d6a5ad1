#include "ccdpo/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ccdpo {

namespace {

using json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail_at(const std::string& path, std::size_t lineno, const std::string& why) {
    std::ostringstream err;
    err << path << ":" << lineno << ": " << why;
    throw std::runtime_error(err.str());
}

}  // namespace

std::map<std::string, std::string> parse_kv_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_kv_config: cannot open " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail_at(path, lineno, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail_at(path, lineno, "empty key");
        out[key] = value;
    }
    return out;
}

std::vector<GroundTruthSequence> load_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_ground_truth: cannot open " + path);
    std::vector<GroundTruthSequence> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            json j = json::parse(line);
            GroundTruthSequence seq;
            seq.seq_id = j.at("seq_id").get<std::string>();
            for (const auto& img : j.at("images")) {
                GtImage g;
                g.image_id = img.at("image_id").get<std::string>();
                for (const auto& o : img.at("objects")) g.objects.insert(o.get<std::string>());
                if (img.contains("caption"))
                    g.reference_caption = img.at("caption").get<std::string>();
                seq.images.push_back(std::move(g));
            }
            out.push_back(std::move(seq));
        } catch (const std::exception& e) {
            fail_at(path, lineno, e.what());
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_predictions: cannot open " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            json j = json::parse(line);
            out.emplace_back(j.at("seq_id").get<std::string>(), j.at("text").get<std::string>());
        } catch (const std::exception& e) {
            fail_at(path, lineno, e.what());
        }
    }
    return out;
}

ObjectLexicon load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_lexicon: cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error("load_lexicon: " + path + ": " + e.what());
    }
    ObjectLexicon lex;
    for (const auto& o : j.at("objects")) lex.objects.insert(o.get<std::string>());
    if (j.contains("synonyms"))
        for (const auto& [surface, canonical] : j.at("synonyms").items())
            lex.synonyms[surface] = canonical.get<std::string>();
    for (const auto& o : j.value("cog_targets", json::array()))
        lex.cog_targets.insert(o.get<std::string>());
    return lex;
}

void write_report(const MetricReport& report, const std::string& path) {
    json j;
    j["chair"] = report.chair;
    j["hal"] = report.hal;
    j["cog"] = report.cog;
    j["scover"] = report.scover;
    j["per_sequence"] = json::array();
    for (const auto& s : report.per_sequence) {
        j["per_sequence"].push_back({{"seq_id", s.seq_id},
                                     {"chair", s.chair},
                                     {"hal", s.hal},
                                     {"cog", s.cog},
                                     {"scover", s.scover}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_report: cannot open " + path);
    out << j.dump(2) << '\n';
}

std::size_t run_losses_batch(const std::string& in_path, const std::string& out_path,
                             const LossConfig& config) {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("run_losses_batch: cannot open " + in_path);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("run_losses_batch: cannot open " + out_path);

    std::string line;
    std::size_t lineno = 0, count = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        std::string pair_id, kind;
        LossOut result;
        try {
            j = json::parse(line);
            pair_id = j.at("pair_id").get<std::string>();
            kind = j.at("kind").get<std::string>();
            if (kind == "pair") {
                PairLogProbs lp;
                lp.policy_chosen = j.at("policy_chosen").get<double>();
                lp.ref_chosen = j.at("ref_chosen").get<double>();
                lp.policy_rejected = j.at("policy_rejected").get<double>();
                lp.ref_rejected = j.at("ref_rejected").get<double>();
                result = dpo_loss(lp, config.beta);
            } else if (kind == "contrast") {
                ContrastLogProbs cl;
                cl.policy_cond = j.at("policy_cond").get<double>();
                cl.ref_cond = j.at("ref_cond").get<double>();
                cl.policy_uncond = j.at("policy_uncond").get<double>();
                cl.ref_uncond = j.at("ref_uncond").get<double>();
                cl.policy_contra = j.at("policy_contra").get<double>();
                cl.ref_contra = j.at("ref_contra").get<double>();
                result = vision_contrastive_loss(cl, config.beta1, config.beta2);
            } else {
                throw std::runtime_error("unknown record kind: " + kind);
            }
            if (j.contains("nll"))
                result = total_loss(result, j.at("nll").get<double>(), config.gamma);
        } catch (const std::exception& e) {
            fail_at(in_path, lineno, e.what());
        }

        json rec;
        rec["pair_id"] = pair_id;
        rec["loss"] = result.value;
        rec["grads"] = json::object();
        for (const auto& [k, v] : result.grads) rec["grads"][k] = v;
        out << rec.dump() << '\n';
        ++count;
    }
    return count;
}

}  // namespace ccdpo
