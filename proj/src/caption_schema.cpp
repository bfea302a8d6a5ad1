#include "ccdpo/caption_schema.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace ccdpo {

namespace {

const std::regex kPlainHeader(R"(for\s+image\s+(\d+)\s*:)", std::regex::icase);
const std::regex kMarkedHeader(R"(for\s+the\s+marked\s+area\s+of\s+image\s+(\d+)\s*:)",
                               std::regex::icase);

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// The paper's examples separate entries with commas and sometimes wrap the
// whole sequence in square brackets; both are accepted and stripped.
std::string clean_segment(std::string s, bool last) {
    s = trim(s);
    if (last && !s.empty() && s.back() == ']') s = trim(s.substr(0, s.size() - 1));
    if (!s.empty() && s.back() == ',') s = trim(s.substr(0, s.size() - 1));
    return s;
}

}  // namespace

ParsedCaptions parse_sequence(const std::string& text, int expected_n, bool marked_area) {
    if (expected_n < 1) throw std::invalid_argument("parse_sequence: expected_n must be >= 1");

    const std::regex& header = marked_area ? kMarkedHeader : kPlainHeader;
    struct Hit {
        int index;
        std::size_t body_begin;
        std::size_t header_begin;
    };
    std::vector<Hit> hits;
    for (std::sregex_iterator it(text.begin(), text.end(), header), end; it != end; ++it) {
        int idx = std::stoi((*it)[1].str());
        hits.push_back({idx, static_cast<std::size_t>(it->position() + it->length()),
                        static_cast<std::size_t>(it->position())});
    }

    ParsedCaptions out;
    out.expected_n = expected_n;

    std::set<int> seen;
    int prev_index = 0;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        std::size_t end = (i + 1 < hits.size()) ? hits[i + 1].header_begin : text.size();
        std::string body =
            clean_segment(text.substr(hits[i].body_begin, end - hits[i].body_begin),
                          i + 1 == hits.size());
        int idx = hits[i].index;
        if (i > 0 && idx < prev_index) out.out_of_order = true;
        prev_index = idx;

        if (seen.count(idx)) {
            out.duplicate_indices.insert(idx);
            continue;  // first occurrence is authoritative
        }
        seen.insert(idx);
        if (idx > expected_n) out.overflow_indices.insert(idx);
        if (body.empty()) out.empty_indices.insert(idx);
        out.captions.push_back({idx, body, marked_area, false});
    }

    for (int i = 1; i <= expected_n; ++i)
        if (!seen.count(i)) out.missing_indices.insert(i);
    return out;
}

std::string serialize_sequence(const std::vector<std::pair<int, std::string>>& captions,
                               bool marked_area) {
    if (captions.empty()) throw std::invalid_argument("serialize_sequence: empty caption list");
    std::set<int> seen;
    std::ostringstream os;
    bool first = true;
    for (const auto& [idx, text] : captions) {
        if (idx < 1) throw std::invalid_argument("serialize_sequence: index must be positive");
        if (!seen.insert(idx).second) {
            std::ostringstream err;
            err << "serialize_sequence: duplicate index " << idx;
            throw std::invalid_argument(err.str());
        }
        if (!first) os << ' ';
        first = false;
        if (marked_area)
            os << "For the marked area of Image " << idx << ": " << text;
        else
            os << "For Image " << idx << ": " << text;
    }
    return os.str();
}

ParsedCaptions pad_missing(const ParsedCaptions& parsed) {
    ParsedCaptions out = parsed;

    std::map<int, IndexedCaption> by_index;
    for (const auto& c : parsed.captions) by_index.emplace(c.image_index, c);

    bool marked = parsed.captions.empty() ? false : parsed.captions.front().marked_area;
    for (int i = 1; i <= parsed.expected_n; ++i) {
        if (by_index.count(i)) continue;
        // Copy the nearest preceding present caption; empty when none.
        std::string text;
        auto it = by_index.lower_bound(i);
        if (it != by_index.begin()) {
            --it;
            if (it->first < i) text = it->second.text;
        }
        by_index.emplace(i, IndexedCaption{i, text, marked, true});
    }

    out.captions.clear();
    for (const auto& [idx, cap] : by_index) out.captions.push_back(cap);
    out.missing_indices.clear();
    out.out_of_order = false;
    return out;
}

}  // namespace ccdpo
