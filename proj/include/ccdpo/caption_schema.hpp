#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

namespace ccdpo {

// One entry of a structured multi-image response.
struct IndexedCaption {
    int image_index = 0;  // 1-based declared index
    std::string text;
    bool marked_area = false;
    bool padded = false;  // inserted by pad_missing, not parsed from source

    bool operator==(const IndexedCaption&) const = default;
};

// Parse result plus diagnostics. Captions appear in source order; matching
// to images is always by declared index, never by position.
struct ParsedCaptions {
    std::vector<IndexedCaption> captions;
    int expected_n = 0;
    std::set<int> missing_indices;
    std::set<int> duplicate_indices;
    std::set<int> overflow_indices;  // declared index > expected_n
    std::set<int> empty_indices;     // parsed with empty text
    bool out_of_order = false;
};

// Splits model output at every "For Image <k>:" header (or the marked-area
// variant). Total: arbitrary text yields a valid result; an unparseable
// string reports all indices missing.
ParsedCaptions parse_sequence(const std::string& text, int expected_n, bool marked_area);

// Emits headers in list order, one space after each header and between
// entries. Throws std::invalid_argument on duplicate indices or empty input.
std::string serialize_sequence(const std::vector<std::pair<int, std::string>>& captions,
                               bool marked_area);

// Fills every absent index in 1..expected_n with a padded caption copying
// the nearest preceding present caption (empty when none precedes). Output
// is sorted ascending by index; idempotent.
ParsedCaptions pad_missing(const ParsedCaptions& parsed);

}  // namespace ccdpo
