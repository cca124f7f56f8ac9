#pragma once

#include <span>
#include <string>
#include <vector>

#include "obr/codec.hpp"
#include "obr/geometry.hpp"

namespace obr {

struct TextLine {
    double baseline_y = 0;  // mean y-center of the line's characters
    std::vector<Detection> characters;  // ordered by x-center
    std::string text;                   // filled by render_text
};

struct ReaderOptions {
    double line_link = 0.5;    // link threshold, fraction of median character height
    double space_gap = 1.5;    // x-gap, fraction of median pitch, that implies a blank cell
};

/// Clusters detections into lines by single linkage on skew-corrected
/// y-centers. The skew is the median slope between horizontal neighbours.
std::vector<TextLine> group_lines(std::span<const Detection> detections, const ReaderOptions& options = {});

// Fills each line's text; lines are joined with '\n'.
std::string render_text(std::vector<TextLine>& lines, const AlphabetTable& table, const ReaderOptions& options = {});

}  // namespace obr
