#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "obr/datasets.hpp"
#include "obr/imaging.hpp"

namespace obr {

/// Page layout at 100 dpi. Character centers sit at
/// (margin_left + char_width/2 + k*char_pitch, margin_top + char_height/2 + r*line_pitch).
struct PageGeometry {
    int page_width = 864;
    int page_height = 480;
    double margin_left = 32;
    double margin_top = 100;
    double dot_pitch = 10;
    double char_pitch = 25;
    double line_pitch = 40;
    double dot_radius = 4;
    double char_width = 20;
    double char_height = 32;

    int columns() const;  // cells that fit on a line inside the margins
    int rows() const;
};

struct SynthOptions {
    double rotation_deg = 0;
    double perspective = 0;  // relative depth change across the page, e.g. 0.03
    double noise_sigma = 4;  // additive Gaussian grain, intensity units
    bool texture = true;     // paper fibres and uneven lighting
};

// Empty optional = blank cell (a space).
using BrailleRow = std::vector<std::optional<ClassId>>;

struct SyntheticPage {
    RasterImage image;
    PageAnnotation annotation;
};

/// Renders dots as top-lit bumps (bright upper crescent, dark lower
/// crescent) on textured paper. Throws InputError if any character leaves
/// the page.
SyntheticPage render_synthetic_page(std::span<const BrailleRow> text, const PageGeometry& geometry,
                                    const SynthOptions& options, std::uint64_t seed);

// Words of 2..7 random classes separated by single blank cells, filling
// rows x cols cells. Half the words are letters a..z drawn by English letter
// frequency, so runs of cells with an empty bottom row occur as in real text.
// The other half draw the dot count uniformly over 1..6, then the pattern
// uniformly within that count, so every class appears.
std::vector<BrailleRow> random_braille_text(int rows, int cols, std::uint64_t seed);

/// Word-wraps plain text into rows of at most cols cells, one cell per
/// character through the table (letters are lowercased first). Newlines
/// start a new row. Throws InputError on unmapped characters or words
/// longer than a row.
std::vector<BrailleRow> layout_text(std::string_view text, const AlphabetTable& table, int cols);

// Per-page draw of rotation and perspective within +-options.
SynthOptions draw_page_options(const SynthOptions& options, std::uint64_t page_seed);

/// Pages of random text; each page draws its rotation and perspective
/// uniformly from [-limit, limit] with the limits taken from options.
std::vector<SyntheticPage> render_corpus(int pages, const PageGeometry& geometry, const SynthOptions& options,
                                         std::uint64_t seed);

}  // namespace obr
