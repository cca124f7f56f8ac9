#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "obr/error.hpp"
#include "obr/geometry.hpp"

namespace obr {

/// Ground truth for one page image.
struct PageAnnotation {
    std::string image;  // path relative to the annotation file, or an identifier
    int width = 0;
    int height = 0;
    bool negative = false;  // contains no Braille by construction
    std::vector<LabeledBox> chars;

    std::vector<Box> boxes() const;
};

// Largest IOU tolerated between two ground-truth characters.
inline constexpr double kMaxTruthOverlap = 0.02;

enum class ViolationKind { syntax, dimensions, range, bounds, overlap, negative_with_chars };

const char* to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string message;
    std::vector<std::size_t> indices;  // offending characters
};

std::vector<Violation> validate(const PageAnnotation& page);

class AnnotationError : public InputError {
public:
    AnnotationError(ViolationKind kind, const std::string& message) : InputError(message), kind_(kind) {}
    ViolationKind kind() const { return kind_; }

private:
    ViolationKind kind_;
};

// Canonical JSON: {image, width, height, negative, chars: [{left, top, right, bottom, dots}]}.
// Parsing validates every invariant and throws AnnotationError with field context.
PageAnnotation parse_canonical(const std::string& json_text, const std::string& source = "<string>");
std::string format_canonical(const PageAnnotation& page);
// Every violation in a file instead of the first; unreadable files still throw.
std::vector<Violation> check_canonical(const std::filesystem::path& path);
PageAnnotation load_canonical(const std::filesystem::path& path);
void save_canonical(const PageAnnotation& page, const std::filesystem::path& path);

/// Grid-anchored annotation. Vertical lines come in pairs per character
/// column (the two dot columns) and horizontal lines in triples per character
/// row (the three dot rows), as in the scanned-book corpora that annotate a
/// de-rotated dot grid.
struct GridCharacter {
    int col = 0;
    int row = 0;
    DotPattern dots;
};

struct GridAnnotation {
    std::string image;
    int width = 0;
    int height = 0;
    double rotation_deg = 0;
    std::vector<double> vertical_lines;
    std::vector<double> horizontal_lines;
    std::vector<GridCharacter> chars;
};

PageAnnotation grid_to_boxes(const GridAnnotation& grid, double char_width = 20, double char_height = 32);

// JSON adapter: {image, width, height, angle, vertical_lines, horizontal_lines, chars: [{col, row, dots}]}.
GridAnnotation load_grid(const std::filesystem::path& path);

struct Book {
    std::string name;
    std::vector<PageAnnotation> pages;  // in reading order
};

struct DatasetSplit {
    std::vector<PageAnnotation> train;
    std::vector<PageAnnotation> test;
    std::vector<std::string> warnings;
};

// Per book: the first ceil(fraction * n) pages train, the rest test.
DatasetSplit split_by_fraction(std::span<const Book> books, double train_fraction);

// Annotation paths listed one per line ('#' comments allowed), resolved
// against the manifest's directory.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const std::filesystem::path> entries);

}  // namespace obr
