#pragma once

#include <string>
#include <vector>

#include "obr/codec.hpp"
#include "obr/detector.hpp"
#include "obr/imaging.hpp"
#include "obr/reader.hpp"

namespace obr {

struct PreparedImage {
    NormalizedImage input;  // padded to multiples of 16
    double scale_x = 1;     // network pixels per source pixel
    double scale_y = 1;
};

// Zero in normalized space is the channel mean, so padding leaves the
// statistics of the real pixels untouched.
NormalizedImage pad_to_stride(const NormalizedImage& image, int stride = kNetworkStride);

// Resizes to target_width (0 keeps the size) preserving aspect, converts to
// the network's channel count, normalizes and pads.
PreparedImage prepare_image(const RasterImage& image, int target_width, int input_channels);

// Detections in source-image coordinates.
std::vector<Detection> detect_page(const Detector& detector, const RasterImage& image, int target_width,
                                   double score_threshold);

struct Recognition {
    std::vector<Detection> detections;
    std::vector<TextLine> lines;
    std::string text;
};

Recognition recognize(const Detector& detector, const RasterImage& image, const AlphabetTable& table,
                      int target_width, double score_threshold, const ReaderOptions& reader = {});

// Boxes with a 2x3 dot glyph of the class drawn above each one.
RasterImage draw_overlay(const RasterImage& image, const std::vector<Detection>& detections);

}  // namespace obr
