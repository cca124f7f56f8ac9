#include "obr/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace obr {

NormalizedImage pad_to_stride(const NormalizedImage& image, int stride)
{
    const int h = (image.height() + stride - 1) / stride * stride;
    const int w = (image.width() + stride - 1) / stride * stride;
    if (h == image.height() && w == image.width()) return image;
    NormalizedImage out(image.channels(), h, w, 0.0f);
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < image.height(); ++y)
            std::copy_n(&image.at(c, y, 0), image.width(), &out.at(c, y, 0));
    return out;
}

PreparedImage prepare_image(const RasterImage& image, int target_width, int input_channels)
{
    RasterImage src = input_channels == 1 ? to_grayscale(image) : to_rgb(image);
    PreparedImage prepared;
    if (target_width > 0 && target_width != src.width()) {
        const int target_height =
            std::max(1, static_cast<int>(std::lround(static_cast<double>(src.height()) * target_width / src.width())));
        prepared.scale_x = static_cast<double>(target_width) / src.width();
        prepared.scale_y = static_cast<double>(target_height) / src.height();
        src = resize(src, target_width, target_height);
    }
    prepared.input = pad_to_stride(normalize(src));
    return prepared;
}

std::vector<Detection> detect_page(const Detector& detector, const RasterImage& image, int target_width,
                                   double score_threshold)
{
    const PreparedImage prepared = prepare_image(image, target_width, detector.config().backbone.input_channels);
    std::vector<Detection> detections = detector.detect(prepared.input, score_threshold);
    for (auto& d : detections) {
        d.box.left /= prepared.scale_x;
        d.box.right /= prepared.scale_x;
        d.box.top /= prepared.scale_y;
        d.box.bottom /= prepared.scale_y;
    }
    return detections;
}

Recognition recognize(const Detector& detector, const RasterImage& image, const AlphabetTable& table,
                      int target_width, double score_threshold, const ReaderOptions& reader)
{
    Recognition result;
    result.detections = detect_page(detector, image, target_width, score_threshold);
    result.lines = group_lines(result.detections, reader);
    result.text = render_text(result.lines, table, reader);
    return result;
}

RasterImage draw_overlay(const RasterImage& image, const std::vector<Detection>& detections)
{
    RasterImage out = to_rgb(image);
    auto plot = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        if (x < 0 || y < 0 || x >= out.width() || y >= out.height()) return;
        out.at(x, y, 0) = r;
        out.at(x, y, 1) = g;
        out.at(x, y, 2) = b;
    };
    for (const auto& d : detections) {
        const int x0 = static_cast<int>(std::floor(d.box.left)), x1 = static_cast<int>(std::ceil(d.box.right)) - 1;
        const int y0 = static_cast<int>(std::floor(d.box.top)), y1 = static_cast<int>(std::ceil(d.box.bottom)) - 1;
        for (int x = x0; x <= x1; ++x) {
            plot(x, y0, 255, 0, 0);
            plot(x, y1, 255, 0, 0);
        }
        for (int y = y0; y <= y1; ++y) {
            plot(x0, y, 255, 0, 0);
            plot(x1, y, 255, 0, 0);
        }
        // Class glyph: 2x3 cells of 2x2 pixels just above the box.
        const DotPattern dots = decode(d.cls);
        for (int dot = 1; dot <= 6; ++dot) {
            const int gx = x0 + (dot <= 3 ? 0 : 3);
            const int gy = y0 - 10 + ((dot - 1) % 3) * 3;
            const bool on = dots.has(dot);
            for (int yy = 0; yy < 2; ++yy)
                for (int xx = 0; xx < 2; ++xx) plot(gx + xx, gy + yy, on ? 0 : 200, on ? 0 : 200, on ? 255 : 200);
        }
    }
    return out;
}

}  // namespace obr
