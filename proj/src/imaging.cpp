#include "obr/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "obr/error.hpp"

namespace obr {

RasterImage::RasterImage(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels)
{
    if (width < 1 || height < 1) throw InputError("image dimensions must be positive");
    if (channels != 1 && channels != 3) throw InputError("images must have 1 or 3 channels");
    pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

std::vector<double> RasterImage::channel_means() const
{
    std::vector<double> sums(channels_, 0.0);
    for (std::size_t i = 0; i < pixels_.size(); ++i) sums[i % channels_] += pixels_[i];
    const double n = static_cast<double>(width_) * height_;
    for (auto& s : sums) s /= n;
    return sums;
}

std::uint8_t to_intensity(double value)
{
    const double rounded = std::floor(value + 0.5);
    return static_cast<std::uint8_t>(std::clamp(rounded, 0.0, 255.0));
}

RasterImage to_grayscale(const RasterImage& image)
{
    if (image.channels() == 1) return image;
    RasterImage gray(image.width(), image.height(), 1);
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x)
            gray.at(x, y) = to_intensity(0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) +
                                         0.114 * image.at(x, y, 2));
    return gray;
}

RasterImage to_rgb(const RasterImage& image)
{
    if (image.channels() == 3) return image;
    RasterImage rgb(image.width(), image.height(), 3);
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x)
            for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = image.at(x, y);
    return rgb;
}

NormalizedImage normalize(const RasterImage& image)
{
    if (image.empty()) throw InputError("normalize: empty image");
    const int channels = image.channels();
    const std::size_t n = static_cast<std::size_t>(image.width()) * image.height();
    NormalizedImage out(channels, image.height(), image.width());
    const auto px = image.pixels();
    for (int c = 0; c < channels; ++c) {
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += px[i * channels + c];
        const double mean = sum / static_cast<double>(n);
        double sq = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = px[i * channels + c] - mean;
            sq += d * d;
        }
        const double stddev = std::sqrt(sq / static_cast<double>(n));
        const double scale = 1.0 / (3.0 * std::max(stddev, 0.1 * 255.0));
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>((px[i * channels + c] - mean) * scale);
    }
    return out;
}

RasterImage resize(const RasterImage& image, int new_width, int new_height)
{
    if (new_width < 1 || new_height < 1) throw InputError("resize: target dimensions must be positive");
    if (new_width == image.width() && new_height == image.height()) return image;

    const int channels = image.channels();
    RasterImage out(new_width, new_height, channels);
    const double sx = static_cast<double>(image.width()) / new_width;
    const double sy = static_cast<double>(image.height()) / new_height;

    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [](int n_out, int n_in, double scale) {
        std::vector<Tap> t(n_out);
        for (int i = 0; i < n_out; ++i) {
            const double s = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(n_in - 1));
            const int i0 = static_cast<int>(std::floor(s));
            t[i] = {i0, std::min(i0 + 1, n_in - 1), s - i0};
        }
        return t;
    };
    const auto xt = taps(new_width, image.width(), sx);
    const auto yt = taps(new_height, image.height(), sy);

    for (int y = 0; y < new_height; ++y) {
        const Tap& ty = yt[y];
        for (int x = 0; x < new_width; ++x) {
            const Tap& tx = xt[x];
            for (int c = 0; c < channels; ++c) {
                const double top = image.at(tx.i0, ty.i0, c) * (1 - tx.f) + image.at(tx.i1, ty.i0, c) * tx.f;
                const double bottom = image.at(tx.i0, ty.i1, c) * (1 - tx.f) + image.at(tx.i1, ty.i1, c) * tx.f;
                out.at(x, y, c) = to_intensity(top * (1 - ty.f) + bottom * ty.f);
            }
        }
    }
    return out;
}

Affine2D Affine2D::then(const Affine2D& next) const
{
    const auto& a = next.m;
    const auto& b = m;
    return {{a[0] * b[0] + a[1] * b[3], a[0] * b[1] + a[1] * b[4], a[0] * b[2] + a[1] * b[5] + a[2],
             a[3] * b[0] + a[4] * b[3], a[3] * b[1] + a[4] * b[4], a[3] * b[2] + a[4] * b[5] + a[5]}};
}

Affine2D Affine2D::inverse() const
{
    const double det = determinant();
    if (std::abs(det) < 1e-12) throw InputError("affine transform is not invertible");
    const double i0 = m[4] / det, i1 = -m[1] / det, i3 = -m[3] / det, i4 = m[0] / det;
    return {{i0, i1, -(i0 * m[2] + i1 * m[5]), i3, i4, -(i3 * m[2] + i4 * m[5])}};
}

Affine2D Affine2D::rotation(double degrees, double cx, double cy)
{
    const double r = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(r), s = std::sin(r);
    return {{c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy}};
}

Box transform_box(const Affine2D& map, const Box& box)
{
    const double xs[4] = {box.left, box.right, box.right, box.left};
    const double ys[4] = {box.top, box.top, box.bottom, box.bottom};
    Box out{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
            std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest()};
    for (int i = 0; i < 4; ++i) {
        const double x = map.apply_x(xs[i], ys[i]);
        const double y = map.apply_y(xs[i], ys[i]);
        out.left = std::min(out.left, x);
        out.right = std::max(out.right, x);
        out.top = std::min(out.top, y);
        out.bottom = std::max(out.bottom, y);
    }
    return out;
}

std::array<int, 2> GeometricTransform::frame_size(int src_width, int src_height) const
{
    return {std::max(1, static_cast<int>(std::lround(src_width * scale_x))),
            std::max(1, static_cast<int>(std::lround(src_height * scale_y)))};
}

std::array<int, 2> GeometricTransform::output_size(int src_width, int src_height) const
{
    const auto frame = frame_size(src_width, src_height);
    return {out_width > 0 ? out_width : frame[0], out_height > 0 ? out_height : frame[1]};
}

Affine2D GeometricTransform::matrix(int src_width, int src_height) const
{
    if (!(scale_x > 0) || !(scale_y > 0)) throw InputError("transform scales must be positive");
    const auto [fw, fh] = frame_size(src_width, src_height);
    Affine2D map = Affine2D::scaling(scale_x, scale_y);
    if (rotation_deg != 0) map = map.then(Affine2D::rotation(rotation_deg, fw / 2.0, fh / 2.0));
    if (mirror) map = map.then(Affine2D{{-1, 0, static_cast<double>(fw), 0, 1, 0}});
    if (crop_x != 0 || crop_y != 0) map = map.then(Affine2D::translation(-crop_x, -crop_y));
    return map;
}

TransformedImage warp_affine(const RasterImage& image, const Affine2D& map, int out_width, int out_height,
                             std::span<const Box> boxes)
{
    const Affine2D inv = map.inverse();
    const int channels = image.channels();
    const int w = image.width();
    const int h = image.height();

    std::uint8_t fill[3] = {0, 0, 0};
    const auto means = image.channel_means();
    for (int c = 0; c < channels; ++c) fill[c] = to_intensity(means[c]);

    TransformedImage result{RasterImage(out_width, out_height, channels), {}};
    RasterImage& out = result.image;
    std::size_t inside = 0;
    for (int v = 0; v < out_height; ++v) {
        for (int u = 0; u < out_width; ++u) {
            const double qx = u + 0.5, qy = v + 0.5;
            const double sx = inv.apply_x(qx, qy) - 0.5;
            const double sy = inv.apply_y(qx, qy) - 0.5;
            if (sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5) {
                for (int c = 0; c < channels; ++c) out.at(u, v, c) = fill[c];
                continue;
            }
            ++inside;
            const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
            const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
            const int x0 = static_cast<int>(cx), y0 = static_cast<int>(cy);
            const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fx = cx - x0, fy = cy - y0;
            for (int c = 0; c < channels; ++c) {
                const double top = image.at(x0, y0, c) * (1 - fx) + image.at(x1, y0, c) * fx;
                const double bottom = image.at(x0, y1, c) * (1 - fx) + image.at(x1, y1, c) * fx;
                out.at(u, v, c) = to_intensity(top * (1 - fy) + bottom * fy);
            }
        }
    }
    if (inside == 0) throw InputError("transform maps the image completely out of frame");

    result.boxes.reserve(boxes.size());
    for (const Box& b : boxes) result.boxes.push_back(transform_box(map, b));
    return result;
}

TransformedImage apply_transform(const RasterImage& image, const GeometricTransform& transform,
                                 std::span<const Box> boxes)
{
    const auto [ow, oh] = transform.output_size(image.width(), image.height());
    return warp_affine(image, transform.matrix(image.width(), image.height()), ow, oh, boxes);
}

std::vector<RetainedBox> clip_boxes(std::span<const Box> boxes, int width, int height, double min_fraction)
{
    std::vector<RetainedBox> kept;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const Box& b = boxes[i];
        const Box clipped{std::max(b.left, 0.0), std::max(b.top, 0.0), std::min(b.right, double(width)),
                          std::min(b.bottom, double(height))};
        if (!clipped.valid()) continue;
        if (clipped.area() >= min_fraction * b.area()) kept.push_back({clipped, i});
    }
    return kept;
}

CropResult crop(const RasterImage& image, int origin_x, int origin_y, int width, int height,
                std::span<const Box> boxes)
{
    if (width < 1 || height < 1) throw InputError("crop: window dimensions must be positive");
    if (origin_x >= image.width() || origin_y >= image.height() || origin_x + width <= 0 ||
        origin_y + height <= 0)
        throw InputError("crop window does not intersect the image");

    const int channels = image.channels();
    const auto means = image.channel_means();
    CropResult result{RasterImage(width, height, channels), {}};
    for (int y = 0; y < height; ++y) {
        const int sy = origin_y + y;
        for (int x = 0; x < width; ++x) {
            const int sx = origin_x + x;
            const bool inside = sx >= 0 && sy >= 0 && sx < image.width() && sy < image.height();
            for (int c = 0; c < channels; ++c)
                result.image.at(x, y, c) = inside ? image.at(sx, sy, c) : to_intensity(means[c]);
        }
    }

    std::vector<Box> shifted;
    shifted.reserve(boxes.size());
    for (const Box& b : boxes)
        shifted.push_back({b.left - origin_x, b.top - origin_y, b.right - origin_x, b.bottom - origin_y});
    result.boxes = clip_boxes(shifted, width, height);
    return result;
}

}  // namespace obr
