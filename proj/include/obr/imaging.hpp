#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "obr/geometry.hpp"
#include "obr/tensor.hpp"

namespace obr {

/// 8-bit image with 1 or 3 interleaved channels.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, int channels, std::uint8_t fill = 0);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return pixels_.empty(); }

    std::uint8_t& at(int x, int y, int c = 0)
    {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const
    {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    std::span<std::uint8_t> pixels() { return pixels_; }
    std::span<const std::uint8_t> pixels() const { return pixels_; }

    std::vector<double> channel_means() const;

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> pixels_;
};

// Per-channel zero-mean values, channel-major.
using NormalizedImage = Tensor<float>;

// Rounds half up and clamps to [0, 255].
std::uint8_t to_intensity(double value);

RasterImage to_grayscale(const RasterImage& image);
RasterImage to_rgb(const RasterImage& image);

/// x = (I - m) / (3 * max(s, 25.5)) per channel, with m and s the channel
/// mean and population standard deviation.
NormalizedImage normalize(const RasterImage& image);

// Bilinear resampling with pixel-center alignment.
RasterImage resize(const RasterImage& image, int new_width, int new_height);

/// Row-major 2x3 affine map, p' = A p + t.
struct Affine2D {
    std::array<double, 6> m{1, 0, 0, 0, 1, 0};

    double apply_x(double x, double y) const { return m[0] * x + m[1] * y + m[2]; }
    double apply_y(double x, double y) const { return m[3] * x + m[4] * y + m[5]; }

    Affine2D then(const Affine2D& next) const;  // next * this
    Affine2D inverse() const;
    double determinant() const { return m[0] * m[4] - m[1] * m[3]; }

    static Affine2D translation(double dx, double dy) { return {{1, 0, dx, 0, 1, dy}}; }
    static Affine2D scaling(double sx, double sy) { return {{sx, 0, 0, 0, sy, 0}}; }
    // Positive angles turn clockwise on screen (y axis points down).
    static Affine2D rotation(double degrees, double cx, double cy);
};

// Axis-aligned hull of the transformed rectangle.
Box transform_box(const Affine2D& map, const Box& box);

/// Augmentation transform: scale, then rotate about the scaled frame's
/// center, then optionally mirror horizontally, then cut out an output
/// window. The scaled frame is round(W*sx) x round(H*sy).
struct GeometricTransform {
    double scale_x = 1;
    double scale_y = 1;
    double rotation_deg = 0;
    bool mirror = false;
    double crop_x = 0;
    double crop_y = 0;
    int out_width = 0;   // 0: the full scaled frame
    int out_height = 0;

    std::array<int, 2> frame_size(int src_width, int src_height) const;
    std::array<int, 2> output_size(int src_width, int src_height) const;
    Affine2D matrix(int src_width, int src_height) const;
};

struct TransformedImage {
    RasterImage image;
    std::vector<Box> boxes;
};

// Warps into an out_width x out_height canvas; samples falling outside the
// source are filled with the per-channel mean. Throws InputError when no
// source pixel lands in the canvas.
TransformedImage warp_affine(const RasterImage& image, const Affine2D& map, int out_width, int out_height,
                             std::span<const Box> boxes);

TransformedImage apply_transform(const RasterImage& image, const GeometricTransform& transform,
                                 std::span<const Box> boxes);

// Box kept by a crop: its clipped extent and position in the input list.
struct RetainedBox {
    Box box;
    std::size_t source_index;
};

// Clips to [0,width)x[0,height); keeps a box iff at least min_fraction of its area survives.
std::vector<RetainedBox> clip_boxes(std::span<const Box> boxes, int width, int height, double min_fraction = 0.5);

struct CropResult {
    RasterImage image;
    std::vector<RetainedBox> boxes;
};

CropResult crop(const RasterImage& image, int origin_x, int origin_y, int width, int height,
                std::span<const Box> boxes);

}  // namespace obr
