#pragma once

#include <span>
#include <vector>

#include "obr/codec.hpp"

namespace obr {

/// Axis-aligned rectangle in continuous pixel coordinates; pixel (i, j)
/// covers [i, i+1) x [j, j+1).
struct Box {
    double left = 0;
    double top = 0;
    double right = 0;
    double bottom = 0;

    double width() const { return right - left; }
    double height() const { return bottom - top; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (left + right); }
    double center_y() const { return 0.5 * (top + bottom); }
    bool valid() const { return left < right && top < bottom; }

    static Box from_center(double cx, double cy, double w, double h)
    {
        return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    }

    friend bool operator==(const Box&, const Box&) = default;
};

struct LabeledBox {
    Box box;
    ClassId cls;
};

struct Detection {
    Box box;
    ClassId cls;
    double score = 0;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

/// One anchor per 16x16 feature cell, centered at (16i+8, 16j+8). Anchor
/// index is row-major, matching the spatial layout of the detector output.
class AnchorGrid {
public:
    static constexpr int kCellSize = 16;

    AnchorGrid(int image_width, int image_height, double anchor_width, double anchor_height);

    int cols() const { return cols_; }
    int rows() const { return rows_; }
    int size() const { return cols_ * rows_; }
    double anchor_width() const { return anchor_width_; }
    double anchor_height() const { return anchor_height_; }

    Box anchor(int col, int row) const;
    Box anchor(int index) const { return anchor(index % cols_, index / cols_); }

private:
    int cols_;
    int rows_;
    double anchor_width_;
    double anchor_height_;
};

AnchorGrid make_anchors(int image_width, int image_height, double anchor_width = 20, double anchor_height = 32);

struct BoxDelta {
    double tx = 0;
    double ty = 0;
    double tw = 0;
    double th = 0;
};

BoxDelta encode_delta(const Box& anchor, const Box& target);
Box decode_delta(const Box& anchor, const BoxDelta& delta);

// Ordering used wherever detections are ranked: score descending, then the
// lower top edge, then the lower left edge.
bool ranks_before(const Detection& a, const Detection& b);

/// Class-agnostic greedy suppression. Returns kept detections sorted by rank.
std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold);

}  // namespace obr
