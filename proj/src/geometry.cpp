#include "obr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "obr/error.hpp"

namespace obr {

double intersection_area(const Box& a, const Box& b)
{
    const double w = std::min(a.right, b.right) - std::max(a.left, b.left);
    const double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
    return (w > 0 && h > 0) ? w * h : 0.0;
}

double iou(const Box& a, const Box& b)
{
    const double inter = intersection_area(a, b);
    if (inter <= 0) return 0.0;
    return inter / (a.area() + b.area() - inter);
}

AnchorGrid::AnchorGrid(int image_width, int image_height, double anchor_width, double anchor_height)
    : cols_((image_width + kCellSize - 1) / kCellSize),
      rows_((image_height + kCellSize - 1) / kCellSize),
      anchor_width_(anchor_width),
      anchor_height_(anchor_height)
{
    if (image_width < 1 || image_height < 1 || anchor_width <= 0 || anchor_height <= 0)
        throw InputError("anchor grid needs positive image and anchor dimensions");
}

Box AnchorGrid::anchor(int col, int row) const
{
    return Box::from_center(kCellSize * col + kCellSize / 2.0, kCellSize * row + kCellSize / 2.0,
                            anchor_width_, anchor_height_);
}

AnchorGrid make_anchors(int image_width, int image_height, double anchor_width, double anchor_height)
{
    return AnchorGrid(image_width, image_height, anchor_width, anchor_height);
}

BoxDelta encode_delta(const Box& anchor, const Box& target)
{
    if (!(target.width() > 0) || !(target.height() > 0))
        throw InputError("encode_delta: target box has nonpositive size");
    const double aw = anchor.width();
    const double ah = anchor.height();
    return {(target.center_x() - anchor.center_x()) / aw, (target.center_y() - anchor.center_y()) / ah,
            std::log(target.width() / aw), std::log(target.height() / ah)};
}

Box decode_delta(const Box& anchor, const BoxDelta& delta)
{
    const double aw = anchor.width();
    const double ah = anchor.height();
    return Box::from_center(anchor.center_x() + delta.tx * aw, anchor.center_y() + delta.ty * ah,
                            aw * std::exp(delta.tw), ah * std::exp(delta.th));
}

bool ranks_before(const Detection& a, const Detection& b)
{
    if (a.score != b.score) return a.score > b.score;
    if (a.box.top != b.box.top) return a.box.top < b.box.top;
    return a.box.left < b.box.left;
}

std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold)
{
    if (iou_threshold < 0 || iou_threshold > 1) throw InputError("nms: IOU threshold must be in [0, 1]");

    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ranks_before(detections[a], detections[b]);
    });

    std::vector<Detection> kept;
    for (std::size_t idx : order) {
        const Detection& candidate = detections[idx];
        const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return iou(k.box, candidate.box) > iou_threshold;
        });
        if (!overlaps) kept.push_back(candidate);
    }
    return kept;
}

}  // namespace obr
