#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "obr/geometry.hpp"
#include "obr/network.hpp"

namespace obr {

enum class AnchorState : std::int8_t { negative, ignore, positive };

struct AnchorTarget {
    AnchorState state = AnchorState::negative;
    int cls = 0;  // class value for positives
    BoxDelta delta;
};

struct TargetAssignment {
    int cols = 0;
    int rows = 0;
    std::vector<AnchorTarget> anchors;  // row-major, as AnchorGrid

    int positive_count() const;
};

struct AssignmentThresholds {
    double positive_iou = 0.5;
    double negative_iou = 0.4;
};

/// Max-IOU >= positive_iou: positive; < negative_iou: negative; otherwise
/// ignored. Each truth box also forces its best-IOU anchor positive.
TargetAssignment assign_targets(const AnchorGrid& anchors, std::span<const LabeledBox> truth,
                                const AssignmentThresholds& thresholds = {});

struct FocalParams {
    double gamma = 2.0;
    std::optional<double> alpha = 0.25;  // nullopt: no class balancing
};

struct LossValue {
    double total = 0;
    double loc = 0;
    double cls = 0;
    double lambda_cls = 1;
};

// Focal loss of one sigmoid logit; derivative w.r.t. the logit in *grad.
double focal_term(double logit, bool positive, const FocalParams& params, double* grad = nullptr);

double smooth_l1(double x, double* grad = nullptr);

// The loss functions read a (67, rows, cols) detector output. When grad is
// given, grad_scale * d(loss)/d(output) is added to it.

template <typename T>
double focal_loss(const Tensor<T>& output, const TargetAssignment& assignment, const FocalParams& params,
                  Tensor<T>* grad = nullptr, double grad_scale = 1.0);

template <typename T>
double loc_loss(const Tensor<T>& output, const TargetAssignment& assignment, Tensor<T>* grad = nullptr,
                double grad_scale = 1.0);

// total = loc + lambda_cls * cls. Throws InputError on shape mismatch.
template <typename T>
LossValue total_loss(const Tensor<T>& output, const TargetAssignment& assignment, double lambda_cls,
                     const FocalParams& params, Tensor<T>* grad = nullptr, double grad_scale = 1.0);

}  // namespace obr
