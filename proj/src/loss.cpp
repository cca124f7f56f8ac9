#include "obr/loss.hpp"

#include <algorithm>
#include <cmath>

#include "obr/error.hpp"

namespace obr {

int TargetAssignment::positive_count() const
{
    return static_cast<int>(std::count_if(anchors.begin(), anchors.end(),
                                          [](const AnchorTarget& a) { return a.state == AnchorState::positive; }));
}

TargetAssignment assign_targets(const AnchorGrid& anchors, std::span<const LabeledBox> truth,
                                const AssignmentThresholds& thresholds)
{
    TargetAssignment result{anchors.cols(), anchors.rows(), std::vector<AnchorTarget>(anchors.size())};
    std::vector<double> best_iou(anchors.size(), 0.0);
    std::vector<int> best_truth(anchors.size(), -1);

    constexpr double cell = AnchorGrid::kCellSize;
    const double half_w = anchors.anchor_width() / 2, half_h = anchors.anchor_height() / 2;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const Box& box = truth[t].box;
        // Anchors whose extent can touch the box.
        const int c0 = std::max(0, static_cast<int>(std::floor((box.left - half_w) / cell)));
        const int c1 = std::min(anchors.cols() - 1, static_cast<int>(std::floor((box.right + half_w) / cell)));
        const int r0 = std::max(0, static_cast<int>(std::floor((box.top - half_h) / cell)));
        const int r1 = std::min(anchors.rows() - 1, static_cast<int>(std::floor((box.bottom + half_h) / cell)));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const int idx = r * anchors.cols() + c;
                const double overlap = iou(anchors.anchor(c, r), box);
                if (overlap > best_iou[idx]) {
                    best_iou[idx] = overlap;
                    best_truth[idx] = static_cast<int>(t);
                }
            }
        }
    }

    for (int idx = 0; idx < anchors.size(); ++idx) {
        AnchorTarget& target = result.anchors[idx];
        if (best_iou[idx] >= thresholds.positive_iou) {
            const auto& t = truth[best_truth[idx]];
            target = {AnchorState::positive, t.cls.value(), encode_delta(anchors.anchor(idx), t.box)};
        } else if (best_iou[idx] >= thresholds.negative_iou) {
            target.state = AnchorState::ignore;
        }
    }

    // Every truth keeps at least its best anchor.
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const Box& box = truth[t].box;
        const int c0 = std::max(0, static_cast<int>(std::floor((box.left - half_w) / cell)));
        const int c1 = std::min(anchors.cols() - 1, static_cast<int>(std::floor((box.right + half_w) / cell)));
        const int r0 = std::max(0, static_cast<int>(std::floor((box.top - half_h) / cell)));
        const int r1 = std::min(anchors.rows() - 1, static_cast<int>(std::floor((box.bottom + half_h) / cell)));
        int best = -1;
        double best_overlap = 0.0;
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const int idx = r * anchors.cols() + c;
                const double overlap = iou(anchors.anchor(c, r), box);
                if (overlap > best_overlap) {
                    best_overlap = overlap;
                    best = idx;
                }
            }
        }
        if (best >= 0 && result.anchors[best].state != AnchorState::positive)
            result.anchors[best] = {AnchorState::positive, truth[t].cls.value(),
                                    encode_delta(anchors.anchor(best), box)};
    }
    return result;
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x)
{
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

template <typename T>
void check_shape(const Tensor<T>& output, const TargetAssignment& assignment)
{
    if (output.channels() != kOutputChannels || output.height() != assignment.rows ||
        output.width() != assignment.cols)
        throw InputError("detector output (" + std::to_string(output.channels()) + ", " +
                         std::to_string(output.height()) + ", " + std::to_string(output.width()) +
                         ") does not match the assignment grid (67, " + std::to_string(assignment.rows) + ", " +
                         std::to_string(assignment.cols) + ")");
}

}  // namespace

double focal_term(double logit, bool positive, const FocalParams& params, double* grad)
{
    // z = signed logit so that p_t = sigmoid(z).
    const double z = positive ? logit : -logit;
    const double pt = sigmoid(z);
    const double q = 1.0 - pt;  // 1 - p_t = sigmoid(-z)
    const double log_pt = -softplus(-z);
    const double weight = params.alpha ? (positive ? *params.alpha : 1.0 - *params.alpha) : 1.0;
    const double modulator = params.gamma == 0 ? 1.0 : std::pow(q, params.gamma);
    const double loss = -weight * modulator * log_pt;
    if (grad) {
        // d/dz [-(1-p)^g log p] = g (1-p)^g p log p - (1-p)^(g+1)... expressed via q.
        double dz = -modulator * q;
        if (params.gamma != 0) dz += params.gamma * modulator * pt * log_pt;
        dz *= weight;
        *grad = positive ? dz : -dz;
    }
    return loss;
}

double smooth_l1(double x, double* grad)
{
    const double ax = std::abs(x);
    if (ax < 1.0) {
        if (grad) *grad = x;
        return 0.5 * x * x;
    }
    if (grad) *grad = x > 0 ? 1.0 : -1.0;
    return ax - 0.5;
}

template <typename T>
double focal_loss(const Tensor<T>& output, const TargetAssignment& assignment, const FocalParams& params,
                  Tensor<T>* grad, double grad_scale)
{
    check_shape(output, assignment);
    const double norm = std::max(1, assignment.positive_count());
    const std::size_t plane = output.plane_size();
    const T* data = output.data().data();
    T* g = grad ? grad->data().data() : nullptr;
    double sum = 0;
    for (std::size_t a = 0; a < plane; ++a) {
        const AnchorTarget& target = assignment.anchors[a];
        if (target.state == AnchorState::ignore) continue;
        for (int k = 0; k < kNumClasses; ++k) {
            const std::size_t at = (kBoxChannels + k) * plane + a;
            const bool positive = target.state == AnchorState::positive && target.cls == k + 1;
            double d = 0;
            sum += focal_term(static_cast<double>(data[at]), positive, params, g ? &d : nullptr);
            if (g) g[at] += static_cast<T>(grad_scale * d / norm);
        }
    }
    return sum / norm;
}

template <typename T>
double loc_loss(const Tensor<T>& output, const TargetAssignment& assignment, Tensor<T>* grad, double grad_scale)
{
    check_shape(output, assignment);
    const double norm = std::max(1, assignment.positive_count());
    const std::size_t plane = output.plane_size();
    const T* data = output.data().data();
    T* g = grad ? grad->data().data() : nullptr;
    double sum = 0;
    for (std::size_t a = 0; a < plane; ++a) {
        const AnchorTarget& target = assignment.anchors[a];
        if (target.state != AnchorState::positive) continue;
        const double wanted[4] = {target.delta.tx, target.delta.ty, target.delta.tw, target.delta.th};
        for (int k = 0; k < kBoxChannels; ++k) {
            const std::size_t at = k * plane + a;
            double d = 0;
            sum += smooth_l1(static_cast<double>(data[at]) - wanted[k], g ? &d : nullptr);
            if (g) g[at] += static_cast<T>(grad_scale * d / norm);
        }
    }
    return sum / norm;
}

template <typename T>
LossValue total_loss(const Tensor<T>& output, const TargetAssignment& assignment, double lambda_cls,
                     const FocalParams& params, Tensor<T>* grad, double grad_scale)
{
    check_shape(output, assignment);
    if (grad && !grad->same_shape(output)) throw InputError("loss gradient buffer has the wrong shape");
    LossValue value;
    value.lambda_cls = lambda_cls;
    value.loc = loc_loss(output, assignment, grad, grad_scale);
    value.cls = focal_loss(output, assignment, params, grad, grad_scale * lambda_cls);
    value.total = value.loc + lambda_cls * value.cls;
    return value;
}

template double focal_loss(const Tensor<float>&, const TargetAssignment&, const FocalParams&, Tensor<float>*, double);
template double focal_loss(const Tensor<double>&, const TargetAssignment&, const FocalParams&, Tensor<double>*, double);
template double loc_loss(const Tensor<float>&, const TargetAssignment&, Tensor<float>*, double);
template double loc_loss(const Tensor<double>&, const TargetAssignment&, Tensor<double>*, double);
template LossValue total_loss(const Tensor<float>&, const TargetAssignment&, double, const FocalParams&,
                              Tensor<float>*, double);
template LossValue total_loss(const Tensor<double>&, const TargetAssignment&, double, const FocalParams&,
                              Tensor<double>*, double);

}  // namespace obr
