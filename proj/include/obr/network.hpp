#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "obr/tensor.hpp"

namespace obr {

// Output layout per feature cell: 4 box deltas then one logit per class.
inline constexpr int kBoxChannels = 4;
inline constexpr int kNumClasses = 63;
inline constexpr int kOutputChannels = kBoxChannels + kNumClasses;
inline constexpr int kNetworkStride = 16;

/// Four stride-2 blocks of 3x3 convolutions with ReLU, then a 3x3 head with
/// 67 outputs. Block b holds depths[b] convolutions; only the first one
/// strides.
struct BackboneSpec {
    int input_channels = 1;
    std::vector<int> widths{16, 32, 64, 128};
    std::vector<int> depths{1, 1, 1, 1};

    void validate() const;
    friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

template <typename T>
struct Parameter {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
};

/// Fully convolutional detector network: (C, H, W) with H, W multiples of
/// 16 maps to (67, H/16, W/16).
template <typename T>
class BasicNetwork {
public:
    struct Layer {
        int in_channels;
        int out_channels;
        int stride;
        bool relu;
        std::size_t weight;  // parameter indices
        std::size_t bias;
    };

    // Activations kept by a training forward pass for backward().
    struct Trace {
        std::vector<std::vector<T>> columns;  // im2col of each layer input
        std::vector<Tensor<T>> outputs;       // post-activation output of each layer
        std::vector<std::array<int, 3>> input_shapes;
    };

    BasicNetwork(BackboneSpec spec, std::uint64_t seed);

    const BackboneSpec& spec() const { return spec_; }
    const std::vector<Layer>& layers() const { return layers_; }

    Tensor<T> forward(const Tensor<T>& input) const;
    Tensor<T> forward(const Tensor<T>& input, Trace& trace) const;

    // Accumulates parameter gradients for d(loss)/d(output) = grad_output.
    void backward(const Trace& trace, const Tensor<T>& grad_output);

    void zero_grad();

    std::vector<Parameter<T>>& parameters() { return params_; }
    const std::vector<Parameter<T>>& parameters() const { return params_; }
    std::size_t parameter_count() const;

    template <typename U>
    BasicNetwork<U> cast() const
    {
        BasicNetwork<U> out(spec_, 0);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& dst = out.parameters()[i];
            dst.value.assign(params_[i].value.begin(), params_[i].value.end());
        }
        return out;
    }

private:
    void check_input(const Tensor<T>& input) const;

    BackboneSpec spec_;
    std::vector<Layer> layers_;
    std::vector<Parameter<T>> params_;
};

using Network = BasicNetwork<float>;

// Prior probability for class outputs at initialization.
inline constexpr double kClassPrior = 0.01;

}  // namespace obr
