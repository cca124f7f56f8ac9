#include "obr/network.hpp"

#include <Eigen/Core>

#include <cmath>

#include "obr/error.hpp"
#include "obr/rng.hpp"

namespace obr {

void BackboneSpec::validate() const
{
    if (input_channels != 1 && input_channels != 3) throw InputError("backbone input_channels must be 1 or 3");
    if (widths.size() != 4) throw InputError("backbone needs exactly 4 stride-2 blocks (16x downsampling)");
    for (int w : widths)
        if (w < 1) throw InputError("backbone widths must be positive");
    if (depths.size() != widths.size()) throw InputError("backbone needs one depth per block");
    for (int d : depths)
        if (d < 1) throw InputError("backbone depths must be at least 1");
}

namespace {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int out_dim(int in, int stride) { return (in - 1) / stride + 1; }

// 3x3 kernel, padding 1. Row index of col is (c*3 + ky)*3 + kx.
template <typename T>
void im2col(const Tensor<T>& in, int stride, std::vector<T>& col)
{
    const int C = in.channels(), H = in.height(), W = in.width();
    const int Ho = out_dim(H, stride), Wo = out_dim(W, stride);
    const std::size_t n = static_cast<std::size_t>(Ho) * Wo;
    col.resize(static_cast<std::size_t>(C) * 9 * n);
    const T* src = in.data().data();
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = col.data() + ((c * 3 + ky) * 3 + kx) * n;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    T* row = dst + static_cast<std::size_t>(oy) * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(row, row + Wo, T(0));
                        continue;
                    }
                    const T* line = src + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        row[ox] = (ix >= 0 && ix < W) ? line[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, int stride, Tensor<T>& out)
{
    const int C = out.channels(), H = out.height(), W = out.width();
    const int Ho = out_dim(H, stride), Wo = out_dim(W, stride);
    const std::size_t n = static_cast<std::size_t>(Ho) * Wo;
    std::fill(out.data().begin(), out.data().end(), T(0));
    T* dst = out.data().data();
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* src = col + ((c * 3 + ky) * 3 + kx) * n;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    const T* row = src + static_cast<std::size_t>(oy) * Wo;
                    T* line = dst + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        if (ix >= 0 && ix < W) line[ix] += row[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor<T> conv_forward(const typename BasicNetwork<T>::Layer& layer, const std::vector<Parameter<T>>& params,
                       const Tensor<T>& input, std::vector<T>& col)
{
    im2col(input, layer.stride, col);
    const int Ho = out_dim(input.height(), layer.stride), Wo = out_dim(input.width(), layer.stride);
    const Eigen::Index n = static_cast<Eigen::Index>(Ho) * Wo;
    const Eigen::Index k = static_cast<Eigen::Index>(layer.in_channels) * 9;

    Tensor<T> out(layer.out_channels, Ho, Wo);
    Eigen::Map<const Matrix<T>> weight(params[layer.weight].value.data(), layer.out_channels, k);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(params[layer.bias].value.data(), layer.out_channels);
    Eigen::Map<const Matrix<T>> cols(col.data(), k, n);
    Eigen::Map<Matrix<T>> result(out.data().data(), layer.out_channels, n);
    result.noalias() = weight * cols;
    result.colwise() += bias;
    if (layer.relu) result = result.cwiseMax(T(0));
    return out;
}

}  // namespace

template <typename T>
BasicNetwork<T>::BasicNetwork(BackboneSpec spec, std::uint64_t seed) : spec_(std::move(spec))
{
    spec_.validate();
    Rng rng(mix_seed(seed, 0x6e6574));

    auto add_conv = [&](const std::string& name, int in, int out, int stride, bool relu) {
        Parameter<T> w{name + ".weight", {out, in, 3, 3}, {}, {}};
        Parameter<T> b{name + ".bias", {out}, {}, {}};
        w.value.resize(static_cast<std::size_t>(out) * in * 9);
        b.value.assign(out, T(0));
        const double stddev = relu ? std::sqrt(2.0 / (in * 9.0)) : 0.01;
        for (auto& v : w.value) v = static_cast<T>(rng.normal(0, stddev));
        params_.push_back(std::move(w));
        params_.push_back(std::move(b));
        layers_.push_back({in, out, stride, relu, params_.size() - 2, params_.size() - 1});
    };

    int channels = spec_.input_channels;
    for (std::size_t b = 0; b < spec_.widths.size(); ++b) {
        for (int i = 0; i < spec_.depths[b]; ++i) {
            add_conv("block" + std::to_string(b) + ".conv" + std::to_string(i), channels, spec_.widths[b],
                     i == 0 ? 2 : 1, true);
            channels = spec_.widths[b];
        }
    }
    add_conv("head", channels, kOutputChannels, 1, false);
    auto& head_bias = params_.back().value;
    const T prior_bias = static_cast<T>(-std::log((1.0 - kClassPrior) / kClassPrior));
    for (int c = kBoxChannels; c < kOutputChannels; ++c) head_bias[c] = prior_bias;

    for (auto& p : params_) p.grad.assign(p.value.size(), T(0));
}

template <typename T>
void BasicNetwork<T>::check_input(const Tensor<T>& input) const
{
    if (input.channels() != spec_.input_channels)
        throw InputError("network expects " + std::to_string(spec_.input_channels) + " input channels, got " +
                         std::to_string(input.channels()));
    if (input.height() < kNetworkStride || input.width() < kNetworkStride || input.height() % kNetworkStride ||
        input.width() % kNetworkStride)
        throw InputError("network input " + std::to_string(input.width()) + "x" + std::to_string(input.height()) +
                         " is not a positive multiple of 16");
}

template <typename T>
Tensor<T> BasicNetwork<T>::forward(const Tensor<T>& input) const
{
    check_input(input);
    std::vector<T> col;
    Tensor<T> x = conv_forward<T>(layers_[0], params_, input, col);
    for (std::size_t l = 1; l < layers_.size(); ++l) x = conv_forward<T>(layers_[l], params_, x, col);
    return x;
}

template <typename T>
Tensor<T> BasicNetwork<T>::forward(const Tensor<T>& input, Trace& trace) const
{
    check_input(input);
    trace.columns.resize(layers_.size());
    trace.outputs.resize(layers_.size());
    trace.input_shapes.resize(layers_.size());
    const Tensor<T>* x = &input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        trace.input_shapes[l] = {x->channels(), x->height(), x->width()};
        trace.outputs[l] = conv_forward<T>(layers_[l], params_, *x, trace.columns[l]);
        x = &trace.outputs[l];
    }
    return trace.outputs.back();
}

template <typename T>
void BasicNetwork<T>::backward(const Trace& trace, const Tensor<T>& grad_output)
{
    if (!grad_output.same_shape(trace.outputs.back())) throw InputError("backward: gradient shape mismatch");
    Tensor<T> grad = grad_output;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Layer& layer = layers_[l];
        const Tensor<T>& out = trace.outputs[l];
        const Eigen::Index n = static_cast<Eigen::Index>(out.plane_size());
        const Eigen::Index k = static_cast<Eigen::Index>(layer.in_channels) * 9;

        Eigen::Map<Matrix<T>> g(grad.data().data(), layer.out_channels, n);
        if (layer.relu) {
            Eigen::Map<const Matrix<T>> a(out.data().data(), layer.out_channels, n);
            g = (a.array() > T(0)).select(g, T(0));
        }
        Eigen::Map<const Matrix<T>> cols(trace.columns[l].data(), k, n);
        Eigen::Map<Matrix<T>> dw(params_[layer.weight].grad.data(), layer.out_channels, k);
        dw.noalias() += g * cols.transpose();
        // Plain loop: Eigen's vectorized row sums change order with buffer alignment.
        T* db = params_[layer.bias].grad.data();
        for (int c = 0; c < layer.out_channels; ++c) {
            const T* row = grad.data().data() + c * n;
            T sum = 0;
            for (Eigen::Index j = 0; j < n; ++j) sum += row[j];
            db[c] += sum;
        }

        if (l == 0) break;
        Eigen::Map<const Matrix<T>> weight(params_[layer.weight].value.data(), layer.out_channels, k);
        std::vector<T> dcol(static_cast<std::size_t>(k) * n);
        Eigen::Map<Matrix<T>> dc(dcol.data(), k, n);
        dc.noalias() = weight.transpose() * g;
        const auto& shape = trace.input_shapes[l];
        Tensor<T> dx(shape[0], shape[1], shape[2]);
        col2im(dcol.data(), layer.stride, dx);
        grad = std::move(dx);
    }
}

template <typename T>
void BasicNetwork<T>::zero_grad()
{
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <typename T>
std::size_t BasicNetwork<T>::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

}  // namespace obr
