#pragma once

#include <cassert>
#include <span>
#include <vector>

namespace obr {

/// Dense channel-major (C x H x W) array.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(int channels, int height, int width, T fill = T(0))
        : channels_(channels), height_(height), width_(width),
          data_(static_cast<std::size_t>(channels) * height * width, fill)
    {
    }

    int channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
    bool empty() const { return data_.empty(); }

    T& at(int c, int y, int x)
    {
        assert(c >= 0 && c < channels_ && y >= 0 && y < height_ && x >= 0 && x < width_);
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }
    const T& at(int c, int y, int x) const
    {
        assert(c >= 0 && c < channels_ && y >= 0 && y < height_ && x >= 0 && x < width_);
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::span<T> channel(int c) { return std::span<T>(data_).subspan(c * plane_size(), plane_size()); }
    std::span<const T> channel(int c) const
    {
        return std::span<const T>(data_).subspan(c * plane_size(), plane_size());
    }

    bool same_shape(const Tensor& other) const
    {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }

private:
    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

}  // namespace obr
