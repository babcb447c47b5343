#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stagematte/error.hpp"

namespace stagematte::nn {

/// Dense CHW feature map.
template <typename T>
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int c, int h, int w, T fill = T(0))
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill)
    {
    }

    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const noexcept { return data.size(); }

    T* plane(int c) noexcept { return data.data() + c * plane_size(); }
    const T* plane(int c) const noexcept { return data.data() + c * plane_size(); }

    T& at(int c, int y, int x) noexcept { return data[(c * plane_size()) + static_cast<std::size_t>(y) * width + x]; }
    T at(int c, int y, int x) const noexcept
    {
        return data[(c * plane_size()) + static_cast<std::size_t>(y) * width + x];
    }

    bool same_shape(const Tensor& o) const noexcept
    {
        return channels == o.channels && height == o.height && width == o.width;
    }

    std::string shape_string() const
    {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
    }

    template <typename U>
    Tensor<U> cast() const
    {
        Tensor<U> out(channels, height, width);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace stagematte::nn
