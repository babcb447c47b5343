#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stagematte/error.hpp"

namespace stagematte {

inline float clamp_unit(float v) noexcept
{
    // NaN maps to 0.
    return v > 0.f ? (v < 1.f ? v : 1.f) : 0.f;
}

/// Row-major raster of `Channels` interleaved values in [0,1].
///
/// Every constructing or mutating operation clamps into [0,1], so the range
/// invariant holds for any value observable through the public interface.
template <int Channels>
class Raster {
public:
    static constexpr int kChannels = Channels;

    Raster() = default;

    Raster(int width, int height, float fill = 0.f)
        : width_(check_dim(width)), height_(check_dim(height)),
          data_(static_cast<std::size_t>(width) * height * Channels, clamp_unit(fill))
    {
    }

    Raster(int width, int height, std::vector<float> values)
        : width_(check_dim(width)), height_(check_dim(height)), data_(std::move(values))
    {
        if (data_.size() != static_cast<std::size_t>(width) * height * Channels)
            throw DimensionError("raster data length " + std::to_string(data_.size()) +
                                 " does not match " + std::to_string(width) + "x" +
                                 std::to_string(height) + "x" + std::to_string(Channels));
        for (float& v : data_) v = clamp_unit(v);
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const noexcept { return data_.empty(); }

    float at(int x, int y, int c = 0) const noexcept
    {
        return data_[index(x, y, c)];
    }

    void set(int x, int y, int c, float v) noexcept { data_[index(x, y, c)] = clamp_unit(v); }
    void set(int x, int y, float v) noexcept
        requires(Channels == 1)
    {
        data_[index(x, y, 0)] = clamp_unit(v);
    }

    /// Raw value access by flat index (pixel * Channels + channel).
    float operator[](std::size_t i) const noexcept { return data_[i]; }
    void set_flat(std::size_t i, float v) noexcept { data_[i] = clamp_unit(v); }

    std::span<const float> values() const noexcept { return data_; }

    bool same_size(int w, int h) const noexcept { return w == width_ && h == height_; }
    template <int C2>
    bool same_size(const Raster<C2>& other) const noexcept
    {
        return other.width() == width_ && other.height() == height_;
    }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    static int check_dim(int d)
    {
        if (d < 1) throw DimensionError("raster dimensions must be >= 1, got " + std::to_string(d));
        return d;
    }

    std::size_t index(int x, int y, int c) const noexcept
    {
        return (static_cast<std::size_t>(y) * width_ + x) * Channels + c;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

using Image = Raster<3>;
using AlphaMask = Raster<1>;

/// Per-pixel ternary grid. `Enum` must be an 8-bit enum; the underlying
/// value is the PNG sample used on disk.
template <typename Enum>
class LabelGrid {
public:
    LabelGrid() = default;
    LabelGrid(int width, int height, Enum fill)
        : width_(width), height_(height), labels_(static_cast<std::size_t>(width) * height, fill)
    {
        if (width < 1 || height < 1) throw DimensionError("label grid dimensions must be >= 1");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t pixel_count() const noexcept { return labels_.size(); }

    Enum at(int x, int y) const noexcept { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
    void set(int x, int y, Enum v) noexcept { labels_[static_cast<std::size_t>(y) * width_ + x] = v; }
    Enum operator[](std::size_t i) const noexcept { return labels_[i]; }
    void set_flat(std::size_t i, Enum v) noexcept { labels_[i] = v; }

    std::span<const Enum> labels() const noexcept { return labels_; }

    template <int C>
    bool same_size(const Raster<C>& r) const noexcept
    {
        return r.width() == width_ && r.height() == height_;
    }

    friend bool operator==(const LabelGrid&, const LabelGrid&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Enum> labels_;
};

enum class Scribble : std::uint8_t { Background = 0, Unlabeled = 128, Foreground = 255 };
enum class TrimapLabel : std::uint8_t { Background = 0, Unknown = 128, Foreground = 255 };

using ScribbleMap = LabelGrid<Scribble>;
using Trimap = LabelGrid<TrimapLabel>;

/// Number of annotated pixels (|S|).
std::size_t annotated_count(const ScribbleMap& s);

/// Alpha blend: alpha*F + (1-alpha)*B per channel, clamped.
Image composite(const Image& fg, const Image& bg, const AlphaMask& alpha);

enum class ResampleMode { Bilinear, Nearest };

/// One output sample of a separable bilinear resampling: value =
/// (1-frac)*in[i0] + frac*in[i1]. Sampling is at pixel centers with the
/// source coordinate clamped to [0, n_in-1].
struct BilinearTap {
    int i0;
    int i1;
    float frac;
};

std::vector<BilinearTap> bilinear_taps(int n_in, int n_out);
int nearest_index(int x_out, int n_in, int n_out) noexcept;

Image resample(const Image& img, int new_width, int new_height, ResampleMode mode);
AlphaMask resample(const AlphaMask& mask, int new_width, int new_height, ResampleMode mode);

/// Box-average downsampling by an integer factor (dimensions must divide).
Image downsample_area(const Image& img, int factor);
AlphaMask downsample_area(const AlphaMask& mask, int factor);

/// Mean over channels of |I - B|.
AlphaMask mean_abs_diff(const Image& a, const Image& b);

void require_same_size(const char* what, int w0, int h0, int w1, int h1);

}  // namespace stagematte
