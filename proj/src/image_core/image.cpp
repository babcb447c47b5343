#include "stagematte/image.hpp"

#include <algorithm>
#include <cmath>

namespace stagematte {

void require_same_size(const char* what, int w0, int h0, int w1, int h1)
{
    if (w0 != w1 || h0 != h1)
        throw DimensionError(std::string(what) + ": dimension mismatch " + std::to_string(w0) + "x" +
                             std::to_string(h0) + " vs " + std::to_string(w1) + "x" + std::to_string(h1));
}

std::size_t annotated_count(const ScribbleMap& s)
{
    return static_cast<std::size_t>(
        std::count_if(s.labels().begin(), s.labels().end(), [](Scribble v) { return v != Scribble::Unlabeled; }));
}

Image composite(const Image& fg, const Image& bg, const AlphaMask& alpha)
{
    require_same_size("composite(F,B)", fg.width(), fg.height(), bg.width(), bg.height());
    require_same_size("composite(F,alpha)", fg.width(), fg.height(), alpha.width(), alpha.height());
    Image out(fg.width(), fg.height());
    const std::size_t n = alpha.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const float a = alpha[i];
        for (int c = 0; c < 3; ++c) {
            const std::size_t k = i * 3 + c;
            out.set_flat(k, a * fg[k] + (1.f - a) * bg[k]);
        }
    }
    return out;
}

std::vector<BilinearTap> bilinear_taps(int n_in, int n_out)
{
    if (n_in < 1 || n_out < 1) throw DimensionError("bilinear_taps: dimensions must be >= 1");
    std::vector<BilinearTap> taps(static_cast<std::size_t>(n_out));
    const double scale = static_cast<double>(n_in) / n_out;
    for (int x = 0; x < n_out; ++x) {
        double src = (x + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
        const int i0 = static_cast<int>(std::floor(src));
        const int i1 = std::min(i0 + 1, n_in - 1);
        taps[static_cast<std::size_t>(x)] = {i0, i1, static_cast<float>(src - i0)};
    }
    return taps;
}

int nearest_index(int x_out, int n_in, int n_out) noexcept
{
    const long long idx = (static_cast<long long>(2 * x_out + 1) * n_in) / (2LL * n_out);
    return static_cast<int>(std::clamp<long long>(idx, 0, n_in - 1));
}

namespace {

template <int C>
Raster<C> resample_impl(const Raster<C>& src, int w, int h, ResampleMode mode)
{
    if (w < 1 || h < 1) throw DimensionError("resample: new dimensions must be >= 1");
    Raster<C> out(w, h);
    if (mode == ResampleMode::Nearest) {
        for (int y = 0; y < h; ++y) {
            const int sy = nearest_index(y, src.height(), h);
            for (int x = 0; x < w; ++x) {
                const int sx = nearest_index(x, src.width(), w);
                for (int c = 0; c < C; ++c) out.set(x, y, c, src.at(sx, sy, c));
            }
        }
        return out;
    }
    const auto tx = bilinear_taps(src.width(), w);
    const auto ty = bilinear_taps(src.height(), h);
    for (int y = 0; y < h; ++y) {
        const auto& vy = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < w; ++x) {
            const auto& vx = tx[static_cast<std::size_t>(x)];
            for (int c = 0; c < C; ++c) {
                const float top = (1.f - vx.frac) * src.at(vx.i0, vy.i0, c) + vx.frac * src.at(vx.i1, vy.i0, c);
                const float bot = (1.f - vx.frac) * src.at(vx.i0, vy.i1, c) + vx.frac * src.at(vx.i1, vy.i1, c);
                out.set(x, y, c, (1.f - vy.frac) * top + vy.frac * bot);
            }
        }
    }
    return out;
}

template <int C>
Raster<C> downsample_area_impl(const Raster<C>& src, int f)
{
    if (f < 1 || src.width() % f != 0 || src.height() % f != 0)
        throw DimensionError("downsample_area: factor " + std::to_string(f) + " does not divide " +
                             std::to_string(src.width()) + "x" + std::to_string(src.height()));
    const int w = src.width() / f;
    const int h = src.height() / f;
    Raster<C> out(w, h);
    const float inv = 1.f / static_cast<float>(f * f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < C; ++c) {
                float acc = 0.f;
                for (int dy = 0; dy < f; ++dy)
                    for (int dx = 0; dx < f; ++dx) acc += src.at(x * f + dx, y * f + dy, c);
                out.set(x, y, c, acc * inv);
            }
    return out;
}

}  // namespace

Image resample(const Image& img, int w, int h, ResampleMode mode) { return resample_impl(img, w, h, mode); }
AlphaMask resample(const AlphaMask& m, int w, int h, ResampleMode mode) { return resample_impl(m, w, h, mode); }
Image downsample_area(const Image& img, int f) { return downsample_area_impl(img, f); }
AlphaMask downsample_area(const AlphaMask& m, int f) { return downsample_area_impl(m, f); }

AlphaMask mean_abs_diff(const Image& a, const Image& b)
{
    require_same_size("mean_abs_diff", a.width(), a.height(), b.width(), b.height());
    AlphaMask out(a.width(), a.height());
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        const float d = std::fabs(a[3 * i] - b[3 * i]) + std::fabs(a[3 * i + 1] - b[3 * i + 1]) +
                        std::fabs(a[3 * i + 2] - b[3 * i + 2]);
        out.set_flat(i, d / 3.f);
    }
    return out;
}

}  // namespace stagematte
