#include "stagematte/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "stagematte/image.hpp"

namespace stagematte::nn {

namespace {

// Below this many multiply-adds a kernel runs on the calling thread.
constexpr long kMinParallelWork = 1L << 16;

inline int clampi(int v, int lo, int hi) noexcept { return v < lo ? lo : (v > hi ? hi : v); }

// Output columns [lo, hi) read in-range input columns for tap `kx`; the
// rest are clamped to the border.
struct ColumnSpan {
    int lo;
    int hi;
};

inline ColumnSpan interior_columns(int in_w, int out_w, int kx, const ConvShape& s) noexcept
{
    const int p = s.pad();
    const int first = p - kx;
    const int lo = std::min(out_w, first > 0 ? (first + s.stride - 1) / s.stride : 0);
    const int last = in_w - 1 + p - kx;
    const int hi = last < 0 ? lo : std::max(lo, std::min(out_w, last / s.stride + 1));
    return {lo, hi};
}

template <typename T>
void check_conv_args(const Tensor<T>& in, std::size_t wcount, std::size_t bcount, const ConvShape& s)
{
    if (in.channels != s.in_channels)
        throw DimensionError("conv2d: input has " + std::to_string(in.channels) + " channels, expected " +
                             std::to_string(s.in_channels));
    if (wcount != s.weight_count() || bcount != static_cast<std::size_t>(s.out_channels))
        throw DimensionError("conv2d: parameter size mismatch");
    if (s.kernel % 2 == 0 || s.stride < 1) throw DimensionError("conv2d: kernel must be odd and stride >= 1");
}

}  // namespace

namespace kernels {

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, const ConvShape& s,
                    Tensor<T>& out)
{
    check_conv_args(in, weight.size(), bias.size(), s);
    const int H = in.height, W = in.width, k = s.kernel, st = s.stride, p = s.pad();
    const int Ho = s.out_extent(H), Wo = s.out_extent(W);
    out = Tensor<T>(s.out_channels, Ho, Wo);
    const long work = static_cast<long>(s.weight_count()) * Ho * Wo;

#pragma omp parallel for schedule(static) if (work > kMinParallelWork)
    for (int co = 0; co < s.out_channels; ++co) {
        T* o = out.plane(co);
        std::fill(o, o + out.plane_size(), bias[static_cast<std::size_t>(co)]);
        for (int ci = 0; ci < s.in_channels; ++ci) {
            const T* src = in.plane(ci);
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const T w = weight[((static_cast<std::size_t>(co) * s.in_channels + ci) * k + ky) * k + kx];
                    const ColumnSpan cs = interior_columns(W, Wo, kx, s);
                    for (int oy = 0; oy < Ho; ++oy) {
                        const T* row = src + static_cast<std::size_t>(clampi(oy * st + ky - p, 0, H - 1)) * W;
                        T* __restrict orow = o + static_cast<std::size_t>(oy) * Wo;
                        for (int ox = 0; ox < cs.lo; ++ox) orow[ox] += w * row[clampi(ox * st + kx - p, 0, W - 1)];
                        if (st == 1) {
                            const T* __restrict r = row + (kx - p);
                            for (int ox = cs.lo; ox < cs.hi; ++ox) orow[ox] += w * r[ox];
                        } else {
                            for (int ox = cs.lo; ox < cs.hi; ++ox) orow[ox] += w * row[ox * st + kx - p];
                        }
                        for (int ox = cs.hi; ox < Wo; ++ox) orow[ox] += w * row[clampi(ox * st + kx - p, 0, W - 1)];
                    }
                }
        }
    }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& grad_out, std::span<const T> weight, const ConvShape& s,
                           Tensor<T>& grad_in)
{
    if (grad_out.channels != s.out_channels || weight.size() != s.weight_count())
        throw DimensionError("conv2d_backward_input: shape mismatch");
    const int H = grad_in.height, W = grad_in.width, k = s.kernel, st = s.stride, p = s.pad();
    const int Ho = grad_out.height, Wo = grad_out.width;
    if (grad_in.channels != s.in_channels || Ho != s.out_extent(H) || Wo != s.out_extent(W))
        throw DimensionError("conv2d_backward_input: gradient buffer shape mismatch");
    std::fill(grad_in.data.begin(), grad_in.data.end(), T(0));
    const long work = static_cast<long>(s.weight_count()) * Ho * Wo;

#pragma omp parallel for schedule(static) if (work > kMinParallelWork)
    for (int ci = 0; ci < s.in_channels; ++ci) {
        T* g = grad_in.plane(ci);
        for (int co = 0; co < s.out_channels; ++co) {
            const T* go = grad_out.plane(co);
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const T w = weight[((static_cast<std::size_t>(co) * s.in_channels + ci) * k + ky) * k + kx];
                    const ColumnSpan cs = interior_columns(W, Wo, kx, s);
                    for (int oy = 0; oy < Ho; ++oy) {
                        T* grow = g + static_cast<std::size_t>(clampi(oy * st + ky - p, 0, H - 1)) * W;
                        const T* __restrict gorow = go + static_cast<std::size_t>(oy) * Wo;
                        for (int ox = 0; ox < cs.lo; ++ox) grow[clampi(ox * st + kx - p, 0, W - 1)] += w * gorow[ox];
                        if (st == 1) {
                            T* __restrict r = grow + (kx - p);
                            for (int ox = cs.lo; ox < cs.hi; ++ox) r[ox] += w * gorow[ox];
                        } else {
                            for (int ox = cs.lo; ox < cs.hi; ++ox) grow[ox * st + kx - p] += w * gorow[ox];
                        }
                        for (int ox = cs.hi; ox < Wo; ++ox) grow[clampi(ox * st + kx - p, 0, W - 1)] += w * gorow[ox];
                    }
                }
        }
    }
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& grad_out, const Tensor<T>& in, const ConvShape& s,
                            std::span<T> grad_weight, std::span<T> grad_bias)
{
    check_conv_args(in, grad_weight.size(), grad_bias.size(), s);
    const int H = in.height, W = in.width, k = s.kernel, st = s.stride, p = s.pad();
    const int Ho = grad_out.height, Wo = grad_out.width;
    if (grad_out.channels != s.out_channels || Ho != s.out_extent(H) || Wo != s.out_extent(W))
        throw DimensionError("conv2d_backward_params: gradient shape mismatch");
    const long work = static_cast<long>(s.weight_count()) * Ho * Wo;

#pragma omp parallel for schedule(static) if (work > kMinParallelWork)
    for (int co = 0; co < s.out_channels; ++co) {
        const T* go = grad_out.plane(co);
        T bsum = T(0);
        for (std::size_t i = 0; i < grad_out.plane_size(); ++i) bsum += go[i];
        grad_bias[static_cast<std::size_t>(co)] += bsum;

        std::vector<T> acc(static_cast<std::size_t>(Wo));
        for (int ci = 0; ci < s.in_channels; ++ci) {
            const T* src = in.plane(ci);
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    std::fill(acc.begin(), acc.end(), T(0));
                    T* __restrict a = acc.data();
                    const ColumnSpan cs = interior_columns(W, Wo, kx, s);
                    for (int oy = 0; oy < Ho; ++oy) {
                        const T* row = src + static_cast<std::size_t>(clampi(oy * st + ky - p, 0, H - 1)) * W;
                        const T* __restrict gorow = go + static_cast<std::size_t>(oy) * Wo;
                        for (int ox = 0; ox < cs.lo; ++ox) a[ox] += gorow[ox] * row[clampi(ox * st + kx - p, 0, W - 1)];
                        if (st == 1) {
                            const T* __restrict r = row + (kx - p);
                            for (int ox = cs.lo; ox < cs.hi; ++ox) a[ox] += gorow[ox] * r[ox];
                        } else {
                            for (int ox = cs.lo; ox < cs.hi; ++ox) a[ox] += gorow[ox] * row[ox * st + kx - p];
                        }
                        for (int ox = cs.hi; ox < Wo; ++ox) a[ox] += gorow[ox] * row[clampi(ox * st + kx - p, 0, W - 1)];
                    }
                    T sum = T(0);
                    for (int ox = 0; ox < Wo; ++ox) sum += a[ox];
                    grad_weight[((static_cast<std::size_t>(co) * s.in_channels + ci) * k + ky) * k + kx] += sum;
                }
        }
    }
}

}  // namespace kernels

namespace reference {

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, const ConvShape& s,
                    Tensor<T>& out)
{
    check_conv_args(in, weight.size(), bias.size(), s);
    const int H = in.height, W = in.width, k = s.kernel, p = s.pad();
    const int Ho = s.out_extent(H), Wo = s.out_extent(W);
    out = Tensor<T>(s.out_channels, Ho, Wo);
    for (int co = 0; co < s.out_channels; ++co)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                T acc = bias[static_cast<std::size_t>(co)];
                for (int ci = 0; ci < s.in_channels; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = clampi(oy * s.stride + ky - p, 0, H - 1);
                            const int ix = clampi(ox * s.stride + kx - p, 0, W - 1);
                            acc += weight[((static_cast<std::size_t>(co) * s.in_channels + ci) * k + ky) * k + kx] *
                                   in.at(ci, iy, ix);
                        }
                out.at(co, oy, ox) = acc;
            }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& grad_out, std::span<const T> weight, const ConvShape& s,
                           Tensor<T>& grad_in)
{
    const int H = grad_in.height, W = grad_in.width, k = s.kernel, p = s.pad();
    std::fill(grad_in.data.begin(), grad_in.data.end(), T(0));
    for (int ci = 0; ci < s.in_channels; ++ci)
        for (int co = 0; co < s.out_channels; ++co)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const T w = weight[((static_cast<std::size_t>(co) * s.in_channels + ci) * k + ky) * k + kx];
                    for (int oy = 0; oy < grad_out.height; ++oy)
                        for (int ox = 0; ox < grad_out.width; ++ox) {
                            const int iy = clampi(oy * s.stride + ky - p, 0, H - 1);
                            const int ix = clampi(ox * s.stride + kx - p, 0, W - 1);
                            grad_in.at(ci, iy, ix) += w * grad_out.at(co, oy, ox);
                        }
                }
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& grad_out, const Tensor<T>& in, const ConvShape& s,
                            std::span<T> grad_weight, std::span<T> grad_bias)
{
    const int H = in.height, W = in.width, k = s.kernel, p = s.pad();
    for (int co = 0; co < s.out_channels; ++co) {
        for (int oy = 0; oy < grad_out.height; ++oy)
            for (int ox = 0; ox < grad_out.width; ++ox) grad_bias[static_cast<std::size_t>(co)] += grad_out.at(co, oy, ox);
        for (int ci = 0; ci < s.in_channels; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    T acc = T(0);
                    for (int oy = 0; oy < grad_out.height; ++oy)
                        for (int ox = 0; ox < grad_out.width; ++ox) {
                            const int iy = clampi(oy * s.stride + ky - p, 0, H - 1);
                            const int ix = clampi(ox * s.stride + kx - p, 0, W - 1);
                            acc += grad_out.at(co, oy, ox) * in.at(ci, iy, ix);
                        }
                    grad_weight[((static_cast<std::size_t>(co) * s.in_channels + ci) * k + ky) * k + kx] += acc;
                }
    }
}

}  // namespace reference

template <typename T>
void relu_inplace(Tensor<T>& t)
{
    for (T& v : t.data) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(const Tensor<T>& act, Tensor<T>& grad)
{
    for (std::size_t i = 0; i < grad.data.size(); ++i)
        if (!(act.data[i] > T(0))) grad.data[i] = T(0);
}

template <typename T>
void tanh_inplace(Tensor<T>& t)
{
    for (T& v : t.data) v = std::tanh(v);
}

template <typename T>
void tanh_backward_inplace(const Tensor<T>& act, Tensor<T>& grad)
{
    for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] *= T(1) - act.data[i] * act.data[i];
}

template <typename T>
void sigmoid_inplace(Tensor<T>& t)
{
    for (T& v : t.data) v = T(1) / (T(1) + std::exp(-v));
}

template <typename T>
void sigmoid_backward_inplace(const Tensor<T>& act, Tensor<T>& grad)
{
    for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] *= act.data[i] * (T(1) - act.data[i]);
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& in, int f)
{
    Tensor<T> out(in.channels, in.height * f, in.width * f);
    for (int c = 0; c < out.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) out.at(c, y, x) = in.at(c, y / f, x / f);
    return out;
}

template <typename T>
Tensor<T> upsample_nearest_adjoint(const Tensor<T>& g, int f)
{
    Tensor<T> out(g.channels, g.height / f, g.width / f);
    for (int c = 0; c < g.channels; ++c)
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) out.at(c, y / f, x / f) += g.at(c, y, x);
    return out;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& in, int out_h, int out_w)
{
    const auto tx = bilinear_taps(in.width, out_w);
    const auto ty = bilinear_taps(in.height, out_h);
    Tensor<T> out(in.channels, out_h, out_w);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out_h; ++y) {
            const auto& vy = ty[static_cast<std::size_t>(y)];
            const T fy = static_cast<T>(vy.frac);
            for (int x = 0; x < out_w; ++x) {
                const auto& vx = tx[static_cast<std::size_t>(x)];
                const T fx = static_cast<T>(vx.frac);
                const T top = (T(1) - fx) * in.at(c, vy.i0, vx.i0) + fx * in.at(c, vy.i0, vx.i1);
                const T bot = (T(1) - fx) * in.at(c, vy.i1, vx.i0) + fx * in.at(c, vy.i1, vx.i1);
                out.at(c, y, x) = (T(1) - fy) * top + fy * bot;
            }
        }
    return out;
}

template <typename T>
Tensor<T> resize_bilinear_adjoint(const Tensor<T>& g, int in_h, int in_w)
{
    const auto tx = bilinear_taps(in_w, g.width);
    const auto ty = bilinear_taps(in_h, g.height);
    Tensor<T> out(g.channels, in_h, in_w);
    for (int c = 0; c < g.channels; ++c)
        for (int y = 0; y < g.height; ++y) {
            const auto& vy = ty[static_cast<std::size_t>(y)];
            const T fy = static_cast<T>(vy.frac);
            for (int x = 0; x < g.width; ++x) {
                const auto& vx = tx[static_cast<std::size_t>(x)];
                const T fx = static_cast<T>(vx.frac);
                const T v = g.at(c, y, x);
                out.at(c, vy.i0, vx.i0) += (T(1) - fy) * (T(1) - fx) * v;
                out.at(c, vy.i0, vx.i1) += (T(1) - fy) * fx * v;
                out.at(c, vy.i1, vx.i0) += fy * (T(1) - fx) * v;
                out.at(c, vy.i1, vx.i1) += fy * fx * v;
            }
        }
    return out;
}

#define STAGEMATTE_INSTANTIATE(T)                                                                               \
    template void kernels::conv2d_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>,          \
                                             const ConvShape&, Tensor<T>&);                                     \
    template void kernels::conv2d_backward_input<T>(const Tensor<T>&, std::span<const T>, const ConvShape&,     \
                                                    Tensor<T>&);                                                \
    template void kernels::conv2d_backward_params<T>(const Tensor<T>&, const Tensor<T>&, const ConvShape&,      \
                                                     std::span<T>, std::span<T>);                               \
    template void reference::conv2d_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>,        \
                                               const ConvShape&, Tensor<T>&);                                   \
    template void reference::conv2d_backward_input<T>(const Tensor<T>&, std::span<const T>, const ConvShape&,   \
                                                      Tensor<T>&);                                              \
    template void reference::conv2d_backward_params<T>(const Tensor<T>&, const Tensor<T>&, const ConvShape&,    \
                                                       std::span<T>, std::span<T>);                             \
    template void relu_inplace<T>(Tensor<T>&);                                                                  \
    template void relu_backward_inplace<T>(const Tensor<T>&, Tensor<T>&);                                       \
    template void tanh_inplace<T>(Tensor<T>&);                                                                  \
    template void tanh_backward_inplace<T>(const Tensor<T>&, Tensor<T>&);                                       \
    template void sigmoid_inplace<T>(Tensor<T>&);                                                               \
    template void sigmoid_backward_inplace<T>(const Tensor<T>&, Tensor<T>&);                                    \
    template Tensor<T> upsample_nearest<T>(const Tensor<T>&, int);                                              \
    template Tensor<T> upsample_nearest_adjoint<T>(const Tensor<T>&, int);                                      \
    template Tensor<T> resize_bilinear<T>(const Tensor<T>&, int, int);                                          \
    template Tensor<T> resize_bilinear_adjoint<T>(const Tensor<T>&, int, int);

STAGEMATTE_INSTANTIATE(float)
STAGEMATTE_INSTANTIATE(double)

#undef STAGEMATTE_INSTANTIATE

}  // namespace stagematte::nn
