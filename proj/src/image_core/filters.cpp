#include "stagematte/filters.hpp"

#include <algorithm>
#include <cmath>

namespace stagematte {

std::vector<double> gaussian_kernel(double sigma)
{
    if (sigma <= 0.0) return {1.0};
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> g(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int k = -r; k <= r; ++k) {
        const double v = std::exp(-0.5 * k * k / (sigma * sigma));
        g[static_cast<std::size_t>(k + r)] = v;
        sum += v;
    }
    for (double& v : g) v /= sum;
    return g;
}

std::vector<double> gaussian_derivative_kernel(double sigma)
{
    auto g = gaussian_kernel(sigma);
    const int r = static_cast<int>(g.size() / 2);
    double moment = 0.0;
    for (int k = -r; k <= r; ++k) moment += static_cast<double>(k) * k * g[static_cast<std::size_t>(k + r)];
    std::vector<double> d(g.size());
    for (int k = -r; k <= r; ++k) d[static_cast<std::size_t>(k + r)] = k * g[static_cast<std::size_t>(k + r)] / moment;
    return d;
}

namespace {

// Visits every (output index, input index, tap) triple of a 1-D correlation
// along one axis. Zero-boundary taps that fall outside are skipped.
template <typename Fn>
void for_each_tap(int w, int h, std::span<const double> taps, bool horizontal, Boundary boundary, Fn&& fn)
{
    const int r = static_cast<int>(taps.size() / 2);
    const int n = horizontal ? w : h;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int pos = horizontal ? x : y;
            for (int k = -r; k <= r; ++k) {
                int src = pos + k;
                if (src < 0 || src >= n) {
                    if (boundary == Boundary::Zero) continue;
                    src = std::clamp(src, 0, n - 1);
                }
                const std::size_t out_idx = static_cast<std::size_t>(y) * w + x;
                const std::size_t in_idx = horizontal ? static_cast<std::size_t>(y) * w + src
                                                      : static_cast<std::size_t>(src) * w + x;
                fn(out_idx, in_idx, taps[static_cast<std::size_t>(k + r)]);
            }
        }
}

}  // namespace

Plane correlate(const Plane& in, std::span<const double> taps, bool horizontal, Boundary boundary)
{
    Plane out(in.width, in.height);
    for_each_tap(in.width, in.height, taps, horizontal, boundary,
                 [&](std::size_t o, std::size_t i, double t) { out.v[o] += t * in.v[i]; });
    return out;
}

Plane correlate_adjoint(const Plane& out_grad, std::span<const double> taps, bool horizontal, Boundary boundary)
{
    Plane in_grad(out_grad.width, out_grad.height);
    for_each_tap(out_grad.width, out_grad.height, taps, horizontal, boundary,
                 [&](std::size_t o, std::size_t i, double t) { in_grad.v[i] += t * out_grad.v[o]; });
    return in_grad;
}

Plane gaussian_blur(const Plane& in, double sigma, Boundary boundary)
{
    if (sigma <= 0.0) return in;
    const auto g = gaussian_kernel(sigma);
    return correlate(correlate(in, g, true, boundary), g, false, boundary);
}

GradientField gaussian_gradient(const Plane& in, double sigma)
{
    const auto g = gaussian_kernel(sigma);
    const auto d = gaussian_derivative_kernel(sigma);
    GradientField f;
    f.dx = correlate(correlate(in, d, true, Boundary::Clamp), g, false, Boundary::Clamp);
    f.dy = correlate(correlate(in, g, true, Boundary::Clamp), d, false, Boundary::Clamp);
    return f;
}

Plane gaussian_gradient_adjoint(const GradientField& up, double sigma)
{
    const auto g = gaussian_kernel(sigma);
    const auto d = gaussian_derivative_kernel(sigma);
    Plane a = correlate_adjoint(correlate_adjoint(up.dx, g, false, Boundary::Clamp), d, true, Boundary::Clamp);
    Plane b = correlate_adjoint(correlate_adjoint(up.dy, d, false, Boundary::Clamp), g, true, Boundary::Clamp);
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
    return a;
}

}  // namespace stagematte
