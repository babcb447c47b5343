#include <cmath>

#include "stagematte/filters.hpp"
#include "stagematte/training.hpp"

namespace stagematte::train {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double base_loss(std::span<const float> m, std::span<const float> g, int width, int height, std::span<float> grad,
                 double weight)
{
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (m.size() != n || g.size() != n)
        throw DimensionError("base_loss: expected " + std::to_string(n) + " values, got " + std::to_string(m.size()) +
                             " and " + std::to_string(g.size()));
    if (!grad.empty() && grad.size() != n) throw DimensionError("base_loss: gradient buffer size mismatch");

    Plane diff(width, height);
    double l1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        diff.v[i] = static_cast<double>(m[i]) - static_cast<double>(g[i]);
        l1 += std::fabs(diff.v[i]);
    }
    const GradientField d = gaussian_gradient(diff, kGradientSigma);
    double gl = 0.0;
    for (std::size_t i = 0; i < n; ++i) gl += std::fabs(d.dx.v[i]) + std::fabs(d.dy.v[i]);
    const double inv_n = 1.0 / static_cast<double>(n);

    if (!grad.empty()) {
        GradientField up{Plane(width, height), Plane(width, height)};
        for (std::size_t i = 0; i < n; ++i) {
            up.dx.v[i] = kGradLossWeight * inv_n * sign(d.dx.v[i]);
            up.dy.v[i] = kGradLossWeight * inv_n * sign(d.dy.v[i]);
        }
        const Plane back = gaussian_gradient_adjoint(up, kGradientSigma);
        for (std::size_t i = 0; i < n; ++i)
            grad[i] += static_cast<float>(weight * (inv_n * sign(diff.v[i]) + back.v[i]));
    }
    return l1 * inv_n + kGradLossWeight * gl * inv_n;
}

double base_loss(const AlphaMask& m, const AlphaMask& g)
{
    require_same_size("base_loss", m.width(), m.height(), g.width(), g.height());
    return base_loss(m.values(), g.values(), m.width(), m.height());
}

ScribbleLoss scribble_loss(std::span<const float> m, const ScribbleMap& y, std::span<float> grad, double weight)
{
    if (m.size() != y.pixel_count())
        throw DimensionError("scribble_loss: prediction has " + std::to_string(m.size()) + " pixels, scribbles " +
                             std::to_string(y.pixel_count()));
    ScribbleLoss out;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (y[i] == Scribble::Unlabeled) continue;
        const double target = y[i] == Scribble::Foreground ? 1.0 : 0.0;
        const double d = static_cast<double>(m[i]) - target;
        out.sum += std::fabs(d);
        ++out.count;
        if (!grad.empty()) grad[i] += static_cast<float>(weight * sign(d));
    }
    if (out.count == 0) throw DataError("scribble_loss: the scribble map annotates no pixel");
    return out;
}

ScribbleLoss scribble_loss(const AlphaMask& m, const ScribbleMap& y)
{
    require_same_size("scribble_loss", m.width(), m.height(), y.width(), y.height());
    return scribble_loss(m.values(), y);
}

ScribbleMap downsample_scribbles(const ScribbleMap& y, int factor)
{
    if (factor < 1 || y.width() % factor != 0 || y.height() % factor != 0)
        throw DimensionError("downsample_scribbles: " + std::to_string(y.width()) + "x" + std::to_string(y.height()) +
                             " is not divisible by " + std::to_string(factor));
    ScribbleMap out(y.width() / factor, y.height() / factor, Scribble::Unlabeled);
    for (int cy = 0; cy < out.height(); ++cy)
        for (int cx = 0; cx < out.width(); ++cx) {
            int fg = 0, bg = 0;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) {
                    const Scribble s = y.at(cx * factor + dx, cy * factor + dy);
                    fg += s == Scribble::Foreground;
                    bg += s == Scribble::Background;
                }
            if (fg > bg) out.set(cx, cy, Scribble::Foreground);
            else if (bg > fg) out.set(cx, cy, Scribble::Background);
        }
    return out;
}

}  // namespace stagematte::train
