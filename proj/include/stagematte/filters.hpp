#pragma once

#include <span>
#include <vector>

namespace stagematte {

enum class Boundary { Clamp, Zero };

/// Plane of doubles in row-major order.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> v;

    Plane() = default;
    Plane(int w, int h, double fill = 0.0) : width(w), height(h), v(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

/// Normalized Gaussian taps g[-r..r], r = ceil(3*sigma). sigma <= 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma);

/// First-derivative-of-Gaussian taps, scaled so that correlating a unit
/// ramp yields exactly 1.
std::vector<double> gaussian_derivative_kernel(double sigma);

/// out(x,y) = sum_k taps[k] * in(x+k-r, y) along rows (horizontal == true)
/// or columns. Out-of-range reads are clamped or zero per `boundary`.
Plane correlate(const Plane& in, std::span<const double> taps, bool horizontal, Boundary boundary);

/// Adjoint of `correlate` for the same taps/direction/boundary.
Plane correlate_adjoint(const Plane& out_grad, std::span<const double> taps, bool horizontal, Boundary boundary);

Plane gaussian_blur(const Plane& in, double sigma, Boundary boundary);

struct GradientField {
    Plane dx;
    Plane dy;
};

/// Gaussian first-derivative gradient with edge clamping.
GradientField gaussian_gradient(const Plane& in, double sigma);

/// Vector-Jacobian product of `gaussian_gradient`.
Plane gaussian_gradient_adjoint(const GradientField& upstream, double sigma);

inline constexpr double kGradientSigma = 1.4;

}  // namespace stagematte
