#pragma once

#include <span>

#include "stagematte/nn/tensor.hpp"

namespace stagematte::nn {

/// Square convolution with odd kernel size, stride >= 1 and edge-replicate
/// padding of kernel/2 on every side. Weights are [out][in][ky][kx].
struct ConvShape {
    int in_channels;
    int out_channels;
    int kernel;
    int stride;

    int pad() const noexcept { return kernel / 2; }
    int out_extent(int n) const noexcept { return (n - 1) / stride + 1; }
    std::size_t weight_count() const noexcept
    {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    }
};

// OpenMP kernels. Work is split over output channels (forward, weight
// gradient) or input channels (input gradient); each output element is
// reduced by a single thread in a fixed order, so results do not depend on
// the thread count.
namespace kernels {

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, const ConvShape& shape,
                    Tensor<T>& out);

/// Overwrites `grad_in` (shape of the forward input).
template <typename T>
void conv2d_backward_input(const Tensor<T>& grad_out, std::span<const T> weight, const ConvShape& shape,
                           Tensor<T>& grad_in);

/// Accumulates into `grad_weight` and `grad_bias`.
template <typename T>
void conv2d_backward_params(const Tensor<T>& grad_out, const Tensor<T>& in, const ConvShape& shape,
                            std::span<T> grad_weight, std::span<T> grad_bias);

}  // namespace kernels

// Serial textbook loops, kept as the oracle for the kernels above.
namespace reference {

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, const ConvShape& shape,
                    Tensor<T>& out);

template <typename T>
void conv2d_backward_input(const Tensor<T>& grad_out, std::span<const T> weight, const ConvShape& shape,
                           Tensor<T>& grad_in);

template <typename T>
void conv2d_backward_params(const Tensor<T>& grad_out, const Tensor<T>& in, const ConvShape& shape,
                            std::span<T> grad_weight, std::span<T> grad_bias);

}  // namespace reference

// Pointwise and resampling ops with their adjoints.

template <typename T>
void relu_inplace(Tensor<T>& t);
/// grad *= (activation > 0)
template <typename T>
void relu_backward_inplace(const Tensor<T>& activation, Tensor<T>& grad);
template <typename T>
void tanh_inplace(Tensor<T>& t);
template <typename T>
void tanh_backward_inplace(const Tensor<T>& activation, Tensor<T>& grad);

template <typename T>
void sigmoid_inplace(Tensor<T>& t);
/// grad *= s (1 - s)
template <typename T>
void sigmoid_backward_inplace(const Tensor<T>& activation, Tensor<T>& grad);

/// Nearest-neighbour upsampling by an integer factor.
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& in, int factor);
template <typename T>
Tensor<T> upsample_nearest_adjoint(const Tensor<T>& grad_out, int factor);

/// Bilinear resize using `bilinear_taps` from image_core.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& in, int out_h, int out_w);
template <typename T>
Tensor<T> resize_bilinear_adjoint(const Tensor<T>& grad_out, int in_h, int in_w);

}  // namespace stagematte::nn
