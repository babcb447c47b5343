#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stagematte/nn/network.hpp"

namespace stagematte::nn {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments, one vector per parameter tensor (same order).
struct AdamState {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    std::int64_t step = 0;

    static AdamState zeros_for(const ParamSet<float>& params);
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update at step `state.step + 1`. Tensors whose
/// names appear in `frozen` are skipped entirely (values and moments).
/// A non-finite gradient raises NumericalError naming the tensor, before
/// anything is modified.
void adam_step(ParamSet<float>& params, const ParamSet<float>& grads, const AdamHyper& hyper, AdamState& state,
               const std::vector<std::string>& frozen = {});

/// Scales every gradient value.
template <typename T>
void scale_grads(ParamSet<T>& grads, T factor);

/// Checkpoint: model kind, architectures, parameters, Adam state and the
/// iteration counter. See docs in README for the byte layout.
struct Checkpoint {
    Model model;
    AdamState adam;
    std::int64_t iteration = 0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stagematte::nn
