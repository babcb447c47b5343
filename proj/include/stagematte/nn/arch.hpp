#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagematte/nn/kernels.hpp"

namespace stagematte::nn {

enum class Activation { None, Relu, Tanh, Sigmoid };
enum class ArchRole { Teacher, StudentCoarse, StudentRefiner };

std::string to_string(Activation a);
std::string to_string(ArchRole r);

/// A layer input: the network input (node == -1) or the output of an
/// earlier layer, optionally nearest-upsampled by an integer factor.
struct LayerSource {
    int node = -1;
    int upsample = 1;

    friend bool operator==(const LayerSource&, const LayerSource&) = default;
};

/// Convolution over the channel concatenation of its sources, followed by
/// an activation.
struct LayerSpec {
    std::string name;
    int kernel = 3;
    int out_channels = 1;
    int stride = 1;
    Activation activation = Activation::Relu;
    std::vector<LayerSource> inputs;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ArchSpec {
    ArchRole role = ArchRole::Teacher;
    int input_channels = 7;
    std::vector<LayerSpec> layers;

    /// Product of all strides along the deepest path; inputs must divide it.
    int required_divisor() const;
    /// Channel count entering each layer.
    std::vector<int> layer_input_channels() const;
    /// Throws DimensionError unless the wiring is consistent and the final
    /// layer is a single sigmoid channel.
    void validate() const;

    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

ArchSpec default_teacher_arch();
ArchSpec default_student_coarse_arch();
ArchSpec default_student_refiner_arch();

void to_json(nlohmann::json& j, const ArchSpec& a);
void from_json(const nlohmann::json& j, ArchSpec& a);

template <typename T>
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;

    friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

/// Named parameter tensors of one or more architectures. Layer `L` of a
/// stage with prefix `P` owns "P.L.weight" ([out][in][k][k]) and "P.L.bias".
template <typename T>
struct ParamSet {
    std::vector<ParamTensor<T>> tensors;

    const ParamTensor<T>& get(const std::string& name) const;
    ParamTensor<T>& get(const std::string& name);
    bool contains(const std::string& name) const;
    std::size_t scalar_count() const;

    /// Same names and shapes, all zero.
    ParamSet zeros_like() const;

    template <typename U>
    ParamSet<U> cast() const
    {
        ParamSet<U> out;
        for (const auto& t : tensors) {
            ParamTensor<U> u{t.name, t.shape, std::vector<U>(t.value.size())};
            for (std::size_t i = 0; i < t.value.size(); ++i) u.value[i] = static_cast<U>(t.value[i]);
            out.tensors.push_back(std::move(u));
        }
        return out;
    }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Appends the tensors of `arch` under `prefix`. Weights are drawn from
/// N(0, 2/fan_in), biases are zero.
void init_params(const ArchSpec& arch, const std::string& prefix, std::uint64_t seed, ParamSet<float>& out);
ParamSet<float> init_params(const ArchSpec& arch, const std::string& prefix, std::uint64_t seed);

}  // namespace stagematte::nn
