#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stagematte/image.hpp"
#include "stagematte/nn/arch.hpp"
#include "stagematte/nn/tensor.hpp"

namespace stagematte::nn {

/// Intermediates recorded by a forward pass, consumed by `graph_backward`.
template <typename T>
struct GraphTrace {
    const ArchSpec* arch = nullptr;
    std::string prefix;
    Tensor<T> input;
    std::vector<Tensor<T>> layer_inputs;  // channel-concatenated, after upsampling
    std::vector<Tensor<T>> outputs;       // after activation
};

template <typename T>
Tensor<T> graph_forward(const ArchSpec& arch, const std::string& prefix, const ParamSet<T>& params,
                        const Tensor<T>& input, GraphTrace<T>* trace = nullptr);

/// Reverse pass for a recorded forward. Parameter gradients are added into
/// `grads` unless `accumulate_params` is false; `grad_input`, if given,
/// receives the gradient w.r.t. the network input.
template <typename T>
void graph_backward(const GraphTrace<T>& trace, const ParamSet<T>& params, const Tensor<T>& grad_output,
                    ParamSet<T>& grads, Tensor<T>* grad_input = nullptr, bool accumulate_params = true);

/// [I (3), B (3), mean |I - B| (1)] as a 7-channel tensor.
template <typename T>
Tensor<T> matting_input(const Image& image, const Image& background);

template <typename T>
Tensor<T> mask_to_tensor(const AlphaMask& m);
template <typename T>
AlphaMask tensor_to_mask(const Tensor<T>& t);

// ---- teacher ---------------------------------------------------------------

inline const std::string kTeacherPrefix = "teacher";

template <typename T>
struct TeacherPass {
    GraphTrace<T> trace;
    Tensor<T> output;
};

template <typename T>
TeacherPass<T> teacher_forward(const ArchSpec& arch, const ParamSet<T>& params, const Image& image,
                               const Image& background, bool record);

template <typename T>
void teacher_backward(const TeacherPass<T>& pass, const ParamSet<T>& params, const Tensor<T>& grad_output,
                      ParamSet<T>& grads);

AlphaMask forward_teacher(const ArchSpec& arch, const ParamSet<float>& params, const Image& image,
                          const Image& background);

// ---- student ---------------------------------------------------------------

inline const std::string kCoarsePrefix = "coarse";
inline const std::string kRefinerPrefix = "refiner";
inline constexpr int kCoarseFactor = 4;

struct StudentArch {
    ArchSpec coarse = default_student_coarse_arch();
    ArchSpec refiner = default_student_refiner_arch();

    friend bool operator==(const StudentArch&, const StudentArch&) = default;
};

/// Coarse stage at 1/4 resolution on area-downsampled inputs; the refiner
/// sees [I, B, bilinear-upsampled coarse] and emits a residual 2*s - 1
/// (s its sigmoid output) added to the upsampled coarse mask, then clamped.
template <typename T>
struct StudentPass {
    GraphTrace<T> coarse_trace;
    GraphTrace<T> refiner_trace;
    Tensor<T> coarse;
    Tensor<T> upsampled;
    Tensor<T> unclamped;
    Tensor<T> refined;
};

template <typename T>
StudentPass<T> student_forward(const StudentArch& arch, const ParamSet<T>& params, const Image& image,
                               const Image& background, bool record);

/// Either gradient may be null (treated as zero). With `train_refiner`
/// false the refiner's parameter gradients are left untouched.
template <typename T>
void student_backward(const StudentPass<T>& pass, const ParamSet<T>& params, const Tensor<T>* grad_coarse,
                      const Tensor<T>* grad_refined, ParamSet<T>& grads, bool train_refiner = true);

struct StudentOutput {
    AlphaMask coarse;
    AlphaMask refined;
};

StudentOutput forward_student(const StudentArch& arch, const ParamSet<float>& params, const Image& image,
                              const Image& background);

// ---- whole models ----------------------------------------------------------

enum class ModelKind { Teacher, Student };

std::string to_string(ModelKind k);
ModelKind model_kind_from(const std::string& s);

struct Model {
    ModelKind kind = ModelKind::Teacher;
    ArchSpec teacher = default_teacher_arch();
    StudentArch student;
    ParamSet<float> params;

    friend bool operator==(const Model&, const Model&) = default;
};

Model make_teacher(std::uint64_t seed);
Model make_student(std::uint64_t seed);

/// Full-resolution alpha of a teacher, or the refined alpha of a student.
AlphaMask predict(const Model& model, const Image& image, const Image& background);

}  // namespace stagematte::nn
