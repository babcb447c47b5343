#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagematte/image.hpp"
#include "stagematte/manifest.hpp"
#include "stagematte/nn/optim.hpp"

namespace stagematte::train {

struct TrainConfig {
    int batch_size = 16;
    int iterations = 2000;
    double lr_initial = 5e-5;
    int lr_drop_iteration = 600;
    double lr_after = 2.5e-5;
    double base_fraction = 0.8;
    double noise_sigma_max = 0.1;
    bool noise_scribble_samples = true;
    int epochs_coarse = 5;
    int epochs_joint = 10;
    bool freeze_refiner = true;
    std::uint64_t seed = 0;

    void validate() const;
    double lr_at(std::int64_t t) const { return t < lr_drop_iteration ? lr_initial : lr_after; }
};

/// Fine-tuning defaults (lr 5e-5, dropping to 2.5e-5 after 600 iterations).
TrainConfig finetune_defaults();
/// Base training defaults (lr 1e-3, no drop).
TrainConfig base_defaults();

/// Missing keys keep the values of `defaults`.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults);
nlohmann::ordered_json to_json(const TrainConfig& c);

inline constexpr double kGradLossWeight = 0.5;

// ---- losses ----------------------------------------------------------------

/// mean|M - G| + 0.5 * mean(|d/dx (M - G)| + |d/dy (M - G)|), with the
/// Gaussian-derivative gradient used by the Grad metric. If `grad` is
/// non-empty, `weight * dL/dM` is added into it.
double base_loss(std::span<const float> m, std::span<const float> g, int width, int height,
                 std::span<float> grad = {}, double weight = 1.0);
double base_loss(const AlphaMask& m, const AlphaMask& g);

struct ScribbleLoss {
    double sum = 0.0;
    std::size_t count = 0;
};

/// Sum of |M_i - Y_i| over annotated pixels. Adds `weight * d(sum)/dM` into
/// `grad` if given. An empty annotation set is rejected.
ScribbleLoss scribble_loss(std::span<const float> m, const ScribbleMap& y, std::span<float> grad = {},
                           double weight = 1.0);
ScribbleLoss scribble_loss(const AlphaMask& m, const ScribbleMap& y);

/// Majority vote inside each factor x factor cell; ties become Unlabeled.
ScribbleMap downsample_scribbles(const ScribbleMap& y, int factor);

// ---- data ------------------------------------------------------------------

struct TrainSample {
    std::string id;
    Role role = Role::Base;
    Image image;
    Image background;
    AlphaMask target;       // ground truth or pseudo-label; empty if absent
    ScribbleMap scribbles;  // empty if absent
};

/// Records of `role` with ground truth. Asking for validation data throws.
std::vector<TrainSample> load_ground_truth_samples(const DatasetManifest& manifest, Role role);
/// Capture-stage records carrying scribbles.
std::vector<TrainSample> load_scribble_samples(const DatasetManifest& manifest);
/// Records carrying a pseudo_label.
std::vector<TrainSample> load_pseudo_samples(const DatasetManifest& manifest);

struct NoisyInput {
    Image image;
    Image background;
    double sigma = 0.0;
};

/// sigma ~ U[0, sigma_max] once per call, then N(0, sigma) on every value of
/// I and B, clamped.
NoisyInput augment_noise(const Image& image, const Image& background, double sigma_max, std::uint64_t seed);
/// Fixed-sigma corruption of I and B used for noisy evaluation.
NoisyInput add_noise(const Image& image, const Image& background, double sigma, std::uint64_t seed);

struct BatchItem {
    std::size_t index = 0;
    bool scribble = false;
};

/// floor(batch * p + 0.5)
int base_count(int batch_size, double base_fraction);

/// Exactly base_count base items followed by the scribble items, drawn
/// uniformly with replacement; a pure function of (seed, iteration).
std::vector<BatchItem> sample_hybrid_batch(std::size_t n_base, std::size_t n_scribble, const TrainConfig& config,
                                           std::int64_t iteration);

// ---- loops -----------------------------------------------------------------

struct LossRecord {
    std::int64_t iteration = 0;
    double lr = 0.0;
    double base_loss = 0.0;      // mean over base items (NaN if none)
    double scribble_loss = 0.0;  // mean of sum/count over scribble items (NaN if none)
    int n_base = 0;
    int n_scribble = 0;
};

struct TrainResult {
    nn::Checkpoint checkpoint;
    std::vector<LossRecord> curve;
};

std::string render_loss_curve(const std::vector<LossRecord>& curve);
void write_loss_curve(const std::vector<LossRecord>& curve, const std::filesystem::path& path);

TrainResult train_teacher_base(nn::Checkpoint init, const std::vector<TrainSample>& base, const TrainConfig& config);
TrainResult train_student_base(nn::Checkpoint init, const std::vector<TrainSample>& base, const TrainConfig& config);

TrainResult finetune_teacher(nn::Checkpoint teacher, const std::vector<TrainSample>& base,
                             const std::vector<TrainSample>& scribbled, const TrainConfig& config);

/// Teacher predictions for each record, in order.
std::vector<AlphaMask> distill_labels(const nn::Model& teacher, const std::vector<TrainSample>& unlabeled);

/// Phase A: coarse stage only against 1/4-resolution pseudo-labels with the
/// refiner frozen. Phase B: both stages jointly.
TrainResult finetune_student(nn::Checkpoint student, const std::vector<TrainSample>& pseudo,
                             const TrainConfig& config);

/// Hybrid fine-tuning of the student with the selective loss at coarse
/// resolution.
TrainResult finetune_student_direct(nn::Checkpoint student, const std::vector<TrainSample>& base,
                                    const std::vector<TrainSample>& scribbled, const TrainConfig& config);

}  // namespace stagematte::train
