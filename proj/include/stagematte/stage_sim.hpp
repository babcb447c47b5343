#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stagematte/image.hpp"
#include "stagematte/manifest.hpp"

namespace stagematte::sim {

/// Closed interval [lo, hi] sampled uniformly.
struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Half-open column interval [x0, x1).
struct ColumnInterval {
    int x0 = 0;
    int x1 = 0;

    friend bool operator==(const ColumnInterval&, const ColumnInterval&) = default;
};

/// Foreground-induced background alteration and sensor noise of one shot.
struct StageEffects {
    double shadow_strength = 0.0;
    double shadow_dx = 0.0;
    double shadow_dy = 0.0;
    double shadow_blur_sigma = 0.0;
    double reflection_strength = 0.0;
    std::vector<ColumnInterval> reflective_strips;
    double noise_sigma = 0.0;

    void validate() const;
    friend bool operator==(const StageEffects&, const StageEffects&) = default;
};

nlohmann::ordered_json to_json(const StageEffects& e);

// Figure geometry is given in fractions of the canvas unless noted.
struct FigureConfig {
    int width = 64;
    int height = 64;
    Range body_cx{0.4, 0.6};
    Range body_cy{0.42, 0.55};
    // Figures cover roughly a third of the frame; much smaller ones let an
    // L1-trained net settle on the all-background median under noise.
    Range body_rx{0.2, 0.3};
    Range body_ry{0.28, 0.38};
    Range limb_count{2, 4};
    Range limb_length{0.3, 0.5};
    Range limb_radius_px{2.0, 4.0};
    Range strand_count{6, 14};
    Range strand_steps{5, 12};
    Range strand_width_px{0.3, 0.8};
    double strand_step_px = 1.5;
    int supersample = 16;
};

struct BackgroundConfig {
    int width = 64;
    int height = 64;
    Range base_gray{0.3, 0.7};
    Range disc_count{0, 2};
    Range disc_radius_px{2.0, 5.0};
    Range disc_brightness{0.85, 1.0};
    std::vector<ColumnInterval> strips;  // explicit strips (used by gen_background)
    double strip_lift = 0.08;
};

struct Foreground {
    Image color;
    AlphaMask alpha;
};

struct Background {
    Image image;
    std::vector<ColumnInterval> strips;
};

Foreground gen_foreground(std::uint64_t seed, const FigureConfig& config);
Background gen_background(std::uint64_t seed, const BackgroundConfig& config);

/// Per-value additive alteration delta(F) on the background layer:
/// multiplicative shadow (-s * m * B, m the blurred offset silhouette) plus
/// mirrored F*alpha inside reflective strips.
std::vector<float> background_alteration(const Image& fg, const AlphaMask& alpha, const Image& bg,
                                         const StageEffects& effects);

/// I = alpha F + (1 - alpha)(B + delta(F)) + noise, clamped to [0,1].
Image apply_stage_effects(const Image& fg, const AlphaMask& alpha, const Image& bg, const StageEffects& effects,
                          std::uint64_t seed);

struct SceneSample {
    std::string id;
    Role role = Role::Base;
    Image image;
    Image background;
    Image foreground;
    AlphaMask alpha_gt;
    StageEffects effects;
    std::uint64_t seed = 0;
};

// ---- dataset generation --------------------------------------------------

struct EffectRanges {
    Range shadow_strength{0.35, 0.65};
    Range shadow_dx{-4, 4};
    Range shadow_dy{2, 7};
    Range shadow_blur_sigma{0.8, 2.0};
    Range reflection_strength{0.35, 0.7};
    Range strip_count{1, 2};
    Range strip_width_px{4, 8};
    Range noise_sigma{0.0, 0.015};
};

struct ScribbleConfig {
    Range background_strokes{6, 9};
    Range foreground_strokes{2, 3};
    int stroke_steps = 16;
    int brush_radius = 1;
    double alteration_threshold = 0.03;
};

struct GeneratorConfig {
    int width = 64;
    int height = 64;
    int count_base = 64;
    int count_capture_stage = 12;
    int count_unlabeled = 40;
    int count_validation = 16;
    FigureConfig figure;
    BackgroundConfig background;
    EffectRanges effects;
    ScribbleConfig scribbles;

    int count(Role r) const;
};

GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const GeneratorConfig& c);

/// One scene of the given role; base scenes are clean composites, other
/// roles carry sampled stage effects.
SceneSample gen_scene(Role role, int index, const GeneratorConfig& config, std::uint64_t dataset_seed);

/// Simulated annotator: strokes over background pixels altered by shadows
/// or reflections plus a few strokes inside the figure. Only pixels whose
/// ground-truth alpha is exactly 0 (or 1) receive Background (Foreground).
ScribbleMap simulate_scribbles(const SceneSample& sample, const ScribbleConfig& config, std::uint64_t seed);

/// Writes every PNG plus `manifest.jsonl` under `out_dir`.
DatasetManifest gen_dataset(const GeneratorConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace stagematte::sim
