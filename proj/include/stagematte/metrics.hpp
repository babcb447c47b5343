#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stagematte/image.hpp"

namespace stagematte::metrics {

/// Pixel subset used to restrict a metric (trimap band, scribble region).
struct Region {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> inside;  // 1 = in region

    Region() = default;
    Region(int w, int h, bool fill = false)
        : width(w), height(h), inside(static_cast<std::size_t>(w) * h, fill ? 1 : 0)
    {
    }

    std::size_t count() const;
    bool contains(std::size_t i) const { return inside[i] != 0; }
};

Region unknown_region(const Trimap& trimap);
Region annotated_region(const ScribbleMap& scribbles);

// Each metric is a per-pixel mean over the region (all pixels if omitted).
// An empty region is rejected.

double mse(const AlphaMask& m, const AlphaMask& g);
double mse(const AlphaMask& m, const AlphaMask& g, const Region& region);

double sad(const AlphaMask& m, const AlphaMask& g);
double sad(const AlphaMask& m, const AlphaMask& g, const Region& region);

/// Mean of (|grad M| - |grad G|)^2 with Gaussian-derivative gradients
/// (sigma 1.4, edge clamped). With a region, both masks are zeroed outside
/// it before filtering, so values outside the region never contribute.
double grad(const AlphaMask& m, const AlphaMask& g);
double grad(const AlphaMask& m, const AlphaMask& g, const Region& region);

struct SampleMetrics {
    std::string id;
    double mse = 0.0;
    double sad = 0.0;
    double grad = 0.0;
    std::size_t pixel_count = 0;
};

struct MetricReport {
    double mse = 0.0;
    double sad = 0.0;
    double grad = 0.0;
    std::size_t pixel_count = 0;
    std::vector<SampleMetrics> per_sample;
};

/// Per-sample metrics for every id plus their means. Ids must match
/// between predictions, ground truths and (if given) regions.
MetricReport evaluate_dataset(const std::map<std::string, AlphaMask>& predictions,
                              const std::map<std::string, AlphaMask>& ground_truths,
                              const std::map<std::string, Region>* regions = nullptr);

// Display conventions of the matting literature: MSE x1e4, SAD x1e3, Grad x1e5.
inline constexpr double kMseScale = 1e4;
inline constexpr double kSadScale = 1e3;
inline constexpr double kGradScale = 1e5;

std::string format_scaled(double value, double scale);
std::string render_table(const MetricReport& report, const std::string& title = "");
std::string render_json(const MetricReport& report);

}  // namespace stagematte::metrics
