#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stagematte/image.hpp"
#include "stagematte/metrics.hpp"

namespace stagematte::qc {

/// Unknown = pixels within Chebyshev distance < band_radius of a fractional
/// pixel (0.001 < G < 0.999) or of a foreground pixel with a background
/// 4-neighbour. The rest is Foreground where G >= 0.5, else Background.
Trimap trimap_from_alpha(const AlphaMask& g, int band_radius);

struct SolveOptions {
    int max_iterations = 5000;
    double tol = 1e-6;
    double h = 0.1;
};

struct SolveResult {
    AlphaMask alpha;
    std::vector<double> updates;  // max |update| per iteration
    std::size_t unreachable = 0;  // Unknown pixels with no path to a label
};

/// Jacobi diffusion over the Unknown band with 4-neighbour colour
/// affinities w = exp(-|I_i - I_j|^2 / h^2); labels stay fixed.
SolveResult supervise_solve(const Image& image, const Trimap& trimap, const SolveOptions& options = {});

struct Thresholds {
    std::optional<double> mse;
    std::optional<double> sad;
    std::optional<double> grad;
};

struct QCSample {
    std::string id;
    metrics::SampleMetrics band;
    bool pass = false;
};

struct QCReport {
    int band_radius = 0;
    Thresholds thresholds;
    std::vector<QCSample> samples;
    metrics::MetricReport summary;
    std::size_t passed = 0;
};

/// Band-restricted comparison of candidates against supervisor masks. A
/// sample passes iff every enabled metric is <= its threshold.
QCReport qc_validate(const std::map<std::string, AlphaMask>& candidates,
                     const std::map<std::string, AlphaMask>& supervisors, const std::map<std::string, Trimap>& trimaps,
                     const Thresholds& thresholds, int band_radius);

std::string render_json(const QCReport& report);
std::string render_table(const QCReport& report);

}  // namespace stagematte::qc
