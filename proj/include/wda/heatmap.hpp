#pragma once

#include <vector>

#include "wda/grid.hpp"

namespace wda {

// Sum of unit-mass Gaussians, one per point. Its integral is the point count.
struct DensityMap {
    Grid<float> values;
    double sigma = 0.0;
};

// Per-pixel foreground probability of a 2-class prediction; background is 1 - fg.
struct ProbMap {
    Grid<float> fg;
    int rows() const noexcept { return fg.rows(); }
    int cols() const noexcept { return fg.cols(); }
};

struct WeightMaps {
    Mask w;            // 1 where the target heatmap carries knowledge
    Grid<float> beta;  // focus weight around labeled centers
};

struct Peak {
    int row = 0;
    int col = 0;
    float score = 0.0f;
};

struct PeakSet {
    std::vector<Peak> peaks;
    double nms_radius = 0.0;
};

inline constexpr double kDensityTruncation = 4.0;  // kernel half-width in sigmas
inline constexpr double kSupportEpsilon = 1e-8;
inline constexpr float kPeakFloor = 1e-4f;

/// Each point contributes a Gaussian truncated at +-4 sigma and renormalized
/// to unit mass over the in-bounds pixels, so points near the border keep
/// their full count.
DensityMap render_density(const std::vector<Point>& points, int rows, int cols, double sigma);

/// w = 1 where fg_prob < rho or the sigma1 target heatmap is positive;
/// beta = sigma2 density of the same points.
WeightMaps build_weight_maps(const std::vector<Point>& sparse_points, const ProbMap& fg_prob, double rho,
                             double sigma1, double sigma2);

/// Same as above with a precomputed target heatmap.
WeightMaps build_weight_maps(const DensityMap& target_heat, const std::vector<Point>& sparse_points,
                             const ProbMap& fg_prob, double rho, double sigma2);

/// 3x3 local maxima above kPeakFloor, greedy NMS by descending score within
/// nms_radius, then the top ceil(keep_fraction * survivors) by score.
PeakSet extract_peaks(const Grid<float>& heatmap, double nms_radius, double keep_fraction);

}  // namespace wda
