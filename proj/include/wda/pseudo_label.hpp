#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "wda/grid.hpp"
#include "wda/heatmap.hpp"

namespace wda {

// Partial one-hot pseudo-label. Stored as a class index per pixel with
// kIgnored standing for the all-zero one-hot row.
struct PseudoLabelMask {
    static constexpr std::int8_t kIgnored = -1;

    Grid<std::int8_t> labels;
    double coverage = 0.0;  // fraction of labeled pixels

    std::array<std::uint8_t, 2> onehot(int r, int c) const {
        const auto v = labels(r, c);
        return {static_cast<std::uint8_t>(v == 0), static_cast<std::uint8_t>(v == 1)};
    }
};

struct EntropyThresholds {
    std::array<double, 2> v{};  // per-class entropy cut; +inf selects everything
    int K = 8;
};

// Threshold population is subsampled (every `stride`-th pixel) once it
// exceeds this many pixels.
inline constexpr std::size_t kThresholdPopulationCap = 10'000'000;
inline constexpr int kThresholdSubsampleStride = 4;

/// -(1/log L) sum p log p with 0 log 0 = 0. Throws on an invalid simplex.
double normalized_entropy(std::span<const double> p);

/// Binary case on a foreground probability.
double normalized_entropy_binary(double fg);

/// Argmax class of a binary prediction; ties go to background.
inline int argmax_class(float fg) noexcept { return fg > 0.5f ? 1 : 0; }

/// K-th decile of a population: the value at sorted index floor(K*n/10),
/// clamped to the last element. Sorts in place.
double decile(std::vector<double>& population, int K);

/// Per-class K-th decile of the entropies of pixels predicted as that class,
/// pooled over every map. Empty class -> +inf.
EntropyThresholds compute_thresholds(std::span<const ProbMap> prob_maps, int K);

/// Pixel labeled with its argmax class iff its entropy is below that class's
/// threshold; otherwise ignored.
PseudoLabelMask generate_pseudo_labels(const ProbMap& prob_map, const EntropyThresholds& thresholds);

}  // namespace wda
