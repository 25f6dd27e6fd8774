#pragma once

#include "wda/core_data.hpp"
#include "wda/grid.hpp"

namespace wda {

struct SARConfig {
    int iterations = 30;
    int smoothing = 1;
    int band_px = 6;
    double balloon = 0.0;
    double edge_alpha = 1000.0;
    double edge_sigma = 2.0;
    double balloon_threshold = -1.0;  // < 0: 40th percentile of the edge map

    void validate() const;
};

/// g = 1 / (1 + alpha |grad(G_sigma * image)|^2). Close to 0 on edges.
Image edge_stopping_map(const Image& image, double sigma, double alpha);

/// Morphological geodesic active contour on one level set (binary) starting at `init`.
Mask morphological_gac(const Image& edge_map, const Mask& init, int iterations, int smoothing, double balloon,
                       double balloon_threshold);

/// Curvature smoothing operator (alternating SI/IS compositions).
Mask curvature_smooth(const Mask& u, int step);

/// Per-instance GAC refinement clamped to [erode(orig, band), dilate(orig, band)].
/// Instances never merge or split, so the component count is unchanged.
Mask refine_source_mask(const Image& image, const Mask& mask, const SARConfig& cfg = {});

/// Refines a source sample's mask. Target samples are rejected: their labels
/// are ground truth and must stay untouched.
DomainSample refine_source_sample(const DomainSample& sample, const SARConfig& cfg = {});

}  // namespace wda
