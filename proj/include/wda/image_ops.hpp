#pragma once

#include <vector>

#include "wda/grid.hpp"

namespace wda {

// Instance map produced by 8-connected labeling. Ids are contiguous 1..count.
struct InstanceLabelMap {
    LabelGrid labels;
    int count = 0;
};

/// Labels 8-connected foreground components in raster-scan order of their
/// first pixel.
InstanceLabelMap label_components(const Mask& mask);

/// Relabels an arbitrary id grid (0 = background) so ids become 1..count in
/// raster order of first appearance. Does not split disconnected ids.
InstanceLabelMap compact_labels(const LabelGrid& labels);

/// Pixel count of each instance; index 0 is background.
std::vector<int> instance_areas(const InstanceLabelMap& m);

// Binary morphology with a digital disk (x^2 + y^2 <= r^2) structuring element.
// Pixels outside the grid are treated as background for dilation and as
// foreground-neutral (ignored) for erosion, so erosion does not eat from the border.
Mask dilate(const Mask& m, int radius);
Mask erode(const Mask& m, int radius);
Mask open(const Mask& m, int radius);
Mask close(const Mask& m, int radius);

/// Separable Gaussian blur with reflect-101 borders and kernel radius ceil(3*sigma).
Image gaussian_blur(const Image& img, double sigma);

struct Gradient {
    Image d_row;
    Image d_col;
};
/// Central differences (one-sided at borders).
Gradient central_gradient(const Image& img);

/// Bilinear resampling to the requested size (pixel-center aligned).
Image resize_bilinear(const Image& img, int rows, int cols);

Mask threshold(const Grid<float>& prob, float t);

}  // namespace wda
