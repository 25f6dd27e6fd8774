#pragma once

#include <array>
#include <vector>

#include "wda/core_data.hpp"
#include "wda/heatmap.hpp"
#include "wda/random.hpp"

namespace wda {

struct AugPolicy {
    bool flips = true;
    bool rotations = true;  // multiples of 90 degrees
    std::array<double, 2> blur_sigma_range{0.0, 1.5};
    std::array<double, 2> brightness_range{-0.08, 0.08};
    std::array<double, 2> contrast_range{0.8, 1.2};
    std::array<double, 2> gamma_range{0.8, 1.25};
    double blur_probability = 0.3;
};

struct GeometricDraw {
    bool flip_h = false;
    bool flip_v = false;
    int rot90 = 0;  // clockwise quarter turns, applied after the flips
};

struct PhotometricDraw {
    double blur_sigma = 0.0;
    double brightness = 0.0;
    double contrast = 1.0;
    double gamma = 1.0;
};

GeometricDraw draw_geometric(const AugPolicy& policy, Rng& rng);
PhotometricDraw draw_photometric(const AugPolicy& policy, Rng& rng);

Point transform_point(Point p, int rows, int cols, const GeometricDraw& draw);

template <typename T>
Grid<T> transform_grid(const Grid<T>& g, const GeometricDraw& draw) {
    Grid<T> cur = g;
    if (draw.flip_h || draw.flip_v) {
        Grid<T> f(cur.rows(), cur.cols());
        for (int r = 0; r < cur.rows(); ++r)
            for (int c = 0; c < cur.cols(); ++c)
                f(r, c) = cur(draw.flip_v ? cur.rows() - 1 - r : r, draw.flip_h ? cur.cols() - 1 - c : c);
        cur = std::move(f);
    }
    for (int k = 0; k < ((draw.rot90 % 4) + 4) % 4; ++k) {
        Grid<T> rot(cur.cols(), cur.rows());
        for (int r = 0; r < rot.rows(); ++r)
            for (int c = 0; c < rot.cols(); ++c) rot(r, c) = cur(cur.rows() - 1 - c, r);
        cur = std::move(rot);
    }
    return cur;
}

/// Image, mask and points undergo the identical transform.
DomainSample apply_geometric(const DomainSample& sample, const GeometricDraw& draw);

/// Blur, then contrast about 0.5, brightness shift and gamma; clamped to [0,1].
Image apply_photometric(const Image& image, const PhotometricDraw& draw);

// ---------------------------------------------------------------------------
// Cross-position cut-and-paste
// ---------------------------------------------------------------------------

struct CPAugConfig {
    int crop_rows = 64;
    int crop_cols = 64;
    bool boundary_relabel = true;
    double relabel_threshold = 0.5;

    int stride_rows() const { return std::max(1, crop_rows / 4); }
    int stride_cols() const { return std::max(1, crop_cols / 4); }
};

struct Window {
    int row = 0;
    int col = 0;
    int rows = 0;
    int cols = 0;

    bool contains(Point p) const noexcept {
        return p.row >= row && p.row < row + rows && p.col >= col && p.col < col + cols;
    }
    friend bool operator==(const Window&, const Window&) = default;
};

/// Strided scan (stride = crop/4, last position always included) for the
/// window holding the most (`maximize`) or fewest points; ties go to the
/// first window in row-major scan order.
Window select_window(const std::vector<Point>& points, int rows, int cols, int crop_rows, int crop_cols,
                     int stride_rows, int stride_cols, bool maximize);

template <typename T>
void paste_window(Grid<T>& dst, const Grid<T>& src, const Window& from, const Window& to) {
    for (int r = 0; r < from.rows; ++r)
        for (int c = 0; c < from.cols; ++c) dst(to.row + r, to.col + c) = src(from.row + r, from.col + c);
}

struct CPAugResult {
    DomainSample sample;
    Window donor;      // window in `a`
    Window recipient;  // window in `b`
};

/// Pastes the most point-rich crop of `a` into the least point-rich window of
/// `b`. Points of `b` inside the recipient window are dropped, donor points are
/// translated. With boundary relabeling and a segmentation estimate for `a`,
/// annotated instances cut by the crop border are re-centered on their
/// in-crop piece.
CPAugResult cp_aug(const DomainSample& a, const DomainSample& b, const CPAugConfig& cfg,
                   const ProbMap* seg_prob_a = nullptr);

}  // namespace wda
