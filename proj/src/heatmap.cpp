#include "wda/heatmap.hpp"

#include <algorithm>
#include <cmath>

namespace wda {

DensityMap render_density(const std::vector<Point>& points, int rows, int cols, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("render_density: sigma must be positive");
    DensityMap out{Grid<float>(rows, cols, 0.0f), sigma};
    const int half = static_cast<int>(std::ceil(kDensityTruncation * sigma));
    std::vector<double> kernel;
    for (const auto& p : points) {
        if (!out.values.contains(p.row, p.col)) throw ShapeError("render_density: point outside grid");
        const int r0 = std::max(0, p.row - half);
        const int r1 = std::min(rows - 1, p.row + half);
        const int c0 = std::max(0, p.col - half);
        const int c1 = std::min(cols - 1, p.col + half);
        kernel.assign(static_cast<std::size_t>((r1 - r0 + 1) * (c1 - c0 + 1)), 0.0);
        double mass = 0.0;
        std::size_t k = 0;
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c, ++k) {
                const double d2 = static_cast<double>((r - p.row) * (r - p.row) + (c - p.col) * (c - p.col));
                kernel[k] = std::exp(-0.5 * d2 / (sigma * sigma));
                mass += kernel[k];
            }
        k = 0;
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c, ++k) out.values(r, c) += static_cast<float>(kernel[k] / mass);
    }
    return out;
}

WeightMaps build_weight_maps(const DensityMap& target_heat, const std::vector<Point>& sparse_points,
                             const ProbMap& fg_prob, double rho, double sigma2) {
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("build_weight_maps: rho must lie in (0,1)");
    require_same_shape(target_heat.values, fg_prob.fg, "build_weight_maps");
    WeightMaps out{Mask(fg_prob.rows(), fg_prob.cols(), 0),
                   render_density(sparse_points, fg_prob.rows(), fg_prob.cols(), sigma2).values};
    for (std::size_t i = 0; i < out.w.size(); ++i) {
        const bool background = fg_prob.fg[i] < rho;
        const bool labeled = target_heat.values[i] > kSupportEpsilon;
        out.w[i] = (background || labeled) ? 1 : 0;
    }
    return out;
}

WeightMaps build_weight_maps(const std::vector<Point>& sparse_points, const ProbMap& fg_prob, double rho,
                             double sigma1, double sigma2) {
    const auto heat = render_density(sparse_points, fg_prob.rows(), fg_prob.cols(), sigma1);
    return build_weight_maps(heat, sparse_points, fg_prob, rho, sigma2);
}

PeakSet extract_peaks(const Grid<float>& heatmap, double nms_radius, double keep_fraction) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ConfigError("extract_peaks: keep_fraction must lie in (0,1]");
    if (!(nms_radius >= 1.0)) throw ConfigError("extract_peaks: nms_radius must be >= 1");
    std::vector<Peak> candidates;
    const int R = heatmap.rows();
    const int C = heatmap.cols();
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            const float v = heatmap(r, c);
            if (!(v > kPeakFloor)) continue;
            bool is_max = true;
            for (int dr = -1; dr <= 1 && is_max; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if ((dr == 0 && dc == 0) || !heatmap.contains(r + dr, c + dc)) continue;
                    const float n = heatmap(r + dr, c + dc);
                    // Plateaus: only the first pixel in raster order survives.
                    if (n > v || (n == v && (dr < 0 || (dr == 0 && dc < 0)))) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) candidates.push_back({r, c, v});
        }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Peak& a, const Peak& b) { return a.score > b.score; });

    PeakSet out{{}, nms_radius};
    const double r2 = nms_radius * nms_radius;
    for (const auto& p : candidates) {
        const bool suppressed = std::any_of(out.peaks.begin(), out.peaks.end(), [&](const Peak& q) {
            const double dr = p.row - q.row;
            const double dc = p.col - q.col;
            return dr * dr + dc * dc <= r2;
        });
        if (!suppressed) out.peaks.push_back(p);
    }
    const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(out.peaks.size()) - 1e-9));
    out.peaks.resize(std::min(keep, out.peaks.size()));
    return out;
}

}  // namespace wda
