#include "wda/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wda/image_ops.hpp"

namespace wda {

GeometricDraw draw_geometric(const AugPolicy& policy, Rng& rng) {
    GeometricDraw d;
    if (policy.flips) {
        d.flip_h = uniform(rng, 0.0, 1.0) < 0.5;
        d.flip_v = uniform(rng, 0.0, 1.0) < 0.5;
    }
    if (policy.rotations) d.rot90 = uniform_int(rng, 0, 3);
    return d;
}

PhotometricDraw draw_photometric(const AugPolicy& policy, Rng& rng) {
    PhotometricDraw d;
    const double blur_gate = uniform(rng, 0.0, 1.0);
    const double blur = uniform(rng, policy.blur_sigma_range[0], policy.blur_sigma_range[1]);
    d.blur_sigma = blur_gate < policy.blur_probability ? blur : 0.0;
    d.brightness = uniform(rng, policy.brightness_range[0], policy.brightness_range[1]);
    d.contrast = uniform(rng, policy.contrast_range[0], policy.contrast_range[1]);
    d.gamma = uniform(rng, policy.gamma_range[0], policy.gamma_range[1]);
    return d;
}

Point transform_point(Point p, int rows, int cols, const GeometricDraw& draw) {
    if (draw.flip_h) p.col = cols - 1 - p.col;
    if (draw.flip_v) p.row = rows - 1 - p.row;
    for (int k = 0; k < ((draw.rot90 % 4) + 4) % 4; ++k) {
        // Clockwise quarter turn: (r, c) -> (c, rows - 1 - r), shape swaps.
        p = {p.col, rows - 1 - p.row};
        std::swap(rows, cols);
    }
    return p;
}

DomainSample apply_geometric(const DomainSample& sample, const GeometricDraw& draw) {
    DomainSample out;
    out.domain = sample.domain;
    out.id = sample.id;
    out.image = transform_grid(sample.image, draw);
    if (sample.mask) out.mask = transform_grid(*sample.mask, draw);
    if (sample.points) {
        std::vector<Point> pts;
        pts.reserve(sample.points->size());
        for (const auto& p : *sample.points)
            pts.push_back(transform_point(p, sample.image.rows(), sample.image.cols(), draw));
        out.points = std::move(pts);
    }
    return out;
}

Image apply_photometric(const Image& image, const PhotometricDraw& draw) {
    Image out = draw.blur_sigma > 0.0 ? gaussian_blur(image, draw.blur_sigma) : image;
    for (auto& v : out) {
        double x = 0.5 + draw.contrast * (static_cast<double>(v) - 0.5) + draw.brightness;
        x = std::pow(std::clamp(x, 0.0, 1.0), draw.gamma);
        v = static_cast<float>(x);
    }
    return out;
}

namespace {

std::vector<int> scan_positions(int extent, int crop, int stride) {
    std::vector<int> pos;
    for (int p = 0; p + crop <= extent; p += stride) pos.push_back(p);
    if (pos.empty() || pos.back() != extent - crop) pos.push_back(extent - crop);
    return pos;
}

}  // namespace

Window select_window(const std::vector<Point>& points, int rows, int cols, int crop_rows, int crop_cols,
                     int stride_rows, int stride_cols, bool maximize) {
    if (crop_rows > rows || crop_cols > cols || crop_rows <= 0 || crop_cols <= 0)
        throw ConfigError("cp_aug: crop " + std::to_string(crop_rows) + "x" + std::to_string(crop_cols) +
                          " does not fit image " + std::to_string(rows) + "x" + std::to_string(cols));
    Window best{0, 0, crop_rows, crop_cols};
    long best_count = maximize ? -1 : std::numeric_limits<long>::max();
    for (int r : scan_positions(rows, crop_rows, stride_rows))
        for (int c : scan_positions(cols, crop_cols, stride_cols)) {
            const Window w{r, c, crop_rows, crop_cols};
            const long n = std::count_if(points.begin(), points.end(), [&](const Point& p) { return w.contains(p); });
            if (maximize ? n > best_count : n < best_count) {
                best_count = n;
                best = w;
            }
        }
    return best;
}

CPAugResult cp_aug(const DomainSample& a, const DomainSample& b, const CPAugConfig& cfg, const ProbMap* seg_prob_a) {
    const std::vector<Point> none;
    const auto& pa = a.points ? *a.points : none;
    const auto& pb = b.points ? *b.points : none;
    const Window donor = select_window(pa, a.image.rows(), a.image.cols(), cfg.crop_rows, cfg.crop_cols,
                                       cfg.stride_rows(), cfg.stride_cols(), true);
    const Window recipient = select_window(pb, b.image.rows(), b.image.cols(), cfg.crop_rows, cfg.crop_cols,
                                           cfg.stride_rows(), cfg.stride_cols(), false);

    CPAugResult res{b, donor, recipient};
    auto& out = res.sample;
    paste_window(out.image, a.image, donor, recipient);
    if (a.mask && out.mask) paste_window(*out.mask, *a.mask, donor, recipient);
    else out.mask.reset();

    std::vector<Point> pts;
    for (const auto& p : pb)
        if (!recipient.contains(p)) pts.push_back(p);

    const auto translate = [&](Point p) {
        return Point{p.row - donor.row + recipient.row, p.col - donor.col + recipient.col};
    };

    const bool relabel = cfg.boundary_relabel && seg_prob_a != nullptr;
    if (relabel) require_same_shape(seg_prob_a->fg, a.image, "cp_aug");
    if (!relabel) {
        for (const auto& p : pa)
            if (donor.contains(p)) pts.push_back(translate(p));
    } else {
        const auto comps = label_components(threshold(seg_prob_a->fg, static_cast<float>(cfg.relabel_threshold)));
        std::vector<char> done(static_cast<std::size_t>(comps.count) + 1, 0);
        for (const auto& p : pa) {
            const int id = comps.labels(p.row, p.col);
            if (id == 0) {
                // No segmentation support: fall back to the raw point.
                if (donor.contains(p)) pts.push_back(translate(p));
                continue;
            }
            if (done[static_cast<std::size_t>(id)]) continue;
            done[static_cast<std::size_t>(id)] = 1;
            double sr = 0.0, sc = 0.0;
            std::size_t inside = 0, outside = 0;
            for (int r = 0; r < comps.labels.rows(); ++r)
                for (int c = 0; c < comps.labels.cols(); ++c) {
                    if (comps.labels(r, c) != id) continue;
                    if (donor.contains({r, c})) {
                        sr += r;
                        sc += c;
                        ++inside;
                    } else {
                        ++outside;
                    }
                }
            if (inside == 0) continue;
            if (outside == 0) {
                if (donor.contains(p)) pts.push_back(translate(p));
                continue;
            }
            // Cut instance: re-center on the in-crop piece (snapped onto it).
            const double cr = sr / static_cast<double>(inside);
            const double cc = sc / static_cast<double>(inside);
            Point best{static_cast<int>(std::lround(cr)), static_cast<int>(std::lround(cc))};
            if (!(donor.contains(best) && comps.labels(best.row, best.col) == id)) {
                double bd = std::numeric_limits<double>::infinity();
                for (int r = donor.row; r < donor.row + donor.rows; ++r)
                    for (int c = donor.col; c < donor.col + donor.cols; ++c) {
                        if (comps.labels(r, c) != id) continue;
                        const double d = (r - cr) * (r - cr) + (c - cc) * (c - cc);
                        if (d < bd) {
                            bd = d;
                            best = {r, c};
                        }
                    }
            }
            pts.push_back(translate(best));
        }
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    out.points = std::move(pts);
    return res;
}

}  // namespace wda
