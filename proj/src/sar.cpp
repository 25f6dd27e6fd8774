#include "wda/sar.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "wda/image_ops.hpp"

namespace wda {

void SARConfig::validate() const {
    if (iterations < 0 || smoothing < 0) throw ConfigError("sar: iterations and smoothing must be >= 0");
    if (band_px < 0) throw ConfigError("sar: band_px must be >= 0");
    if (!(edge_alpha > 0.0) || !(edge_sigma >= 0.0)) throw ConfigError("sar: edge parameters must be positive");
}

Image edge_stopping_map(const Image& image, double sigma, double alpha) {
    const Image smooth = gaussian_blur(image, sigma);
    const auto g = central_gradient(smooth);
    Image out(image.rows(), image.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m2 = static_cast<double>(g.d_row[i]) * g.d_row[i] + static_cast<double>(g.d_col[i]) * g.d_col[i];
        out[i] = static_cast<float>(1.0 / (1.0 + alpha * m2));
    }
    return out;
}

namespace {

// 3-pixel line structuring elements through the center: horizontal,
// vertical and both diagonals.
constexpr std::array<std::array<std::array<int, 2>, 2>, 4> kLines{{
    {{{0, -1}, {0, 1}}},
    {{{-1, 0}, {1, 0}}},
    {{{-1, -1}, {1, 1}}},
    {{{-1, 1}, {1, -1}}},
}};

std::uint8_t at_or(const Mask& u, int r, int c, std::uint8_t fallback) {
    return u.contains(r, c) ? u(r, c) : fallback;
}

// Supremum over lines of the erosion by each line.
Mask sup_inf(const Mask& u) {
    Mask out(u.rows(), u.cols(), 0);
    for (int r = 0; r < u.rows(); ++r)
        for (int c = 0; c < u.cols(); ++c) {
            if (!u(r, c)) continue;
            for (const auto& line : kLines) {
                bool all = true;
                for (const auto& [dr, dc] : line) all = all && at_or(u, r + dr, c + dc, 0);
                if (all) {
                    out(r, c) = 1;
                    break;
                }
            }
        }
    return out;
}

// Infimum over lines of the dilation by each line.
Mask inf_sup(const Mask& u) {
    Mask out(u.rows(), u.cols(), 0);
    for (int r = 0; r < u.rows(); ++r)
        for (int c = 0; c < u.cols(); ++c) {
            if (u(r, c)) {
                out(r, c) = 1;
                continue;
            }
            bool every_line_hits = true;
            for (const auto& line : kLines) {
                bool any = false;
                for (const auto& [dr, dc] : line) any = any || at_or(u, r + dr, c + dc, 0);
                if (!any) {
                    every_line_hits = false;
                    break;
                }
            }
            out(r, c) = every_line_hits ? 1 : 0;
        }
    return out;
}

struct Box {
    int r0, c0, r1, c1;  // inclusive
};

template <typename T>
Grid<T> crop(const Grid<T>& g, const Box& b) {
    Grid<T> out(b.r1 - b.r0 + 1, b.c1 - b.c0 + 1);
    for (int r = b.r0; r <= b.r1; ++r)
        for (int c = b.c0; c <= b.c1; ++c) out(r - b.r0, c - b.c0) = g(r, c);
    return out;
}

// Connected piece of `m` that best represents the original instance: the one
// overlapping `core` the most (falls back to overlap with `orig`).
Mask dominant_piece(const Mask& m, const Mask& core, const Mask& orig) {
    const auto comps = label_components(m);
    if (comps.count <= 1) return m;
    std::vector<long> score(static_cast<std::size_t>(comps.count) + 1, 0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto id = static_cast<std::size_t>(comps.labels[i]);
        if (id == 0) continue;
        score[id] += (core[i] ? 1'000'000L : 0L) + (orig[i] ? 1000L : 0L) + 1;
    }
    const auto best = static_cast<int>(std::max_element(score.begin() + 1, score.end()) - score.begin());
    Mask out(m.rows(), m.cols(), 0);
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = comps.labels[i] == best ? 1 : 0;
    return out;
}

}  // namespace

Mask curvature_smooth(const Mask& u, int step) {
    return step % 2 == 0 ? sup_inf(inf_sup(u)) : inf_sup(sup_inf(u));
}

Mask morphological_gac(const Image& edge_map, const Mask& init, int iterations, int smoothing, double balloon,
                       double balloon_threshold) {
    require_same_shape(edge_map, init, "morphological_gac");
    const auto dg = central_gradient(edge_map);
    Mask balloon_zone(edge_map.rows(), edge_map.cols(), 0);
    if (balloon != 0.0) {
        double thr = balloon_threshold;
        if (thr < 0.0) {
            std::vector<float> v(edge_map.begin(), edge_map.end());
            const auto k = static_cast<std::ptrdiff_t>(0.4 * static_cast<double>(v.size() - 1));
            std::nth_element(v.begin(), v.begin() + k, v.end());
            thr = v[static_cast<std::size_t>(k)];
        }
        for (std::size_t i = 0; i < edge_map.size(); ++i) balloon_zone[i] = edge_map[i] > thr / std::abs(balloon);
    }
    Mask u = init;
    int smooth_step = 0;
    for (int it = 0; it < iterations; ++it) {
        if (balloon != 0.0) {
            const Mask aux = balloon > 0 ? dilate(u, 1) : erode(u, 1);
            for (std::size_t i = 0; i < u.size(); ++i)
                if (balloon_zone[i]) u[i] = aux[i];
        }
        Image uf(u.rows(), u.cols());
        for (std::size_t i = 0; i < u.size(); ++i) uf[i] = u[i];
        const auto du = central_gradient(uf);
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double a = static_cast<double>(dg.d_row[i]) * du.d_row[i] + static_cast<double>(dg.d_col[i]) * du.d_col[i];
            if (a > 0) u[i] = 1;
            else if (a < 0) u[i] = 0;
        }
        for (int s = 0; s < smoothing; ++s) u = curvature_smooth(u, smooth_step++);
    }
    return u;
}

Mask refine_source_mask(const Image& image, const Mask& mask, const SARConfig& cfg) {
    cfg.validate();
    require_same_shape(image, mask, "refine_source_mask");
    const auto inst = label_components(mask);
    if (inst.count == 0) return mask;
    const Image g = edge_stopping_map(image, cfg.edge_sigma, cfg.edge_alpha);
    const int R = mask.rows();
    const int C = mask.cols();

    std::vector<Box> boxes(static_cast<std::size_t>(inst.count) + 1, Box{R, C, -1, -1});
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            const int id = inst.labels(r, c);
            if (id == 0) continue;
            auto& b = boxes[static_cast<std::size_t>(id)];
            b = {std::min(b.r0, r), std::min(b.c0, c), std::max(b.r1, r), std::max(b.c1, c)};
        }

    // Refined pixels per instance, in image coordinates.
    LabelGrid result = inst.labels;
    std::vector<Mask> refined(static_cast<std::size_t>(inst.count) + 1);
    const int margin = cfg.band_px + 3;
    for (int id = 1; id <= inst.count; ++id) {
        const auto& tight = boxes[static_cast<std::size_t>(id)];
        const Box box{std::max(0, tight.r0 - margin), std::max(0, tight.c0 - margin), std::min(R - 1, tight.r1 + margin),
                      std::min(C - 1, tight.c1 + margin)};
        Mask orig(box.r1 - box.r0 + 1, box.c1 - box.c0 + 1, 0);
        for (int r = box.r0; r <= box.r1; ++r)
            for (int c = box.c0; c <= box.c1; ++c) orig(r - box.r0, c - box.c0) = inst.labels(r, c) == id;
        Mask u = morphological_gac(crop(g, box), orig, cfg.iterations, cfg.smoothing, cfg.balloon, cfg.balloon_threshold);
        const Mask outer = dilate(orig, cfg.band_px);
        const Mask core = erode(orig, cfg.band_px);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = (u[i] && outer[i]) || core[i];
        u = dominant_piece(u, core, orig);
        if (count_nonzero(u) == 0) u = orig;
        Mask full(R, C, 0);
        for (int r = 0; r < u.rows(); ++r)
            for (int c = 0; c < u.cols(); ++c) full(r + box.r0, c + box.c0) = u(r, c);
        refined[static_cast<std::size_t>(id)] = std::move(full);
    }

    // Removals first, then growth that never touches another instance.
    for (std::size_t i = 0; i < result.size(); ++i) {
        const int id = result[i];
        if (id != 0 && !refined[static_cast<std::size_t>(id)][i]) result[i] = 0;
    }
    for (int id = 1; id <= inst.count; ++id) {
        const auto& m = refined[static_cast<std::size_t>(id)];
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
                if (!m(r, c) || result(r, c) != 0) continue;
                bool clash = false;
                for (int dr = -1; dr <= 1 && !clash; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (!result.contains(r + dr, c + dc)) continue;
                        const int o = result(r + dr, c + dc);
                        if (o != 0 && o != id) {
                            clash = true;
                            break;
                        }
                    }
                if (!clash) result(r, c) = id;
            }
    }

    // Keep one connected piece per instance so nothing splits.
    Mask out(R, C, 0);
    for (int id = 1; id <= inst.count; ++id) {
        Mask m(R, C, 0);
        Mask orig(R, C, 0);
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = result[i] == id;
            orig[i] = inst.labels[i] == id;
        }
        if (count_nonzero(m) == 0) m = orig;
        m = dominant_piece(m, erode(orig, cfg.band_px), orig);
        for (std::size_t i = 0; i < m.size(); ++i) out[i] |= m[i];
    }
    return out;
}

DomainSample refine_source_sample(const DomainSample& sample, const SARConfig& cfg) {
    if (sample.domain != Domain::source) throw ConfigError("refine_source_sample: target labels must not be refined");
    if (!sample.mask) throw ConfigError("refine_source_sample: sample has no mask");
    DomainSample out = sample;
    out.mask = refine_source_mask(sample.image, *sample.mask, cfg);
    return out;
}

}  // namespace wda
