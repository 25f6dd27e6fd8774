#include "wda/image_ops.hpp"

#include <array>
#include <cmath>
#include <unordered_map>

namespace wda {

namespace {

constexpr std::array<std::array<int, 2>, 8> kNeighbors8{{
    {-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1},
}};

std::vector<std::array<int, 2>> disk_offsets(int radius) {
    std::vector<std::array<int, 2>> offs;
    for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc)
            if (dr * dr + dc * dc <= radius * radius) offs.push_back({dr, dc});
    return offs;
}

int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

}  // namespace

InstanceLabelMap label_components(const Mask& mask) {
    InstanceLabelMap out{LabelGrid(mask.rows(), mask.cols(), 0), 0};
    std::vector<std::array<int, 2>> stack;
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            if (mask(r, c) == 0 || out.labels(r, c) != 0) continue;
            const int id = ++out.count;
            out.labels(r, c) = id;
            stack.push_back({r, c});
            while (!stack.empty()) {
                const auto [pr, pc] = stack.back();
                stack.pop_back();
                for (const auto& [dr, dc] : kNeighbors8) {
                    const int nr = pr + dr;
                    const int nc = pc + dc;
                    if (!mask.contains(nr, nc) || mask(nr, nc) == 0 || out.labels(nr, nc) != 0) continue;
                    out.labels(nr, nc) = id;
                    stack.push_back({nr, nc});
                }
            }
        }
    }
    return out;
}

InstanceLabelMap compact_labels(const LabelGrid& labels) {
    InstanceLabelMap out{LabelGrid(labels.rows(), labels.cols(), 0), 0};
    std::unordered_map<int, int> remap;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int v = labels[i];
        if (v == 0) continue;
        auto [it, inserted] = remap.try_emplace(v, out.count + 1);
        if (inserted) ++out.count;
        out.labels[i] = it->second;
    }
    return out;
}

std::vector<int> instance_areas(const InstanceLabelMap& m) {
    std::vector<int> areas(static_cast<std::size_t>(m.count) + 1, 0);
    for (int v : m.labels) ++areas[static_cast<std::size_t>(v)];
    return areas;
}

Mask dilate(const Mask& m, int radius) {
    if (radius <= 0) return m;
    const auto offs = disk_offsets(radius);
    Mask out(m.rows(), m.cols(), 0);
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            if (m(r, c) == 0) continue;
            for (const auto& [dr, dc] : offs)
                if (out.contains(r + dr, c + dc)) out(r + dr, c + dc) = 1;
        }
    return out;
}

Mask erode(const Mask& m, int radius) {
    if (radius <= 0) return m;
    const auto offs = disk_offsets(radius);
    Mask out(m.rows(), m.cols(), 0);
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            if (m(r, c) == 0) continue;
            bool keep = true;
            for (const auto& [dr, dc] : offs) {
                if (m.contains(r + dr, c + dc) && m(r + dr, c + dc) == 0) {
                    keep = false;
                    break;
                }
            }
            out(r, c) = keep ? 1 : 0;
        }
    return out;
}

Mask open(const Mask& m, int radius) { return dilate(erode(m, radius), radius); }
Mask close(const Mask& m, int radius) { return erode(dilate(m, radius), radius); }

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0.0 || img.empty()) return img;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += k[static_cast<std::size_t>(i + radius)];
    }
    for (auto& v : k) v /= total;

    Image tmp(img.rows(), img.cols());
    for (int r = 0; r < img.rows(); ++r)
        for (int c = 0; c < img.cols(); ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[static_cast<std::size_t>(i + radius)] * img(r, reflect101(c + i, img.cols()));
            tmp(r, c) = static_cast<float>(acc);
        }
    Image out(img.rows(), img.cols());
    for (int r = 0; r < img.rows(); ++r)
        for (int c = 0; c < img.cols(); ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[static_cast<std::size_t>(i + radius)] * tmp(reflect101(r + i, img.rows()), c);
            out(r, c) = static_cast<float>(acc);
        }
    return out;
}

Gradient central_gradient(const Image& img) {
    Gradient g{Image(img.rows(), img.cols()), Image(img.rows(), img.cols())};
    const int R = img.rows();
    const int C = img.cols();
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            const int r0 = std::max(r - 1, 0);
            const int r1 = std::min(r + 1, R - 1);
            const int c0 = std::max(c - 1, 0);
            const int c1 = std::min(c + 1, C - 1);
            g.d_row(r, c) = r1 > r0 ? (img(r1, c) - img(r0, c)) / static_cast<float>(r1 - r0) : 0.0f;
            g.d_col(r, c) = c1 > c0 ? (img(r, c1) - img(r, c0)) / static_cast<float>(c1 - c0) : 0.0f;
        }
    return g;
}

Image resize_bilinear(const Image& img, int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw ShapeError("resize_bilinear: non-positive target size");
    if (rows == img.rows() && cols == img.cols()) return img;
    Image out(rows, cols);
    const double sr = static_cast<double>(img.rows()) / rows;
    const double sc = static_cast<double>(img.cols()) / cols;
    for (int r = 0; r < rows; ++r) {
        const double y = std::clamp((r + 0.5) * sr - 0.5, 0.0, static_cast<double>(img.rows() - 1));
        const int y0 = static_cast<int>(std::floor(y));
        const int y1 = std::min(y0 + 1, img.rows() - 1);
        const double fy = y - y0;
        for (int c = 0; c < cols; ++c) {
            const double x = std::clamp((c + 0.5) * sc - 0.5, 0.0, static_cast<double>(img.cols() - 1));
            const int x0 = static_cast<int>(std::floor(x));
            const int x1 = std::min(x0 + 1, img.cols() - 1);
            const double fx = x - x0;
            const double top = img(y0, x0) * (1 - fx) + img(y0, x1) * fx;
            const double bot = img(y1, x0) * (1 - fx) + img(y1, x1) * fx;
            out(r, c) = static_cast<float>(top * (1 - fy) + bot * fy);
        }
    }
    return out;
}

Mask threshold(const Grid<float>& prob, float t) {
    Mask m(prob.rows(), prob.cols(), 0);
    for (std::size_t i = 0; i < prob.size(); ++i) m[i] = prob[i] >= t ? 1 : 0;
    return m;
}

}  // namespace wda
