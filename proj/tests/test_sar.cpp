#include <gtest/gtest.h>

#include <cmath>

#include "wda/image_ops.hpp"
#include "wda/sar.hpp"

namespace wda {
namespace {

Mask disk(int rows, int cols, double cr, double cc, double radius) {
    Mask m(rows, cols, 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = std::hypot(r - cr, c - cc) <= radius;
    return m;
}

Image render(const Mask& m, float fg, float bg) {
    Image img(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) img[i] = m[i] ? fg : bg;
    return img;
}

double iou(const Mask& a, const Mask& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] && b[i];
        uni += a[i] || b[i];
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

// Mean distance from the boundary pixels of `m` to the true circle.
double boundary_error(const Mask& m, double cr, double cc, double radius) {
    const Mask inner = erode(m, 1);
    double sum = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (m(r, c) && !inner(r, c)) {
                sum += std::abs(std::hypot(r - cr, c - cc) - radius);
                ++n;
            }
    return n ? sum / static_cast<double>(n) : 1e9;
}

TEST(EdgeMap, LowOnEdgesHighOnFlatRegions) {
    const auto truth = disk(64, 64, 32, 32, 15);
    const auto g = edge_stopping_map(render(truth, 0.8f, 0.2f), 2.0, 1000.0);
    EXPECT_GT(g(32, 32), 0.99f);
    EXPECT_GT(g(2, 2), 0.99f);
    EXPECT_LT(g(32, 47), 0.2f);
}

TEST(Refine, ExactMaskOnCleanEdgeIsKept) {
    const auto truth = disk(80, 80, 40, 40, 18);
    const auto out = refine_source_mask(render(truth, 0.8f, 0.2f), truth);
    EXPECT_GE(iou(out, truth), 0.95);
}

TEST(Refine, UniformImageStaysInsideBand) {
    const auto m = disk(64, 64, 32, 32, 14);
    SARConfig cfg;
    const auto out = refine_source_mask(Image(64, 64, 0.5f), m, cfg);
    const auto outer = dilate(m, cfg.band_px), core = erode(m, cfg.band_px);
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (core[i]) EXPECT_EQ(out[i], 1);
        if (!outer[i]) EXPECT_EQ(out[i], 0);
    }
}

TEST(Refine, ContourStartingInsideMovesTowardTheEdge) {
    const double R = 18.0;
    const auto truth = disk(80, 80, 40, 40, R);
    const auto shrunk = disk(80, 80, 40, 40, R - 3.0);
    const auto image = render(truth, 0.85f, 0.15f);
    const auto out = refine_source_mask(image, shrunk);
    EXPECT_LT(boundary_error(out, 40, 40, R), boundary_error(shrunk, 40, 40, R));
    EXPECT_GT(iou(out, truth), iou(shrunk, truth));
}

TEST(Refine, ComponentCountIsPreserved) {
    Mask m(96, 96, 0);
    for (const auto& [r, c, rad] : std::vector<std::array<double, 3>>{{20, 20, 8}, {20, 40, 7}, {60, 60, 12}, {80, 15, 6}}) {
        const auto d = disk(96, 96, r, c, rad);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] |= d[i];
    }
    // Image edges sit slightly outside the masks so instances try to grow.
    const auto image = render(dilate(m, 2), 0.8f, 0.2f);
    const auto before = label_components(m).count;
    ASSERT_EQ(before, 4);
    EXPECT_EQ(label_components(refine_source_mask(image, m)).count, before);
}

TEST(Refine, SecondPassChangesLittle) {
    const auto truth = disk(80, 80, 40, 40, 18);
    const auto image = render(truth, 0.8f, 0.2f);
    const auto once = refine_source_mask(image, disk(80, 80, 40, 40, 16));
    const auto twice = refine_source_mask(image, once);
    std::size_t diff = 0;
    for (std::size_t i = 0; i < once.size(); ++i) diff += once[i] != twice[i];
    EXPECT_LT(static_cast<double>(diff), 0.01 * static_cast<double>(count_nonzero(once)));
}

TEST(Refine, TargetSamplesAreRejected) {
    DomainSample s;
    s.image = Image(16, 16, 0.5f);
    s.mask = Mask(16, 16, 0);
    s.domain = Domain::target;
    EXPECT_THROW(refine_source_sample(s), ConfigError);
    s.domain = Domain::source;
    s.mask.reset();
    EXPECT_THROW(refine_source_sample(s), ConfigError);
}

TEST(Refine, EmptyMaskAndBadConfig) {
    const Mask empty(16, 16, 0);
    EXPECT_EQ(refine_source_mask(Image(16, 16, 0.3f), empty), empty);
    SARConfig bad;
    bad.band_px = -1;
    EXPECT_THROW(refine_source_mask(Image(16, 16, 0.3f), empty, bad), ConfigError);
}

}  // namespace
}  // namespace wda
