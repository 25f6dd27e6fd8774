#include <gtest/gtest.h>

#include "wda/augment.hpp"
#include "wda/image_ops.hpp"

namespace wda {
namespace {

Image ramp(int rows, int cols) {
    Image g(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) g(r, c) = static_cast<float>(r * cols + c) / static_cast<float>(rows * cols);
    return g;
}

DomainSample target_sample(int rows, int cols, std::vector<Point> pts, float fill = 0.0f) {
    DomainSample s;
    s.image = Image(rows, cols, fill);
    s.points = std::move(pts);
    s.domain = Domain::target;
    return s;
}

TEST(Geometric, HorizontalFlipMovesPoint) {
    const GeometricDraw d{true, false, 0};
    EXPECT_EQ(transform_point({10, 3}, 128, 128, d), (Point{10, 124}));
}

TEST(Geometric, DoubleHalfTurnIsIdentity) {
    Image g = ramp(7, 11);
    const GeometricDraw half{false, false, 2};
    EXPECT_EQ(transform_grid(transform_grid(g, half), half), g);
    const GeometricDraw quarter{false, false, 1};
    auto q = g;
    for (int k = 0; k < 4; ++k) q = transform_grid(q, quarter);
    EXPECT_EQ(q, g);
}

TEST(Geometric, PointsFollowTheGrid) {
    for (int fh = 0; fh < 2; ++fh)
        for (int fv = 0; fv < 2; ++fv)
            for (int k = 0; k < 4; ++k) {
                const GeometricDraw d{fh == 1, fv == 1, k};
                const int rows = 9, cols = 13;
                for (int r = 0; r < rows; r += 2)
                    for (int c = 0; c < cols; c += 3) {
                        Mask m(rows, cols, 0);
                        m(r, c) = 1;
                        const auto t = transform_grid(m, d);
                        const auto p = transform_point({r, c}, rows, cols, d);
                        ASSERT_TRUE(t.contains(p.row, p.col));
                        EXPECT_EQ(t(p.row, p.col), 1) << fh << fv << k << " " << r << "," << c;
                    }
            }
}

TEST(Geometric, RotationPreservesComponents) {
    Mask m(20, 30, 0);
    for (int r = 2; r < 6; ++r)
        for (int c = 3; c < 9; ++c) m(r, c) = 1;
    for (int r = 10; r < 17; ++r) m(r, 20) = 1;
    m(18, 2) = 1;
    const auto before = label_components(m);
    for (int k = 0; k < 4; ++k) {
        const auto t = transform_grid(m, GeometricDraw{k % 2 == 1, false, k});
        EXPECT_EQ(label_components(t).count, before.count);
        EXPECT_EQ(count_nonzero(t), count_nonzero(m));
    }
}

TEST(Geometric, SampleKeepsImageMaskAndPointsAligned) {
    DomainSample s;
    s.image = ramp(16, 24);
    s.mask = Mask(16, 24, 0);
    (*s.mask)(4, 7) = 1;
    s.points = std::vector<Point>{{4, 7}};
    const auto out = apply_geometric(s, {true, true, 1});
    ASSERT_TRUE(out.points && out.mask);
    EXPECT_EQ(out.image.rows(), 24);
    const auto p = out.points->front();
    EXPECT_EQ((*out.mask)(p.row, p.col), 1);
    EXPECT_EQ(out.image(p.row, p.col), s.image(4, 7));
}

TEST(Photometric, StaysInUnitRangeAndIdentityIsNoop) {
    const auto g = ramp(10, 10);
    EXPECT_EQ(apply_photometric(g, {}), g);
    Rng rng(9);
    AugPolicy policy;
    for (int i = 0; i < 50; ++i) {
        const auto out = apply_photometric(g, draw_photometric(policy, rng));
        for (float v : out) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
    }
}

TEST(CPAug, DonorPointsAreAdded) {
    // Five donor points packed into one 64x64 window of a; b has three points
    // far from its emptiest window.
    const std::vector<Point> pa{{10, 10}, {20, 30}, {40, 12}, {50, 50}, {30, 40}};
    const std::vector<Point> pb{{5, 5}, {10, 100}, {20, 60}};
    const auto a = target_sample(128, 128, pa, 1.0f);
    const auto b = target_sample(128, 128, pb);
    const auto res = cp_aug(a, b, {});
    EXPECT_EQ(res.donor, (Window{0, 0, 64, 64}));
    for (const auto& p : pb) EXPECT_FALSE(res.recipient.contains(p));
    EXPECT_EQ(res.sample.points->size(), pb.size() + 5);
    for (const auto& p : *res.sample.points)
        if (res.recipient.contains(p)) EXPECT_EQ(res.sample.image(p.row, p.col), 1.0f);
}

TEST(CPAug, EmptyDonorDropsRecipientPointsOnly) {
    const auto a = target_sample(96, 96, {});
    const std::vector<Point> pb{{1, 1}, {2, 2}, {90, 90}};
    const auto res = cp_aug(a, target_sample(96, 96, pb), {});
    // Every window holds at least one point of b except those away from both
    // clusters; the recipient is the first such window in scan order.
    for (const auto& p : *res.sample.points) EXPECT_FALSE(res.recipient.contains(p));
    EXPECT_EQ(res.sample.points->size(), 3u);
}

TEST(CPAug, PastedRegionIsBitIdentical) {
    DomainSample a = target_sample(80, 100, {{30, 30}});
    a.image = ramp(80, 100);
    const auto b = target_sample(80, 100, {{70, 90}}, 0.25f);
    const auto res = cp_aug(a, b, {32, 32, true, 0.5});
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c)
            ASSERT_EQ(res.sample.image(res.recipient.row + r, res.recipient.col + c),
                      a.image(res.donor.row + r, res.donor.col + c));
    // Outside the window b is untouched.
    for (int r = 0; r < 80; ++r)
        for (int c = 0; c < 100; ++c)
            if (!res.recipient.contains({r, c})) ASSERT_EQ(res.sample.image(r, c), 0.25f);
}

TEST(CPAug, CutInstanceIsRecentredOnItsPiece) {
    // Instance spans columns 50..74; donor window is columns 0..63 (cut at 64),
    // so 60% of it would lie in the crop only if wider. Here 14/25 cols are in.
    const std::vector<Point> pa{{20, 62}, {10, 10}, {30, 20}, {40, 40}};
    DomainSample a = target_sample(128, 128, pa);
    ProbMap seg{Grid<float>(128, 128, 0.0f)};
    for (int r = 15; r < 26; ++r)
        for (int c = 50; c < 75; ++c) seg.fg(r, c) = 0.9f;
    const auto b = target_sample(128, 128, {{120, 120}});
    const auto with = cp_aug(a, b, {}, &seg);
    const auto without = cp_aug(a, b, {});
    ASSERT_EQ(with.donor, (Window{0, 0, 64, 64}));
    const Point moved{20 + with.recipient.row, 57 + with.recipient.col};  // centroid of cols 50..63
    EXPECT_NE(std::find(with.sample.points->begin(), with.sample.points->end(), moved), with.sample.points->end());
    const Point raw{20 + without.recipient.row, 62 + without.recipient.col};
    EXPECT_NE(std::find(without.sample.points->begin(), without.sample.points->end(), raw),
              without.sample.points->end());
}

TEST(CPAug, OversizedCropIsRejected) {
    const auto a = target_sample(32, 32, {});
    EXPECT_THROW(cp_aug(a, a, {64, 64, true, 0.5}), ConfigError);
}

TEST(CPAug, Deterministic) {
    const auto a = target_sample(64, 96, {{5, 5}, {40, 70}, {41, 71}});
    const auto b = target_sample(64, 96, {{10, 10}, {60, 90}});
    const CPAugConfig cfg{32, 32, true, 0.5};
    const auto x = cp_aug(a, b, cfg), y = cp_aug(a, b, cfg);
    EXPECT_EQ(x.donor, y.donor);
    EXPECT_EQ(x.recipient, y.recipient);
    EXPECT_EQ(*x.sample.points, *y.sample.points);
    EXPECT_EQ(x.sample.image, y.sample.image);
}

TEST(SelectWindow, LastPositionIsScanned) {
    // Stride 16 on a 100-wide image reaches 0,16,32 and then the forced 36.
    const auto w = select_window({{2, 99}}, 64, 100, 64, 64, 16, 16, true);
    EXPECT_EQ(w.col, 36);
}

}  // namespace
}  // namespace wda
