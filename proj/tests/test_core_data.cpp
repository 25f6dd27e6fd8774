#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "oracles.hpp"
#include "wda/core_data.hpp"

namespace fs = std::filesystem;

namespace wda {
namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("wda_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TEST(CentersFromMask, SquareCentroid) {
    Mask m(8, 8, 0);
    for (int r = 2; r <= 4; ++r)
        for (int c = 2; c <= 4; ++c) m(r, c) = 1;
    const auto pts = centers_from_mask(m);
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_EQ(pts[0], (Point{3, 3}));
}

TEST(CentersFromMask, EmptyMask) { EXPECT_TRUE(centers_from_mask(Mask(5, 5, 0)).empty()); }

TEST(CentersFromMask, ConcaveShapeSnapsToNearestMember) {
    // U shape: the centroid falls in the opening.
    Mask m(12, 12, 0);
    for (int r = 2; r <= 9; ++r) {
        m(r, 2) = m(r, 3) = 1;
        m(r, 8) = m(r, 9) = 1;
    }
    for (int c = 2; c <= 9; ++c) m(9, c) = m(8, c) = 1;
    const auto pts = centers_from_mask(m);
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_EQ(m(pts[0].row, pts[0].col), 1);
    const auto inst = label_components(m);
    EXPECT_EQ(pts[0], oracle::nearest_member_to_centroid(inst.labels, 1));
}

TEST(CentersFromMask, OnePointPerEightConnectedComponent) {
    Mask m(10, 10, 0);
    m(1, 1) = m(2, 2) = 1;  // diagonal neighbours: one component
    m(6, 6) = 1;
    EXPECT_EQ(centers_from_mask(m).size(), 2u);
}

TEST(SparseSampling, RoundsToNearest) {
    std::vector<Point> pts;
    for (int i = 0; i < 20; ++i) pts.push_back({i, i});
    EXPECT_EQ(sample_sparse_points(pts, {0.15, 1}).size(), 3u);
}

TEST(SparseSampling, AtLeastOnePoint) {
    EXPECT_EQ(sample_sparse_points({{4, 4}}, {0.05, 1}).size(), 1u);
    EXPECT_TRUE(sample_sparse_points({}, {0.5, 1}).empty());
}

TEST(SparseSampling, DeterministicSubsetWithoutReplacement) {
    std::vector<Point> pts;
    for (int i = 0; i < 40; ++i) pts.push_back({i, 2 * i});
    const auto a = sample_sparse_points(pts, {0.3, 77});
    const auto b = sample_sparse_points(pts, {0.3, 77});
    EXPECT_EQ(a, b);
    const std::set<Point> uniq(a.begin(), a.end());
    EXPECT_EQ(uniq.size(), a.size());
    for (const auto& p : a) EXPECT_NE(std::find(pts.begin(), pts.end(), p), pts.end());
    EXPECT_NE(sample_sparse_points(pts, {0.3, 78}), a);
}

TEST(SparseSampling, RejectsRatioOutsideUnitInterval) {
    EXPECT_THROW(sample_sparse_points({{0, 0}}, {0.0, 1}), ConfigError);
    EXPECT_THROW(sample_sparse_points({{0, 0}}, {1.5, 1}), ConfigError);
}

SynthConfig small_cfg() {
    SynthConfig cfg;
    cfg.n_source = 6;
    cfg.n_target_train = 6;
    cfg.n_target_test = 3;
    return cfg;
}

TEST(Synth, FixedSeedIsByteIdentical) {
    const auto a = synth_domain_pair(small_cfg(), 5);
    const auto b = synth_domain_pair(small_cfg(), 5);
    ASSERT_EQ(a.source.size(), b.source.size());
    for (std::size_t i = 0; i < a.source.size(); ++i) {
        EXPECT_EQ(a.source[i].image, b.source[i].image);
        EXPECT_EQ(*a.source[i].mask, *b.source[i].mask);
        EXPECT_EQ(*a.source[i].points, *b.source[i].points);
    }
    for (std::size_t i = 0; i < a.target_train.size(); ++i) EXPECT_EQ(*a.target_train[i].points, *b.target_train[i].points);
    EXPECT_NE(synth_domain_pair(small_cfg(), 6).source[0].image, a.source[0].image);
}

TEST(Synth, InstanceCountWithinRange) {
    SynthConfig cfg;
    cfg.n_source = 50;
    cfg.n_target_train = 0;
    cfg.n_target_test = 0;
    const auto d = synth_domain_pair(cfg, 11);
    std::size_t total = 0;
    for (const auto& s : d.source) {
        const auto n = s.points->size();
        EXPECT_GE(n, 3u);
        EXPECT_LE(n, 12u);
        total += n;
    }
    EXPECT_GE(total, 150u);
    EXPECT_LE(total, 600u);
}

TEST(Synth, GammaShiftMovesMeanIntensity) {
    SynthConfig cfg = small_cfg();
    cfg.n_source = 20;
    cfg.n_target_test = 20;
    const auto d = synth_domain_pair(cfg, 3);
    const auto mean = [](const std::vector<DomainSample>& v) {
        double s = 0;
        std::size_t n = 0;
        for (const auto& x : v) {
            s += grid_sum(x.image);
            n += x.image.size();
        }
        return s / static_cast<double>(n);
    };
    EXPECT_GT(std::abs(mean(d.source) - mean(d.target_test)), 0.02);
}

TEST(Synth, SplitsCarryTheRightAnnotations) {
    const auto d = synth_domain_pair(small_cfg(), 9);
    for (const auto& s : d.source) {
        ASSERT_TRUE(s.mask && s.points);
        EXPECT_EQ(s.domain, Domain::source);
        EXPECT_EQ(static_cast<int>(s.points->size()), label_components(*s.mask).count);
    }
    for (const auto& s : d.target_train) {
        EXPECT_FALSE(s.mask.has_value());
        ASSERT_TRUE(s.points.has_value());
        EXPECT_EQ(s.domain, Domain::target);
    }
    for (const auto& s : d.target_test) EXPECT_TRUE(s.mask.has_value());
}

TEST(Synth, SparseTargetPointsAreTrueCenters) {
    const auto d = synth_domain_pair(small_cfg(), 21);
    for (std::size_t i = 0; i < d.target_train.size(); ++i) {
        const auto& truth = d.target_train_truth[i];
        const auto& full = *truth.points;
        for (const auto& p : *d.target_train[i].points) {
            EXPECT_EQ((*truth.mask)(p.row, p.col), 1);
            EXPECT_NE(std::find(full.begin(), full.end(), p), full.end());
        }
    }
}

TEST(Synth, RejectsDegenerateConfig) {
    SynthConfig cfg;
    cfg.min_instances = 0;
    EXPECT_THROW(synth_domain_pair(cfg, 1), ConfigError);
    cfg = SynthConfig{};
    cfg.max_instances = 2;
    EXPECT_THROW(synth_domain_pair(cfg, 1), ConfigError);
}

TEST(LoadStack, PngSlicesAreOrderedAndRescaled) {
    const auto dir = fresh_dir("png_slices");
    for (int i = 3; i >= 0; --i) {
        cv::Mat m(128, 128, CV_8U, cv::Scalar(i * 60));
        cv::imwrite((dir / ("slice_" + std::to_string(i) + ".png")).string(), m);
    }
    const auto s = load_stack(dir, StackLayout::png_slices);
    ASSERT_EQ(s.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(s[i].image.rows(), 128);
        EXPECT_EQ(s[i].image.cols(), 128);
        EXPECT_NEAR(s[i].image(5, 5), i * 60 / 255.0, 1e-6);
    }
}

TEST(LoadStack, SixteenBitTiffFullScaleIsOne) {
    const auto dir = fresh_dir("tiff16");
    std::vector<cv::Mat> pages;
    for (int i = 0; i < 3; ++i) {
        cv::Mat m(32, 40, CV_16U, cv::Scalar(1000 * i));
        m.at<std::uint16_t>(1, 1) = 65535;
        pages.push_back(m);
    }
    ASSERT_TRUE(cv::imwritemulti((dir / "stack.tif").string(), pages));
    const auto s = load_stack(dir / "stack.tif", StackLayout::multipage_tiff);
    ASSERT_EQ(s.size(), 3u);
    for (const auto& x : s) EXPECT_FLOAT_EQ(*std::max_element(x.image.begin(), x.image.end()), 1.0f);
    EXPECT_NEAR(s[2].image(0, 0), 2000.0 / 65535.0, 1e-7);
}

TEST(LoadStack, MaskBinarized) {
    const auto dir = fresh_dir("mask_bin");
    cv::Mat m(16, 16, CV_8U, cv::Scalar(0));
    m.at<std::uint8_t>(3, 4) = 255;
    m.at<std::uint8_t>(5, 5) = 7;
    cv::imwrite((dir / "m.png").string(), m);
    const auto masks = load_mask_stack(dir, StackLayout::png_slices);
    ASSERT_EQ(masks.size(), 1u);
    EXPECT_EQ(masks[0](3, 4), 1);
    EXPECT_EQ(masks[0](5, 5), 1);
    EXPECT_EQ(count_nonzero(masks[0]), 2u);
}

TEST(LoadStack, ErrorsOnMissingAndInconsistentInput) {
    EXPECT_THROW(load_stack("/nonexistent/wda", StackLayout::png_slices), LoadError);
    EXPECT_THROW(load_stack("/nonexistent/stack.tif", StackLayout::multipage_tiff), LoadError);
    const auto dir = fresh_dir("mixed_shapes");
    cv::imwrite((dir / "a.png").string(), cv::Mat(16, 16, CV_8U, cv::Scalar(0)));
    cv::imwrite((dir / "b.png").string(), cv::Mat(16, 20, CV_8U, cv::Scalar(0)));
    EXPECT_THROW(load_stack(dir, StackLayout::png_slices), ShapeError);
}

TEST(Dataset, RoundTripIsLossless) {
    const auto d = synth_domain_pair(small_cfg(), 4);
    const auto dir = fresh_dir("roundtrip");
    save_dataset(dir, d.source);
    const auto back = load_dataset(dir, Domain::source);
    ASSERT_EQ(back.size(), d.source.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(*back[i].mask, *d.source[i].mask);
        EXPECT_EQ(*back[i].points, *d.source[i].points);
        for (std::size_t p = 0; p < back[i].image.size(); ++p)
            ASSERT_LE(std::abs(back[i].image[p] - d.source[i].image[p]), 1.0f / 65535.0f);
    }
    // Sparse-only target split: points without masks.
    const auto tdir = fresh_dir("roundtrip_target");
    save_dataset(tdir, d.target_train);
    const auto tback = load_dataset(tdir, Domain::target);
    EXPECT_FALSE(tback[0].mask.has_value());
    for (std::size_t i = 0; i < tback.size(); ++i) EXPECT_EQ(*tback[i].points, *d.target_train[i].points);
}

TEST(Dataset, PointsCsvRequiresHeaderAndValidSlices) {
    const auto dir = fresh_dir("csv");
    {
        std::ofstream f(dir / "bad.csv");
        f << "row,col\n1,2\n";
    }
    EXPECT_THROW(read_points_csv(dir / "bad.csv", 1), LoadError);
    {
        std::ofstream f(dir / "range.csv");
        f << "slice,row,col\n3,1,1\n";
    }
    EXPECT_THROW(read_points_csv(dir / "range.csv", 2), LoadError);
    {
        std::ofstream f(dir / "ok.csv");
        f << "slice,row,col\n1,4,5\n0,2,3\n1,6,7\n";
    }
    const auto pts = read_points_csv(dir / "ok.csv", 2);
    EXPECT_EQ(pts[0], (std::vector<Point>{{2, 3}}));
    EXPECT_EQ(pts[1], (std::vector<Point>{{4, 5}, {6, 7}}));
}

}  // namespace
}  // namespace wda
