#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "wda/grid.hpp"
#include "wda/losses.hpp"

namespace wda {
namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

torch::Tensor onehot(const torch::Tensor& fg) { return torch::stack({1 - fg, fg}, 1); }

double value(const torch::Tensor& t) { return t.item<double>(); }

// Largest elementwise relative error between autograd and central differences.
double grad_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x, double h = 1e-6) {
    x = x.detach().clone().set_requires_grad(true);
    const auto auto_grad = torch::autograd::grad({f(x)}, {x})[0].detach();
    auto flat = x.detach().clone().flatten();
    double worst = 0.0;
    torch::NoGradGuard ng;
    for (int64_t i = 0; i < flat.numel(); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = value(f(flat.view(x.sizes())));
        flat[i] = orig - h;
        const double down = value(f(flat.view(x.sizes())));
        flat[i] = orig;
        const double num = (up - down) / (2 * h);
        const double ana = auto_grad.flatten()[i].item<double>();
        const double scale = std::max({std::abs(num), std::abs(ana), 1e-6});
        worst = std::max(worst, std::abs(num - ana) / scale);
    }
    return worst;
}

TEST(SegLoss, CertainCorrectPredictionIsZero) {
    const auto fg = (torch::rand({2, 8, 8}, kF64) > 0.5).to(torch::kFloat64);
    const auto y = onehot(fg);
    EXPECT_LE(value(seg_loss(y, y, y, y)), 1e-6);
}

TEST(SegLoss, FullyIgnoredTargetLeavesSourceTerm) {
    const auto p = onehot(torch::rand({2, 8, 8}, kF64) * 0.8 + 0.1);
    const auto y = onehot((torch::rand({2, 8, 8}, kF64) > 0.5).to(torch::kFloat64));
    const auto none = torch::zeros_like(y);
    EXPECT_DOUBLE_EQ(value(seg_loss(p, y, p, none)), value(partial_cross_entropy(p, y)));
}

TEST(SegLoss, UniformPredictionIsTwoLogTwo) {
    const auto p = torch::full({2, 2, 8, 8}, 0.5, kF64);
    const auto y = onehot((torch::rand({2, 8, 8}, kF64) > 0.5).to(torch::kFloat64));
    EXPECT_NEAR(value(seg_loss(p, y, p, y)), 2 * std::log(2.0), 1e-6);
}

TEST(SegLoss, NaNIsRejected) {
    auto p = torch::full({1, 2, 4, 4}, 0.5, kF64);
    p[0][0][1][1] = std::nan("");
    const auto y = onehot(torch::zeros({1, 4, 4}, kF64));
    EXPECT_THROW(seg_loss(p, y, p, y), NumericError);
}

TEST(SegLoss, IgnoredPixelsGetExactlyZeroGradient) {
    auto p = onehot(torch::rand({2, 8, 8}, kF64) * 0.8 + 0.1).set_requires_grad(true);
    auto y = onehot((torch::rand({2, 8, 8}, kF64) > 0.5).to(torch::kFloat64));
    const auto keep = (torch::rand({2, 1, 8, 8}, kF64) > 0.6).to(torch::kFloat64);
    y = y * keep;
    const auto g = torch::autograd::grad({partial_cross_entropy(p, y)}, {p})[0];
    EXPECT_EQ(value((g * (1 - keep)).abs().sum()), 0.0);
    EXPECT_GT(value((g * keep).abs().sum()), 0.0);
}

TEST(DetectionLoss, Examples) {
    const auto h = torch::rand({1, 1, 8, 8}, kF64);
    const auto z = torch::zeros_like(h);
    EXPECT_EQ(value(detection_loss(h, h, z, h, h, z, z, 3.0)), 0.0);
    EXPECT_EQ(value(detection_loss({}, {}, {}, torch::rand({1, 1, 8, 8}, kF64), h, z, z, 3.0)), 0.0);
    const auto one = [](double v) { return torch::full({1, 1, 1, 1}, v, kF64); };
    EXPECT_NEAR(value(detection_loss(one(2.0), one(0.0), one(0.5), {}, {}, {}, {}, 3.0)), 10.0, 1e-12);
    EXPECT_THROW(detection_loss(one(1), one(0), one(-1), {}, {}, {}, {}, 3.0), NumericError);
}

TEST(DetectionLoss, ZeroWeightPixelsGetZeroGradient) {
    auto hhat = torch::rand({2, 1, 8, 8}, kF64).set_requires_grad(true);
    const auto hbar = torch::rand({2, 1, 8, 8}, kF64);
    const auto w = (torch::rand({2, 1, 8, 8}, kF64) > 0.5).to(torch::kFloat64);
    const auto beta = torch::rand({2, 1, 8, 8}, kF64) * w;
    const auto g = torch::autograd::grad({detection_loss({}, {}, {}, hhat, hbar, w, beta, 3.0)}, {hhat})[0];
    EXPECT_EQ(value((g * (1 - w)).abs().sum()), 0.0);
}

TEST(Adversarial, DiscriminatorExamples) {
    const auto f = [](double v) { return torch::full({2, 1, 4, 4}, v, kF64); };
    EXPECT_NEAR(value(discriminator_loss(f(0.5), f(0.5))), 2 * std::log(2.0), 1e-6);
    EXPECT_LE(value(discriminator_loss(f(1.0), f(0.0))), 1e-6);
    EXPECT_NEAR(value(discriminator_loss(f(0.8), f(0.3))), -std::log(0.8) - std::log(0.7), 1e-6);
    EXPECT_NEAR(value(discriminator_loss(f(0.8), f(0.3))), 0.580, 1e-3);
    EXPECT_THROW(discriminator_loss(f(1.2), f(0.3)), NumericError);
}

TEST(Adversarial, GeneratorExamples) {
    const auto f = [](double v) { return torch::full({2, 1, 4, 4}, v, kF64); };
    EXPECT_LE(value(adversarial_loss(f(1.0))), 1e-6);
    EXPECT_NEAR(value(adversarial_loss(f(0.5))), std::log(2.0), 1e-6);
    EXPECT_NEAR(value(adversarial_loss(f(0.1))), 2.3026, 1e-4);
    EXPECT_THROW(adversarial_loss(f(-0.1)), NumericError);
}

TEST(Adversarial, LogitFormMatchesProbabilityForm) {
    const auto ls = torch::randn({2, 1, 4, 4}, kF64) * 2, lt = torch::randn({2, 1, 4, 4}, kF64) * 2;
    EXPECT_NEAR(value(discriminator_loss_logits(ls, lt)), value(discriminator_loss(torch::sigmoid(ls), torch::sigmoid(lt))), 1e-9);
    EXPECT_NEAR(value(adversarial_loss_logits(lt)), value(adversarial_loss(torch::sigmoid(lt))), 1e-9);
}

TEST(Counting, Examples) {
    EXPECT_EQ(counting_consistency(12.0, 10.0, 3.0), 0.0);
    EXPECT_EQ(counting_consistency(15.0, 10.0, 3.0), 2.0);
    EXPECT_EQ(counting_consistency(5.0, 10.0, 3.0), 2.0);
    EXPECT_THROW(counting_consistency(1.0, 1.0, -1.0), ConfigError);
    const auto t = torch::tensor({10.0, 10.0, 10.0}, kF64);
    EXPECT_NEAR(value(counting_consistency(torch::tensor({12.0, 15.0, 5.0}, kF64), t, 3.0)), 4.0 / 3.0, 1e-12);
}

TEST(Counting, HingeBandOnAGrid) {
    for (double T = 0; T <= 30; T += 2.5)
        for (double eps : {0.0, 1.0, 3.0, 5.5})
            for (double th = -5; th <= 40; th += 0.25) {
                const double v = counting_consistency(th, T, eps);
                if (th >= T - eps && th <= T + eps) ASSERT_EQ(v, 0.0);
                else if (th > T + eps) ASSERT_NEAR(v, th - T - eps, 1e-12);
                else ASSERT_NEAR(v, T - eps - th, 1e-12);
            }
}

TEST(Counting, ConvexInPrediction) {
    torch::manual_seed(3);
    const auto r = torch::rand({500, 5}, kF64);
    for (int i = 0; i < 500; ++i) {
        const double T = 30 * r[i][0].item<double>(), eps = 5 * r[i][1].item<double>();
        const double a = 40 * r[i][2].item<double>() - 5, b = 40 * r[i][3].item<double>() - 5;
        const double mid = counting_consistency((a + b) / 2, T, eps);
        ASSERT_LE(mid, (counting_consistency(a, T, eps) + counting_consistency(b, T, eps)) / 2 + 1e-12);
    }
}

TEST(Schedule, LambdaC) {
    EXPECT_EQ(LossWeights::lambda_c(0, 1000), 1.0);
    EXPECT_EQ(LossWeights::lambda_c(1000, 1000), 0.0);
    EXPECT_EQ(LossWeights::lambda_c(5000, 10000), 0.5);
    EXPECT_EQ(LossWeights::lambda_c(1500, 1000), 0.0);
}

TEST(Schedule, TotalCombinesWeightedParts) {
    LossWeights w;
    const auto s = [](double v) { return torch::tensor(v, kF64); };
    const LossParts parts{s(1.0), s(2.0), s(3.0), s(4.0)};
    EXPECT_NEAR(value(total_generator_loss(parts, w, 0, 100)), 1.0 + 2e-3 + 0.3 + 4.0, 1e-12);
    EXPECT_NEAR(value(total_generator_loss(parts, w, 50, 100)), 1.0 + 2e-3 + 0.3 + 2.0, 1e-12);
    EXPECT_NEAR(value(total_generator_loss({s(1.0), {}, {}, {}}, w, 0, 100)), 1.0, 1e-12);
    EXPECT_THROW(total_generator_loss(parts, w, -1, 100), ConfigError);
}

TEST(Gradients, SegLoss) {
    torch::manual_seed(1);
    const auto y_s = onehot((torch::rand({2, 8, 8}, kF64) > 0.5).to(torch::kFloat64));
    const auto y_t = onehot((torch::rand({2, 8, 8}, kF64) > 0.5).to(torch::kFloat64)) *
                     (torch::rand({2, 1, 8, 8}, kF64) > 0.5).to(torch::kFloat64);
    const auto p_t = onehot(torch::rand({2, 8, 8}, kF64) * 0.8 + 0.1);
    const auto p_s = onehot(torch::rand({2, 8, 8}, kF64) * 0.8 + 0.1);
    EXPECT_LT(grad_error([&](const torch::Tensor& x) { return seg_loss(x, y_s, p_t, y_t); }, p_s), 1e-4);
    EXPECT_LT(grad_error([&](const torch::Tensor& x) { return seg_loss(p_s, y_s, x, y_t); }, p_t), 1e-4);
}

TEST(Gradients, DetectionLoss) {
    torch::manual_seed(2);
    const auto r = [] { return torch::rand({1, 1, 8, 8}, kF64); };
    const auto h_s = r(), b_s = r(), hbar = r(), w = (r() > 0.5).to(torch::kFloat64), b_t = r();
    EXPECT_LT(grad_error([&](const torch::Tensor& x) { return detection_loss(x, h_s, b_s, {}, {}, {}, {}, 3.0); }, r()), 1e-4);
    EXPECT_LT(grad_error([&](const torch::Tensor& x) { return detection_loss({}, {}, {}, x, hbar, w, b_t, 3.0); }, r()), 1e-4);
}

TEST(Gradients, AdversarialPair) {
    torch::manual_seed(4);
    const auto d = [] { return torch::rand({1, 1, 8, 8}, kF64) * 0.9 + 0.05; };
    const auto ds = d(), dt = d();
    EXPECT_LT(grad_error([&](const torch::Tensor& x) { return discriminator_loss(x, dt); }, ds), 1e-4);
    EXPECT_LT(grad_error([&](const torch::Tensor& x) { return discriminator_loss(ds, x); }, dt), 1e-4);
    EXPECT_LT(grad_error([](const torch::Tensor& x) { return adversarial_loss(x); }, dt), 1e-4);
    const auto l = torch::randn({1, 1, 8, 8}, kF64);
    EXPECT_LT(grad_error([&](const torch::Tensor& x) { return discriminator_loss_logits(x, l); }, torch::randn({1, 1, 8, 8}, kF64)), 1e-4);
    EXPECT_LT(grad_error([](const torch::Tensor& x) { return adversarial_loss_logits(x); }, l), 1e-4);
}

TEST(Gradients, CountingHingeAwayFromKinks) {
    torch::manual_seed(5);
    const auto t = torch::rand({64}, kF64) * 20;
    auto th = t + (torch::rand({64}, kF64) * 16 - 8);
    // Push samples off the kinks at T +- eps.
    const auto d1 = (th - t - 3).abs(), d2 = (th - t + 3).abs();
    th = torch::where((d1 < 0.05) | (d2 < 0.05), th + 0.2, th);
    ASSERT_TRUE((((th - t - 3).abs() > 1e-2) & ((th - t + 3).abs() > 1e-2)).all().item<bool>());
    EXPECT_LT(grad_error([&](const torch::Tensor& x) { return counting_consistency(x, t, 3.0); }, th), 1e-4);
}

TEST(Losses, NonNegativeOnRandomInputs) {
    torch::manual_seed(6);
    for (int i = 0; i < 20; ++i) {
        const auto p = onehot(torch::rand({2, 8, 8}, kF64));
        const auto y = onehot((torch::rand({2, 8, 8}, kF64) > 0.5).to(torch::kFloat64));
        EXPECT_GE(value(seg_loss(p, y, p, y)), 0.0);
        const auto a = torch::rand({1, 1, 8, 8}, kF64), b = torch::rand({1, 1, 8, 8}, kF64);
        EXPECT_GE(value(detection_loss(a, b, b, a, b, a, b, 3.0)), 0.0);
        EXPECT_GE(value(discriminator_loss(a, b)), 0.0);
        EXPECT_GE(value(adversarial_loss(a)), 0.0);
    }
}

}  // namespace
}  // namespace wda
