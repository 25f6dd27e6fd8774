#include "wda/losses.hpp"

#include <algorithm>

#include "wda/grid.hpp"

namespace wda {

double LossWeights::lambda_c(long z, long z_max) {
    if (z_max <= 0) return 0.0;
    return std::max(0.0, 1.0 - static_cast<double>(z) / static_cast<double>(z_max));
}

void LossWeights::validate() const {
    if (lambda_a < 0 || lambda_d < 0 || lambda_focus < 0 || epsilon < 0)
        throw ConfigError("losses: weights and margin must be non-negative");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("losses: rho must lie in (0,1)");
}

namespace {

void check_finite(const torch::Tensor& t, const char* what) {
    if (!torch::isfinite(t).all().item<bool>()) throw NumericError(std::string(what) + ": non-finite input");
}

void check_prob(const torch::Tensor& t, const char* what) {
    check_finite(t, what);
    if ((t < 0).any().item<bool>() || (t > 1).any().item<bool>())
        throw NumericError(std::string(what) + ": probabilities outside [0,1]");
}

torch::Tensor safe_log(const torch::Tensor& p) { return torch::log(p.clamp(kProbClip, 1.0 - kProbClip)); }

}  // namespace

torch::Tensor partial_cross_entropy(const torch::Tensor& p, const torch::Tensor& y) {
    if (p.sizes() != y.sizes() || p.dim() != 4) throw ShapeError("partial_cross_entropy: p and y must be equal [B,C,H,W]");
    check_finite(p, "seg_loss");
    const auto ce = -(y * safe_log(p)).sum(1);             // [B,H,W]
    const auto labeled = y.sum(1).flatten(1);              // [B,HW], 1 on labeled pixels
    const auto n = labeled.sum(1);                         // [B]
    const auto per_image = ce.flatten(1).sum(1) / n.clamp_min(1.0);
    const auto has = (n > 0).to(p.dtype());
    const auto images = has.sum();
    if (images.item<double>() == 0.0) return (p * 0).sum();
    return (per_image * has).sum() / images;
}

torch::Tensor seg_loss(const torch::Tensor& p_s, const torch::Tensor& y_s, const torch::Tensor& p_t,
                       const torch::Tensor& yhat_t) {
    torch::Tensor loss;
    if (p_s.defined()) loss = partial_cross_entropy(p_s, y_s);
    if (p_t.defined()) {
        const auto t = partial_cross_entropy(p_t, yhat_t);
        loss = loss.defined() ? loss + t : t;
    }
    if (!loss.defined()) throw ConfigError("seg_loss: no inputs");
    return loss;
}

torch::Tensor weighted_square_error(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& weight) {
    if (pred.sizes() != target.sizes() || pred.sizes() != weight.sizes())
        throw ShapeError("detection_loss: shapes differ");
    check_finite(pred, "detection_loss");
    if ((weight < 0).any().item<bool>()) throw NumericError("detection_loss: negative weight");
    return (weight * (pred - target).square()).flatten(1).mean(1).mean();
}

torch::Tensor detection_loss(const torch::Tensor& hhat_s, const torch::Tensor& h_s, const torch::Tensor& beta_s,
                             const torch::Tensor& hhat_t, const torch::Tensor& hbar_t, const torch::Tensor& w_t,
                             const torch::Tensor& beta_t, double lambda_focus) {
    if (lambda_focus < 0) throw NumericError("detection_loss: negative lambda");
    torch::Tensor loss;
    if (hhat_s.defined()) loss = weighted_square_error(hhat_s, h_s, 1.0 + lambda_focus * beta_s);
    if (hhat_t.defined()) {
        if ((w_t < 0).any().item<bool>() || (beta_t < 0).any().item<bool>())
            throw NumericError("detection_loss: negative weight");
        const auto t = weighted_square_error(hhat_t, hbar_t, w_t + lambda_focus * beta_t);
        loss = loss.defined() ? loss + t : t;
    }
    if (!loss.defined()) throw ConfigError("detection_loss: no inputs");
    return loss;
}

torch::Tensor discriminator_loss(const torch::Tensor& d_ps, const torch::Tensor& d_pt) {
    check_prob(d_ps, "discriminator_loss");
    check_prob(d_pt, "discriminator_loss");
    return -safe_log(d_ps).mean() - safe_log(1.0 - d_pt).mean();
}

torch::Tensor adversarial_loss(const torch::Tensor& d_pt) {
    check_prob(d_pt, "adversarial_loss");
    return -safe_log(d_pt).mean();
}

torch::Tensor discriminator_loss_logits(const torch::Tensor& logit_s, const torch::Tensor& logit_t) {
    check_finite(logit_s, "discriminator_loss");
    check_finite(logit_t, "discriminator_loss");
    namespace F = torch::nn::functional;
    return F::binary_cross_entropy_with_logits(logit_s, torch::ones_like(logit_s)) +
           F::binary_cross_entropy_with_logits(logit_t, torch::zeros_like(logit_t));
}

torch::Tensor adversarial_loss_logits(const torch::Tensor& logit_t) {
    check_finite(logit_t, "adversarial_loss");
    return torch::nn::functional::binary_cross_entropy_with_logits(logit_t, torch::ones_like(logit_t));
}

torch::Tensor counting_consistency(const torch::Tensor& t_hat, const torch::Tensor& t, double epsilon) {
    if (epsilon < 0) throw ConfigError("counting_consistency: epsilon must be >= 0");
    if (t_hat.sizes() != t.sizes()) throw ShapeError("counting_consistency: shapes differ");
    return (torch::relu(t_hat - (t + epsilon)) + torch::relu((t - epsilon) - t_hat)).mean();
}

double counting_consistency(double t_hat, double t, double epsilon) {
    if (epsilon < 0) throw ConfigError("counting_consistency: epsilon must be >= 0");
    return std::max(0.0, t_hat - (t + epsilon)) + std::max(0.0, (t - epsilon) - t_hat);
}

torch::Tensor total_generator_loss(const LossParts& parts, const LossWeights& weights, long z, long z_max) {
    if (z < 0) throw ConfigError("total_generator_loss: z must be >= 0");
    torch::Tensor total;
    const auto add = [&](const torch::Tensor& t, double w) {
        if (!t.defined() || w == 0.0) return;
        total = total.defined() ? total + w * t : w * t;
    };
    add(parts.seg, 1.0);
    add(parts.adv, weights.lambda_a);
    add(parts.det, weights.lambda_d);
    add(parts.cons, LossWeights::lambda_c(z, z_max));
    if (!total.defined()) throw ConfigError("total_generator_loss: no loss terms");
    return total;
}

}  // namespace wda
