#pragma once

#include <torch/torch.h>

namespace wda {

inline constexpr double kProbClip = 1e-7;

struct LossWeights {
    double lambda_a = 1e-3;     // adversarial
    double lambda_d = 1e-1;     // detection
    double lambda_focus = 3.0;  // focus weight on beta
    double epsilon = 3.0;       // counting margin
    double rho = 0.1;           // confident-background threshold for w

    /// max(0, 1 - z / z_max).
    static double lambda_c(long z, long z_max);
    void validate() const;
};

/// Cross-entropy over labeled pixels. `p` and `y` are [B,2,H,W]; a pixel whose
/// one-hot row is all zero is ignored. Pixel mean per image, then the mean over
/// images that have at least one labeled pixel (0 when none do).
torch::Tensor partial_cross_entropy(const torch::Tensor& p, const torch::Tensor& y);

/// Source term plus target term; the target labels may be partial.
torch::Tensor seg_loss(const torch::Tensor& p_s, const torch::Tensor& y_s, const torch::Tensor& p_t,
                       const torch::Tensor& yhat_t);

/// (weight)(pred - target)^2, pixel mean per image then batch mean.
torch::Tensor weighted_square_error(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& weight);

/// Source: (1 + lambda beta_s)(hhat_s - h_s)^2. Target: (w + lambda beta_t)(hhat_t - hbar_t)^2.
/// Either domain may be passed as undefined tensors to skip it.
torch::Tensor detection_loss(const torch::Tensor& hhat_s, const torch::Tensor& h_s, const torch::Tensor& beta_s,
                             const torch::Tensor& hhat_t, const torch::Tensor& hbar_t, const torch::Tensor& w_t,
                             const torch::Tensor& beta_t, double lambda_focus);

/// -mean log D(p^s) - mean log(1 - D(p^t)) on probabilities.
torch::Tensor discriminator_loss(const torch::Tensor& d_ps, const torch::Tensor& d_pt);
/// -mean log D(p^t) on probabilities.
torch::Tensor adversarial_loss(const torch::Tensor& d_pt);

// Same objectives on discriminator logits; used in training for stability.
torch::Tensor discriminator_loss_logits(const torch::Tensor& logit_s, const torch::Tensor& logit_t);
torch::Tensor adversarial_loss_logits(const torch::Tensor& logit_t);

/// max(0, T_hat - (T + eps)) + max(0, (T - eps) - T_hat), batch mean.
torch::Tensor counting_consistency(const torch::Tensor& t_hat, const torch::Tensor& t, double epsilon);
double counting_consistency(double t_hat, double t, double epsilon);

struct LossParts {
    torch::Tensor seg;
    torch::Tensor adv;
    torch::Tensor det;
    torch::Tensor cons;
};

/// L_seg + lambda_a L_adv + lambda_d L_det + lambda_c(z) L_cons; undefined parts are skipped.
torch::Tensor total_generator_loss(const LossParts& parts, const LossWeights& weights, long z, long z_max);

}  // namespace wda
