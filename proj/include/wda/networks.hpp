#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace wda {

enum class BlockType { hdd_lite, plain_conv };

std::string to_string(BlockType b);
BlockType block_from_string(const std::string& s);

struct BackboneConfig {
    int depth = 4;
    int base_channels = 16;
    BlockType block = BlockType::hdd_lite;
    int in_channels = 1;

    void validate() const;
    int multiple() const { return 1 << depth; }
};

struct DiscriminatorConfig {
    std::vector<int> channels{64, 128, 256, 512, 1};
    int kernel = 4;
    int stride = 2;
    double slope = 0.2;

    void validate() const;
};

// One feature block: hdd-lite (factorized + dilated depthwise branches, fused,
// residual) or two plain 3x3 convolutions.
class ConvBlockImpl : public torch::nn::Module {
public:
    ConvBlockImpl(int in, int out, BlockType type);
    torch::Tensor forward(const torch::Tensor& x);

private:
    BlockType type_;
    torch::nn::Conv2d proj_{nullptr};
    // hdd-lite
    torch::nn::Conv2d a1_{nullptr}, a2_{nullptr}, b_dw_{nullptr}, b_pw_{nullptr}, fuse_{nullptr};
    torch::nn::GroupNorm na_{nullptr}, nb_{nullptr}, nf_{nullptr};
    // plain
    torch::nn::Conv2d c1_{nullptr}, c2_{nullptr};
    torch::nn::GroupNorm n1_{nullptr}, n2_{nullptr};
};
TORCH_MODULE(ConvBlock);

// Encoder-decoder shared by G1 and G2. Output: base_channels at input resolution.
class TrunkImpl : public torch::nn::Module {
public:
    explicit TrunkImpl(const BackboneConfig& cfg);
    torch::Tensor forward(const torch::Tensor& x);
    int out_channels() const { return cfg_.base_channels; }

private:
    BackboneConfig cfg_;
    torch::nn::ModuleList enc_, dec_;
};
TORCH_MODULE(Trunk);

struct G1Outputs {
    torch::Tensor seg_logits;  // [B,2,H,W]
    torch::Tensor seg_prob;    // softmax of seg_logits
    torch::Tensor det_heat;    // [B,1,H,W], >= 0, density times `density_scale`
    torch::Tensor count_map;   // [B,1,H,W], counting subnet output
    torch::Tensor count_hat;   // [B], integral of count_map over `density_scale`
};

class G1Impl : public torch::nn::Module {
public:
    G1Impl(const BackboneConfig& cfg, double density_scale);
    /// Inputs whose sides are not multiples of 2^depth are reflect-padded and
    /// outputs cropped back.
    G1Outputs forward(const torch::Tensor& x);
    const BackboneConfig& config() const { return cfg_; }
    double density_scale() const { return density_scale_; }

    Trunk trunk{nullptr};
    torch::nn::Sequential seg_head{nullptr}, det_head{nullptr};
    ConvBlock count_block{nullptr};
    torch::nn::Conv2d count_out{nullptr};

private:
    BackboneConfig cfg_;
    double density_scale_;
};
TORCH_MODULE(G1);

struct G2Outputs {
    torch::Tensor density;  // [B,1,H,W], density times `density_scale`
    torch::Tensor count;    // [B]
};

class G2Impl : public torch::nn::Module {
public:
    G2Impl(const BackboneConfig& cfg, double density_scale);
    G2Outputs forward(const torch::Tensor& x);
    const BackboneConfig& config() const { return cfg_; }
    double density_scale() const { return density_scale_; }

    Trunk trunk{nullptr};
    torch::nn::Sequential head{nullptr};

private:
    BackboneConfig cfg_;
    double density_scale_;
};
TORCH_MODULE(G2);

class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(const DiscriminatorConfig& cfg);
    /// [B,2,H,W] probabilities -> [B,1,H/2^n,W/2^n] logits.
    torch::Tensor forward(const torch::Tensor& p);

private:
    DiscriminatorConfig cfg_;
    torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Integration layer: per-image sum over a [B,1,H,W] map divided by `scale`.
torch::Tensor integrate(const torch::Tensor& map, double scale);

/// Multi-scale count: resize by each factor, predict, average. Also returns
/// the per-scale counts ([S,B]).
struct MultiScaleCount {
    torch::Tensor mean;
    torch::Tensor per_scale;
};
MultiScaleCount multiscale_count(G2& g2, const torch::Tensor& x, const std::vector<double>& scales);

/// G2 density resampled back to the input resolution with its mass kept.
torch::Tensor multiscale_density(G2& g2, const torch::Tensor& x, const std::vector<double>& scales);

struct CopyReport {
    std::vector<std::string> copied;
    std::vector<std::string> mismatched;  // "name: reason"
    bool ok() const { return mismatched.empty(); }
};

/// Copies trunk and detection-head weights of G1 into G2. Throws ShapeError
/// with the mismatch report when any trunk tensor does not fit.
CopyReport init_g2_from_g1(G2& g2, const G1& g1);

std::int64_t parameter_count(const torch::nn::Module& m);

}  // namespace wda
