#include "wda/networks.hpp"

#include <cmath>

#include "wda/grid.hpp"

namespace wda {

namespace F = torch::nn::functional;

std::string to_string(BlockType b) { return b == BlockType::hdd_lite ? "hdd-lite" : "plain-conv"; }

BlockType block_from_string(const std::string& s) {
    if (s == "hdd-lite") return BlockType::hdd_lite;
    if (s == "plain-conv") return BlockType::plain_conv;
    throw ConfigError("model.block must be hdd-lite or plain-conv, got '" + s + "'");
}

void BackboneConfig::validate() const {
    if (depth < 1 || depth > 6) throw ConfigError("model.depth must lie in 1..6");
    if (base_channels < 2 || base_channels % 2 != 0) throw ConfigError("model.base_channels must be even and >= 2");
    if (in_channels < 1) throw ConfigError("model.in_channels must be >= 1");
}

void DiscriminatorConfig::validate() const {
    if (channels.empty() || channels.back() != 1) throw ConfigError("discriminator channels must end with 1");
    for (int c : channels)
        if (c < 1) throw ConfigError("discriminator channels must be positive");
    if (kernel < 1 || stride < 1) throw ConfigError("discriminator kernel/stride must be positive");
}

namespace {

torch::nn::GroupNorm group_norm(int ch) {
    const int groups = ch % 4 == 0 ? 4 : (ch % 2 == 0 ? 2 : 1);
    return torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, ch));
}

torch::nn::Conv2d conv(int in, int out, std::vector<int64_t> k, std::vector<int64_t> pad, int groups = 1,
                       int dilation = 1, bool bias = true) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).padding(pad).groups(groups).dilation(dilation).bias(bias));
}

// Reflect-pads right/bottom so both sides are multiples of `m`.
torch::Tensor pad_to_multiple(const torch::Tensor& x, int m, int64_t& ph, int64_t& pw) {
    const auto H = x.size(2), W = x.size(3);
    ph = (m - H % m) % m;
    pw = (m - W % m) % m;
    if (ph == 0 && pw == 0) return x;
    if (ph < H && pw < W) return F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReflect));
    return F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
}

torch::Tensor crop_back(const torch::Tensor& y, int64_t H, int64_t W) {
    return y.size(2) == H && y.size(3) == W ? y : y.slice(2, 0, H).slice(3, 0, W);
}

}  // namespace

ConvBlockImpl::ConvBlockImpl(int in, int out, BlockType type) : type_(type) {
    if (in < 1 || out < 2 || out % 2 != 0) throw ConfigError("ConvBlock: bad channel counts");
    if (type == BlockType::hdd_lite) {
        if (in != out) proj_ = register_module("proj", conv(in, out, {1, 1}, {0, 0}));
        const int half = out / 2;
        a1_ = register_module("a1", conv(out, half, {1, 3}, {0, 1}));
        a2_ = register_module("a2", conv(half, half, {3, 1}, {1, 0}));
        na_ = register_module("na", group_norm(half));
        b_dw_ = register_module("b_dw", conv(out, out, {3, 3}, {2, 2}, out, 2));
        b_pw_ = register_module("b_pw", conv(out, half, {1, 1}, {0, 0}));
        nb_ = register_module("nb", group_norm(half));
        fuse_ = register_module("fuse", conv(out, out, {1, 1}, {0, 0}));
        nf_ = register_module("nf", group_norm(out));
    } else {
        c1_ = register_module("c1", conv(in, out, {3, 3}, {1, 1}));
        n1_ = register_module("n1", group_norm(out));
        c2_ = register_module("c2", conv(out, out, {3, 3}, {1, 1}));
        n2_ = register_module("n2", group_norm(out));
    }
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
    if (type_ == BlockType::plain_conv) {
        auto y = torch::relu(n1_(c1_(x)));
        return torch::relu(n2_(c2_(y)));
    }
    const auto base = proj_ ? proj_(x) : x;
    const auto a = torch::relu(na_(a2_(torch::relu(a1_(base)))));
    const auto b = torch::relu(nb_(b_pw_(b_dw_(base))));
    return torch::relu(nf_(fuse_(torch::cat({a, b}, 1))) + base);
}

TrunkImpl::TrunkImpl(const BackboneConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int c = cfg.base_channels;
    enc_ = register_module("enc", torch::nn::ModuleList());
    dec_ = register_module("dec", torch::nn::ModuleList());
    enc_->push_back(ConvBlock(cfg.in_channels, c, cfg.block));
    for (int i = 1; i <= cfg.depth; ++i) enc_->push_back(ConvBlock(c << (i - 1), c << i, cfg.block));
    for (int i = cfg.depth - 1; i >= 0; --i) dec_->push_back(ConvBlock((c << (i + 1)) + (c << i), c << i, cfg.block));
}

torch::Tensor TrunkImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> skips;
    auto y = enc_->ptr<ConvBlockImpl>(0)->forward(x);
    for (int i = 1; i <= cfg_.depth; ++i) {
        skips.push_back(y);
        y = enc_->ptr<ConvBlockImpl>(static_cast<size_t>(i))->forward(F::max_pool2d(y, F::MaxPool2dFuncOptions(2)));
    }
    for (int k = 0; k < cfg_.depth; ++k) {
        const auto& skip = skips[static_cast<size_t>(cfg_.depth - 1 - k)];
        y = F::interpolate(y, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
        y = dec_->ptr<ConvBlockImpl>(static_cast<size_t>(k))->forward(torch::cat({y, skip}, 1));
    }
    return y;
}

torch::Tensor integrate(const torch::Tensor& map, double scale) { return map.flatten(1).sum(1) / scale; }

G1Impl::G1Impl(const BackboneConfig& cfg, double density_scale) : cfg_(cfg), density_scale_(density_scale) {
    if (!(density_scale > 0)) throw ConfigError("density_scale must be positive");
    const int c = cfg.base_channels;
    trunk = register_module("trunk", Trunk(cfg));
    seg_head = register_module("seg_head", torch::nn::Sequential(ConvBlock(c, c, cfg.block), conv(c, 2, {1, 1}, {0, 0})));
    det_head = register_module("det_head", torch::nn::Sequential(ConvBlock(c, c, cfg.block), ConvBlock(c, c, cfg.block),
                                                                 conv(c, 1, {1, 1}, {0, 0})));
    count_block = register_module("count_block", ConvBlock(1, c, cfg.block));
    count_out = register_module("count_out", conv(c, 1, {1, 1}, {0, 0}));
    torch::NoGradGuard ng;
    // Start with a near-empty heatmap and a counting subnet that passes det_heat through.
    det_head->ptr<torch::nn::Conv2dImpl>(2)->bias.fill_(-4.0);
    count_out->weight.zero_();
    count_out->bias.zero_();
}

G1Outputs G1Impl::forward(const torch::Tensor& x) {
    int64_t ph = 0, pw = 0;
    const auto xin = pad_to_multiple(x, cfg_.multiple(), ph, pw);
    const auto f = trunk(xin);
    G1Outputs o;
    o.seg_logits = crop_back(seg_head->forward(f), x.size(2), x.size(3));
    o.seg_prob = torch::softmax(o.seg_logits, 1);
    o.det_heat = crop_back(F::softplus(det_head->forward(f)), x.size(2), x.size(3));
    o.count_map = o.det_heat + count_out(count_block(o.det_heat));
    o.count_hat = integrate(o.count_map, density_scale_);
    return o;
}

G2Impl::G2Impl(const BackboneConfig& cfg, double density_scale) : cfg_(cfg), density_scale_(density_scale) {
    if (!(density_scale > 0)) throw ConfigError("density_scale must be positive");
    const int c = cfg.base_channels;
    trunk = register_module("trunk", Trunk(cfg));
    head = register_module("head", torch::nn::Sequential(ConvBlock(c, c, cfg.block), ConvBlock(c, c, cfg.block),
                                                         conv(c, 1, {1, 1}, {0, 0})));
    torch::NoGradGuard ng;
    head->ptr<torch::nn::Conv2dImpl>(2)->bias.fill_(-4.0);
}

G2Outputs G2Impl::forward(const torch::Tensor& x) {
    int64_t ph = 0, pw = 0;
    const auto xin = pad_to_multiple(x, cfg_.multiple(), ph, pw);
    G2Outputs o;
    o.density = crop_back(F::softplus(head->forward(trunk(xin))), x.size(2), x.size(3));
    o.count = integrate(o.density, density_scale_);
    return o;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    net_ = torch::nn::Sequential();
    int in = 2;
    const int pad = (cfg.kernel - cfg.stride + 1) / 2;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
        net_->push_back(torch::nn::Conv2d(
            torch::nn::Conv2dOptions(in, cfg.channels[i], cfg.kernel).stride(cfg.stride).padding(pad)));
        if (i + 1 < cfg.channels.size())
            net_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(cfg.slope)));
        in = cfg.channels[i];
    }
    register_module("net", net_);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& p) { return net_->forward(p); }

namespace {

torch::Tensor resize_to(const torch::Tensor& x, int64_t H, int64_t W) {
    if (x.size(2) == H && x.size(3) == W) return x;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{H, W})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

int64_t scaled(int64_t n, double s) { return std::max<int64_t>(1, std::llround(static_cast<double>(n) * s)); }

}  // namespace

MultiScaleCount multiscale_count(G2& g2, const torch::Tensor& x, const std::vector<double>& scales) {
    if (scales.empty()) throw ConfigError("multiscale_count: no scales");
    std::vector<torch::Tensor> counts;
    for (double s : scales) counts.push_back(g2->forward(resize_to(x, scaled(x.size(2), s), scaled(x.size(3), s))).count);
    auto per = torch::stack(counts);
    return {per.mean(0), per};
}

torch::Tensor multiscale_density(G2& g2, const torch::Tensor& x, const std::vector<double>& scales) {
    if (scales.empty()) throw ConfigError("multiscale_density: no scales");
    torch::Tensor acc;
    for (double s : scales) {
        const auto out = g2->forward(resize_to(x, scaled(x.size(2), s), scaled(x.size(3), s)));
        auto back = F::adaptive_avg_pool2d(out.density, F::AdaptiveAvgPool2dFuncOptions({x.size(2), x.size(3)}));
        const auto mass = back.flatten(1).sum(1).clamp_min(1e-12);
        back = back * (out.density.flatten(1).sum(1) / mass).view({-1, 1, 1, 1});
        acc = acc.defined() ? acc + back : back;
    }
    return acc / static_cast<double>(scales.size());
}

CopyReport init_g2_from_g1(G2& g2, const G1& g1) {
    CopyReport rep;
    auto dst = g2->named_parameters(true);
    auto dst_buf = g2->named_buffers(true);
    torch::NoGradGuard ng;
    const auto copy_from = [&](const torch::OrderedDict<std::string, torch::Tensor>& src) {
        for (const auto& item : src) {
            std::string name = item.key();
            if (name.rfind("det_head.", 0) == 0) name = "head." + name.substr(9);
            else if (name.rfind("trunk.", 0) != 0) continue;
            torch::Tensor* target = dst.find(name);
            if (!target) target = dst_buf.find(name);
            if (!target) {
                rep.mismatched.push_back(name + ": missing in G2");
                continue;
            }
            if (target->sizes() != item.value().sizes()) {
                rep.mismatched.push_back(name + ": shape " + c10::str(item.value().sizes()) + " vs " +
                                         c10::str(target->sizes()));
                continue;
            }
            target->copy_(item.value());
            rep.copied.push_back(name);
        }
    };
    copy_from(g1->named_parameters(true));
    copy_from(g1->named_buffers(true));
    if (!rep.ok()) {
        std::string msg = "init_g2_from_g1: incompatible checkpoint:";
        for (const auto& m : rep.mismatched) msg += "\n  " + m;
        throw ShapeError(msg);
    }
    return rep;
}

std::int64_t parameter_count(const torch::nn::Module& m) {
    std::int64_t n = 0;
    for (const auto& p : m.parameters(true)) n += p.numel();
    return n;
}

}  // namespace wda
