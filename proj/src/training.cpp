#include "wda/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "wda/augment.hpp"
#include "wda/checkpoint.hpp"
#include "wda/evaluation.hpp"
#include "wda/heatmap.hpp"
#include "wda/losses.hpp"
#include "wda/pseudo_label.hpp"
#include "wda/random.hpp"
#include "wda/sar.hpp"

namespace wda {

namespace {

// Seed-tree tags.
constexpr std::uint64_t kInitTag = 11;
constexpr std::uint64_t kSourceTag = 21;
constexpr std::uint64_t kCountTag = 22;
constexpr std::uint64_t kAdaptTag = 23;

void init_torch(std::uint64_t seed) {
    torch::set_num_threads(1);
    torch::manual_seed(seed);
}

template <typename T>
Grid<T> crop_grid(const Grid<T>& g, int r0, int c0, int h, int w) {
    Grid<T> out(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) out(r, c) = g(r0 + r, c0 + c);
    return out;
}

std::vector<Point> crop_points(const std::vector<Point>& pts, int r0, int c0, int h, int w) {
    std::vector<Point> out;
    for (const auto& p : pts)
        if (p.row >= r0 && p.row < r0 + h && p.col >= c0 && p.col < c0 + w) out.push_back({p.row - r0, p.col - c0});
    return out;
}

struct CropBox {
    int r0 = 0, c0 = 0, h = 0, w = 0;
    bool full = true;
};

CropBox draw_crop(Rng& rng, int rows, int cols, int patch) {
    CropBox b;
    b.h = std::min(patch, rows);
    b.w = std::min(patch, cols);
    b.r0 = rows > b.h ? uniform_int(rng, 0, rows - b.h) : 0;
    b.c0 = cols > b.w ? uniform_int(rng, 0, cols - b.w) : 0;
    b.full = b.h == rows && b.w == cols;
    return b;
}

torch::Tensor stack_grids(const std::vector<Grid<float>>& grids) {
    std::vector<torch::Tensor> ts;
    for (const auto& g : grids)
        ts.push_back(torch::from_blob(const_cast<float*>(g.data()), {1, g.rows(), g.cols()}, torch::kFloat32).clone());
    return torch::stack(ts);
}

Grid<float> onehot_plane(const Mask& m, int cls) {
    Grid<float> g(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) g[i] = (m[i] != 0) == (cls == 1) ? 1.0f : 0.0f;
    return g;
}

Grid<float> scaled_density(const std::vector<Point>& pts, int rows, int cols, double sigma, double scale) {
    auto d = render_density(pts, rows, cols, sigma).values;
    for (auto& v : d) v = static_cast<float>(v * scale);
    return d;
}

// Dense source batch: image, one-hot mask, heatmap target, focus weight, count.
struct SourceBatch {
    torch::Tensor x, y, h, beta, count;
};

SourceBatch make_source_batch(const RunConfig& cfg, const std::vector<DomainSample>& data, Rng& rng) {
    std::vector<Grid<float>> xs, y0, y1, hs, bs;
    std::vector<float> counts;
    for (int b = 0; b < cfg.optim.batch_size; ++b) {
        const auto& s = data[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(data.size()) - 1))];
        const auto box = draw_crop(rng, s.image.rows(), s.image.cols(), cfg.optim.patch);
        DomainSample v;
        v.image = crop_grid(s.image, box.r0, box.c0, box.h, box.w);
        v.mask = crop_grid(*s.mask, box.r0, box.c0, box.h, box.w);
        v.points = crop_points(*s.points, box.r0, box.c0, box.h, box.w);
        double count = static_cast<double>(s.points->size());
        if (!box.full) {
            const auto full = render_density(*s.points, s.image.rows(), s.image.cols(), cfg.losses.sigma1).values;
            count = grid_sum(crop_grid(full, box.r0, box.c0, box.h, box.w));
        }
        if (cfg.augment.enabled) {
            v = apply_geometric(v, draw_geometric(cfg.augment.policy, rng));
            v.image = apply_photometric(v.image, draw_photometric(cfg.augment.policy, rng));
        }
        const int R = v.image.rows(), C = v.image.cols();
        xs.push_back(v.image);
        y0.push_back(onehot_plane(*v.mask, 0));
        y1.push_back(onehot_plane(*v.mask, 1));
        hs.push_back(scaled_density(*v.points, R, C, cfg.losses.sigma1, cfg.model.density_scale));
        bs.push_back(render_density(*v.points, R, C, cfg.losses.sigma2).values);
        counts.push_back(static_cast<float>(count));
    }
    SourceBatch out;
    out.x = stack_grids(xs);
    out.y = torch::cat({stack_grids(y0), stack_grids(y1)}, 1);
    out.h = stack_grids(hs);
    out.beta = stack_grids(bs);
    out.count = torch::tensor(counts);
    return out;
}

void require_dense(const std::vector<DomainSample>& data, const char* what) {
    if (data.empty()) throw ConfigError(std::string(what) + ": no training samples");
    for (const auto& s : data)
        if (!s.mask || !s.points) throw ConfigError(std::string(what) + ": sample '" + s.id + "' lacks a mask or points");
}

class JsonlLog {
public:
    JsonlLog(const std::filesystem::path& file, bool append) : file_(file) {
        std::filesystem::create_directories(file.parent_path().empty() ? "." : file.parent_path());
        out_.open(file, append ? std::ios::app : std::ios::trunc);
        if (!out_) throw LoadError("cannot write " + file.string());
    }
    void write(const json& j, const TrainOptions& opts) {
        out_ << j.dump() << '\n';
        out_.flush();
        if (opts.on_log) opts.on_log(j);
        if (opts.verbose) std::clog << j.dump() << '\n';
    }
    const std::filesystem::path& path() const { return file_; }

private:
    std::filesystem::path file_;
    std::ofstream out_;
};

json num_or_null(const torch::Tensor& t) { return t.defined() ? json(t.item<double>()) : json(nullptr); }

void check_loss(const torch::Tensor& loss, long z, const std::function<void()>& dump) {
    if (!std::isfinite(loss.item<double>())) {
        dump();
        throw NumericError("non-finite loss at iteration " + std::to_string(z) + "; state dumped");
    }
}

std::filesystem::path iter_path(const TrainOptions& o, const std::string& name, long z) {
    return o.out_dir / (name + "_iter" + std::to_string(z) + ".pt");
}

bool should_stop(const TrainOptions& o, long done) { return o.stop_after >= 0 && done >= o.stop_after; }

bool periodic_checkpoint(const RunConfig& cfg, long done, long total) {
    return cfg.optim.checkpoint_every > 0 && done % cfg.optim.checkpoint_every == 0 && done < total;
}

}  // namespace

double poly_lr(double base, long z, long z_total, double power) {
    if (z_total <= 0) return base;
    const double f = std::max(0.0, 1.0 - static_cast<double>(z) / static_cast<double>(z_total));
    return base * std::pow(f, power);
}

std::string weights_digest(const torch::nn::Module& m) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto mix = [&](const torch::Tensor& t) {
        const auto c = t.contiguous();
        const auto* p = static_cast<const unsigned char*>(c.data_ptr());
        for (std::size_t i = 0; i < static_cast<std::size_t>(c.nbytes()); ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& t : m.parameters(true)) mix(t);
    for (const auto& t : m.buffers(true)) mix(t);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Datasets load_datasets(const RunConfig& cfg) {
    Datasets d;
    if (cfg.data.synth) {
        auto dom = synth_domain_pair(cfg.synth, cfg.synth_seed);
        d.source = std::move(dom.source);
        d.target_train = std::move(dom.target_train);
        d.target_test = std::move(dom.target_test);
        d.target_train_truth = std::move(dom.target_train_truth);
        const auto n_val = std::min<std::size_t>(static_cast<std::size_t>(cfg.data.source_val_count), d.source.size() / 2);
        d.source_val.assign(d.source.end() - static_cast<std::ptrdiff_t>(n_val), d.source.end());
        d.source.resize(d.source.size() - n_val);
    } else {
        d.source = load_dataset(cfg.data.source, Domain::source);
        d.target_train = load_dataset(cfg.data.target_train, Domain::target);
        d.target_test = load_dataset(cfg.data.target_test, Domain::target);
        if (!cfg.data.source_val.empty()) d.source_val = load_dataset(cfg.data.source_val, Domain::source);
        for (auto* set : {&d.source, &d.source_val})
            for (auto& s : *set) {
                if (!s.mask) throw ConfigError("source sample '" + s.id + "' has no mask");
                if (!s.points) s.points = centers_from_mask(*s.mask);
            }
        for (auto& s : d.target_train) {
            if (!s.points) throw ConfigError("target_train sample '" + s.id + "' has no points (points.csv)");
            s.mask.reset();  // dense target labels never reach training
        }
    }
    if (cfg.data.refine_source)
        for (auto& s : d.source) {
            s = refine_source_sample(s, cfg.sar);
            s.points = centers_from_mask(*s.mask);
        }
    return d;
}

// ---------------------------------------------------------------------------
// Source G1
// ---------------------------------------------------------------------------

RunResult train_source(const RunConfig& cfg, const std::vector<DomainSample>& train, const TrainOptions& opts,
                       const std::string& name) {
    cfg.validate();
    require_dense(train, "train_source");
    init_torch(derive_seed(cfg.optim.seed, {kInitTag, 1}));
    G1 g1(cfg.model.backbone, cfg.model.density_scale);
    torch::optim::Adam opt(g1->parameters(), torch::optim::AdamOptions(cfg.optim.source_lr));
    long z0 = 0;
    if (!opts.resume.empty()) {
        CheckpointReader r(opts.resume);
        r.module("g1", *g1);
        r.optimizer("opt", opt);
        z0 = r.meta().iteration;
    }
    g1->train();
    const long total = cfg.optim.source_iters;
    JsonlLog log(opts.out_dir / (name + ".jsonl"), z0 > 0);
    const auto save = [&](const std::filesystem::path& file, long z) {
        CheckpointWriter w("g1-source", z, cfg);
        w.module("g1", *g1);
        w.optimizer("opt", opt);
        w.save(file);
        return file;
    };
    const double lambda = cfg.losses.weights.lambda_focus;
    for (long z = z0; z < total; ++z) {
        Rng rng(derive_seed(cfg.optim.seed, {kSourceTag, static_cast<std::uint64_t>(z)}));
        const auto b = make_source_batch(cfg, train, rng);
        const double lr = poly_lr(cfg.optim.source_lr, z, total, cfg.optim.poly_power);
        for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
        const auto o = g1->forward(b.x);
        const auto l_seg = partial_cross_entropy(o.seg_prob, b.y);
        const auto l_det = weighted_square_error(o.det_heat, b.h, 1.0 + lambda * b.beta);
        const auto loss = l_seg + cfg.losses.weights.lambda_d * l_det;
        check_loss(loss, z, [&] { save(opts.out_dir / (name + "_nan_dump.pt"), z); });
        opt.zero_grad();
        loss.backward();
        opt.step();
        if (cfg.optim.log_every_iter || z + 1 == total)
            log.write({{"iter", z}, {"L_seg", l_seg.item<double>()}, {"L_det", l_det.item<double>()}, {"lr", lr}}, opts);
        const long done = z + 1;
        if (should_stop(opts, done) && done < total) return {save(iter_path(opts, name, done), done), log.path(), done};
        if (periodic_checkpoint(cfg, done, total)) save(iter_path(opts, name, done), done);
    }
    return {save(opts.out_dir / (name + ".pt"), total), log.path(), total};
}

// ---------------------------------------------------------------------------
// Counting network G2
// ---------------------------------------------------------------------------

CounterReport counter_report(G2& g2, const std::vector<DomainSample>& samples, const std::vector<double>& scales) {
    torch::NoGradGuard ng;
    g2->eval();
    CounterReport rep;
    for (const auto& s : samples) {
        if (!s.mask) throw ConfigError("counter_report: sample '" + s.id + "' has no mask");
        const auto x = torch::from_blob(const_cast<float*>(s.image.data()), {1, 1, s.image.rows(), s.image.cols()},
                                        torch::kFloat32).clone();
        const auto ms = multiscale_count(g2, x, scales);
        CounterImage im{s.id, label_components(*s.mask).count, ms.mean.item<double>(), {}};
        for (int64_t k = 0; k < ms.per_scale.size(0); ++k) im.per_scale.push_back(ms.per_scale[k][0].item<double>());
        rep.mae += std::abs(im.count - im.truth);
        rep.bias += im.count - im.truth;
        rep.single_scale_delta += std::abs(im.count - g2->forward(x).count.item<double>());
        rep.images.push_back(std::move(im));
    }
    const auto n = static_cast<double>(std::max<std::size_t>(1, samples.size()));
    rep.mae /= n;
    rep.bias /= n;
    rep.single_scale_delta /= n;
    return rep;
}

double counter_mae(G2& g2, const std::vector<DomainSample>& samples, const std::vector<double>& scales,
                   double* single_scale_delta) {
    const auto rep = counter_report(g2, samples, scales);
    if (single_scale_delta) *single_scale_delta = rep.single_scale_delta;
    return rep.mae;
}

RunResult train_counter(const RunConfig& cfg, const std::vector<DomainSample>& source,
                        const std::filesystem::path& g1_checkpoint, const TrainOptions& opts, const std::string& name) {
    cfg.validate();
    require_dense(source, "train_counter");
    init_torch(derive_seed(cfg.optim.seed, {kInitTag, 2}));
    G2 g2(cfg.model.backbone, cfg.model.density_scale);
    torch::optim::Adam opt(g2->parameters(), torch::optim::AdamOptions(cfg.optim.count_lr));
    long z0 = 0;
    if (!opts.resume.empty()) {
        CheckpointReader r(opts.resume);
        r.module("g2", *g2);
        r.optimizer("opt", opt);
        z0 = r.meta().iteration;
    } else {
        const auto g1 = load_g1(g1_checkpoint);
        init_g2_from_g1(g2, g1);
    }
    g2->train();
    const long total = cfg.optim.count_iters;
    JsonlLog log(opts.out_dir / (name + ".jsonl"), z0 > 0);
    const auto save = [&](const std::filesystem::path& file, long z) {
        CheckpointWriter w("g2-count", z, cfg);
        w.module("g2", *g2);
        w.optimizer("opt", opt);
        w.save(file);
        return file;
    };
    const auto& scales = cfg.optim.count_scales;
    for (long z = z0; z < total; ++z) {
        Rng rng(derive_seed(cfg.optim.seed, {kCountTag, static_cast<std::uint64_t>(z)}));
        const auto b = make_source_batch(cfg, source, rng);
        const double s = scales[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(scales.size()) - 1))];
        auto x = b.x;
        if (s != 1.0) {
            const auto H = std::max<int64_t>(1, std::llround(static_cast<double>(x.size(2)) * s));
            const auto W = std::max<int64_t>(1, std::llround(static_cast<double>(x.size(3)) * s));
            x = torch::nn::functional::interpolate(
                x, torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{H, W}).mode(torch::kBilinear).align_corners(false));
        }
        const double lr = poly_lr(cfg.optim.count_lr, z, total, cfg.optim.poly_power);
        for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
        const auto o = g2->forward(x);
        const auto loss = (o.count - b.count).square().mean();
        check_loss(loss, z, [&] { save(opts.out_dir / (name + "_nan_dump.pt"), z); });
        opt.zero_grad();
        loss.backward();
        opt.step();
        if (cfg.optim.log_every_iter || z + 1 == total)
            log.write({{"iter", z}, {"L_count", loss.item<double>()}, {"scale", s}, {"lr", lr}}, opts);
        const long done = z + 1;
        if (should_stop(opts, done) && done < total) return {save(iter_path(opts, name, done), done), log.path(), done};
        if (periodic_checkpoint(cfg, done, total)) save(iter_path(opts, name, done), done);
    }
    return {save(opts.out_dir / (name + ".pt"), total), log.path(), total};
}

// ---------------------------------------------------------------------------
// Adaptation
// ---------------------------------------------------------------------------

namespace {

// Per-image state that travels with a target sample through crop, CP-Aug
// and the geometric transform.
struct TargetView {
    DomainSample sample;       // image + sparse points
    Grid<std::int8_t> pl;      // pseudo-label, -1 ignored
    Grid<float> g2;            // frozen G2 density (density units)
    Grid<float> fg;            // cached segmentation probability (CP-Aug relabel)
};

TargetView crop_view(const TargetView& v, const CropBox& b) {
    if (b.full) return v;
    TargetView o;
    o.sample.image = crop_grid(v.sample.image, b.r0, b.c0, b.h, b.w);
    o.sample.points = crop_points(*v.sample.points, b.r0, b.c0, b.h, b.w);
    o.sample.domain = v.sample.domain;
    o.sample.id = v.sample.id;
    o.pl = crop_grid(v.pl, b.r0, b.c0, b.h, b.w);
    o.g2 = crop_grid(v.g2, b.r0, b.c0, b.h, b.w);
    o.fg = crop_grid(v.fg, b.r0, b.c0, b.h, b.w);
    return o;
}

struct TargetBatch {
    torch::Tensor x, yhat, hbar, beta, count;
    int cp_applied = 0;
};

struct AdaptState {
    std::vector<Grid<std::int8_t>> pl;
    std::vector<Grid<float>> fg;
    std::vector<Grid<float>> g2;
    EntropyThresholds thresholds{};
    double coverage = 0.0;
};

TargetBatch make_target_batch(const RunConfig& cfg, const std::vector<DomainSample>& target, const AdaptState& st,
                              Rng& rng) {
    const auto view_of = [&](std::size_t i) {
        return TargetView{target[i], st.pl[i], st.g2[i], st.fg[i]};
    };
    const int n = static_cast<int>(target.size());
    std::vector<Grid<float>> xs, y0, y1, hs, bs;
    std::vector<float> counts;
    TargetBatch out;
    for (int b = 0; b < cfg.optim.batch_size; ++b) {
        const auto i = static_cast<std::size_t>(uniform_int(rng, 0, n - 1));
        const auto& si = target[i].image;
        TargetView v = crop_view(view_of(i), draw_crop(rng, si.rows(), si.cols(), cfg.optim.patch));
        const bool cp = cfg.augment.cp_aug && n > 1 && uniform(rng, 0.0, 1.0) < cfg.augment.cp_probability;
        if (cp) {
            auto j = static_cast<std::size_t>(uniform_int(rng, 0, n - 2));
            if (j >= i) ++j;
            const auto& sj = target[j].image;
            const TargetView donor = crop_view(view_of(j), draw_crop(rng, sj.rows(), sj.cols(), cfg.optim.patch));
            CPAugConfig cpc = cfg.augment.cp;
            cpc.crop_rows = std::min({cpc.crop_rows, donor.sample.image.rows(), v.sample.image.rows()});
            cpc.crop_cols = std::min({cpc.crop_cols, donor.sample.image.cols(), v.sample.image.cols()});
            const ProbMap donor_fg{donor.fg};
            const auto res = cp_aug(donor.sample, v.sample, cpc, cpc.boundary_relabel ? &donor_fg : nullptr);
            v.sample = res.sample;
            paste_window(v.pl, donor.pl, res.donor, res.recipient);
            paste_window(v.g2, donor.g2, res.donor, res.recipient);
            ++out.cp_applied;
        }
        if (cfg.augment.enabled) {
            const auto gd = draw_geometric(cfg.augment.policy, rng);
            v.sample = apply_geometric(v.sample, gd);
            v.pl = transform_grid(v.pl, gd);
            v.g2 = transform_grid(v.g2, gd);
            v.sample.image = apply_photometric(v.sample.image, draw_photometric(cfg.augment.policy, rng));
        }
        const int R = v.sample.image.rows(), C = v.sample.image.cols();
        Grid<float> a(R, C), c(R, C);
        for (std::size_t k = 0; k < v.pl.size(); ++k) {
            a[k] = v.pl[k] == 0 ? 1.0f : 0.0f;
            c[k] = v.pl[k] == 1 ? 1.0f : 0.0f;
        }
        xs.push_back(v.sample.image);
        y0.push_back(std::move(a));
        y1.push_back(std::move(c));
        hs.push_back(scaled_density(*v.sample.points, R, C, cfg.losses.sigma1, cfg.model.density_scale));
        bs.push_back(render_density(*v.sample.points, R, C, cfg.losses.sigma2).values);
        counts.push_back(static_cast<float>(grid_sum(v.g2)));
    }
    out.x = stack_grids(xs);
    out.yhat = torch::cat({stack_grids(y0), stack_grids(y1)}, 1);
    out.hbar = stack_grids(hs);
    out.beta = stack_grids(bs);
    out.count = torch::tensor(counts);
    return out;
}

void refresh_pseudo_labels(const RunConfig& cfg, G1& g1, const std::vector<DomainSample>& target, AdaptState& st) {
    const auto preds = predict_all(g1, target, cfg.optim.patch, cfg.eval.overlap);
    g1->train();
    std::vector<ProbMap> maps;
    maps.reserve(preds.size());
    for (const auto& p : preds) maps.push_back(p.seg);
    st.thresholds = compute_thresholds(maps, cfg.losses.decile_k);
    st.pl.clear();
    st.fg.clear();
    double labeled = 0.0, total = 0.0;
    for (const auto& m : maps) {
        auto pl = generate_pseudo_labels(m, st.thresholds);
        labeled += pl.coverage * static_cast<double>(pl.labels.size());
        total += static_cast<double>(pl.labels.size());
        st.pl.push_back(std::move(pl.labels));
        st.fg.push_back(m.fg);
    }
    st.coverage = total > 0 ? labeled / total : 0.0;
}

torch::Tensor grid_tensor(const Grid<float>& g) {
    return torch::from_blob(const_cast<float*>(g.data()), {g.rows(), g.cols()}, torch::kFloat32).clone();
}

Grid<float> tensor_grid(const torch::Tensor& t) {
    const auto c = t.to(torch::kFloat32).contiguous();
    Grid<float> g(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)));
    std::copy_n(c.data_ptr<float>(), g.size(), g.data());
    return g;
}

}  // namespace

RunResult adapt(const RunConfig& cfg, const std::vector<DomainSample>& source,
                const std::vector<DomainSample>& target_train, const std::filesystem::path& g1_checkpoint,
                const std::filesystem::path& g2_checkpoint, const TrainOptions& opts, const std::string& name) {
    cfg.validate();
    require_dense(source, "adapt");
    if (target_train.empty()) throw ConfigError("adapt: no target training samples");
    for (const auto& s : target_train)
        if (!s.points) throw ConfigError("adapt: target sample '" + s.id + "' has no points");
    const auto& L = cfg.losses;
    const bool need_g2 = L.counting;
    if (need_g2 && g2_checkpoint.empty()) throw ConfigError("adapt: counting is enabled but no G2 checkpoint was given");

    init_torch(derive_seed(cfg.optim.seed, {kInitTag, 3}));
    RunConfig g1_cfg;
    G1 g1 = load_g1(g1_checkpoint, &g1_cfg);
    const auto& bb = g1_cfg.model.backbone;
    if (bb.depth != cfg.model.backbone.depth || bb.base_channels != cfg.model.backbone.base_channels ||
        bb.block != cfg.model.backbone.block || g1_cfg.model.density_scale != cfg.model.density_scale)
        throw ShapeError("adapt: G1 checkpoint was built with a different model config");
    Discriminator disc(cfg.model.discriminator);
    torch::optim::SGD opt_g(g1->parameters(), torch::optim::SGDOptions(cfg.optim.lr_g)
                                                  .momentum(cfg.optim.momentum)
                                                  .weight_decay(cfg.optim.weight_decay));
    torch::optim::Adam opt_d(disc->parameters(), torch::optim::AdamOptions(cfg.optim.lr_d)
                                                     .betas({cfg.optim.beta1_d, cfg.optim.beta2_d}));

    // Frozen counting prior, evaluated once per target image.
    AdaptState st;
    std::string g2_digest;
    if (need_g2) {
        G2 g2 = load_g2(g2_checkpoint);
        for (auto& p : g2->parameters()) p.set_requires_grad(false);
        g2_digest = weights_digest(*g2);
        torch::NoGradGuard ng;
        for (const auto& s : target_train) {
            const auto x = torch::from_blob(const_cast<float*>(s.image.data()), {1, 1, s.image.rows(), s.image.cols()},
                                            torch::kFloat32).clone();
            const auto d = multiscale_density(g2, x, cfg.optim.count_scales) / cfg.model.density_scale;
            st.g2.push_back(tensor_grid(d[0][0]));
        }
        if (weights_digest(*g2) != g2_digest) throw NumericError("adapt: frozen G2 changed");
    } else {
        for (const auto& s : target_train) st.g2.emplace_back(s.image.rows(), s.image.cols(), 0.0f);
    }

    long z0 = 0;
    if (!opts.resume.empty()) {
        CheckpointReader r(opts.resume);
        r.module("g1", *g1);
        r.module("disc", *disc);
        r.optimizer("opt_g", opt_g);
        r.optimizer("opt_d", opt_d);
        z0 = r.meta().iteration;
        const auto thr = r.tensor("thresholds");
        st.thresholds.v = {thr[0].item<double>(), thr[1].item<double>()};
        st.thresholds.K = L.decile_k;
        st.coverage = r.tensor("coverage").item<double>();
        for (std::size_t i = 0; i < target_train.size(); ++i) {
            const auto pl = r.tensor("pl/" + std::to_string(i)).contiguous();
            Grid<std::int8_t> g(static_cast<int>(pl.size(0)), static_cast<int>(pl.size(1)));
            std::copy_n(pl.data_ptr<std::int8_t>(), g.size(), g.data());
            st.pl.push_back(std::move(g));
            st.fg.push_back(tensor_grid(r.tensor("fg/" + std::to_string(i))));
        }
    }
    g1->train();
    disc->train();

    const long total = cfg.optim.max_iters;
    const long R = cfg.optim.effective_refresh();
    JsonlLog log(opts.out_dir / (name + ".jsonl"), z0 > 0);
    const auto save = [&](const std::filesystem::path& file, long z) {
        CheckpointWriter w("g1-adapt", z, cfg);
        w.module("g1", *g1);
        w.module("disc", *disc);
        w.optimizer("opt_g", opt_g);
        w.optimizer("opt_d", opt_d);
        w.tensor("thresholds", torch::tensor({st.thresholds.v[0], st.thresholds.v[1]}, torch::kFloat64));
        w.tensor("coverage", torch::tensor({st.coverage}, torch::kFloat64));
        for (std::size_t i = 0; i < st.pl.size(); ++i) {
            const auto& g = st.pl[i];
            w.tensor("pl/" + std::to_string(i),
                     torch::from_blob(const_cast<std::int8_t*>(g.data()), {g.rows(), g.cols()}, torch::kInt8).clone());
            w.tensor("fg/" + std::to_string(i), grid_tensor(st.fg[i]));
        }
        w.text("g2_digest", g2_digest);
        w.save(file);
        return file;
    };

    const double lambda = L.weights.lambda_focus;
    for (long z = z0; z < total; ++z) {
        if (z % R == 0 || st.pl.empty()) refresh_pseudo_labels(cfg, g1, target_train, st);
        Rng rng(derive_seed(cfg.optim.seed, {kAdaptTag, static_cast<std::uint64_t>(z)}));
        const auto sb = make_source_batch(cfg, source, rng);
        const auto tb = make_target_batch(cfg, target_train, st, rng);
        const int B = cfg.optim.batch_size;

        const double lr = poly_lr(cfg.optim.lr_g, z, total, cfg.optim.poly_power);
        for (auto& g : opt_g.param_groups()) static_cast<torch::optim::SGDOptions&>(g.options()).lr(lr);

        G1Outputs os, ot;
        if (sb.x.sizes() == tb.x.sizes()) {
            const auto o = g1->forward(torch::cat({sb.x, tb.x}, 0));
            os = {o.seg_logits.slice(0, 0, B), o.seg_prob.slice(0, 0, B), o.det_heat.slice(0, 0, B),
                  o.count_map.slice(0, 0, B), o.count_hat.slice(0, 0, B)};
            ot = {o.seg_logits.slice(0, B), o.seg_prob.slice(0, B), o.det_heat.slice(0, B), o.count_map.slice(0, B),
                  o.count_hat.slice(0, B)};
        } else {
            os = g1->forward(sb.x);
            ot = g1->forward(tb.x);
        }

        // (1) Discriminator step on detached segmentation outputs.
        torch::Tensor l_d;
        int d_updates = 0;
        if (L.adversarial) {
            opt_d.zero_grad();
            l_d = discriminator_loss_logits(disc->forward(os.seg_prob.detach()), disc->forward(ot.seg_prob.detach()));
            l_d.backward();
            opt_d.step();
            d_updates = 1;
        }

        // (2) Generator step.
        LossParts parts;
        parts.seg = partial_cross_entropy(os.seg_prob, sb.y);
        if (L.pseudo_labels) parts.seg = parts.seg + partial_cross_entropy(ot.seg_prob, tb.yhat);
        if (L.adversarial) parts.adv = adversarial_loss_logits(disc->forward(ot.seg_prob));
        parts.det = weighted_square_error(os.det_heat, sb.h, 1.0 + lambda * sb.beta);
        if (L.detection) {
            const auto w = ((ot.seg_prob.select(1, 1).unsqueeze(1).detach() < L.weights.rho) | (tb.hbar > 1e-8 * cfg.model.density_scale))
                               .to(torch::kFloat32);
            parts.det = parts.det + weighted_square_error(ot.det_heat, tb.hbar, w + lambda * tb.beta);
        }
        if (L.counting) parts.cons = counting_consistency(ot.count_hat, tb.count, L.weights.epsilon);
        const double lambda_c = LossWeights::lambda_c(z, cfg.optim.z_max);
        const auto loss = total_generator_loss(parts, L.weights, z, cfg.optim.z_max);
        check_loss(loss, z, [&] { save(opts.out_dir / (name + "_nan_dump.pt"), z); });
        opt_g.zero_grad();
        loss.backward();
        opt_g.step();

        if (cfg.optim.log_every_iter || z + 1 == total)
            log.write({{"iter", z},
                       {"L_seg", num_or_null(parts.seg)},
                       {"L_adv", num_or_null(parts.adv)},
                       {"L_det", num_or_null(parts.det)},
                       {"L_cons", num_or_null(parts.cons)},
                       {"lambda_c", lambda_c},
                       {"L_D", num_or_null(l_d)},
                       {"d_updates", d_updates},
                       {"g_updates", 1},
                       {"lr_g", lr},
                       {"pl_coverage", st.coverage},
                       {"cp_applied", tb.cp_applied}},
                      opts);
        const long done = z + 1;
        if (should_stop(opts, done) && done < total) return {save(iter_path(opts, name, done), done), log.path(), done};
        if (periodic_checkpoint(cfg, done, total)) save(iter_path(opts, name, done), done);
    }
    return {save(opts.out_dir / (name + ".pt"), total), log.path(), total};
}

}  // namespace wda
