#include "wda/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace wda {

void to_json(json& j, BlockType b) { j = to_string(b); }
void from_json(const json& j, BlockType& b) {
    if (!j.is_string()) throw ConfigError("model.block must be a string");
    b = block_from_string(j.get<std::string>());
}

namespace {

// Reads fields that are present and remembers every key it was asked about.
class Reader {
public:
    explicit Reader(const json& root) : root_(root) {
        if (!root.is_object()) throw ConfigError("config: top level must be an object");
    }

    template <typename T>
    void operator()(const std::string& section, const char* key, T& out) {
        known_[section].insert(key);
        const json* s = find(section);
        if (!s || !s->contains(key)) return;
        try {
            out = s->at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config: " + section + "." + key + ": " + e.what());
        }
    }

    void finish() const { check(root_, ""); }

private:
    const json* find(const std::string& section) const {
        const json* cur = &root_;
        std::stringstream ss(section);
        std::string part;
        while (std::getline(ss, part, '.')) {
            if (!cur->contains(part)) return nullptr;
            cur = &cur->at(part);
            if (!cur->is_object()) throw ConfigError("config: " + section + " must be an object");
        }
        return cur;
    }

    void check(const json& node, const std::string& prefix) const {
        for (const auto& [k, v] : node.items()) {
            const std::string path = prefix.empty() ? k : prefix + "." + k;
            const auto it = known_.find(prefix);
            const bool is_key = it != known_.end() && it->second.count(k);
            const bool is_section = known_.count(path) > 0 || has_subsection(path);
            if (is_key) continue;
            if (is_section && v.is_object()) {
                check(v, path);
                continue;
            }
            throw ConfigError("config: unknown key '" + path + "'");
        }
    }

    bool has_subsection(const std::string& path) const {
        for (const auto& [s, keys] : known_)
            if (s.rfind(path + ".", 0) == 0) return true;
        return false;
    }

    const json& root_;
    std::map<std::string, std::set<std::string>> known_;
};

class Writer {
public:
    template <typename T>
    void operator()(const std::string& section, const char* key, const T& v) {
        json* cur = &root;
        std::stringstream ss(section);
        std::string part;
        while (std::getline(ss, part, '.')) cur = &(*cur)[part];
        (*cur)[key] = v;
    }
    json root = json::object();
};

template <typename S, typename V>
void visit_style(const std::string& sec, S& st, V& f) {
    f(sec, "texture_freq", st.texture_freq);
    f(sec, "texture_amp", st.texture_amp);
    f(sec, "gamma", st.gamma);
    f(sec, "contrast", st.contrast);
    f(sec, "density_multiplier", st.density_multiplier);
    f(sec, "noise_sigma", st.noise_sigma);
    f(sec, "background", st.background);
    f(sec, "interior", st.interior);
    f(sec, "membrane", st.membrane);
}

// Single list of every configurable field, shared by reading and writing.
template <typename C, typename V>
void visit(C& c, V& f) {
    f("data", "synth", c.data.synth);
    f("data", "source", c.data.source);
    f("data", "target_train", c.data.target_train);
    f("data", "target_test", c.data.target_test);
    f("data", "source_val", c.data.source_val);
    f("data", "source_val_count", c.data.source_val_count);
    f("data", "refine_source", c.data.refine_source);

    f("synth", "seed", c.synth_seed);
    f("synth", "rows", c.synth.rows);
    f("synth", "cols", c.synth.cols);
    f("synth", "min_instances", c.synth.min_instances);
    f("synth", "max_instances", c.synth.max_instances);
    f("synth", "min_axis", c.synth.min_axis);
    f("synth", "max_axis", c.synth.max_axis);
    f("synth", "membrane_px", c.synth.membrane_px);
    f("synth", "n_source", c.synth.n_source);
    f("synth", "n_target_train", c.synth.n_target_train);
    f("synth", "n_target_test", c.synth.n_target_test);
    f("synth", "sparse_ratio", c.synth.sparse_ratio);
    visit_style("synth.source_style", c.synth.source, f);
    visit_style("synth.target_style", c.synth.target, f);

    f("model", "depth", c.model.backbone.depth);
    f("model", "base_channels", c.model.backbone.base_channels);
    f("model", "block", c.model.backbone.block);
    f("model", "in_channels", c.model.backbone.in_channels);
    f("model", "discriminator_channels", c.model.discriminator.channels);
    f("model", "discriminator_kernel", c.model.discriminator.kernel);
    f("model", "discriminator_stride", c.model.discriminator.stride);
    f("model", "discriminator_slope", c.model.discriminator.slope);
    f("model", "density_scale", c.model.density_scale);

    f("optim", "patch", c.optim.patch);
    f("optim", "batch_size", c.optim.batch_size);
    f("optim", "seed", c.optim.seed);
    f("optim", "source_iters", c.optim.source_iters);
    f("optim", "source_lr", c.optim.source_lr);
    f("optim", "count_iters", c.optim.count_iters);
    f("optim", "count_lr", c.optim.count_lr);
    f("optim", "count_scales", c.optim.count_scales);
    f("optim", "max_iters", c.optim.max_iters);
    f("optim", "z_max", c.optim.z_max);
    f("optim", "refresh_period", c.optim.refresh_period);
    f("optim", "lr_g", c.optim.lr_g);
    f("optim", "momentum", c.optim.momentum);
    f("optim", "weight_decay", c.optim.weight_decay);
    f("optim", "poly_power", c.optim.poly_power);
    f("optim", "lr_d", c.optim.lr_d);
    f("optim", "beta1_d", c.optim.beta1_d);
    f("optim", "beta2_d", c.optim.beta2_d);
    f("optim", "checkpoint_every", c.optim.checkpoint_every);
    f("optim", "log_every_iter", c.optim.log_every_iter);

    f("losses", "lambda_a", c.losses.weights.lambda_a);
    f("losses", "lambda_d", c.losses.weights.lambda_d);
    f("losses", "lambda_focus", c.losses.weights.lambda_focus);
    f("losses", "epsilon", c.losses.weights.epsilon);
    f("losses", "rho", c.losses.weights.rho);
    f("losses", "sigma1", c.losses.sigma1);
    f("losses", "sigma2", c.losses.sigma2);
    f("losses", "decile_k", c.losses.decile_k);
    f("losses", "adversarial", c.losses.adversarial);
    f("losses", "detection", c.losses.detection);
    f("losses", "counting", c.losses.counting);
    f("losses", "pseudo_labels", c.losses.pseudo_labels);

    f("augment", "enabled", c.augment.enabled);
    f("augment", "flips", c.augment.policy.flips);
    f("augment", "rotations", c.augment.policy.rotations);
    f("augment", "blur_sigma_range", c.augment.policy.blur_sigma_range);
    f("augment", "brightness_range", c.augment.policy.brightness_range);
    f("augment", "contrast_range", c.augment.policy.contrast_range);
    f("augment", "gamma_range", c.augment.policy.gamma_range);
    f("augment", "blur_probability", c.augment.policy.blur_probability);
    f("augment", "cp_aug", c.augment.cp_aug);
    f("augment", "cp_probability", c.augment.cp_probability);
    f("augment", "cp_crop_rows", c.augment.cp.crop_rows);
    f("augment", "cp_crop_cols", c.augment.cp.crop_cols);
    f("augment", "cp_boundary_relabel", c.augment.cp.boundary_relabel);
    f("augment", "cp_relabel_threshold", c.augment.cp.relabel_threshold);

    f("sar", "iterations", c.sar.iterations);
    f("sar", "smoothing", c.sar.smoothing);
    f("sar", "band_px", c.sar.band_px);
    f("sar", "balloon", c.sar.balloon);
    f("sar", "edge_alpha", c.sar.edge_alpha);
    f("sar", "edge_sigma", c.sar.edge_sigma);
    f("sar", "balloon_threshold", c.sar.balloon_threshold);

    f("eval", "filter", c.eval.filter);
    f("eval", "nms_radius", c.eval.nms_radius);
    f("eval", "keep_fraction", c.eval.keep_fraction);
    f("eval", "min_area", c.eval.min_area);
    f("eval", "seg_threshold", c.eval.seg_threshold);
    f("eval", "overlap", c.eval.overlap);
    f("eval", "overlays", c.eval.overlays);
}

}  // namespace

void RunConfig::validate() const {
    if (data.synth) synth.validate();
    else if (data.source.empty() || data.target_train.empty() || data.target_test.empty())
        throw ConfigError("data: source, target_train and target_test are required when synth is false");
    if (data.source_val_count < 0) throw ConfigError("data.source_val_count must be >= 0");
    model.backbone.validate();
    model.discriminator.validate();
    if (!(model.density_scale > 0)) throw ConfigError("model.density_scale must be positive");
    const auto& o = optim;
    if (o.patch < model.backbone.multiple()) throw ConfigError("optim.patch must be at least 2^depth");
    if (o.batch_size < 1) throw ConfigError("optim.batch_size must be >= 1");
    if (o.source_iters < 0 || o.count_iters < 0 || o.max_iters < 0) throw ConfigError("optim: iteration counts must be >= 0");
    if (o.z_max < 1 || o.z_max > std::max(1, o.max_iters)) throw ConfigError("optim: need 1 <= z_max <= max_iters");
    if (!(o.source_lr > 0 && o.count_lr > 0 && o.lr_g > 0 && o.lr_d > 0)) throw ConfigError("optim: rates must be > 0");
    if (o.count_scales.empty()) throw ConfigError("optim.count_scales must not be empty");
    for (double s : o.count_scales)
        if (!(s > 0)) throw ConfigError("optim.count_scales must be positive");
    losses.weights.validate();
    if (!(losses.sigma1 > 0 && losses.sigma2 > 0)) throw ConfigError("losses: sigmas must be positive");
    if (losses.decile_k < 1 || losses.decile_k > 9) throw ConfigError("losses.decile_k must lie in 1..9");
    if (augment.cp_probability < 0 || augment.cp_probability > 1) throw ConfigError("augment.cp_probability must lie in [0,1]");
    if (augment.cp.crop_rows > o.patch || augment.cp.crop_cols > o.patch)
        throw ConfigError("augment: CP-Aug crop larger than the patch");
    sar.validate();
    if (eval.nms_radius < 1) throw ConfigError("eval.nms_radius must be >= 1");
    if (!(eval.keep_fraction > 0 && eval.keep_fraction <= 1)) throw ConfigError("eval.keep_fraction must lie in (0,1]");
    if (eval.overlap < 0 || eval.overlap >= o.patch) throw ConfigError("eval.overlap must lie in [0, patch)");
}

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    Reader r(j);
    visit(cfg, r);
    r.finish();
    cfg.validate();
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    Writer w;
    visit(cfg, w);
    return w.root;
}

RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw LoadError("cannot open config " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + file.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::filesystem::path& file, const RunConfig& cfg) {
    std::ofstream out(file);
    if (!out) throw LoadError("cannot write " + file.string());
    out << config_to_json(cfg).dump(2) << "\n";
}

std::string config_fingerprint(const RunConfig& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : config_to_json(cfg).dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace wda
