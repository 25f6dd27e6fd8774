#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wda/augment.hpp"
#include "wda/core_data.hpp"
#include "wda/losses.hpp"
#include "wda/metrics.hpp"
#include "wda/networks.hpp"
#include "wda/sar.hpp"

namespace wda {

using json = nlohmann::json;

struct DataConfig {
    bool synth = true;  // generate the two domains in memory from `synth`
    std::string source;        // dataset directories, used when synth is false
    std::string target_train;
    std::string target_test;
    std::string source_val;    // optional; synth mode holds out the last source images
    int source_val_count = 8;
    bool refine_source = false;  // run SAR on source masks before training
};

struct ModelConfig {
    BackboneConfig backbone{};
    DiscriminatorConfig discriminator{};
    double density_scale = 100.0;  // heatmap targets are density * scale
};

struct OptimConfig {
    int patch = 128;
    int batch_size = 2;
    std::uint64_t seed = 0;
    // Source G1 training.
    int source_iters = 1000;
    double source_lr = 1e-3;
    // G2 counting network.
    int count_iters = 500;
    double count_lr = 5e-4;
    std::vector<double> count_scales{1.0, 1.5, 2.0};
    // Adaptation.
    int max_iters = 2000;
    int z_max = 1000;
    int refresh_period = 0;  // 0: z_max / 5
    double lr_g = 5e-5;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double poly_power = 0.9;
    double lr_d = 1e-4;
    double beta1_d = 0.9;
    double beta2_d = 0.99;
    int checkpoint_every = 0;  // 0: only the final checkpoint
    bool log_every_iter = true;

    int effective_refresh() const { return refresh_period > 0 ? refresh_period : std::max(1, z_max / 5); }
};

struct LossConfig {
    LossWeights weights{};
    double sigma1 = 10.0;
    double sigma2 = 2.0;
    int decile_k = 8;
    // Ablation switches for the adaptation objective.
    bool adversarial = true;
    bool detection = true;
    bool counting = true;
    bool pseudo_labels = true;
};

struct AugmentConfig {
    AugPolicy policy{};
    bool enabled = true;
    CPAugConfig cp{};
    bool cp_aug = true;
    double cp_probability = 0.5;
};

struct EvalConfig {
    bool filter = true;
    double nms_radius = 4.0;  // 2 * sigma2
    double keep_fraction = 0.8;
    int min_area = kDeskMinArea;  // at 128x128; scaled by image area
    double seg_threshold = 0.5;
    int overlap = 64;  // sliding-window overlap for images larger than the patch
    bool overlays = false;
};

struct RunConfig {
    DataConfig data{};
    SynthConfig synth{};
    std::uint64_t synth_seed = 0;
    ModelConfig model{};
    OptimConfig optim{};
    LossConfig losses{};
    AugmentConfig augment{};
    SARConfig sar{};
    EvalConfig eval{};

    void validate() const;
};

/// Unknown keys are rejected so that typos do not silently fall back to defaults.
RunConfig config_from_json(const json& j);
json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& file);
void save_config(const std::filesystem::path& file, const RunConfig& cfg);

/// Stable short hash of the effective config (hex).
std::string config_fingerprint(const RunConfig& cfg);

}  // namespace wda
