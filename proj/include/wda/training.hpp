#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wda/config.hpp"
#include "wda/core_data.hpp"
#include "wda/networks.hpp"

namespace wda {

struct Datasets {
    std::vector<DomainSample> source;        // dense masks + full centers
    std::vector<DomainSample> source_val;
    std::vector<DomainSample> target_train;  // sparse centers only
    std::vector<DomainSample> target_test;   // dense masks, evaluation only
    std::vector<DomainSample> target_train_truth;  // synthetic runs only
};

/// Synthesizes or loads the datasets named by the config; runs SAR on the
/// source masks when `data.refine_source` is set.
Datasets load_datasets(const RunConfig& cfg);

struct TrainOptions {
    std::filesystem::path out_dir = ".";
    std::filesystem::path resume;  // checkpoint written by the same phase
    long stop_after = -1;          // stop once this many iterations are done (checkpoint written)
    bool verbose = false;
    std::function<void(const json&)> on_log;
};

struct RunResult {
    std::filesystem::path checkpoint;
    std::filesystem::path log;
    long iterations = 0;
};

/// Polynomial decay: base * (1 - z / z_total)^power.
double poly_lr(double base, long z, long z_total, double power);

/// Source-only G1 training with segmentation and detection losses.
RunResult train_source(const RunConfig& cfg, const std::vector<DomainSample>& train, const TrainOptions& opts,
                       const std::string& name = "g1_source");

/// G2 counting network, initialized from a G1 checkpoint, trained with a
/// squared count loss on multi-scale augmented source crops.
RunResult train_counter(const RunConfig& cfg, const std::vector<DomainSample>& source,
                        const std::filesystem::path& g1_checkpoint, const TrainOptions& opts,
                        const std::string& name = "g2_count");

/// Weakly supervised adaptation of G1 with the frozen G2 as counting prior.
RunResult adapt(const RunConfig& cfg, const std::vector<DomainSample>& source,
                const std::vector<DomainSample>& target_train, const std::filesystem::path& g1_checkpoint,
                const std::filesystem::path& g2_checkpoint, const TrainOptions& opts,
                const std::string& name = "g1_adapt");

struct CounterImage {
    std::string id;
    int truth = 0;
    double count = 0.0;              // multi-scale mean
    std::vector<double> per_scale;
};

struct CounterReport {
    std::vector<CounterImage> images;
    double mae = 0.0;
    double bias = 0.0;  // mean of count - truth
    double single_scale_delta = 0.0;
};

/// G2 counts against the number of mask instances, per image and overall.
CounterReport counter_report(G2& g2, const std::vector<DomainSample>& samples, const std::vector<double>& scales);

/// Mean absolute counting error of G2 (multi-scale average) against the
/// number of mask instances. `single_scale_delta` receives the mean
/// |multi-scale - scale 1.0| difference.
double counter_mae(G2& g2, const std::vector<DomainSample>& samples, const std::vector<double>& scales,
                   double* single_scale_delta = nullptr);

/// Hash of the raw bytes of every parameter and buffer.
std::string weights_digest(const torch::nn::Module& m);

}  // namespace wda
