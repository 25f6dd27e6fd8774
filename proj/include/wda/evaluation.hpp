#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wda/config.hpp"
#include "wda/heatmap.hpp"
#include "wda/metrics.hpp"
#include "wda/networks.hpp"

namespace wda {

struct Prediction {
    ProbMap seg;        // foreground probability
    Grid<float> heat;   // detection heatmap in density units (mass = count)
    double count_hat = 0.0;
};

/// G1 inference on one image. Images larger than `patch` are tiled with the
/// given overlap and overlapping outputs averaged.
Prediction predict(G1& g1, const Image& image, int patch, int overlap);
std::vector<Prediction> predict_all(G1& g1, const std::vector<DomainSample>& samples, int patch, int overlap);

/// Thresholded segmentation, then (if enabled) peak-guided filtering.
Mask postprocess(const Prediction& pred, const EvalConfig& cfg);

struct CountEval {
    std::string id;
    int truth = 0;
    double count_hat = 0.0;  // counting subnet
    int peaks = 0;           // detected peaks
};

struct ModelEval {
    EvalReport metrics;
    std::vector<CountEval> counts;
    double count_mae = 0.0;       // |count_hat - truth|
    double count_abs_median = 0.0;
};

/// Evaluates a G1 model on samples that carry dense masks. When `overlay_dir`
/// is given, writes one PNG per image: TP green, FP red, FN blue on black.
ModelEval evaluate_model(G1& g1, const std::vector<DomainSample>& samples, const EvalConfig& cfg, int patch,
                         const std::optional<std::filesystem::path>& overlay_dir = std::nullopt);

/// RGB overlay of matched (IoU > 0.5) prediction instances in green, unmatched
/// predictions in red and missed truth instances in blue.
struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};
Grid<Rgb> render_overlay(const Mask& pred, const Mask& truth);
void save_overlay_png(const std::filesystem::path& file, const Grid<Rgb>& overlay);

json eval_to_json(const ModelEval& e);
/// report.json (metrics, counts, effective config) and per_image.csv.
void write_eval_report(const std::filesystem::path& dir, const ModelEval& e, const RunConfig& cfg,
                       const std::string& checkpoint_fingerprint);

}  // namespace wda
