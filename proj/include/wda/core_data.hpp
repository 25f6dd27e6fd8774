#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wda/grid.hpp"
#include "wda/image_ops.hpp"

namespace wda {

enum class Domain { source, target };

const char* to_string(Domain d) noexcept;

// One 2D slice. `mask` is the dense label (source) or evaluation-only truth
// (target test); `points` holds full centers (source) or sparse centers
// (target train).
struct DomainSample {
    Image image;
    std::optional<Mask> mask;
    std::optional<std::vector<Point>> points;
    Domain domain = Domain::source;
    std::string id;
};

struct SparsePointBudget {
    double ratio = 0.15;
    std::uint64_t seed = 0;
};

enum class StackLayout { png_slices, multipage_tiff };

// ---------------------------------------------------------------------------
// Ingestion. Dataset directory layout:
//   <dir>/images/*.png   or  <dir>/images/stack.tif
//   <dir>/masks/...      (optional, same layout and ordering as images)
//   <dir>/points.csv     (optional, header `slice,row,col`)
// ---------------------------------------------------------------------------

/// Loads 8- or 16-bit grayscale slices rescaled to [0,1]. PNG slices are
/// ordered by filename, TIFF pages by page index.
std::vector<DomainSample> load_stack(const std::filesystem::path& dir_or_file, StackLayout layout,
                                     Domain domain = Domain::source);

/// Loads label slices and binarizes them (any nonzero -> 1).
std::vector<Mask> load_mask_stack(const std::filesystem::path& dir_or_file, StackLayout layout);

/// Reads `slice,row,col` rows; result is indexed by slice and sized `n_slices`.
std::vector<std::vector<Point>> read_points_csv(const std::filesystem::path& file, std::size_t n_slices);
void write_points_csv(const std::filesystem::path& file, const std::vector<std::vector<Point>>& points);

StackLayout detect_layout(const std::filesystem::path& images_dir);

/// Loads a whole dataset directory. Masks and points are attached when present.
std::vector<DomainSample> load_dataset(const std::filesystem::path& dir, Domain domain);

/// Writes images as 16-bit PNG slices, masks as 0/255 PNG, points as CSV.
void save_dataset(const std::filesystem::path& dir, const std::vector<DomainSample>& samples);

void save_image16(const std::filesystem::path& file, const Image& img);
void save_mask_png(const std::filesystem::path& file, const Mask& mask);

// ---------------------------------------------------------------------------
// Points
// ---------------------------------------------------------------------------

/// One point per 8-connected component at its rounded centroid; when the
/// rounded centroid is not on the component, the nearest component pixel.
std::vector<Point> centers_from_mask(const Mask& mask);

/// Centroid of the pixels of `labels == id`, snapped onto the component.
Point component_center(const LabelGrid& labels, int id);

/// Number of points kept for a set of `n` points under `ratio`.
std::size_t sparse_count(std::size_t n, double ratio);

/// Uniform sample without replacement; deterministic in the budget seed.
std::vector<Point> sample_sparse_points(const std::vector<Point>& points, const SparsePointBudget& budget);

// ---------------------------------------------------------------------------
// Synthetic two-domain generator
// ---------------------------------------------------------------------------

// Appearance knobs that differ between the two synthetic domains.
struct DomainStyle {
    double texture_freq = 4.0;        // background texture, cycles per image side
    double texture_amp = 0.06;
    double gamma = 1.0;
    double contrast = 1.0;
    double density_multiplier = 1.0;  // scales the per-image instance draw
    double noise_sigma = 0.02;
    double background = 0.62;
    double interior = 0.42;
    double membrane = 0.18;
};

struct SynthConfig {
    int rows = 128;
    int cols = 128;
    int min_instances = 3;
    int max_instances = 12;
    double min_axis = 5.0;   // ellipse semi-axis range in pixels
    double max_axis = 11.0;
    double membrane_px = 2.0;
    int n_source = 40;
    int n_target_train = 40;
    int n_target_test = 20;
    double sparse_ratio = 0.15;
    DomainStyle source{};
    DomainStyle target{.texture_freq = 11.0,
                       .texture_amp = 0.10,
                       .gamma = 1.8,
                       .contrast = 0.7,
                       .density_multiplier = 1.3,
                       .noise_sigma = 0.06,
                       .background = 0.55,
                       .interior = 0.40,
                       .membrane = 0.22};

    void validate() const;
};

struct SynthDomains {
    std::vector<DomainSample> source;        // dense masks + full centers
    std::vector<DomainSample> target_train;  // sparse centers only
    std::vector<DomainSample> target_test;   // dense masks + full centers (evaluation only)
    // Withheld truth for target_train, aligned by index; never fed to training
    // except by the fully supervised reference model.
    std::vector<DomainSample> target_train_truth;
};

/// Renders one image with its dense instance mask.
DomainSample synth_sample(const SynthConfig& cfg, const DomainStyle& style, Domain domain, std::uint64_t seed,
                          std::string id);

SynthDomains synth_domain_pair(const SynthConfig& cfg, std::uint64_t seed);

/// Redraws the sparse target annotations from the withheld truth with a new ratio/seed.
std::vector<DomainSample> resample_target_points(const SynthDomains& d, const SparsePointBudget& budget);

}  // namespace wda
