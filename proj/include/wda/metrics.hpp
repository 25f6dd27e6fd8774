#pragma once

#include <string>
#include <vector>

#include "wda/grid.hpp"
#include "wda/heatmap.hpp"
#include "wda/image_ops.hpp"

namespace wda {

struct PanopticQuality {
    double pq = 0.0;
    double sq = 0.0;
    double dq = 0.0;
    int tp = 0;
    int fp = 0;
    int fn = 0;
    double iou_sum = 0.0;  // sum of matched IoUs
};

struct ImageEval {
    std::string id;
    double dice = 0.0;
    double aji = 0.0;
    PanopticQuality pq;
};

struct EvalReport {
    double dice = 0.0;
    double aji = 0.0;
    double pq = 0.0;
    double sq = 0.0;
    double dq = 0.0;
    int tp = 0;
    int fp = 0;
    int fn = 0;
    std::vector<ImageEval> per_image;
};

inline constexpr int kFilterOpeningRadius = 1;
inline constexpr int kDeskMinArea = 64;

/// Opening (disk radius 1), then keeps an 8-connected component iff it
/// contains a peak or its area is at least `min_area`.
Mask filter_segmentation(const Mask& seg_mask, const PeakSet& peaks, int min_area);

/// min_area scaled from the 128x128 desk default by image area.
int scaled_min_area(int rows, int cols, int desk_min_area = kDeskMinArea);

/// 2|S and G| / (|S| + |G|); 1 when both are empty.
double dice(const Mask& S, const Mask& G);

/// Pixel-overlap table between prediction and truth instances.
struct OverlapTable {
    int n_pred = 0;
    int n_truth = 0;
    std::vector<int> pred_area;   // index 1..n_pred
    std::vector<int> truth_area;  // index 1..n_truth
    std::vector<int> inter;       // (n_truth+1) x (n_pred+1), row = truth id

    int at(int truth_id, int pred_id) const { return inter[static_cast<std::size_t>(truth_id * (n_pred + 1) + pred_id)]; }
};

OverlapTable overlap_table(const InstanceLabelMap& S, const InstanceLabelMap& G);

/// Aggregated Jaccard index with unique greedy matching in descending
/// overlap (ties: larger IoU, then smaller prediction id, then smaller truth id).
double aji(const InstanceLabelMap& S, const InstanceLabelMap& G);

/// Panoptic quality with IoU > iou_thresh matching.
PanopticQuality pq(const InstanceLabelMap& S, const InstanceLabelMap& G, double iou_thresh = 0.5);

/// Per-image evaluation from binary masks (instances by 8-connected labeling).
ImageEval evaluate_masks(const Mask& S, const Mask& G, std::string id = {});

/// Dice and AJI are per-image means; PQ, SQ and DQ pool matches over all
/// images so that pq == sq * dq also holds for the aggregate.
EvalReport aggregate(std::vector<ImageEval> per_image);

}  // namespace wda
