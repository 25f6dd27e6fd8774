#include "wda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>

namespace wda {

Mask filter_segmentation(const Mask& seg_mask, const PeakSet& peaks, int min_area) {
    const Mask opened = open(seg_mask, kFilterOpeningRadius);
    const auto inst = label_components(opened);
    const auto areas = instance_areas(inst);
    std::vector<char> keep(static_cast<std::size_t>(inst.count) + 1, 0);
    for (int id = 1; id <= inst.count; ++id) keep[static_cast<std::size_t>(id)] = areas[static_cast<std::size_t>(id)] >= min_area;
    for (const auto& p : peaks.peaks)
        if (inst.labels.contains(p.row, p.col)) keep[static_cast<std::size_t>(inst.labels(p.row, p.col))] = 1;
    keep[0] = 0;
    Mask out(seg_mask.rows(), seg_mask.cols(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep[static_cast<std::size_t>(inst.labels[i])] ? 1 : 0;
    return out;
}

int scaled_min_area(int rows, int cols, int desk_min_area) {
    const double scale = static_cast<double>(rows) * static_cast<double>(cols) / (128.0 * 128.0);
    return std::max(1, static_cast<int>(std::lround(desk_min_area * scale)));
}

double dice(const Mask& S, const Mask& G) {
    require_same_shape(S, G, "dice");
    std::size_t s = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < S.size(); ++i) {
        const bool a = S[i] != 0;
        const bool b = G[i] != 0;
        s += a;
        g += b;
        both += a && b;
    }
    if (s + g == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(s + g);
}

OverlapTable overlap_table(const InstanceLabelMap& S, const InstanceLabelMap& G) {
    require_same_shape(S.labels, G.labels, "overlap_table");
    OverlapTable t;
    t.n_pred = S.count;
    t.n_truth = G.count;
    t.pred_area.assign(static_cast<std::size_t>(S.count) + 1, 0);
    t.truth_area.assign(static_cast<std::size_t>(G.count) + 1, 0);
    t.inter.assign(static_cast<std::size_t>((G.count + 1) * (S.count + 1)), 0);
    for (std::size_t i = 0; i < S.labels.size(); ++i) {
        const int k = S.labels[i];
        const int j = G.labels[i];
        ++t.pred_area[static_cast<std::size_t>(k)];
        ++t.truth_area[static_cast<std::size_t>(j)];
        ++t.inter[static_cast<std::size_t>(j * (S.count + 1) + k)];
    }
    return t;
}

double aji(const InstanceLabelMap& S, const InstanceLabelMap& G) {
    if (G.count == 0) return S.count == 0 ? 1.0 : 0.0;
    const auto t = overlap_table(S, G);

    struct Candidate {
        int inter, uni, pred, truth;
    };
    std::vector<Candidate> cands;
    for (int j = 1; j <= t.n_truth; ++j)
        for (int k = 1; k <= t.n_pred; ++k) {
            const int in = t.at(j, k);
            if (in > 0) cands.push_back({in, t.truth_area[static_cast<std::size_t>(j)] + t.pred_area[static_cast<std::size_t>(k)] - in, k, j});
        }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.inter != b.inter) return a.inter > b.inter;
        // Larger IoU first, compared exactly: a.i/a.u > b.i/b.u.
        const auto lhs = static_cast<std::int64_t>(a.inter) * b.uni;
        const auto rhs = static_cast<std::int64_t>(b.inter) * a.uni;
        if (lhs != rhs) return lhs > rhs;
        return std::tie(a.pred, a.truth) < std::tie(b.pred, b.truth);
    });

    std::vector<char> truth_used(static_cast<std::size_t>(t.n_truth) + 1, 0);
    std::vector<char> pred_used(static_cast<std::size_t>(t.n_pred) + 1, 0);
    std::int64_t num = 0;
    std::int64_t den = 0;
    for (const auto& c : cands) {
        if (truth_used[static_cast<std::size_t>(c.truth)] || pred_used[static_cast<std::size_t>(c.pred)]) continue;
        truth_used[static_cast<std::size_t>(c.truth)] = 1;
        pred_used[static_cast<std::size_t>(c.pred)] = 1;
        num += c.inter;
        den += c.uni;
    }
    for (int j = 1; j <= t.n_truth; ++j)
        if (!truth_used[static_cast<std::size_t>(j)]) den += t.truth_area[static_cast<std::size_t>(j)];
    for (int k = 1; k <= t.n_pred; ++k)
        if (!pred_used[static_cast<std::size_t>(k)]) den += t.pred_area[static_cast<std::size_t>(k)];
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

PanopticQuality pq(const InstanceLabelMap& S, const InstanceLabelMap& G, double iou_thresh) {
    PanopticQuality out;
    if (S.count == 0 && G.count == 0) {
        out.pq = out.sq = out.dq = 1.0;
        return out;
    }
    const auto t = overlap_table(S, G);
    std::vector<char> pred_matched(static_cast<std::size_t>(t.n_pred) + 1, 0);
    for (int j = 1; j <= t.n_truth; ++j)
        for (int k = 1; k <= t.n_pred; ++k) {
            const int in = t.at(j, k);
            if (in == 0) continue;
            const int uni = t.truth_area[static_cast<std::size_t>(j)] + t.pred_area[static_cast<std::size_t>(k)] - in;
            const double iou = static_cast<double>(in) / static_cast<double>(uni);
            // For thresholds >= 0.5 each instance has at most one partner above it.
            if (iou > iou_thresh) {
                ++out.tp;
                out.iou_sum += iou;
                pred_matched[static_cast<std::size_t>(k)] = 1;
            }
        }
    out.fn = t.n_truth - out.tp;
    out.fp = t.n_pred - static_cast<int>(std::count(pred_matched.begin() + 1, pred_matched.end(), 1));
    out.sq = out.tp > 0 ? out.iou_sum / out.tp : 0.0;
    out.dq = static_cast<double>(out.tp) / (out.tp + 0.5 * out.fp + 0.5 * out.fn);
    out.pq = out.sq * out.dq;
    return out;
}

ImageEval evaluate_masks(const Mask& S, const Mask& G, std::string id) {
    const auto si = label_components(S);
    const auto gi = label_components(G);
    return {std::move(id), dice(S, G), aji(si, gi), pq(si, gi)};
}

EvalReport aggregate(std::vector<ImageEval> per_image) {
    EvalReport r;
    double iou_sum = 0.0;
    for (const auto& e : per_image) {
        r.dice += e.dice;
        r.aji += e.aji;
        r.tp += e.pq.tp;
        r.fp += e.pq.fp;
        r.fn += e.pq.fn;
        iou_sum += e.pq.iou_sum;
    }
    if (!per_image.empty()) {
        r.dice /= static_cast<double>(per_image.size());
        r.aji /= static_cast<double>(per_image.size());
    }
    if (r.tp + r.fp + r.fn == 0) {
        r.sq = r.dq = r.pq = 1.0;
    } else {
        r.sq = r.tp > 0 ? iou_sum / r.tp : 0.0;
        r.dq = r.tp / (r.tp + 0.5 * r.fp + 0.5 * r.fn);
        r.pq = r.sq * r.dq;
    }
    r.per_image = std::move(per_image);
    return r;
}

}  // namespace wda
