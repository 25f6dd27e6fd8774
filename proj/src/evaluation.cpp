#include "wda/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <opencv2/imgcodecs.hpp>

#include "wda/image_ops.hpp"

namespace wda {

namespace {

torch::Tensor to_tensor(const Image& img) {
    return torch::from_blob(const_cast<float*>(img.data()), {1, 1, img.rows(), img.cols()}, torch::kFloat32).clone();
}

std::vector<int> tile_starts(int extent, int patch, int overlap) {
    if (extent <= patch) return {0};
    const int stride = std::max(1, patch - overlap);
    std::vector<int> s;
    for (int p = 0; p + patch < extent; p += stride) s.push_back(p);
    s.push_back(extent - patch);
    return s;
}

}  // namespace

Prediction predict(G1& g1, const Image& image, int patch, int overlap) {
    torch::NoGradGuard ng;
    g1->eval();
    const int R = image.rows(), C = image.cols();
    const double scale = g1->density_scale();
    Prediction out{ProbMap{Grid<float>(R, C, 0.0f)}, Grid<float>(R, C, 0.0f), 0.0};
    if (R <= patch && C <= patch) {
        const auto o = g1->forward(to_tensor(image));
        const auto fg = o.seg_prob.select(1, 1).contiguous();
        const auto heat = (o.det_heat.select(1, 0) / scale).contiguous();
        std::copy_n(fg.data_ptr<float>(), out.seg.fg.size(), out.seg.fg.data());
        std::copy_n(heat.data_ptr<float>(), out.heat.size(), out.heat.data());
        out.count_hat = o.count_hat.item<double>();
        return out;
    }
    Grid<float> weight(R, C, 0.0f);
    Grid<float> count_acc(R, C, 0.0f);
    const int ph = std::min(patch, R), pw = std::min(patch, C);
    for (int r0 : tile_starts(R, ph, overlap))
        for (int c0 : tile_starts(C, pw, overlap)) {
            Image tile(ph, pw);
            for (int r = 0; r < ph; ++r)
                for (int c = 0; c < pw; ++c) tile(r, c) = image(r0 + r, c0 + c);
            const auto o = g1->forward(to_tensor(tile));
            const auto fg = o.seg_prob.select(1, 1).contiguous();
            const auto heat = (o.det_heat.select(1, 0) / scale).contiguous();
            const auto cm = (o.count_map.select(1, 0) / scale).contiguous();
            const float* pf = fg.data_ptr<float>();
            const float* ph_ = heat.data_ptr<float>();
            const float* pc = cm.data_ptr<float>();
            for (int r = 0; r < ph; ++r)
                for (int c = 0; c < pw; ++c) {
                    const auto i = static_cast<std::size_t>(r * pw + c);
                    out.seg.fg(r0 + r, c0 + c) += pf[i];
                    out.heat(r0 + r, c0 + c) += ph_[i];
                    count_acc(r0 + r, c0 + c) += pc[i];
                    weight(r0 + r, c0 + c) += 1.0f;
                }
        }
    double count = 0.0;
    for (std::size_t i = 0; i < weight.size(); ++i) {
        out.seg.fg[i] /= weight[i];
        out.heat[i] /= weight[i];
        count += count_acc[i] / weight[i];
    }
    out.count_hat = count;
    return out;
}

std::vector<Prediction> predict_all(G1& g1, const std::vector<DomainSample>& samples, int patch, int overlap) {
    std::vector<Prediction> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(predict(g1, s.image, patch, overlap));
    return out;
}

Mask postprocess(const Prediction& pred, const EvalConfig& cfg) {
    Mask seg = threshold(pred.seg.fg, static_cast<float>(cfg.seg_threshold));
    if (!cfg.filter) return seg;
    const auto peaks = extract_peaks(pred.heat, cfg.nms_radius, cfg.keep_fraction);
    return filter_segmentation(seg, peaks, scaled_min_area(seg.rows(), seg.cols(), cfg.min_area));
}

Grid<Rgb> render_overlay(const Mask& pred, const Mask& truth) {
    require_same_shape(pred, truth, "render_overlay");
    const auto S = label_components(pred);
    const auto G = label_components(truth);
    const auto table = overlap_table(S, G);
    std::vector<char> pred_matched(static_cast<std::size_t>(S.count) + 1, 0);
    std::vector<char> truth_matched(static_cast<std::size_t>(G.count) + 1, 0);
    for (int g = 1; g <= G.count; ++g)
        for (int s = 1; s <= S.count; ++s) {
            const int inter = table.at(g, s);
            if (inter == 0) continue;
            const int uni = table.truth_area[static_cast<std::size_t>(g)] + table.pred_area[static_cast<std::size_t>(s)] - inter;
            if (2 * inter > uni) {
                pred_matched[static_cast<std::size_t>(s)] = 1;
                truth_matched[static_cast<std::size_t>(g)] = 1;
            }
        }
    Grid<Rgb> out(pred.rows(), pred.cols(), Rgb{});
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (const int s = S.labels[i]; s != 0)
            out[i] = pred_matched[static_cast<std::size_t>(s)] ? Rgb{0, 255, 0} : Rgb{255, 0, 0};
        else if (const int g = G.labels[i]; g != 0 && !truth_matched[static_cast<std::size_t>(g)])
            out[i] = Rgb{0, 0, 255};
    }
    return out;
}

void save_overlay_png(const std::filesystem::path& file, const Grid<Rgb>& overlay) {
    cv::Mat m(overlay.rows(), overlay.cols(), CV_8UC3);
    for (int r = 0; r < overlay.rows(); ++r)
        for (int c = 0; c < overlay.cols(); ++c) {
            const auto& p = overlay(r, c);
            m.at<cv::Vec3b>(r, c) = cv::Vec3b(p.b, p.g, p.r);
        }
    if (!cv::imwrite(file.string(), m)) throw LoadError("cannot write " + file.string());
}

ModelEval evaluate_model(G1& g1, const std::vector<DomainSample>& samples, const EvalConfig& cfg, int patch,
                         const std::optional<std::filesystem::path>& overlay_dir) {
    std::vector<ImageEval> per;
    ModelEval out;
    if (overlay_dir) std::filesystem::create_directories(*overlay_dir);
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto& s = samples[k];
        if (!s.mask) throw ConfigError("evaluate: sample '" + s.id + "' has no ground-truth mask");
        const auto pred = predict(g1, s.image, patch, cfg.overlap);
        const Mask final_mask = postprocess(pred, cfg);
        const std::string id = s.id.empty() ? std::to_string(k) : s.id;
        per.push_back(evaluate_masks(final_mask, *s.mask, id));
        CountEval ce;
        ce.id = id;
        ce.truth = label_components(*s.mask).count;
        ce.count_hat = pred.count_hat;
        ce.peaks = static_cast<int>(extract_peaks(pred.heat, cfg.nms_radius, cfg.keep_fraction).peaks.size());
        out.counts.push_back(ce);
        if (overlay_dir) save_overlay_png(*overlay_dir / (id + "_overlay.png"), render_overlay(final_mask, *s.mask));
    }
    out.metrics = aggregate(std::move(per));
    std::vector<double> err;
    for (const auto& c : out.counts) err.push_back(std::abs(c.count_hat - c.truth));
    if (!err.empty()) {
        double sum = 0.0;
        for (double e : err) sum += e;
        out.count_mae = sum / static_cast<double>(err.size());
        std::sort(err.begin(), err.end());
        const std::size_t n = err.size();
        out.count_abs_median = n % 2 ? err[n / 2] : 0.5 * (err[n / 2 - 1] + err[n / 2]);
    }
    return out;
}

json eval_to_json(const ModelEval& e) {
    const auto& m = e.metrics;
    json j;
    j["dice"] = m.dice;
    j["aji"] = m.aji;
    j["pq"] = m.pq;
    j["sq"] = m.sq;
    j["dq"] = m.dq;
    j["tp"] = m.tp;
    j["fp"] = m.fp;
    j["fn"] = m.fn;
    j["count_mae"] = e.count_mae;
    j["count_abs_median"] = e.count_abs_median;
    json rows = json::array();
    for (std::size_t i = 0; i < m.per_image.size(); ++i) {
        const auto& p = m.per_image[i];
        json r{{"id", p.id}, {"dice", p.dice}, {"aji", p.aji}, {"pq", p.pq.pq}, {"sq", p.pq.sq}, {"dq", p.pq.dq},
               {"tp", p.pq.tp}, {"fp", p.pq.fp}, {"fn", p.pq.fn}};
        if (i < e.counts.size()) {
            r["count_truth"] = e.counts[i].truth;
            r["count_hat"] = e.counts[i].count_hat;
            r["peaks"] = e.counts[i].peaks;
        }
        rows.push_back(r);
    }
    j["per_image"] = rows;
    return j;
}

void write_eval_report(const std::filesystem::path& dir, const ModelEval& e, const RunConfig& cfg,
                       const std::string& checkpoint_fingerprint) {
    std::filesystem::create_directories(dir);
    json j = eval_to_json(e);
    j["checkpoint_fingerprint"] = checkpoint_fingerprint;
    j["config"] = config_to_json(cfg);
    {
        std::ofstream out(dir / "report.json");
        if (!out) throw LoadError("cannot write " + (dir / "report.json").string());
        out << j.dump(2) << "\n";
    }
    std::ofstream csv(dir / "per_image.csv");
    if (!csv) throw LoadError("cannot write " + (dir / "per_image.csv").string());
    csv << "id,dice,aji,pq,sq,dq,tp,fp,fn,count_truth,count_hat,peaks\n" << std::setprecision(10);
    const auto& m = e.metrics;
    for (std::size_t i = 0; i < m.per_image.size(); ++i) {
        const auto& p = m.per_image[i];
        csv << p.id << ',' << p.dice << ',' << p.aji << ',' << p.pq.pq << ',' << p.pq.sq << ',' << p.pq.dq << ','
            << p.pq.tp << ',' << p.pq.fp << ',' << p.pq.fn;
        if (i < e.counts.size()) csv << ',' << e.counts[i].truth << ',' << e.counts[i].count_hat << ',' << e.counts[i].peaks;
        else csv << ",,,";
        csv << '\n';
    }
}

}  // namespace wda
