// wda: command-line driver for synthesis, training, adaptation and evaluation.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "wda/checkpoint.hpp"
#include "wda/config.hpp"
#include "wda/evaluation.hpp"
#include "wda/report.hpp"
#include "wda/sar.hpp"
#include "wda/training.hpp"

namespace fs = std::filesystem;
using namespace wda;

namespace {

RunConfig config_or_default(const std::string& file) { return file.empty() ? RunConfig{} : load_config(file); }

std::vector<DomainSample> pick_split(const Datasets& d, const std::string& split) {
    if (split == "target_test") return d.target_test;
    if (split == "source_val") return d.source_val;
    if (split == "source") return d.source;
    if (split == "target_train_truth") {
        if (d.target_train_truth.empty()) throw ConfigError("target_train_truth exists only for synthetic data");
        return d.target_train_truth;
    }
    throw ConfigError("unknown split '" + split + "'");
}

void print_shapes(const RunConfig& cfg, int size) {
    G1 g1(cfg.model.backbone, cfg.model.density_scale);
    G2 g2(cfg.model.backbone, cfg.model.density_scale);
    Discriminator d(cfg.model.discriminator);
    BackboneConfig plain = cfg.model.backbone;
    plain.block = plain.block == BlockType::hdd_lite ? BlockType::plain_conv : BlockType::hdd_lite;
    G1 other(plain, cfg.model.density_scale);
    torch::NoGradGuard ng;
    g1->eval();
    const auto x = torch::zeros({1, 1, size, size});
    const auto o = g1->forward(x);
    const auto c = g2->forward(x);
    const auto dl = d->forward(o.seg_prob);
    std::cout << "block            " << to_string(cfg.model.backbone.block) << "\n"
              << "depth            " << cfg.model.backbone.depth << "\n"
              << "base_channels    " << cfg.model.backbone.base_channels << "\n"
              << "G1 parameters    " << parameter_count(*g1) << "\n"
              << "  trunk          " << parameter_count(*g1->trunk) << "\n"
              << "  seg head       " << parameter_count(*g1->seg_head) << "\n"
              << "  det head       " << parameter_count(*g1->det_head) << "\n"
              << "  count subnet   " << parameter_count(*g1->count_block) + parameter_count(*g1->count_out) << "\n"
              << "G1 (" << to_string(plain.block) << ") " << parameter_count(*other) << "\n"
              << "G2 parameters    " << parameter_count(*g2) << "\n"
              << "D parameters     " << parameter_count(*d) << "\n"
              << "input            " << x.sizes() << "\n"
              << "seg_prob         " << o.seg_prob.sizes() << "\n"
              << "det_heat         " << o.det_heat.sizes() << "\n"
              << "count_hat        " << o.count_hat.sizes() << "\n"
              << "G2 density       " << c.density.sizes() << "\n"
              << "D logits         " << dl.sizes() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weakly supervised domain adaptation for instance-dense segmentation"};
    app.require_subcommand(1);
    std::string config_file, out, resume, g1_ckpt, g2_ckpt, checkpoint, split = "target_test", dataset;
    long stop_after = -1;
    bool verbose = false, no_filter = false, overlays = false, supervised = false;
    double ratio = 0.15;
    std::uint64_t seed = 0;
    int size = 128;
    std::vector<std::string> runs;

    auto* synth = app.add_subcommand("synth", "Write the synthetic two-domain datasets");
    synth->add_option("-c,--config", config_file, "Run config (JSON)");
    synth->add_option("-o,--out", out, "Output directory")->required();

    auto* sample = app.add_subcommand("sample-points", "Draw sparse center points from a dataset's masks");
    sample->add_option("-d,--dataset", dataset, "Dataset directory with masks/")->required();
    sample->add_option("-r,--ratio", ratio, "Fraction of instances to keep per slice");
    sample->add_option("-s,--seed", seed, "Sampling seed");
    sample->add_option("-o,--out", out, "Output CSV (default <dataset>/points.csv)");

    auto* refine = app.add_subcommand("refine-source-labels", "Snap source masks to image edges (writes masks_sar/)");
    refine->add_option("-d,--dataset", dataset, "Source dataset directory")->required();
    refine->add_option("-c,--config", config_file, "Run config (sar section)");

    auto* tsrc = app.add_subcommand("train-source", "Train G1 on the source domain");
    tsrc->add_option("-c,--config", config_file, "Run config (JSON)");
    tsrc->add_option("-o,--out", out, "Output directory")->required();
    tsrc->add_option("--resume", resume, "Resume from a train-source checkpoint");
    tsrc->add_option("--stop-after", stop_after, "Stop after this many iterations");
    tsrc->add_flag("--supervised-target", supervised, "Train on the withheld dense target labels (synthetic only)");
    tsrc->add_flag("-v,--verbose", verbose);

    auto* tcnt = app.add_subcommand("train-count", "Train the counting network G2 from a G1 checkpoint");
    tcnt->add_option("-c,--config", config_file, "Run config (JSON)");
    tcnt->add_option("--g1", g1_ckpt, "G1 source checkpoint")->required();
    tcnt->add_option("-o,--out", out, "Output directory")->required();
    tcnt->add_option("--resume", resume, "Resume from a train-count checkpoint");
    tcnt->add_option("--stop-after", stop_after, "Stop after this many iterations");
    tcnt->add_flag("-v,--verbose", verbose);

    auto* adp = app.add_subcommand("adapt", "Adapt G1 to the target domain");
    adp->add_option("-c,--config", config_file, "Run config (JSON)");
    adp->add_option("--g1", g1_ckpt, "G1 source checkpoint")->required();
    adp->add_option("--g2", g2_ckpt, "G2 counting checkpoint");
    adp->add_option("-o,--out", out, "Output directory")->required();
    adp->add_option("--resume", resume, "Resume from an adapt checkpoint");
    adp->add_option("--stop-after", stop_after, "Stop after this many iterations");
    adp->add_flag("-v,--verbose", verbose);

    auto* ev = app.add_subcommand("evaluate", "Evaluate a G1 checkpoint (segmentation) or a G2 checkpoint (counting)");
    ev->add_option("-c,--config", config_file, "Run config (default: the checkpoint's own)");
    ev->add_option("--checkpoint", checkpoint, "G1 checkpoint, or a G2 checkpoint for a counting report")->required();
    ev->add_option("--split", split, "target_test | source_val | source | target_train_truth");
    ev->add_option("-d,--dataset", dataset, "Evaluate a dataset directory instead of a split");
    ev->add_option("-o,--out", out, "Report directory")->required();
    ev->add_flag("--no-filter", no_filter, "Skip peak-guided filtering");
    ev->add_flag("--overlays", overlays, "Write TP/FP/FN overlay PNGs");

    auto* info = app.add_subcommand("model-info", "Print parameter counts and output shapes");
    info->add_option("-c,--config", config_file, "Run config (JSON)");
    info->add_option("--checkpoint", checkpoint, "Read the model config from a checkpoint");
    info->add_option("--size", size, "Input side length");

    auto* rep = app.add_subcommand("report", "Plot loss curves and metric bars for run directories");
    rep->add_option("runs", runs, "Run directories")->required();
    rep->add_option("-o,--out", out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            const auto cfg = config_or_default(config_file);
            const auto d = synth_domain_pair(cfg.synth, cfg.synth_seed);
            save_dataset(fs::path(out) / "source", d.source);
            save_dataset(fs::path(out) / "target_train", d.target_train);
            save_dataset(fs::path(out) / "target_test", d.target_test);
            save_dataset(fs::path(out) / "target_train_truth", d.target_train_truth);
            save_config(fs::path(out) / "config.json", cfg);
            std::cout << "wrote " << d.source.size() << " source, " << d.target_train.size() << " target train, "
                      << d.target_test.size() << " target test images to " << out << "\n";
        } else if (*sample) {
            const auto samples = load_dataset(dataset, Domain::target);
            std::vector<std::vector<Point>> pts;
            std::size_t total = 0;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                if (!samples[i].mask) throw ConfigError("sample-points: dataset has no masks");
                pts.push_back(sample_sparse_points(centers_from_mask(*samples[i].mask),
                                                   {ratio, derive_seed(seed, {static_cast<std::uint64_t>(i)})}));
                total += pts.back().size();
            }
            const fs::path file = out.empty() ? fs::path(dataset) / "points.csv" : fs::path(out);
            write_points_csv(file, pts);
            std::cout << "wrote " << total << " points for " << pts.size() << " slices to " << file << "\n";
        } else if (*refine) {
            const auto cfg = config_or_default(config_file);
            const auto samples = load_dataset(dataset, Domain::source);
            const fs::path dir = fs::path(dataset) / "masks_sar";
            fs::create_directories(dir);
            for (std::size_t i = 0; i < samples.size(); ++i) {
                const auto r = refine_source_sample(samples[i], cfg.sar);
                char name[32];
                std::snprintf(name, sizeof name, "%04zu.png", i);
                save_mask_png(dir / name, *r.mask);
            }
            std::cout << "refined " << samples.size() << " masks into " << dir << "\n";
        } else if (*tsrc) {
            const auto cfg = config_or_default(config_file);
            const auto d = load_datasets(cfg);
            TrainOptions o{out, resume, stop_after, verbose, {}};
            const auto r = supervised ? train_source(cfg, pick_split(d, "target_train_truth"), o, "g1_supervised")
                                      : train_source(cfg, d.source, o);
            std::cout << r.checkpoint.string() << "\n";
        } else if (*tcnt) {
            const auto cfg = config_or_default(config_file);
            const auto d = load_datasets(cfg);
            const auto r = train_counter(cfg, d.source, g1_ckpt, TrainOptions{out, resume, stop_after, verbose, {}});
            auto g2 = load_g2(r.checkpoint);
            double delta = 0.0;
            const double src = counter_mae(g2, d.source_val.empty() ? d.source : d.source_val, cfg.optim.count_scales, &delta);
            const double tgt = d.target_test.empty() ? 0.0 : counter_mae(g2, d.target_test, cfg.optim.count_scales);
            std::cout << r.checkpoint.string() << "\nsource MAE " << src << "  target MAE " << tgt
                      << "  multi-scale vs single-scale delta " << delta << "\n";
        } else if (*adp) {
            const auto cfg = config_or_default(config_file);
            if (cfg.losses.counting && g2_ckpt.empty()) throw ConfigError("adapt: --g2 is required when counting is enabled");
            const auto d = load_datasets(cfg);
            const auto r = adapt(cfg, d.source, d.target_train, g1_ckpt, g2_ckpt, TrainOptions{out, resume, stop_after, verbose, {}});
            std::cout << r.checkpoint.string() << "\n";
        } else if (*ev && CheckpointReader(checkpoint).meta().kind == "g2-count") {
            RunConfig ck_cfg;
            auto g2 = load_g2(checkpoint, &ck_cfg);
            const RunConfig cfg = config_file.empty() ? ck_cfg : load_config(config_file);
            const auto samples = dataset.empty() ? pick_split(load_datasets(cfg), split) : load_dataset(dataset, Domain::target);
            const auto rep = counter_report(g2, samples, cfg.optim.count_scales);
            const fs::path dir(out);
            fs::create_directories(dir);
            std::ofstream csv(dir / "counts.csv");
            csv << "id,truth,count";
            for (double s : cfg.optim.count_scales) csv << ",scale_" << s;
            csv << "\n";
            json per = json::array();
            for (const auto& im : rep.images) {
                csv << im.id << "," << im.truth << "," << im.count;
                for (double c : im.per_scale) csv << "," << c;
                csv << "\n";
                per.push_back({{"id", im.id}, {"truth", im.truth}, {"count", im.count}, {"per_scale", im.per_scale}});
            }
            std::ofstream(dir / "count_report.json")
                << json{{"mae", rep.mae}, {"bias", rep.bias}, {"single_scale_delta", rep.single_scale_delta},
                        {"images", per}, {"config", config_to_json(cfg)}}.dump(2)
                << "\n";
            std::printf("count MAE %.3f  bias %+.3f  multi-scale vs single-scale delta %.3f\n", rep.mae, rep.bias,
                        rep.single_scale_delta);
        } else if (*ev) {
            RunConfig ck_cfg;
            auto g1 = load_g1(checkpoint, &ck_cfg);
            RunConfig cfg = config_file.empty() ? ck_cfg : load_config(config_file);
            if (no_filter) cfg.eval.filter = false;
            if (overlays) cfg.eval.overlays = true;
            const auto samples = dataset.empty() ? pick_split(load_datasets(cfg), split) : load_dataset(dataset, Domain::target);
            const fs::path dir(out);
            const auto e = evaluate_model(g1, samples, cfg.eval, cfg.optim.patch,
                                          cfg.eval.overlays ? std::optional<fs::path>(dir / "overlays") : std::nullopt);
            write_eval_report(dir, e, cfg, CheckpointReader(checkpoint).meta().fingerprint);
            std::printf("dice %.4f  aji %.4f  pq %.4f  (sq %.4f dq %.4f)  count MAE %.3f\n", e.metrics.dice, e.metrics.aji,
                        e.metrics.pq, e.metrics.sq, e.metrics.dq, e.count_mae);
        } else if (*info) {
            RunConfig cfg = config_or_default(config_file);
            if (!checkpoint.empty()) {
                CheckpointReader r(checkpoint);
                cfg = r.config();
                std::cout << "checkpoint       " << checkpoint << " (" << r.meta().kind << ", iteration " << r.meta().iteration
                          << ", config " << r.meta().fingerprint << ")\n";
            }
            print_shapes(cfg, size);
        } else if (*rep) {
            std::vector<fs::path> dirs(runs.begin(), runs.end());
            write_run_report(dirs, out);
            std::cout << "wrote report to " << out << "\n";
        }
    } catch (const wda::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const c10::Error& e) {
        std::cerr << "torch error: " << e.what_without_backtrace() << "\n";
        return 3;
    }
    return 0;
}
