#include "wda/core_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "wda/random.hpp"

namespace fs = std::filesystem;

namespace wda {

const char* to_string(Domain d) noexcept { return d == Domain::source ? "source" : "target"; }

namespace {

Image mat_to_image(const cv::Mat& raw, const fs::path& where) {
    cv::Mat m = raw;
    if (m.channels() == 3) cv::cvtColor(raw, m, cv::COLOR_BGR2GRAY);
    else if (m.channels() == 4) cv::cvtColor(raw, m, cv::COLOR_BGRA2GRAY);
    double scale = 0.0;
    switch (m.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        default: throw LoadError("unsupported pixel depth in " + where.string() + " (need 8 or 16 bit)");
    }
    cv::Mat f;
    m.convertTo(f, CV_32F, scale);
    Image img(f.rows, f.cols);
    for (int r = 0; r < f.rows; ++r) {
        const float* row = f.ptr<float>(r);
        std::copy(row, row + f.cols, img.data() + static_cast<std::size_t>(r) * f.cols);
    }
    return img;
}

Mask mat_to_mask(const cv::Mat& raw, const fs::path& where) {
    cv::Mat m = raw;
    if (m.channels() > 1) cv::extractChannel(raw, m, 0);
    if (m.depth() != CV_8U && m.depth() != CV_16U)
        throw LoadError("unsupported mask depth in " + where.string());
    Mask mask(m.rows, m.cols, 0);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) {
            const int v = m.depth() == CV_8U ? m.at<std::uint8_t>(r, c) : m.at<std::uint16_t>(r, c);
            mask(r, c) = v != 0 ? 1 : 0;
        }
    return mask;
}

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw LoadError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw LoadError("no PNG slices in " + dir.string());
    return files;
}

std::vector<cv::Mat> read_raw_stack(const fs::path& dir_or_file, StackLayout layout,
                                    std::vector<std::string>* ids) {
    std::vector<cv::Mat> mats;
    if (layout == StackLayout::png_slices) {
        for (const auto& f : sorted_pngs(dir_or_file)) {
            cv::Mat m = cv::imread(f.string(), cv::IMREAD_UNCHANGED);
            if (m.empty()) throw LoadError("cannot read " + f.string());
            mats.push_back(m);
            if (ids) ids->push_back(f.stem().string());
        }
    } else {
        fs::path file = dir_or_file;
        if (fs::is_directory(file)) file /= "stack.tif";
        if (!fs::exists(file)) throw LoadError("missing TIFF stack " + file.string());
        if (!cv::imreadmulti(file.string(), mats, cv::IMREAD_UNCHANGED) || mats.empty())
            throw LoadError("cannot read TIFF stack " + file.string());
        if (ids)
            for (std::size_t i = 0; i < mats.size(); ++i) ids->push_back(file.stem().string() + "_" + std::to_string(i));
    }
    for (const auto& m : mats)
        if (m.rows != mats.front().rows || m.cols != mats.front().cols)
            throw ShapeError("inconsistent slice shapes in " + dir_or_file.string());
    return mats;
}

}  // namespace

std::vector<DomainSample> load_stack(const fs::path& dir_or_file, StackLayout layout, Domain domain) {
    std::vector<std::string> ids;
    const auto mats = read_raw_stack(dir_or_file, layout, &ids);
    std::vector<DomainSample> out;
    out.reserve(mats.size());
    for (std::size_t i = 0; i < mats.size(); ++i) {
        DomainSample s;
        s.image = mat_to_image(mats[i], dir_or_file);
        s.domain = domain;
        s.id = ids[i];
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Mask> load_mask_stack(const fs::path& dir_or_file, StackLayout layout) {
    const auto mats = read_raw_stack(dir_or_file, layout, nullptr);
    std::vector<Mask> out;
    out.reserve(mats.size());
    for (const auto& m : mats) out.push_back(mat_to_mask(m, dir_or_file));
    return out;
}

std::vector<std::vector<Point>> read_points_csv(const fs::path& file, std::size_t n_slices) {
    std::ifstream in(file);
    if (!in) throw LoadError("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw LoadError("empty points file " + file.string());
    line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
    if (line != "slice,row,col") throw LoadError("points file must start with header `slice,row,col`: " + file.string());
    std::vector<std::vector<Point>> pts(n_slices);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        long slice = -1;
        Point p;
        if (!(ss >> slice >> p.row >> p.col))
            throw LoadError(file.string() + ":" + std::to_string(lineno) + ": malformed row");
        if (slice < 0 || static_cast<std::size_t>(slice) >= n_slices)
            throw LoadError(file.string() + ":" + std::to_string(lineno) + ": slice index out of range");
        pts[static_cast<std::size_t>(slice)].push_back(p);
    }
    return pts;
}

void write_points_csv(const fs::path& file, const std::vector<std::vector<Point>>& points) {
    std::ofstream out(file);
    if (!out) throw LoadError("cannot write " + file.string());
    out << "slice,row,col\n";
    for (std::size_t s = 0; s < points.size(); ++s)
        for (const auto& p : points[s]) out << s << ',' << p.row << ',' << p.col << '\n';
}

StackLayout detect_layout(const fs::path& images_dir) {
    if (fs::exists(images_dir / "stack.tif") || fs::exists(images_dir / "stack.tiff")) return StackLayout::multipage_tiff;
    return StackLayout::png_slices;
}

std::vector<DomainSample> load_dataset(const fs::path& dir, Domain domain) {
    const fs::path images = dir / "images";
    if (!fs::exists(images)) throw LoadError("dataset has no images/ directory: " + dir.string());
    const StackLayout layout = detect_layout(images);
    auto samples = load_stack(layout == StackLayout::multipage_tiff && fs::exists(images / "stack.tiff")
                                  ? images / "stack.tiff"
                                  : images,
                              layout, domain);
    const fs::path masks = dir / "masks";
    if (fs::exists(masks)) {
        const auto mlayout = detect_layout(masks);
        auto m = load_mask_stack(masks, mlayout);
        if (m.size() != samples.size()) throw ShapeError("mask count does not match image count in " + dir.string());
        for (std::size_t i = 0; i < m.size(); ++i) {
            require_same_shape(m[i], samples[i].image, "load_dataset");
            samples[i].mask = std::move(m[i]);
        }
    }
    const fs::path points = dir / "points.csv";
    if (fs::exists(points)) {
        auto p = read_points_csv(points, samples.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            for (const auto& q : p[i])
                if (!samples[i].image.contains(q.row, q.col))
                    throw LoadError("point (" + std::to_string(q.row) + "," + std::to_string(q.col) +
                                    ") outside slice " + std::to_string(i));
            samples[i].points = std::move(p[i]);
        }
    }
    return samples;
}

void save_image16(const fs::path& file, const Image& img) {
    cv::Mat m(img.rows(), img.cols(), CV_16U);
    for (int r = 0; r < img.rows(); ++r)
        for (int c = 0; c < img.cols(); ++c)
            m.at<std::uint16_t>(r, c) =
                static_cast<std::uint16_t>(std::lround(std::clamp(img(r, c), 0.0f, 1.0f) * 65535.0));
    if (!cv::imwrite(file.string(), m)) throw LoadError("cannot write " + file.string());
}

void save_mask_png(const fs::path& file, const Mask& mask) {
    cv::Mat m(mask.rows(), mask.cols(), CV_8U);
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c) m.at<std::uint8_t>(r, c) = mask(r, c) ? 255 : 0;
    if (!cv::imwrite(file.string(), m)) throw LoadError("cannot write " + file.string());
}

void save_dataset(const fs::path& dir, const std::vector<DomainSample>& samples) {
    fs::create_directories(dir / "images");
    const bool any_mask = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.mask.has_value(); });
    const bool any_points =
        std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.points.has_value(); });
    if (any_mask) fs::create_directories(dir / "masks");
    std::vector<std::vector<Point>> pts(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu.png", i);
        save_image16(dir / "images" / name, samples[i].image);
        if (any_mask) {
            if (!samples[i].mask) throw ShapeError("save_dataset: masks must be present on all samples or none");
            save_mask_png(dir / "masks" / name, *samples[i].mask);
        }
        if (samples[i].points) pts[i] = *samples[i].points;
    }
    if (any_points) write_points_csv(dir / "points.csv", pts);
}

Point component_center(const LabelGrid& labels, int id) {
    double sr = 0.0;
    double sc = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < labels.rows(); ++r)
        for (int c = 0; c < labels.cols(); ++c)
            if (labels(r, c) == id) {
                sr += r;
                sc += c;
                ++n;
            }
    if (n == 0) throw Error("component_center: empty component");
    const double cr = sr / static_cast<double>(n);
    const double cc = sc / static_cast<double>(n);
    Point p{static_cast<int>(std::lround(cr)), static_cast<int>(std::lround(cc))};
    if (labels.contains(p.row, p.col) && labels(p.row, p.col) == id) return p;
    // Concave component: snap to the nearest member pixel.
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < labels.rows(); ++r)
        for (int c = 0; c < labels.cols(); ++c) {
            if (labels(r, c) != id) continue;
            const double d = (r - cr) * (r - cr) + (c - cc) * (c - cc);
            if (d < best) {
                best = d;
                p = {r, c};
            }
        }
    return p;
}

std::vector<Point> centers_from_mask(const Mask& mask) {
    const auto inst = label_components(mask);
    std::vector<double> sr(static_cast<std::size_t>(inst.count) + 1, 0.0);
    std::vector<double> sc(sr.size(), 0.0);
    std::vector<std::size_t> n(sr.size(), 0);
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c) {
            const auto id = static_cast<std::size_t>(inst.labels(r, c));
            sr[id] += r;
            sc[id] += c;
            ++n[id];
        }
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(inst.count));
    for (int id = 1; id <= inst.count; ++id) {
        const auto k = static_cast<std::size_t>(id);
        Point p{static_cast<int>(std::lround(sr[k] / n[k])), static_cast<int>(std::lround(sc[k] / n[k]))};
        if (inst.labels(p.row, p.col) != id) p = component_center(inst.labels, id);
        out.push_back(p);
    }
    return out;
}

std::size_t sparse_count(std::size_t n, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("sparse ratio must lie in (0,1], got " + std::to_string(ratio));
    if (n == 0) return 0;
    const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n);
}

std::vector<Point> sample_sparse_points(const std::vector<Point>& points, const SparsePointBudget& budget) {
    const std::size_t k = sparse_count(points.size(), budget.ratio);
    std::vector<std::size_t> idx(points.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(budget.seed);
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    std::vector<Point> out;
    out.reserve(k);
    for (auto i : idx) out.push_back(points[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
    if (rows < 16 || cols < 16) throw ConfigError("synth: image must be at least 16x16");
    if (min_instances < 1 || max_instances < min_instances)
        throw ConfigError("synth: instance range must satisfy 1 <= min <= max");
    if (!(min_axis >= 2.0 && max_axis >= min_axis)) throw ConfigError("synth: axis range invalid");
    if (2.0 * max_axis + 6.0 > std::min(rows, cols)) throw ConfigError("synth: ellipses do not fit the image");
    if (n_source < 0 || n_target_train < 0 || n_target_test < 0) throw ConfigError("synth: negative split size");
    if (!(sparse_ratio > 0.0 && sparse_ratio <= 1.0)) throw ConfigError("synth: sparse_ratio must lie in (0,1]");
    for (const auto* s : {&source, &target}) {
        if (s->gamma <= 0.0 || s->contrast <= 0.0 || s->density_multiplier <= 0.0 || s->noise_sigma < 0.0)
            throw ConfigError("synth: domain style knobs must be positive");
    }
}

namespace {

struct Ellipse {
    double cr, cc, a, b, theta;
};

// Normalized radius: <= 1 inside the ellipse.
double ellipse_rho(const Ellipse& e, double r, double c) {
    const double dy = r - e.cr;
    const double dx = c - e.cc;
    const double ct = std::cos(e.theta);
    const double st = std::sin(e.theta);
    const double u = (dx * ct + dy * st) / e.a;
    const double v = (-dx * st + dy * ct) / e.b;
    return std::sqrt(u * u + v * v);
}

}  // namespace

DomainSample synth_sample(const SynthConfig& cfg, const DomainStyle& style, Domain domain, std::uint64_t seed,
                          std::string id) {
    Rng rng(seed);
    const int R = cfg.rows;
    const int C = cfg.cols;

    // Background: a few oriented sinusoids plus a slow illumination ramp.
    Image img(R, C);
    struct Wave {
        double kr, kc, phase;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 3; ++k) {
        const double ang = uniform(rng, 0.0, 3.141592653589793);
        const double f = style.texture_freq * uniform(rng, 0.8, 1.2) * 6.283185307179586 / R;
        waves.push_back({f * std::sin(ang), f * std::cos(ang), uniform(rng, 0.0, 6.283185307179586)});
    }
    const double ramp_r = uniform(rng, -0.04, 0.04);
    const double ramp_c = uniform(rng, -0.04, 0.04);
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            double t = 0.0;
            for (const auto& w : waves) t += std::sin(w.kr * r + w.kc * c + w.phase);
            img(r, c) = static_cast<float>(style.background + style.texture_amp * t / 3.0 +
                                           ramp_r * (r - R / 2.0) / R + ramp_c * (c - C / 2.0) / C);
        }

    // Instances: non-touching ellipses (>= 2 px gap) with a dark membrane ring.
    const int drawn = uniform_int(rng, cfg.min_instances, cfg.max_instances);
    const int target_n = std::clamp(static_cast<int>(std::lround(drawn * style.density_multiplier)), cfg.min_instances,
                                    cfg.max_instances);
    Mask mask(R, C, 0);
    Mask forbidden(R, C, 0);
    std::vector<Ellipse> placed;
    for (int attempt = 0; attempt < 400 && static_cast<int>(placed.size()) < target_n; ++attempt) {
        Ellipse e;
        e.a = uniform(rng, cfg.min_axis, cfg.max_axis);
        e.b = uniform(rng, std::max(cfg.min_axis * 0.8, 0.55 * e.a), e.a);
        e.theta = uniform(rng, 0.0, 3.141592653589793);
        e.cr = uniform(rng, e.a + 2.0, R - e.a - 3.0);
        e.cc = uniform(rng, e.a + 2.0, C - e.a - 3.0);
        std::vector<std::array<int, 2>> pix;
        bool ok = true;
        const int r0 = std::max(0, static_cast<int>(e.cr - e.a - 1));
        const int r1 = std::min(R - 1, static_cast<int>(e.cr + e.a + 1));
        const int c0 = std::max(0, static_cast<int>(e.cc - e.a - 1));
        const int c1 = std::min(C - 1, static_cast<int>(e.cc + e.a + 1));
        for (int r = r0; r <= r1 && ok; ++r)
            for (int c = c0; c <= c1; ++c) {
                if (ellipse_rho(e, r, c) > 1.0) continue;
                if (forbidden(r, c)) {
                    ok = false;
                    break;
                }
                pix.push_back({r, c});
            }
        if (!ok || pix.size() < 9) continue;
        Mask one(R, C, 0);
        for (const auto& [r, c] : pix) {
            one(r, c) = 1;
            mask(r, c) = 1;
        }
        // Keep a 2 px gap so instances never touch under 8-connectivity.
        const Mask grown = dilate(one, 3);
        for (std::size_t i = 0; i < grown.size(); ++i) forbidden[i] |= grown[i];
        placed.push_back(e);

        const double ring = cfg.membrane_px / e.b;
        const double stripe_ang = uniform(rng, 0.0, 3.141592653589793);
        for (const auto& [r, c] : pix) {
            const double rho = ellipse_rho(e, r, c);
            double v;
            if (rho > 1.0 - ring) {
                v = style.membrane;
            } else {
                const double s = std::sin(((r - e.cr) * std::sin(stripe_ang) + (c - e.cc) * std::cos(stripe_ang)) *
                                          6.283185307179586 / 4.0);
                v = style.interior + 0.04 * s;
            }
            img(r, c) = static_cast<float>(v);
        }
    }

    img = gaussian_blur(img, 0.7);
    for (auto& v : img) {
        double x = 0.5 + style.contrast * (static_cast<double>(v) - 0.5);
        x = std::pow(std::clamp(x, 0.0, 1.0), style.gamma);
        x += style.noise_sigma * normal(rng);
        v = static_cast<float>(std::clamp(x, 0.0, 1.0));
    }

    DomainSample s;
    s.image = std::move(img);
    s.points = centers_from_mask(mask);
    s.mask = std::move(mask);
    s.domain = domain;
    s.id = std::move(id);
    return s;
}

SynthDomains synth_domain_pair(const SynthConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SynthDomains d;
    char id[32];
    for (int i = 0; i < cfg.n_source; ++i) {
        std::snprintf(id, sizeof id, "src_%04d", i);
        d.source.push_back(synth_sample(cfg, cfg.source, Domain::source, derive_seed(seed, {0, static_cast<std::uint64_t>(i)}), id));
    }
    for (int i = 0; i < cfg.n_target_train; ++i) {
        std::snprintf(id, sizeof id, "tgt_train_%04d", i);
        d.target_train_truth.push_back(
            synth_sample(cfg, cfg.target, Domain::target, derive_seed(seed, {1, static_cast<std::uint64_t>(i)}), id));
    }
    for (int i = 0; i < cfg.n_target_test; ++i) {
        std::snprintf(id, sizeof id, "tgt_test_%04d", i);
        d.target_test.push_back(
            synth_sample(cfg, cfg.target, Domain::target, derive_seed(seed, {2, static_cast<std::uint64_t>(i)}), id));
    }
    d.target_train = resample_target_points(d, {cfg.sparse_ratio, derive_seed(seed, {3})});
    return d;
}

std::vector<DomainSample> resample_target_points(const SynthDomains& d, const SparsePointBudget& budget) {
    std::vector<DomainSample> out;
    out.reserve(d.target_train_truth.size());
    for (std::size_t i = 0; i < d.target_train_truth.size(); ++i) {
        const auto& truth = d.target_train_truth[i];
        DomainSample s;
        s.image = truth.image;
        s.domain = Domain::target;
        s.id = truth.id;
        s.points = sample_sparse_points(*truth.points, {budget.ratio, derive_seed(budget.seed, {i})});
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace wda
