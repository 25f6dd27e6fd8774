#include "wda/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace wda {

std::map<std::string, std::vector<std::pair<double, double>>> read_log_series(const std::filesystem::path& jsonl) {
    std::ifstream in(jsonl);
    if (!in) throw LoadError("cannot open " + jsonl.string());
    std::map<std::string, std::vector<std::pair<double, double>>> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw LoadError(jsonl.string() + ":" + std::to_string(n) + ": " + e.what());
        }
        const double it = j.value("iter", static_cast<double>(n - 1));
        for (const auto& [k, v] : j.items())
            if (k != "iter" && v.is_number()) out[k].emplace_back(it, v.get<double>());
    }
    return out;
}

namespace {

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

}  // namespace

std::string loss_curves_svg(const std::map<std::string, std::vector<std::pair<double, double>>>& series,
                            const std::string& title) {
    const int pw = 420, ph = 180, pad = 40;
    const int cols = 2;
    const int n = static_cast<int>(series.size());
    const int rows = std::max(1, (n + cols - 1) / cols);
    const int W = cols * (pw + pad) + pad, H = rows * (ph + pad) + 2 * pad;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << pad << "\" y=\"24\" font-size=\"16\" font-family=\"sans-serif\">" << escape(title) << "</text>\n";
    int k = 0;
    for (const auto& [key, pts] : series) {
        const int x0 = pad + (k % cols) * (pw + pad);
        const int y0 = 2 * pad + (k / cols) * (ph + pad);
        ++k;
        s << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\"" << ph
          << "\" fill=\"none\" stroke=\"#888\"/>\n";
        s << "<text x=\"" << x0 << "\" y=\"" << y0 - 6 << "\" font-size=\"12\" font-family=\"sans-serif\">" << escape(key)
          << "</text>\n";
        if (pts.empty()) continue;
        double xmin = pts.front().first, xmax = xmin, ymin = pts.front().second, ymax = ymin;
        for (const auto& [x, y] : pts) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
        if (xmax == xmin) xmax = xmin + 1;
        if (ymax == ymin) ymax = ymin + 1;
        s << "<text x=\"" << x0 + pw - 4 << "\" y=\"" << y0 + 12 << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(ymax)
          << "</text>\n<text x=\"" << x0 + pw - 4 << "\" y=\"" << y0 + ph - 4 << "\" font-size=\"10\" text-anchor=\"end\">"
          << fmt(ymin) << "</text>\n";
        s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1\" points=\"";
        // Thin long series to at most ~2 points per horizontal pixel.
        const std::size_t step = std::max<std::size_t>(1, pts.size() / (2 * pw));
        for (std::size_t i = 0; i < pts.size(); i += step) {
            const double px = x0 + (pts[i].first - xmin) / (xmax - xmin) * pw;
            const double py = y0 + ph - (pts[i].second - ymin) / (ymax - ymin) * ph;
            s << fmt(px) << ',' << fmt(py) << ' ';
        }
        s << "\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string metric_bars_svg(const std::vector<MetricBar>& bars) {
    const int bw = 18, gap = 30, ph = 220, pad = 50;
    const int W = pad * 2 + static_cast<int>(bars.size()) * (3 * bw + gap);
    const int H = ph + 2 * pad + 60;
    const char* colors[3] = {"#1f77b4", "#ff7f0e", "#2ca02c"};
    const char* names[3] = {"Dice", "AJI", "PQ"};
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << std::max(W, 300) << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int m = 0; m < 3; ++m)
        s << "<rect x=\"" << pad + m * 70 << "\" y=\"10\" width=\"10\" height=\"10\" fill=\"" << colors[m] << "\"/><text x=\""
          << pad + m * 70 + 14 << "\" y=\"19\" font-size=\"11\">" << names[m] << "</text>\n";
    const int base = pad + ph;
    s << "<line x1=\"" << pad << "\" y1=\"" << base << "\" x2=\"" << W - pad << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const int x = pad + static_cast<int>(i) * (3 * bw + gap);
        const double vals[3] = {bars[i].dice, bars[i].aji, bars[i].pq};
        for (int m = 0; m < 3; ++m) {
            const double h = std::clamp(vals[m], 0.0, 1.0) * ph;
            s << "<rect x=\"" << x + m * bw << "\" y=\"" << fmt(base - h) << "\" width=\"" << bw - 2 << "\" height=\""
              << fmt(h) << "\" fill=\"" << colors[m] << "\"><title>" << names[m] << ' ' << fmt(vals[m])
              << "</title></rect>\n";
        }
        s << "<text x=\"" << x << "\" y=\"" << base + 14 << "\" font-size=\"10\" transform=\"rotate(30 " << x << ","
          << base + 14 << ")\">" << escape(bars[i].label) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

void write_run_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<MetricBar> bars;
    std::ofstream csv(out_dir / "summary.csv");
    if (!csv) throw LoadError("cannot write " + (out_dir / "summary.csv").string());
    csv << "report,dice,aji,pq,sq,dq,count_mae\n";
    for (const auto& dir : run_dirs) {
        if (!fs::is_directory(dir)) throw LoadError("not a run directory: " + dir.string());
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const auto rel = fs::relative(f, dir.parent_path()).string();
            std::string label = rel;
            std::replace(label.begin(), label.end(), '/', '_');
            if (f.extension() == ".jsonl") {
                std::ofstream svg(out_dir / (fs::path(label).replace_extension(".svg")));
                svg << loss_curves_svg(read_log_series(f), rel);
            } else if (f.filename() == "report.json") {
                std::ifstream in(f);
                const auto j = json::parse(in);
                const auto name = fs::relative(f.parent_path(), dir.parent_path()).string();
                bars.push_back({name, j.value("dice", 0.0), j.value("aji", 0.0), j.value("pq", 0.0)});
                csv << name << ',' << j.value("dice", 0.0) << ',' << j.value("aji", 0.0) << ',' << j.value("pq", 0.0) << ','
                    << j.value("sq", 0.0) << ',' << j.value("dq", 0.0) << ',' << j.value("count_mae", 0.0) << '\n';
            }
        }
    }
    std::ofstream svg(out_dir / "metrics.svg");
    svg << metric_bars_svg(bars);
}

}  // namespace wda
