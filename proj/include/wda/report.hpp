#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wda/config.hpp"

namespace wda {

/// Reads a JSONL training log into per-key series (null entries skipped).
std::map<std::string, std::vector<std::pair<double, double>>> read_log_series(const std::filesystem::path& jsonl);

/// Line plot of every numeric key except `iter`, one panel per key.
std::string loss_curves_svg(const std::map<std::string, std::vector<std::pair<double, double>>>& series,
                            const std::string& title);

struct MetricBar {
    std::string label;
    double dice = 0.0, aji = 0.0, pq = 0.0;
};
std::string metric_bars_svg(const std::vector<MetricBar>& bars);

/// For each run directory: plots every *.jsonl log and collects report.json
/// files (recursively) into metric bars plus a summary CSV.
void write_run_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace wda
