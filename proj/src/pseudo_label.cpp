#include "wda/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace wda {

double normalized_entropy(std::span<const double> p) {
    if (p.size() < 2) throw NumericError("normalized_entropy: need at least two classes");
    double total = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw NumericError("normalized_entropy: negative or NaN probability");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) throw NumericError("normalized_entropy: probabilities do not sum to 1");
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h / std::log(static_cast<double>(p.size()));
}

double normalized_entropy_binary(double fg) {
    const double p[2] = {1.0 - fg, fg};
    return normalized_entropy(p);
}

double decile(std::vector<double>& population, int K) {
    if (K < 1 || K > 9) throw ConfigError("decile index K must lie in 1..9");
    if (population.empty()) return std::numeric_limits<double>::infinity();
    const std::size_t n = population.size();
    const std::size_t idx = std::min(n - 1, static_cast<std::size_t>(K) * n / 10);
    std::nth_element(population.begin(), population.begin() + static_cast<std::ptrdiff_t>(idx), population.end());
    return population[idx];
}

EntropyThresholds compute_thresholds(std::span<const ProbMap> prob_maps, int K) {
    std::size_t total = 0;
    for (const auto& m : prob_maps) total += m.fg.size();
    const std::size_t stride = total > kThresholdPopulationCap ? kThresholdSubsampleStride : 1;

    std::array<std::vector<double>, 2> pop;
    for (const auto& m : prob_maps)
        for (std::size_t i = 0; i < m.fg.size(); i += stride) {
            const float fg = m.fg[i];
            pop[static_cast<std::size_t>(argmax_class(fg))].push_back(normalized_entropy_binary(fg));
        }

    EntropyThresholds t;
    t.K = K;
    for (std::size_t l = 0; l < 2; ++l) {
        if (pop[l].empty()) std::clog << "warning: no pixels predicted as class " << l << "; its pseudo-labels are disabled\n";
        t.v[l] = decile(pop[l], K);
    }
    return t;
}

PseudoLabelMask generate_pseudo_labels(const ProbMap& prob_map, const EntropyThresholds& thresholds) {
    PseudoLabelMask out{Grid<std::int8_t>(prob_map.rows(), prob_map.cols(), PseudoLabelMask::kIgnored), 0.0};
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < prob_map.fg.size(); ++i) {
        const float fg = prob_map.fg[i];
        const int cls = argmax_class(fg);
        if (normalized_entropy_binary(fg) < thresholds.v[static_cast<std::size_t>(cls)]) {
            out.labels[i] = static_cast<std::int8_t>(cls);
            ++labeled;
        }
    }
    out.coverage = out.labels.empty() ? 0.0 : static_cast<double>(labeled) / static_cast<double>(out.labels.size());
    return out;
}

}  // namespace wda
