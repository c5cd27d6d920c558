#include "prunelab/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "prunelab/util.hpp"

namespace prunelab {

GammaSnapshot collect_gammas(const Network<float>& net) {
    GammaSnapshot snap;
    for (int li = 0; li < net.num_layers(); ++li) {
        const auto& l = net.layers[li];
        if (l.kind != LayerKind::BatchNorm) continue;
        for (size_t c = 0; c < l.gamma.size(); ++c) {
            snap.values.push_back(static_cast<double>(l.gamma[c]));
            snap.provenance.emplace_back(li, static_cast<int>(c));
        }
    }
    if (snap.values.empty())
        throw std::invalid_argument("collect_gammas: network has no BN layers");
    snap.total_count = snap.values.size();
    return snap;
}

GammaSnapshot snapshot_from_values(const std::vector<double>& values) {
    GammaSnapshot snap;
    snap.values = values;
    for (size_t j = 0; j < values.size(); ++j) snap.provenance.emplace_back(0, static_cast<int>(j));
    snap.total_count = values.size();
    return snap;
}

double weight_skewness(const GammaSnapshot& snap) {
    const size_t n = snap.values.size();
    if (n < 2) throw std::invalid_argument("weight_skewness: needs at least 2 values");
    double mean = 0.0;
    for (double v : snap.values) mean += v;
    mean /= static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0;
    for (double v : snap.values) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    const double sigma = std::sqrt(m2 / static_cast<double>(n));
    if (sigma == 0.0)
        throw std::invalid_argument("weight_skewness: degenerate (constant) distribution");
    return m3 / (static_cast<double>(n - 1) * sigma * sigma * sigma);
}

Histogram gamma_histogram(const GammaSnapshot& snap, int num_bins) {
    if (num_bins < 1) throw std::invalid_argument("gamma_histogram: num_bins must be >= 1");
    if (snap.values.empty()) throw std::invalid_argument("gamma_histogram: empty snapshot");
    const auto [lo_it, hi_it] = std::minmax_element(snap.values.begin(), snap.values.end());
    const double lo = *lo_it, hi = *hi_it;
    Histogram h;
    h.counts.assign(num_bins, 0);
    h.edges.resize(num_bins + 1);
    const double width = (hi - lo) / num_bins;
    for (int i = 0; i <= num_bins; ++i) h.edges[i] = lo + width * i;
    h.edges[num_bins] = hi;
    for (double v : snap.values) {
        int bin;
        if (width == 0.0) {
            bin = 0;  // point mass
        } else {
            bin = static_cast<int>((v - lo) / width);
            bin = std::clamp(bin, 0, num_bins - 1);
        }
        h.counts[static_cast<size_t>(bin)] += 1;
    }
    return h;
}

SparsityReport sparsity_report(const GammaSnapshot& snap, double near_zero_threshold,
                               int histogram_bins) {
    SparsityReport r;
    r.ws = weight_skewness(snap);
    const size_t n = snap.values.size();
    double mean = 0.0;
    for (double v : snap.values) mean += v;
    mean /= static_cast<double>(n);
    double m2 = 0.0;
    size_t near_zero = 0;
    for (double v : snap.values) {
        m2 += (v - mean) * (v - mean);
        if (std::abs(v) < near_zero_threshold) near_zero += 1;
    }
    r.gamma_mean = mean;
    r.gamma_std = std::sqrt(m2 / static_cast<double>(n));
    r.near_zero_fraction = static_cast<double>(near_zero) / static_cast<double>(n);
    r.histogram = gamma_histogram(snap, histogram_bins);
    return r;
}

void write_gamma_csv(const GammaSnapshot& snap, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "layer_index,channel_index,gamma\n";
    for (size_t i = 0; i < snap.values.size(); ++i)
        out << snap.provenance[i].first << "," << snap.provenance[i].second << ","
            << fixed6(snap.values[i]) << "\n";
}

}  // namespace prunelab
