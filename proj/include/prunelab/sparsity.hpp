#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "prunelab/net.hpp"

namespace prunelab {

// Every BN scale in the network, flattened, with (layer_index, channel_index)
// provenance. layer_index is the graph index of the BN layer holding the value.
struct GammaSnapshot {
    std::vector<double> values;
    std::vector<std::pair<int, int>> provenance;
    size_t total_count = 0;
};

GammaSnapshot collect_gammas(const Network<float>& net);

// test/tool helper: snapshot over a bare value vector, provenance (0, j)
GammaSnapshot snapshot_from_values(const std::vector<double>& values);

// Standardized third moment of the scales, computed exactly as
//   sum (g - mean)^3 / ((n - 1) * sigma^3)
// with sigma the population standard deviation (divide by n). This mixes an
// (n-1) numerator normalization with a population sigma; textbook sample
// skewness uses n/((n-1)(n-2)). The mixed form is deliberate, see
// docs/metrics.md. Throws on n < 2 or sigma == 0.
double weight_skewness(const GammaSnapshot& snap);

struct Histogram {
    std::vector<double> edges;    // num_bins + 1 ascending edges
    std::vector<size_t> counts;   // num_bins entries, sums to sample count
};

// equal-width bins over [min, max]; the max value lands in the last bin
Histogram gamma_histogram(const GammaSnapshot& snap, int num_bins);

struct SparsityReport {
    double ws = 0.0;
    double gamma_mean = 0.0;
    double gamma_std = 0.0;           // population
    double near_zero_fraction = 0.0;  // |gamma| < threshold, diagnostic only
    Histogram histogram;
};

SparsityReport sparsity_report(const GammaSnapshot& snap, double near_zero_threshold = 1e-3,
                               int histogram_bins = 20);

// CSV schema: layer_index,channel_index,gamma
void write_gamma_csv(const GammaSnapshot& snap, const std::string& path);

}  // namespace prunelab
