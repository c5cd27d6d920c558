#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prunelab/rng.hpp"
#include "prunelab/tensor.hpp"

namespace prunelab {

// Synthetic stand-in for log-mel features: per class, a fixed random
// band-pattern template over the mel x time grid, plus Gaussian noise.
struct SyntheticSpec {
    int num_classes = 10;
    int samples_per_class = 200;
    int mel_bands = 40;
    int frames = 128;
    double noise_level = 0.1;
    uint64_t seed = 7;
};

struct Dataset {
    std::vector<TensorF> features;  // each (1, mel_bands, frames)
    std::vector<int> labels;
    int num_classes = 0;

    size_t size() const { return features.size(); }
};

struct SplitDataset {
    Dataset train, val;
};

// Deterministic under the seed; stratified split, train_fraction per class
// into train and the rest into val.
SplitDataset synth_dataset(const SyntheticSpec& spec, double train_fraction = 0.7);

// Stacks samples into an N,C,H,W batch plus one-hot labels (N, num_classes).
std::pair<TensorF, TensorF> make_batch(const Dataset& data, const std::vector<size_t>& indices);

// Mixup: one Beta(alpha, alpha) coefficient per batch, partners drawn by a
// seeded shuffle; soft label rows still sum to 1.
struct MixupResult {
    TensorF features;
    TensorF labels;
    double mu = 1.0;
};

MixupResult mixup(const TensorF& batch, const TensorF& onehot, double alpha, Rng& rng);

// deterministic core used by mixup and by tests that force mu
MixupResult mixup_with(const TensorF& batch, const TensorF& onehot, double mu,
                       const std::vector<size_t>& partner);

// SpecAugment: one frequency band of width uniform in [0, freq_mask] and one
// time span of width uniform in [0, time_mask] zeroed in place.
void specaugment(TensorF& feature, int freq_mask, int time_mask, Rng& rng);

// deterministic core with forced extents
void apply_time_freq_masks(TensorF& feature, int freq_start, int freq_width, int time_start,
                           int time_width);

}  // namespace prunelab
