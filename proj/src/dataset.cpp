#include "prunelab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prunelab {

SplitDataset synth_dataset(const SyntheticSpec& spec, double train_fraction) {
    if (spec.num_classes < 2) throw std::invalid_argument("synth_dataset: num_classes >= 2");
    if (spec.mel_bands < 1 || spec.frames < 1)
        throw std::invalid_argument("synth_dataset: degenerate feature grid");
    if (spec.noise_level < 0.0) throw std::invalid_argument("synth_dataset: negative noise");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("synth_dataset: train_fraction must lie in (0,1)");
    const int per_split_min = 2;
    const int n_train_per_class =
        static_cast<int>(std::lround(train_fraction * spec.samples_per_class));
    const int n_val_per_class = spec.samples_per_class - n_train_per_class;
    if (n_train_per_class < per_split_min || n_val_per_class < per_split_min)
        throw std::invalid_argument("synth_dataset: needs >= 2 samples per class per split");

    Rng rng(spec.seed);
    const int F = spec.mel_bands, T = spec.frames;

    // class templates: a few active bands with slow sinusoidal structure
    std::vector<std::vector<float>> templates(spec.num_classes,
                                              std::vector<float>(static_cast<size_t>(F) * T, 0.f));
    const int active_bands = std::min(3, F);
    for (int c = 0; c < spec.num_classes; ++c) {
        std::vector<int> bands(F);
        std::iota(bands.begin(), bands.end(), 0);
        rng.shuffle(bands);
        for (int k = 0; k < active_bands; ++k) {
            const int b = bands[static_cast<size_t>(k)];
            const double amp = rng.uniform(0.8, 1.6);
            const double freq = rng.uniform(0.5, 2.5);
            const double phase = rng.uniform(0.0, 6.283185307179586);
            for (int t = 0; t < T; ++t)
                templates[c][static_cast<size_t>(b) * T + t] += static_cast<float>(
                    amp * (1.0 + 0.5 * std::sin(freq * 6.283185307179586 * t / T + phase)));
        }
    }

    SplitDataset out;
    out.train.num_classes = out.val.num_classes = spec.num_classes;
    for (int c = 0; c < spec.num_classes; ++c) {
        for (int s = 0; s < spec.samples_per_class; ++s) {
            TensorF feat({1, F, T});
            for (size_t i = 0; i < feat.numel(); ++i)
                feat[i] = templates[c][i] +
                          static_cast<float>(rng.normal(0.0, spec.noise_level));
            Dataset& dst = s < n_train_per_class ? out.train : out.val;
            dst.features.push_back(std::move(feat));
            dst.labels.push_back(c);
        }
    }
    return out;
}

std::pair<TensorF, TensorF> make_batch(const Dataset& data, const std::vector<size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
    const TensorF& first = data.features.at(indices[0]);
    const int C = first.dim(0), H = first.dim(1), W = first.dim(2);
    TensorF batch({static_cast<int>(indices.size()), C, H, W});
    TensorF labels({static_cast<int>(indices.size()), data.num_classes});
    const size_t stride = first.numel();
    for (size_t i = 0; i < indices.size(); ++i) {
        const TensorF& f = data.features.at(indices[i]);
        if (f.numel() != stride) throw std::invalid_argument("make_batch: ragged features");
        std::copy(f.data.begin(), f.data.end(), batch.data.begin() + i * stride);
        labels.at2(static_cast<int>(i), data.labels.at(indices[i])) = 1.f;
    }
    return {std::move(batch), std::move(labels)};
}

MixupResult mixup_with(const TensorF& batch, const TensorF& onehot, double mu,
                       const std::vector<size_t>& partner) {
    if (batch.dim(0) < 2) throw std::invalid_argument("mixup: batch size must be >= 2");
    if (partner.size() != static_cast<size_t>(batch.dim(0)))
        throw std::invalid_argument("mixup: partner permutation size mismatch");
    MixupResult out;
    out.mu = mu;
    out.features = batch;
    out.labels = onehot;
    const size_t fstride = batch.numel() / batch.dim(0);
    const size_t lstride = onehot.numel() / onehot.dim(0);
    const float m = static_cast<float>(mu), im = static_cast<float>(1.0 - mu);
    for (int i = 0; i < batch.dim(0); ++i) {
        const size_t p = partner[static_cast<size_t>(i)];
        for (size_t k = 0; k < fstride; ++k)
            out.features.data[i * fstride + k] =
                m * batch.data[i * fstride + k] + im * batch.data[p * fstride + k];
        for (size_t k = 0; k < lstride; ++k)
            out.labels.data[i * lstride + k] =
                m * onehot.data[i * lstride + k] + im * onehot.data[p * lstride + k];
    }
    return out;
}

MixupResult mixup(const TensorF& batch, const TensorF& onehot, double alpha, Rng& rng) {
    if (alpha <= 0.0) throw std::invalid_argument("mixup: alpha must be > 0");
    const double mu = rng.beta(alpha, alpha);
    std::vector<size_t> partner(static_cast<size_t>(batch.dim(0)));
    std::iota(partner.begin(), partner.end(), size_t{0});
    rng.shuffle(partner);
    return mixup_with(batch, onehot, mu, partner);
}

void apply_time_freq_masks(TensorF& feature, int freq_start, int freq_width, int time_start,
                           int time_width) {
    const int F = feature.dim(feature.ndim() - 2);
    const int T = feature.dim(feature.ndim() - 1);
    if (freq_start < 0 || freq_width < 0 || freq_start + freq_width > F)
        throw std::invalid_argument("specaugment: frequency mask out of range");
    if (time_start < 0 || time_width < 0 || time_start + time_width > T)
        throw std::invalid_argument("specaugment: time mask out of range");
    const size_t plane = static_cast<size_t>(F) * T;
    const size_t planes = feature.numel() / plane;
    for (size_t p = 0; p < planes; ++p) {
        float* base = feature.data.data() + p * plane;
        for (int f = freq_start; f < freq_start + freq_width; ++f)
            for (int t = 0; t < T; ++t) base[static_cast<size_t>(f) * T + t] = 0.f;
        for (int f = 0; f < F; ++f)
            for (int t = time_start; t < time_start + time_width; ++t)
                base[static_cast<size_t>(f) * T + t] = 0.f;
    }
}

void specaugment(TensorF& feature, int freq_mask, int time_mask, Rng& rng) {
    const int F = feature.dim(feature.ndim() - 2);
    const int T = feature.dim(feature.ndim() - 1);
    if (freq_mask < 0 || freq_mask > F)
        throw std::invalid_argument("specaugment: freq_mask exceeds mel axis");
    if (time_mask < 0 || time_mask > T)
        throw std::invalid_argument("specaugment: time_mask exceeds time axis");
    const int fw = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(freq_mask) + 1));
    const int tw = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(time_mask) + 1));
    const int f0 = fw < F ? static_cast<int>(rng.uniform_int(static_cast<uint64_t>(F - fw) + 1))
                          : 0;
    const int t0 = tw < T ? static_cast<int>(rng.uniform_int(static_cast<uint64_t>(T - tw) + 1))
                          : 0;
    apply_time_freq_masks(feature, f0, fw, t0, tw);
}

}  // namespace prunelab
