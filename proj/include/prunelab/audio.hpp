#pragma once

#include <string>
#include <vector>

#include "prunelab/tensor.hpp"

namespace prunelab {

// RIFF PCM mono, 16- or 24-bit; samples scaled to [-1, 1).
std::vector<double> load_wav_mono(const std::string& path, int* sample_rate);

std::vector<double> resample_linear(const std::vector<double>& x, int sr_in, int sr_out);

struct LogMelConfig {
    int n_mels = 40;
    double window_ms = 40.0;
    double hop_fraction = 0.625;  // of the window length
    double floor = 1e-10;
};

// Hann-windowed magnitude STFT, HTK mel filterbank, natural log with floor.
// Output is (1, n_mels, frames) with frames = (len - win)/hop + 1.
TensorF logmel_extract(const std::vector<double>& waveform, int sample_rate,
                       const LogMelConfig& cfg = {});

// helpers exposed for tests
int logmel_window_length(int sample_rate, const LogMelConfig& cfg);
int logmel_hop_length(int sample_rate, const LogMelConfig& cfg);
double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace prunelab
