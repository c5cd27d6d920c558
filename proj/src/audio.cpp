#include "prunelab/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace prunelab {

namespace {

uint32_t rd_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t rd_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

// iterative radix-2 FFT, input zero padded to a power of two
void fft(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

}  // namespace

std::vector<double> load_wav_mono(const std::string& path, int* sample_rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("wav: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("wav: not a RIFF/WAVE file: " + path);

    int channels = 0, bits = 0, sr = 0;
    const unsigned char* data = nullptr;
    size_t data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const char* id = reinterpret_cast<const char*>(buf.data() + pos);
        const uint32_t len = rd_u32(buf.data() + pos + 4);
        const size_t body = pos + 8;
        if (body + len > buf.size()) throw std::runtime_error("wav: truncated chunk in " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw std::runtime_error("wav: short fmt chunk");
            const uint16_t format = rd_u16(buf.data() + body);
            if (format != 1) throw std::runtime_error("wav: only PCM supported");
            channels = rd_u16(buf.data() + body + 2);
            sr = static_cast<int>(rd_u32(buf.data() + body + 4));
            bits = rd_u16(buf.data() + body + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = buf.data() + body;
            data_len = len;
        }
        pos = body + len + (len & 1);
    }
    if (!data || channels == 0) throw std::runtime_error("wav: missing fmt/data chunks");
    if (channels != 1) throw std::runtime_error("wav: only mono supported, got " +
                                                std::to_string(channels) + " channels");
    if (bits != 16 && bits != 24)
        throw std::runtime_error("wav: only 16/24-bit PCM supported, got " +
                                 std::to_string(bits));

    const size_t bytes = static_cast<size_t>(bits) / 8;
    const size_t n = data_len / bytes;
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        const unsigned char* p = data + i * bytes;
        int32_t v;
        if (bits == 16) {
            v = static_cast<int16_t>(p[0] | (p[1] << 8));
            out[i] = static_cast<double>(v) / 32768.0;
        } else {
            v = static_cast<int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
            if (v & 0x800000) v |= ~0xFFFFFF;  // sign extend
            out[i] = static_cast<double>(v) / 8388608.0;
        }
    }
    if (sample_rate) *sample_rate = sr;
    return out;
}

std::vector<double> resample_linear(const std::vector<double>& x, int sr_in, int sr_out) {
    if (sr_in <= 0 || sr_out <= 0) throw std::invalid_argument("resample: bad sample rates");
    if (sr_in == sr_out || x.empty()) return x;
    const double ratio = static_cast<double>(sr_in) / sr_out;
    const size_t n = static_cast<size_t>(std::floor((x.size() - 1) / ratio)) + 1;
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        const double t = i * ratio;
        const size_t k = static_cast<size_t>(t);
        const double frac = t - k;
        out[i] = k + 1 < x.size() ? x[k] * (1.0 - frac) + x[k + 1] * frac : x[k];
    }
    return out;
}

int logmel_window_length(int sample_rate, const LogMelConfig& cfg) {
    return static_cast<int>(std::lround(sample_rate * cfg.window_ms / 1000.0));
}

int logmel_hop_length(int sample_rate, const LogMelConfig& cfg) {
    return std::max(1, static_cast<int>(std::lround(logmel_window_length(sample_rate, cfg) *
                                                    cfg.hop_fraction)));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

TensorF logmel_extract(const std::vector<double>& waveform, int sample_rate,
                       const LogMelConfig& cfg) {
    if (waveform.empty()) throw std::invalid_argument("logmel: empty waveform");
    if (cfg.n_mels < 1) throw std::invalid_argument("logmel: n_mels must be >= 1");
    const int win = logmel_window_length(sample_rate, cfg);
    const int hop = logmel_hop_length(sample_rate, cfg);
    if (static_cast<int>(waveform.size()) < win)
        throw std::invalid_argument("logmel: waveform shorter than one window");
    const int frames = static_cast<int>((waveform.size() - win) / hop) + 1;

    size_t fft_size = 1;
    while (fft_size < static_cast<size_t>(win)) fft_size <<= 1;
    const size_t nbins = fft_size / 2 + 1;

    // periodic Hann
    std::vector<double> window(win);
    for (int i = 0; i < win; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / win);

    // HTK-spaced triangular filterbank over [0, sr/2]
    const double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> mel_pts(cfg.n_mels + 2);
    for (int m = 0; m < cfg.n_mels + 2; ++m)
        mel_pts[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));
    std::vector<std::vector<std::pair<int, double>>> filters(cfg.n_mels);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double lo = mel_pts[m], mid = mel_pts[m + 1], hi = mel_pts[m + 2];
        for (size_t k = 0; k < nbins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
            double w = 0.0;
            if (f > lo && f < mid)
                w = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                w = (hi - f) / (hi - mid);
            if (w > 0.0) filters[m].emplace_back(static_cast<int>(k), w);
        }
    }

    TensorF out({1, cfg.n_mels, frames});
    std::vector<std::complex<double>> spec(fft_size);
    for (int t = 0; t < frames; ++t) {
        const size_t off = static_cast<size_t>(t) * hop;
        for (size_t i = 0; i < fft_size; ++i)
            spec[i] = i < static_cast<size_t>(win)
                          ? std::complex<double>(waveform[off + i] * window[i], 0.0)
                          : std::complex<double>(0.0, 0.0);
        fft(spec);
        for (int m = 0; m < cfg.n_mels; ++m) {
            double e = 0.0;
            for (const auto& [k, w] : filters[m]) e += w * std::abs(spec[static_cast<size_t>(k)]);
            out.data[static_cast<size_t>(m) * frames + t] =
                static_cast<float>(std::log(std::max(e, cfg.floor)));
        }
    }
    return out;
}

}  // namespace prunelab
