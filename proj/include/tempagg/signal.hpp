#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tempagg {

struct Waveform {
    std::vector<float> samples;
    std::int64_t rate = 16000; // samples per second

    std::int64_t length() const { return static_cast<std::int64_t>(samples.size()); }
    double duration() const { return static_cast<double>(length()) / static_cast<double>(rate); }
};

struct SpectrogramParams {
    std::int64_t win = 512;
    std::int64_t hop = 128;
    float floor_db = -80.0f;
};

// Log-power time-frequency grid, row-major [bins x frames], values in
// [floor_db, 0] with the global maximum at 0 dB.
struct Spectrogram {
    std::int64_t bins = 0;
    std::int64_t frames = 0;
    std::vector<float> values;
    SpectrogramParams params;

    float at(std::int64_t bin, std::int64_t frame) const { return values[bin * frames + frame]; }
};

// Largest hop that still yields at least min_frames frames, falling back to
// win/4 when the waveform is too short for that many.
std::int64_t auto_hop(std::int64_t length, std::int64_t win, std::int64_t min_frames = 120);

// Hann-windowed short-time magnitude-squared spectrum over win/2+1 bins,
// converted to dB relative to the global maximum and clamped at floor_db.
// An all-zero waveform maps to a grid of floor_db.
Spectrogram stft_log_power(const Waveform& w, std::int64_t win, std::int64_t hop);

// Corner-aligned bilinear resampling to exactly (out_h, out_w).
Spectrogram resize_bilinear(const Spectrogram& s, std::int64_t out_h, std::int64_t out_w);

// Keeps the rows covering [0, max_hz] (bin k spans k*rate/win Hz); the whole
// grid when max_hz is zero, negative, or at/above Nyquist.
Spectrogram band_limit(const Spectrogram& s, double max_hz, std::int64_t rate);

// 8-bit binary PGM, floor_db -> 0 and 0 dB -> 255.
void write_pgm(const Spectrogram& s, const std::filesystem::path& path);

} // namespace tempagg
