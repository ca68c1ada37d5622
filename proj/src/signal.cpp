#include "tempagg/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "tempagg/error.hpp"

namespace tempagg {

namespace {

bool is_pow2(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place, n a power of two. Twiddles and
// the bit-reversal permutation are cached per thread by size.
struct FftPlan {
    std::size_t n = 0;
    std::vector<std::uint32_t> rev;
    std::vector<std::complex<double>> twiddle; // per stage, len/2 entries each

    void prepare(std::size_t size) {
        if (n == size) return;
        n = size;
        rev.assign(n, 0);
        for (std::size_t i = 1, j = 0; i < n; ++i) {
            std::size_t bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            rev[i] = static_cast<std::uint32_t>(j);
        }
        twiddle.clear();
        for (std::size_t len = 2; len <= n; len <<= 1) {
            const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
            for (std::size_t j = 0; j < len / 2; ++j) {
                twiddle.emplace_back(std::cos(ang * static_cast<double>(j)),
                                     std::sin(ang * static_cast<double>(j)));
            }
        }
    }
};

void fft_pow2(std::vector<std::complex<double>>& a, FftPlan& plan) {
    const std::size_t n = a.size();
    plan.prepare(n);
    for (std::size_t i = 1; i < n; ++i) {
        const std::size_t j = plan.rev[i];
        if (i < j) std::swap(a[i], a[j]);
    }
    const std::complex<double>* tw = plan.twiddle.data();
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const auto u = a[i + j];
                const auto v = a[i + j + half] * tw[j];
                a[i + j] = u + v;
                a[i + j + half] = u - v;
            }
        }
        tw += half;
    }
}

// O(n^2) fallback for non power-of-two windows; only the win/2+1 low bins.
void dft_naive(const std::vector<double>& x, std::vector<std::complex<double>>& out,
               std::int64_t bins) {
    const auto n = static_cast<std::int64_t>(x.size());
    for (std::int64_t k = 0; k < bins; ++k) {
        double re = 0.0, im = 0.0;
        const double w = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        for (std::int64_t t = 0; t < n; ++t) {
            re += x[t] * std::cos(w * static_cast<double>(t));
            im += x[t] * std::sin(w * static_cast<double>(t));
        }
        out[k] = {re, im};
    }
}

} // namespace

std::int64_t auto_hop(std::int64_t length, std::int64_t win, std::int64_t min_frames) {
    const std::int64_t span = length - win;
    if (min_frames >= 2 && span >= min_frames - 1) return span / (min_frames - 1);
    return std::max<std::int64_t>(1, win / 4);
}

Spectrogram stft_log_power(const Waveform& w, std::int64_t win, std::int64_t hop) {
    if (win < 1) fail("signal", "stft: window must be positive, got " + std::to_string(win));
    if (hop < 1) fail("signal", "stft: hop must be positive, got " + std::to_string(hop));
    if (w.length() < win) {
        fail("signal", "stft: waveform of " + std::to_string(w.length()) +
                           " samples is shorter than the window " + std::to_string(win));
    }

    const std::int64_t frames = 1 + (w.length() - win) / hop;
    const std::int64_t bins = win / 2 + 1;

    std::vector<double> hann(static_cast<std::size_t>(win));
    for (std::int64_t i = 0; i < win; ++i) {
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                       static_cast<double>(win));
    }

    std::vector<double> power(static_cast<std::size_t>(bins * frames));
    const bool pow2 = is_pow2(win);

#pragma omp parallel
    {
        thread_local FftPlan plan;
        thread_local std::vector<std::complex<double>> buf;
#pragma omp for schedule(static)
        for (std::int64_t f = 0; f < frames; ++f) {
            const float* src = w.samples.data() + f * hop;
            if (pow2) {
                buf.assign(static_cast<std::size_t>(win), {});
                for (std::int64_t i = 0; i < win; ++i) buf[i] = {src[i] * hann[i], 0.0};
                fft_pow2(buf, plan);
                for (std::int64_t k = 0; k < bins; ++k) power[k * frames + f] = std::norm(buf[k]);
            } else {
                std::vector<double> windowed(static_cast<std::size_t>(win));
                for (std::int64_t i = 0; i < win; ++i) windowed[i] = src[i] * hann[i];
                std::vector<std::complex<double>> out(static_cast<std::size_t>(bins));
                dft_naive(windowed, out, bins);
                for (std::int64_t k = 0; k < bins; ++k) power[k * frames + f] = std::norm(out[k]);
            }
        }
    }

    double peak = 0.0;
    for (const double p : power) peak = std::max(peak, p);

    Spectrogram out;
    out.bins = bins;
    out.frames = frames;
    out.params = {win, hop, -80.0f};
    out.values.resize(power.size());
    const double floor_db = out.params.floor_db;
    if (peak <= 0.0) {
        std::fill(out.values.begin(), out.values.end(), out.params.floor_db);
    } else {
        for (std::size_t i = 0; i < power.size(); ++i) {
            const double p = power[i];
            const double db = p <= 0.0 ? floor_db : 10.0 * std::log10(p / peak);
            out.values[i] = static_cast<float>(std::clamp(db, floor_db, 0.0));
        }
    }
    return out;
}

Spectrogram resize_bilinear(const Spectrogram& s, std::int64_t out_h, std::int64_t out_w) {
    if (out_h < 1 || out_w < 1) {
        fail("signal", "resize_bilinear: target extents must be positive, got " +
                           std::to_string(out_h) + "x" + std::to_string(out_w));
    }

    Spectrogram out;
    out.bins = out_h;
    out.frames = out_w;
    out.params = s.params;
    out.values.resize(static_cast<std::size_t>(out_h * out_w));

    const double sy = out_h > 1 ? static_cast<double>(s.bins - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(s.frames - 1) / static_cast<double>(out_w - 1) : 0.0;

    for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const double fy = static_cast<double>(oy) * sy;
        const auto y0 = static_cast<std::int64_t>(fy);
        const std::int64_t y1 = std::min(y0 + 1, s.bins - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
            const double fx = static_cast<double>(ox) * sx;
            const auto x0 = static_cast<std::int64_t>(fx);
            const std::int64_t x1 = std::min(x0 + 1, s.frames - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = (1.0 - wx) * s.at(y0, x0) + wx * s.at(y0, x1);
            const double bot = (1.0 - wx) * s.at(y1, x0) + wx * s.at(y1, x1);
            out.values[oy * out_w + ox] = static_cast<float>((1.0 - wy) * top + wy * bot);
        }
    }
    return out;
}

Spectrogram band_limit(const Spectrogram& s, double max_hz, std::int64_t rate) {
    const double nyquist = static_cast<double>(rate) / 2.0;
    if (max_hz <= 0.0 || max_hz >= nyquist) return s;
    const double bin_hz = static_cast<double>(rate) / static_cast<double>(s.params.win);
    const auto keep = std::min(
        s.bins, static_cast<std::int64_t>(std::floor(max_hz / bin_hz)) + 1);

    Spectrogram out;
    out.bins = keep;
    out.frames = s.frames;
    out.params = s.params;
    out.values.assign(s.values.begin(), s.values.begin() + keep * s.frames);
    return out;
}

void write_pgm(const Spectrogram& s, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("io", "cannot open " + path.string() + " for writing");
    f << "P5\n" << s.frames << ' ' << s.bins << "\n255\n";
    const float floor_db = s.params.floor_db;
    for (const float v : s.values) {
        const double unit = (v - floor_db) / (0.0 - floor_db);
        const int byte = std::clamp(static_cast<int>(std::lround(unit * 255.0)), 0, 255);
        f.put(static_cast<char>(byte));
    }
    if (!f) fail("io", "write failed for " + path.string());
}

} // namespace tempagg
