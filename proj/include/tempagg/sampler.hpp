#pragma once

#include <cstdint>
#include <vector>

#include "tempagg/rng.hpp"
#include "tempagg/signal.hpp"

namespace tempagg {

enum class SampleMode { kStochastic, kDeterministic };

struct SamplerConfig {
    std::int64_t segments = 4;    // temporal segments per clip
    double offset_bound_s = 0.01; // max |audio center - frame time|, seconds
    double window_s = 1.28;       // audio window length, seconds
    SampleMode mode = SampleMode::kStochastic;
};

// Half-open frame interval [first, end).
struct FrameRange {
    std::int64_t first = 0;
    std::int64_t end = 0;

    std::int64_t count() const { return end - first; }
};

// Segment i covers frames [floor(i*T/N), floor((i+1)*T/N)): contiguous,
// disjoint, nonempty, lengths differing by at most one.
std::vector<FrameRange> partition(std::int64_t frame_count, std::int64_t segments);

struct SegmentSample {
    std::int64_t segment_index = 0;
    std::int64_t frame_index = 0; // j
    double center_s = 0.0;        // audio window center after boundary clamping
    std::int64_t audio_first = 0; // inclusive sample indices
    std::int64_t audio_last = 0;
};

// Stochastic mode draws j uniformly over the range and the window center
// uniformly over [j/r_v - b, j/r_v + b]; deterministic mode takes the middle
// frame with the center at its timestamp. The center is then clamped so the
// window [c - d/2, c + d/2] stays inside the clip, and the sample bounds are
// audio_first = ceil(r_a*(c - d/2)), audio_last = floor(r_a*(c + d/2)).
SegmentSample sample_segment(const FrameRange& range, std::int64_t segment_index,
                             const SamplerConfig& cfg, std::int64_t video_rate,
                             std::int64_t audio_rate, std::int64_t audio_len, Rng& rng);

// The inclusive slice [audio_first, audio_last] normalized to exactly
// round(r_a * d) samples: one trailing sample dropped when the raw slice runs
// long, zero right-padding when it runs short.
Waveform slice_audio(const Waveform& w, const SegmentSample& s, double window_s);

} // namespace tempagg
