#include "tempagg/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "tempagg/error.hpp"

namespace tempagg {

std::vector<FrameRange> partition(std::int64_t frame_count, std::int64_t segments) {
    if (segments < 1) fail("sampler", "partition: segment count must be >= 1, got " +
                                          std::to_string(segments));
    if (frame_count < segments) {
        fail("sampler", "partition: " + std::to_string(frame_count) + " frames cannot fill " +
                            std::to_string(segments) + " segments");
    }
    std::vector<FrameRange> ranges(static_cast<std::size_t>(segments));
    for (std::int64_t i = 0; i < segments; ++i) {
        ranges[i].first = i * frame_count / segments;
        ranges[i].end = (i + 1) * frame_count / segments;
    }
    return ranges;
}

SegmentSample sample_segment(const FrameRange& range, std::int64_t segment_index,
                             const SamplerConfig& cfg, std::int64_t video_rate,
                             std::int64_t audio_rate, std::int64_t audio_len, Rng& rng) {
    if (range.count() < 1) fail("sampler", "sample_segment: empty frame range");
    const auto min_samples =
        static_cast<std::int64_t>(std::ceil(static_cast<double>(audio_rate) * cfg.window_s));
    if (audio_len < min_samples) {
        fail("sampler", "sample_segment: clip holds " + std::to_string(audio_len) +
                            " audio samples but the window needs " + std::to_string(min_samples));
    }

    SegmentSample s;
    s.segment_index = segment_index;
    double center;
    if (cfg.mode == SampleMode::kDeterministic) {
        s.frame_index = range.first + range.count() / 2;
        center = static_cast<double>(s.frame_index) / static_cast<double>(video_rate);
    } else {
        s.frame_index = rng.uniform_int(range.first, range.end - 1);
        const double anchor = static_cast<double>(s.frame_index) / static_cast<double>(video_rate);
        center = rng.uniform(anchor - cfg.offset_bound_s, anchor + cfg.offset_bound_s);
    }

    const double half = cfg.window_s / 2.0;
    const double hi = static_cast<double>(audio_len) / static_cast<double>(audio_rate) - half;
    center = std::clamp(center, half, hi);

    s.center_s = center;
    s.audio_first =
        static_cast<std::int64_t>(std::ceil(static_cast<double>(audio_rate) * (center - half)));
    s.audio_first = std::max<std::int64_t>(s.audio_first, 0);
    s.audio_last =
        static_cast<std::int64_t>(std::floor(static_cast<double>(audio_rate) * (center + half)));
    s.audio_last = std::min(s.audio_last, audio_len - 1);
    return s;
}

Waveform slice_audio(const Waveform& w, const SegmentSample& s, double window_s) {
    const auto target =
        static_cast<std::int64_t>(std::llround(static_cast<double>(w.rate) * window_s));
    const std::int64_t raw = s.audio_last - s.audio_first + 1;

    Waveform out;
    out.rate = w.rate;
    out.samples.assign(static_cast<std::size_t>(target), 0.0f);
    const std::int64_t copy = std::min(raw, target);
    std::copy_n(w.samples.data() + s.audio_first, copy, out.samples.data());
    return out;
}

} // namespace tempagg
