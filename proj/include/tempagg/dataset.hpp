#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tempagg/signal.hpp"

namespace tempagg {

inline constexpr std::int64_t kNumClasses = 6;
inline constexpr std::array<const char*, kNumClasses> kClassNames = {
    "neutral", "happy", "anger", "disgust", "fear", "sad"};

// One labeled audio-visual recording. Frames are row-major [T, C, H, W] in
// [0, 1], snapped to the 1/255 grid so the u8 on-disk round trip is exact.
struct Clip {
    std::vector<float> frames;
    Waveform audio;
    std::int64_t label = 0;
    std::int64_t actor_id = 0;
    std::int64_t frame_count = 0; // T
    std::int64_t frame_rate = 15; // r_v
    std::int64_t channels = 1;
    std::int64_t height = 64;
    std::int64_t width = 64;

    std::int64_t frame_values() const { return channels * height * width; }
    const float* frame(std::int64_t t) const { return frames.data() + t * frame_values(); }
};

struct ClipEntry {
    std::string path; // clip directory, relative to the manifest
    std::int64_t label = 0;
    std::int64_t actor_id = 0;
    std::int64_t frame_count = 0;
    std::int64_t frame_rate = 15;
    std::int64_t audio_rate = 16000;
    std::int64_t height = 64;
    std::int64_t width = 64;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<std::string> class_names;
    std::vector<ClipEntry> clips;
};

struct GenConfig {
    std::int64_t frames_per_clip = 45;
    std::int64_t frame_rate = 15;
    std::int64_t audio_rate = 16000;
    std::int64_t height = 64;
    std::int64_t width = 64;
    std::int64_t channels = 1;
    double noise_sigma = 0.05;      // additive noise, both modalities
    double pitch_jitter = 0.05;     // actor carrier offset, fraction
    double brightness_jitter = 0.08;
    double contrast_jitter = 0.15;
};

// Class signatures: audio carrier 300 + 150k Hz under a class-rate AM
// envelope; video an oriented grating at k*30 degrees drifting over frames.
double class_carrier_hz(std::int64_t label);
double class_am_rate_hz(std::int64_t label);
double class_orientation_rad(std::int64_t label);

struct ActorNuisance {
    double pitch_offset = 0.0; // fractional carrier shift
    double brightness = 0.0;
    double contrast = 1.0;
};

ActorNuisance actor_nuisance(std::uint64_t seed, std::int64_t actor, const GenConfig& cfg);

Clip make_synthetic_clip(std::int64_t label, std::int64_t actor_id, const ActorNuisance& nuisance,
                         std::uint64_t clip_seed, const GenConfig& cfg);

// Writes clip_<i>/ directories plus manifest.json under out_dir; labels are
// balanced round-robin and every actor contributes clips_per_actor clips.
DatasetManifest generate_synthetic(std::int64_t num_actors, std::int64_t clips_per_actor,
                                   std::uint64_t seed, const GenConfig& cfg,
                                   const std::filesystem::path& out_dir);

// Per-clip directory: audio.f32 (raw little-endian floats), frames.u8
// (T*C*H*W bytes, value/255 on load), meta.json.
void save_clip(const Clip& clip, const std::filesystem::path& dir);
Clip load_clip(const std::filesystem::path& dir);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

std::vector<Clip> load_clips(const DatasetManifest& manifest);

struct FoldSplit {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> val;
};

// Actors shuffled by seed, dealt round-robin into k groups; fold i validates
// on group i. Actor sets of train and validation are disjoint by construction.
std::vector<FoldSplit> make_folds(const DatasetManifest& manifest, std::int64_t k,
                                  std::uint64_t seed);

} // namespace tempagg
