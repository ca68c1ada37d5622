#include "tempagg/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "tempagg/error.hpp"
#include "tempagg/rng.hpp"

namespace tempagg {

namespace {

using nlohmann::json;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Slow multiplicative "display intensity" envelope shared by both modalities:
// the class signature waxes and wanes over the clip, so a single sampled
// instant can be weakly informative while several spread samples rarely all
// are. Random rate and phase per clip.
struct ActivityEnvelope {
    double rate_hz;
    double phase;

    double at(double t) const {
        const double u = 0.5 + 0.5 * std::sin(kTwoPi * rate_hz * t + phase);
        return 0.05 + 0.95 * u * u;
    }
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("io", "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("io", "cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) fail("io", "write failed for " + path.string());
}

void put_f32_le(std::string& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

float get_f32_le(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
    return std::bit_cast<float>(bits);
}

std::int64_t meta_int(const json& j, const char* field, const std::filesystem::path& where) {
    if (!j.contains(field) || !j[field].is_number_integer()) {
        fail("io", where.string() + ": missing or non-integer field '" + std::string(field) + "'");
    }
    return j[field].get<std::int64_t>();
}

float quantize_pixel(double p) {
    const double clamped = std::clamp(p, 0.0, 1.0);
    return static_cast<float>(std::lround(clamped * 255.0)) / 255.0f;
}

} // namespace

double class_carrier_hz(std::int64_t label) { return 300.0 + 150.0 * static_cast<double>(label); }

double class_am_rate_hz(std::int64_t label) { return 1.5 + 0.9 * static_cast<double>(label); }

double class_orientation_rad(std::int64_t label) {
    return static_cast<double>(label) * 30.0 * std::numbers::pi / 180.0;
}

ActorNuisance actor_nuisance(std::uint64_t seed, std::int64_t actor, const GenConfig& cfg) {
    Rng rng(mix_seed(seed, 0xAC70Bull, static_cast<std::uint64_t>(actor)));
    ActorNuisance n;
    n.pitch_offset = rng.uniform(-cfg.pitch_jitter, cfg.pitch_jitter);
    n.brightness = rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter);
    n.contrast = rng.uniform(1.0 - cfg.contrast_jitter, 1.0 + cfg.contrast_jitter);
    return n;
}

Clip make_synthetic_clip(std::int64_t label, std::int64_t actor_id, const ActorNuisance& nuisance,
                         std::uint64_t clip_seed, const GenConfig& cfg) {
    if (label < 0 || label >= kNumClasses) {
        fail("dataset", "class id " + std::to_string(label) + " outside [0, 6)");
    }
    if (cfg.frames_per_clip < 1 || cfg.height < 1 || cfg.width < 1 || cfg.channels < 1 ||
        cfg.frame_rate < 1 || cfg.audio_rate < 1) {
        fail("dataset", "synthetic clip dimensions and rates must be positive");
    }

    Clip clip;
    clip.label = label;
    clip.actor_id = actor_id;
    clip.frame_count = cfg.frames_per_clip;
    clip.frame_rate = cfg.frame_rate;
    clip.channels = cfg.channels;
    clip.height = cfg.height;
    clip.width = cfg.width;

    Rng rng(clip_seed);
    const double am_phase = rng.uniform(0.0, kTwoPi);
    const double carrier_phase = rng.uniform(0.0, kTwoPi);
    const double grating_phase = rng.uniform(0.0, kTwoPi);
    const double drift_hz = rng.uniform(0.08, 0.18);
    const ActivityEnvelope activity{rng.uniform(0.30, 0.45), rng.uniform(0.0, kTwoPi)};

    const double carrier_hz = class_carrier_hz(label) * (1.0 + nuisance.pitch_offset);
    const double am_rate = class_am_rate_hz(label);

    const auto audio_len = static_cast<std::int64_t>(std::llround(
        static_cast<double>(clip.frame_count) * static_cast<double>(cfg.audio_rate) /
        static_cast<double>(cfg.frame_rate)));
    clip.audio.rate = cfg.audio_rate;
    clip.audio.samples.resize(static_cast<std::size_t>(audio_len));
    for (std::int64_t n = 0; n < audio_len; ++n) {
        const double t = static_cast<double>(n) / static_cast<double>(cfg.audio_rate);
        const double am = 0.25 + 0.75 * (0.5 + 0.5 * std::sin(kTwoPi * am_rate * t + am_phase));
        const double tone = std::sin(kTwoPi * carrier_hz * t + carrier_phase);
        const double v =
            0.8 * activity.at(t) * am * tone + cfg.noise_sigma * rng.normal();
        clip.audio.samples[n] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }

    const double orientation = class_orientation_rad(label);
    const double cos_o = std::cos(orientation);
    const double sin_o = std::sin(orientation);
    const double spatial_cycles = 6.0;

    clip.frames.resize(static_cast<std::size_t>(clip.frame_count * clip.frame_values()));
    float* out = clip.frames.data();
    for (std::int64_t f = 0; f < clip.frame_count; ++f) {
        const double t = static_cast<double>(f) / static_cast<double>(cfg.frame_rate);
        const double act = activity.at(t);
        const double drift = kTwoPi * drift_hz * t + grating_phase;
        for (std::int64_t c = 0; c < cfg.channels; ++c) {
            for (std::int64_t y = 0; y < cfg.height; ++y) {
                for (std::int64_t x = 0; x < cfg.width; ++x) {
                    const double proj =
                        (static_cast<double>(x) * cos_o + static_cast<double>(y) * sin_o) /
                        static_cast<double>(cfg.width);
                    const double grating = std::sin(kTwoPi * spatial_cycles * proj + drift);
                    const double p = 0.5 + nuisance.brightness +
                                     nuisance.contrast * 0.38 * act * grating +
                                     cfg.noise_sigma * rng.normal();
                    *out++ = quantize_pixel(p);
                }
            }
        }
    }
    return clip;
}

DatasetManifest generate_synthetic(std::int64_t num_actors, std::int64_t clips_per_actor,
                                   std::uint64_t seed, const GenConfig& cfg,
                                   const std::filesystem::path& out_dir) {
    if (num_actors < 1 || clips_per_actor < 1) {
        fail("dataset", "need at least one actor and one clip per actor");
    }
    std::filesystem::create_directories(out_dir);

    DatasetManifest manifest;
    manifest.root = out_dir;
    manifest.class_names.assign(kClassNames.begin(), kClassNames.end());
    const std::int64_t total = num_actors * clips_per_actor;
    manifest.clips.resize(static_cast<std::size_t>(total));

#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < total; ++i) {
        const std::int64_t actor = i / clips_per_actor;
        const std::int64_t label = i % kNumClasses;
        const auto nuisance = actor_nuisance(seed, actor, cfg);
        const auto clip_seed = mix_seed(seed, 0xC11Bull, static_cast<std::uint64_t>(i));
        const Clip clip = make_synthetic_clip(label, actor, nuisance, clip_seed, cfg);

        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04lld", static_cast<long long>(i));
        save_clip(clip, out_dir / name);

        ClipEntry& e = manifest.clips[i];
        e.path = name;
        e.label = label;
        e.actor_id = actor;
        e.frame_count = clip.frame_count;
        e.frame_rate = clip.frame_rate;
        e.audio_rate = clip.audio.rate;
        e.height = clip.height;
        e.width = clip.width;
    }

    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

void save_clip(const Clip& clip, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::string audio_bytes;
    audio_bytes.reserve(clip.audio.samples.size() * 4);
    for (const float v : clip.audio.samples) put_f32_le(audio_bytes, v);
    write_file(dir / "audio.f32", audio_bytes);

    std::string frame_bytes;
    frame_bytes.reserve(clip.frames.size());
    for (const float v : clip.frames) {
        frame_bytes.push_back(static_cast<char>(std::lround(v * 255.0f)));
    }
    write_file(dir / "frames.u8", frame_bytes);

    json meta;
    meta["label"] = clip.label;
    meta["actor_id"] = clip.actor_id;
    meta["T"] = clip.frame_count;
    meta["C"] = clip.channels;
    meta["H"] = clip.height;
    meta["W"] = clip.width;
    meta["r_v"] = clip.frame_rate;
    meta["r_a"] = clip.audio.rate;
    meta["audio_samples"] = clip.audio.length();
    write_file(dir / "meta.json", meta.dump(2) + "\n");
}

Clip load_clip(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    json meta;
    try {
        meta = json::parse(read_file(meta_path));
    } catch (const json::exception& e) {
        fail("io", meta_path.string() + ": " + e.what());
    }

    Clip clip;
    clip.label = meta_int(meta, "label", meta_path);
    clip.actor_id = meta_int(meta, "actor_id", meta_path);
    clip.frame_count = meta_int(meta, "T", meta_path);
    clip.channels = meta_int(meta, "C", meta_path);
    clip.height = meta_int(meta, "H", meta_path);
    clip.width = meta_int(meta, "W", meta_path);
    clip.frame_rate = meta_int(meta, "r_v", meta_path);
    clip.audio.rate = meta_int(meta, "r_a", meta_path);
    const std::int64_t audio_samples = meta_int(meta, "audio_samples", meta_path);
    if (clip.label < 0 || clip.label >= kNumClasses) {
        fail("io", meta_path.string() + ": field 'label' holds " + std::to_string(clip.label) +
                       ", outside [0, 6)");
    }

    const auto audio_path = dir / "audio.f32";
    const std::string audio_bytes = read_file(audio_path);
    const auto expected_audio = static_cast<std::size_t>(audio_samples) * 4;
    if (audio_bytes.size() != expected_audio) {
        fail("io", audio_path.string() + ": expected " + std::to_string(expected_audio) +
                       " bytes, found " + std::to_string(audio_bytes.size()) +
                       " (truncated at offset " + std::to_string(audio_bytes.size()) + ")");
    }
    clip.audio.samples.resize(static_cast<std::size_t>(audio_samples));
    for (std::int64_t i = 0; i < audio_samples; ++i) {
        clip.audio.samples[i] = get_f32_le(audio_bytes.data() + i * 4);
    }

    const auto frames_path = dir / "frames.u8";
    const std::string frame_bytes = read_file(frames_path);
    const auto expected_frames =
        static_cast<std::size_t>(clip.frame_count * clip.frame_values());
    if (frame_bytes.size() != expected_frames) {
        fail("io", frames_path.string() + ": expected " + std::to_string(expected_frames) +
                       " bytes, found " + std::to_string(frame_bytes.size()) +
                       " (truncated at offset " + std::to_string(frame_bytes.size()) + ")");
    }
    clip.frames.resize(expected_frames);
    for (std::size_t i = 0; i < expected_frames; ++i) {
        clip.frames[i] = static_cast<float>(static_cast<unsigned char>(frame_bytes[i])) / 255.0f;
    }

    const double video_s =
        static_cast<double>(clip.frame_count) / static_cast<double>(clip.frame_rate);
    const double audio_s = clip.audio.duration();
    if (std::abs(video_s - audio_s) > 1.0 / static_cast<double>(clip.frame_rate)) {
        fail("io", dir.string() + ": video covers " + std::to_string(video_s) +
                       " s but audio covers " + std::to_string(audio_s) + " s");
    }
    return clip;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    json j;
    j["class_names"] = manifest.class_names;
    json clips = json::array();
    for (const auto& e : manifest.clips) {
        clips.push_back({{"path", e.path},
                         {"label", e.label},
                         {"actor_id", e.actor_id},
                         {"T", e.frame_count},
                         {"r_v", e.frame_rate},
                         {"r_a", e.audio_rate},
                         {"H", e.height},
                         {"W", e.width}});
    }
    j["clips"] = std::move(clips);
    write_file(path, j.dump(2) + "\n");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        fail("io", path.string() + ": " + e.what());
    }

    DatasetManifest manifest;
    manifest.root = path.parent_path();
    if (!j.contains("class_names") || !j["class_names"].is_array() ||
        j["class_names"].size() != kNumClasses) {
        fail("io", path.string() + ": field 'class_names' must list exactly 6 classes");
    }
    manifest.class_names = j["class_names"].get<std::vector<std::string>>();
    if (!j.contains("clips") || !j["clips"].is_array()) {
        fail("io", path.string() + ": missing 'clips' array");
    }

    for (const auto& c : j["clips"]) {
        ClipEntry e;
        if (!c.contains("path") || !c["path"].is_string()) {
            fail("io", path.string() + ": clip entry without a 'path' string");
        }
        e.path = c["path"].get<std::string>();
        e.label = meta_int(c, "label", path);
        e.actor_id = meta_int(c, "actor_id", path);
        e.frame_count = meta_int(c, "T", path);
        e.frame_rate = meta_int(c, "r_v", path);
        e.audio_rate = meta_int(c, "r_a", path);
        e.height = meta_int(c, "H", path);
        e.width = meta_int(c, "W", path);
        if (e.label < 0 || e.label >= kNumClasses) {
            fail("io", path.string() + ": clip '" + e.path + "' has class id " +
                           std::to_string(e.label) + ", outside [0, 6)");
        }
        const auto dir = manifest.root / e.path;
        if (!std::filesystem::exists(dir / "meta.json")) {
            fail("io", path.string() + ": referenced clip directory missing: " + dir.string());
        }
        manifest.clips.push_back(std::move(e));
    }
    return manifest;
}

std::vector<Clip> load_clips(const DatasetManifest& manifest) {
    std::vector<Clip> clips(manifest.clips.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(manifest.clips.size()); ++i) {
        clips[i] = load_clip(manifest.root / manifest.clips[i].path);
    }
    return clips;
}

std::vector<FoldSplit> make_folds(const DatasetManifest& manifest, std::int64_t k,
                                  std::uint64_t seed) {
    if (k < 2) fail("dataset", "cross-validation needs at least 2 folds, got " + std::to_string(k));

    std::vector<std::int64_t> actors;
    for (const auto& e : manifest.clips) actors.push_back(e.actor_id);
    std::sort(actors.begin(), actors.end());
    actors.erase(std::unique(actors.begin(), actors.end()), actors.end());
    if (static_cast<std::int64_t>(actors.size()) < k) {
        fail("dataset", "only " + std::to_string(actors.size()) + " distinct actors for " +
                            std::to_string(k) + " folds");
    }

    Rng rng(mix_seed(seed, 0xF01D5ull));
    for (std::int64_t i = static_cast<std::int64_t>(actors.size()) - 1; i > 0; --i) {
        const std::int64_t j = rng.uniform_int(0, i);
        std::swap(actors[i], actors[j]);
    }

    std::vector<std::vector<std::int64_t>> groups(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < actors.size(); ++i) groups[i % k].push_back(actors[i]);

    std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
    for (std::int64_t f = 0; f < k; ++f) {
        const auto& val_actors = groups[f];
        const auto in_val = [&](std::int64_t actor) {
            return std::find(val_actors.begin(), val_actors.end(), actor) != val_actors.end();
        };
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(manifest.clips.size()); ++i) {
            if (in_val(manifest.clips[i].actor_id)) {
                folds[f].val.push_back(i);
            } else {
                folds[f].train.push_back(i);
            }
        }
    }
    return folds;
}

} // namespace tempagg
