#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "tempagg/dataset.hpp"
#include "tempagg/error.hpp"
#include "tempagg/rng.hpp"
#include "tempagg/signal.hpp"

using namespace tempagg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const char* tag) {
    const auto dir = fs::temp_directory_path() / (std::string("tempagg_ds_") + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

DatasetManifest synthetic_entries(std::int64_t actors, std::int64_t per_actor) {
    DatasetManifest m;
    m.class_names.assign(kClassNames.begin(), kClassNames.end());
    for (std::int64_t a = 0; a < actors; ++a) {
        for (std::int64_t i = 0; i < per_actor; ++i) {
            ClipEntry e;
            e.path = "clip_" + std::to_string(a * per_actor + i);
            e.label = (a * per_actor + i) % kNumClasses;
            e.actor_id = a;
            m.clips.push_back(e);
        }
    }
    return m;
}

// Zero-mean, unit-norm block: keeps brightness offsets and block size from
// dominating the joint distance.
void normalize_block(std::vector<float>& block) {
    double mean = 0.0;
    for (const float v : block) mean += v;
    mean /= static_cast<double>(block.size());
    double norm = 0.0;
    for (float& v : block) {
        v -= static_cast<float>(mean);
        norm += static_cast<double>(v) * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (float& v : block) v /= static_cast<float>(norm);
    }
}

// mean spectrogram (resized) + mean frame, the 1-NN feature
std::vector<float> clip_feature(const Clip& clip) {
    auto spec = stft_log_power(clip.audio, 512, auto_hop(clip.audio.length(), 512));
    spec = resize_bilinear(spec, 128, 16);
    std::vector<float> spec_block(spec.values.begin(), spec.values.end());
    normalize_block(spec_block);

    std::vector<float> mean_frame(static_cast<std::size_t>(clip.frame_values()), 0.0f);
    for (std::int64_t t = 0; t < clip.frame_count; ++t) {
        const float* fr = clip.frame(t);
        for (std::size_t i = 0; i < mean_frame.size(); ++i) mean_frame[i] += fr[i];
    }
    for (float& v : mean_frame) v /= static_cast<float>(clip.frame_count);
    normalize_block(mean_frame);

    std::vector<float> feat = std::move(spec_block);
    feat.insert(feat.end(), mean_frame.begin(), mean_frame.end());
    return feat;
}

} // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("generation is byte-identical under a fixed seed") {
    GenConfig cfg;
    const auto dir_a = fresh_dir("rega");
    const auto dir_b = fresh_dir("regb");
    generate_synthetic(3, 2, 1234, cfg, dir_a);
    generate_synthetic(3, 2, 1234, cfg, dir_b);

    CHECK(slurp(dir_a / "manifest.json") == slurp(dir_b / "manifest.json"));
    for (int i = 0; i < 6; ++i) {
        const std::string name = "clip_000" + std::to_string(i);
        CHECK(slurp(dir_a / name / "audio.f32") == slurp(dir_b / name / "audio.f32"));
        CHECK(slurp(dir_a / name / "frames.u8") == slurp(dir_b / name / "frames.u8"));
        CHECK(slurp(dir_a / name / "meta.json") == slurp(dir_b / name / "meta.json"));
    }
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("labels are balanced round-robin") {
    GenConfig cfg;
    cfg.frames_per_clip = 6;
    cfg.height = 8;
    cfg.width = 8;
    const auto dir = fresh_dir("balance");
    const auto m = generate_synthetic(6, 6, 7, cfg, dir);
    CHECK(m.clips.size() == 36);
    std::array<int, kNumClasses> counts{};
    for (const auto& e : m.clips) ++counts[e.label];
    for (const int c : counts) CHECK(c == 6);
    fs::remove_all(dir);
}

TEST_CASE("clean single-actor spectra peak at the class carrier bin") {
    GenConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.pitch_jitter = 0.0;
    cfg.brightness_jitter = 0.0;
    cfg.contrast_jitter = 0.0;
    cfg.frames_per_clip = 30;
    const auto nuisance = actor_nuisance(5, 0, cfg);
    CHECK(nuisance.pitch_offset == 0.0);

    for (std::int64_t k = 0; k < kNumClasses; ++k) {
        const auto clip = make_synthetic_clip(k, 0, nuisance, mix_seed(5, k), cfg);
        const auto spec = stft_log_power(clip.audio, 512, 512);
        std::int64_t argmax = 0;
        double best = -1e300;
        for (std::int64_t b = 0; b < spec.bins; ++b) {
            double acc = 0.0;
            for (std::int64_t f = 0; f < spec.frames; ++f) acc += spec.at(b, f);
            if (acc > best) {
                best = acc;
                argmax = b;
            }
        }
        const auto expected = static_cast<std::int64_t>(
            std::lround(class_carrier_hz(k) * 512.0 / static_cast<double>(cfg.audio_rate)));
        CHECK(std::abs(argmax - expected) <= 1);
    }
}

TEST_CASE("clip save/load round trip is bitwise exact") {
    GenConfig cfg;
    const auto clip = make_synthetic_clip(3, 11, actor_nuisance(99, 11, cfg), 4242, cfg);
    const auto dir = fresh_dir("roundtrip");
    save_clip(clip, dir / "c");
    const auto loaded = load_clip(dir / "c");

    CHECK(loaded.label == clip.label);
    CHECK(loaded.actor_id == clip.actor_id);
    CHECK(loaded.frame_count == clip.frame_count);
    CHECK(loaded.frame_rate == clip.frame_rate);
    CHECK(loaded.audio.rate == clip.audio.rate);
    CHECK(loaded.audio.samples == clip.audio.samples);
    CHECK(loaded.frames == clip.frames);
    fs::remove_all(dir);
}

TEST_CASE("a truncated audio file is a load error, not a crash") {
    GenConfig cfg;
    cfg.frames_per_clip = 6;
    const auto clip = make_synthetic_clip(0, 0, actor_nuisance(1, 0, cfg), 77, cfg);
    const auto dir = fresh_dir("trunc");
    save_clip(clip, dir / "c");
    fs::resize_file(dir / "c" / "audio.f32", 100);
    CHECK_THROWS_WITH_AS(load_clip(dir / "c"),
                         doctest::Contains("expected"), Error);
    fs::remove_all(dir);
}

TEST_CASE("a manifest referencing a missing clip directory fails with its path") {
    const auto dir = fresh_dir("missing");
    std::ofstream f(dir / "manifest.json");
    f << R"({"class_names":["neutral","happy","anger","disgust","fear","sad"],
         "clips":[{"path":"gone","label":0,"actor_id":0,"T":4,"r_v":15,"r_a":16000,"H":8,"W":8}]})";
    f.close();
    CHECK_THROWS_WITH_AS(load_manifest(dir / "manifest.json"), doctest::Contains("gone"), Error);
    fs::remove_all(dir);
}

TEST_CASE("30 actors over 10 folds validate on exactly 3 actors each") {
    const auto m = synthetic_entries(30, 2);
    const auto folds = make_folds(m, 10, 42);
    REQUIRE(folds.size() == 10);
    for (const auto& fold : folds) {
        std::set<std::int64_t> val_actors;
        for (const auto i : fold.val) val_actors.insert(m.clips[i].actor_id);
        CHECK(val_actors.size() == 3);
    }
}

TEST_CASE("a single fold is rejected") {
    const auto m = synthetic_entries(4, 2);
    CHECK_THROWS_AS(make_folds(m, 1, 0), Error);
}

TEST_CASE("fewer actors than folds is an error") {
    const auto m = synthetic_entries(3, 2);
    CHECK_THROWS_AS(make_folds(m, 5, 0), Error);
}

TEST_CASE("folds partition the clips and keep actor sets disjoint") {
    const auto m = synthetic_entries(7, 3);
    const auto folds = make_folds(m, 3, 9);
    std::set<std::int64_t> seen;
    for (const auto& fold : folds) {
        std::set<std::int64_t> train_actors, val_actors;
        for (const auto i : fold.train) train_actors.insert(m.clips[i].actor_id);
        for (const auto i : fold.val) {
            val_actors.insert(m.clips[i].actor_id);
            CHECK(seen.insert(i).second); // each clip validates exactly once
        }
        for (const auto a : val_actors) CHECK(train_actors.count(a) == 0);
        CHECK(fold.train.size() + fold.val.size() == m.clips.size());
    }
    CHECK(seen.size() == m.clips.size());
}

TEST_CASE("classes are 1-NN separable on a held-out actor at sigma 0.05") {
    GenConfig cfg; // default noise_sigma = 0.05
    const std::int64_t actors = 8, per_actor = 6;
    std::vector<Clip> clips;
    for (std::int64_t a = 0; a < actors; ++a) {
        const auto nuisance = actor_nuisance(2024, a, cfg);
        for (std::int64_t i = 0; i < per_actor; ++i) {
            const std::int64_t global = a * per_actor + i;
            clips.push_back(make_synthetic_clip(global % kNumClasses, a, nuisance,
                                                mix_seed(2024, 0xC11Bull, global), cfg));
        }
    }

    std::vector<std::vector<float>> features;
    features.reserve(clips.size());
    for (const auto& c : clips) features.push_back(clip_feature(c));

    int correct = 0, total = 0;
    for (std::size_t q = 0; q < clips.size(); ++q) {
        if (clips[q].actor_id != 0) continue; // actor 0 is held out
        double best = 1e300;
        std::int64_t pred = -1;
        for (std::size_t r = 0; r < clips.size(); ++r) {
            if (clips[r].actor_id == 0) continue;
            double d = 0.0;
            for (std::size_t i = 0; i < features[q].size(); ++i) {
                const double diff = features[q][i] - features[r][i];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                pred = clips[r].label;
            }
        }
        correct += pred == clips[q].label ? 1 : 0;
        ++total;
    }
    CHECK(total == per_actor);
    CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.80);
}

TEST_SUITE_END();
