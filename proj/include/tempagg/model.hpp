#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tempagg/tensor.hpp"

namespace tempagg {

enum class Sharing { kIndependent, kShared };

// conv 3x3 (stride 1, pad 1) -> batchnorm -> relu -> maxpool 2x2
struct ConvBlock {
    TensorPtr weight;
    TensorPtr bias;
    BatchNormState bn;
};

struct StreamParams {
    std::array<ConvBlock, 3> blocks; // channels: in -> 8 -> 16 -> 32
};

// Per-segment core network: a video stream and an audio (spectrogram) stream,
// each closed by global average pooling to a 32-d feature, concatenated and
// mapped by one FC layer to 6 class logits.
struct AVNetParams {
    StreamParams video;
    StreamParams audio;
    TensorPtr fc_weight; // [6, 64]
    TensorPtr fc_bias;   // [6]
};

inline constexpr std::int64_t kStreamFeature = 32;
inline constexpr std::int64_t kFusedFeature = 2 * kStreamFeature;

AVNetParams init_avnet(std::int64_t video_channels, Rng& rng);

// Probability rows [B, 6]; train phase uses batch statistics in batchnorm,
// eval phase the running ones.
TensorPtr forward_segment(AVNetParams& params, const TensorPtr& frames, const TensorPtr& spec,
                          Phase phase);

struct EnsembleParams {
    std::vector<AVNetParams> nets; // one per segment, or a single shared one
    Sharing sharing = Sharing::kIndependent;
    std::int64_t segments = 4;

    AVNetParams& net(std::int64_t segment) { return nets[segment % nets.size()]; }

    std::vector<std::pair<std::string, TensorPtr>> trainable_parameters();
    // trainable parameters plus batchnorm running statistics
    std::vector<std::pair<std::string, TensorPtr>> state_entries();
};

EnsembleParams init_ensemble(std::int64_t segments, Sharing sharing, std::int64_t video_channels,
                             std::uint64_t seed);

EnsembleParams clone_ensemble(const EnsembleParams& src);

// Elementwise sum of per-segment probability rows.
TensorPtr aggregate(const std::vector<TensorPtr>& segment_probs);

// Argmax with ties broken toward the lowest index.
std::int64_t predict(std::span<const float> scores);

void save_ensemble(const EnsembleParams& params, const std::filesystem::path& path);
EnsembleParams load_ensemble(const std::filesystem::path& path);

} // namespace tempagg
