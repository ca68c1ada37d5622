#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tempagg/dataset.hpp"
#include "tempagg/model.hpp"
#include "tempagg/sampler.hpp"

namespace tempagg {

struct TrainConfig {
    double lr0 = 1e-3;
    double momentum = 0.9;
    double decay_factor = 10.0;
    std::int64_t decay_every = 50; // steps between learning-rate drops
    std::int64_t batch_size = 16;
    std::int64_t epochs = 30;
    std::uint64_t seed = 0;
    std::int64_t segments = 4;
    SamplerConfig sampler{4, 0.01, 1.28, SampleMode::kStochastic};
    Sharing sharing = Sharing::kIndependent;
    std::int64_t spec_height = 48; // network spectrogram input
    std::int64_t spec_width = 48;
    std::int64_t stft_win = 512;
    std::int64_t stft_min_frames = 120;
    double spec_max_hz = 2000.0; // band kept before the resize; <= 0 keeps all
};

// lr0 * decay_factor^(-floor(step / decay_every)). train_fold feeds this the
// within-epoch step: the schedule restarts at lr0 every epoch and only decays
// once an epoch runs past decay_every optimizer steps.
double lr_at(std::int64_t step, const TrainConfig& cfg);

struct SgdState {
    std::vector<std::vector<float>> velocity;
    std::int64_t step = 0;
};

// v <- momentum*v + g;  p <- p - lr*v. Velocity buffers are created on first
// use, mirroring parameter shapes.
void sgd_step(const std::vector<std::pair<std::string, TensorPtr>>& params, SgdState& state,
              double lr, double momentum);

// One tensor pair per segment: frames [B,C,H,W] and spectrograms [B,1,Hs,Ws].
struct SegmentBatch {
    std::vector<TensorPtr> frames;
    std::vector<TensorPtr> specs;
    std::vector<std::int64_t> labels;
};

// Sampling draws come from mix_seed(seed, clip_id, segment, epoch), so the
// result does not depend on how the assembly work is scheduled.
SegmentBatch assemble_segment_batch(const std::vector<Clip>& clips,
                                    std::span<const std::int64_t> indices, const TrainConfig& cfg,
                                    SampleMode mode, std::int64_t epoch);

// Deterministic eval-mode pass over a clip set: aggregated per-clip scores
// (row-major [n, 6]), their labels, and the aggregate cross-entropy loss.
struct EvalForward {
    std::vector<float> scores;
    std::vector<std::int64_t> labels;
    double loss = 0.0;
};

EvalForward forward_eval(EnsembleParams& params, const std::vector<Clip>& clips,
                         std::span<const std::int64_t> indices, const TrainConfig& cfg);

struct EpochStats {
    std::int64_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    EnsembleParams params; // snapshot of the best-validation-accuracy epoch
    std::vector<EpochStats> history;
    std::int64_t best_epoch = -1;
};

TrainResult train_fold(const std::vector<Clip>& clips, const FoldSplit& split,
                       const TrainConfig& cfg);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history);

} // namespace tempagg
