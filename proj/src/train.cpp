#include "tempagg/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tempagg/error.hpp"

namespace tempagg {

namespace {

constexpr std::uint64_t kShuffleTag = 0x5F1EULL;

} // namespace

double lr_at(std::int64_t step, const TrainConfig& cfg) {
    if (step < 0) fail("train", "lr_at: negative step");
    const auto drops = static_cast<double>(step / cfg.decay_every);
    return cfg.lr0 * std::pow(cfg.decay_factor, -drops);
}

void sgd_step(const std::vector<std::pair<std::string, TensorPtr>>& params, SgdState& state,
              double lr, double momentum) {
    if (state.velocity.empty()) {
        state.velocity.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.velocity[i].assign(params[i].second->data.size(), 0.0f);
        }
    }
    const auto mu = static_cast<float>(momentum);
    const auto rate = static_cast<float>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i].second;
        if (p.grad.size() != p.data.size()) {
            fail("train", "sgd_step: parameter '" + params[i].first + "' is missing its gradient");
        }
        auto& v = state.velocity[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = mu * v[j] + p.grad[j];
            p.data[j] -= rate * v[j];
        }
    }
    ++state.step;
}

SegmentBatch assemble_segment_batch(const std::vector<Clip>& clips,
                                    std::span<const std::int64_t> indices, const TrainConfig& cfg,
                                    SampleMode mode, std::int64_t epoch) {
    const auto batch = static_cast<std::int64_t>(indices.size());
    if (batch == 0) fail("train", "assemble_segment_batch: empty batch");
    const Clip& probe = clips[indices[0]];
    const std::int64_t n = cfg.segments;

    SegmentBatch out;
    out.labels.resize(batch);
    for (std::int64_t k = 0; k < n; ++k) {
        out.frames.push_back(zeros<float>({batch, probe.channels, probe.height, probe.width}));
        out.specs.push_back(zeros<float>({batch, 1, cfg.spec_height, cfg.spec_width}));
    }

    SamplerConfig sampler = cfg.sampler;
    sampler.segments = n;
    sampler.mode = mode;
    const float floor_db = -80.0f;

    for (std::int64_t p = 0; p < batch; ++p) out.labels[p] = clips[indices[p]].label;

#pragma omp parallel for collapse(2) schedule(dynamic)
    for (std::int64_t p = 0; p < batch; ++p) {
        for (std::int64_t k = 0; k < n; ++k) {
            const std::int64_t clip_id = indices[p];
            const Clip& clip = clips[clip_id];
            const auto ranges = partition(clip.frame_count, n);
            Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(clip_id),
                             static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(epoch)));
            const auto sample = sample_segment(ranges[k], k, sampler, clip.frame_rate,
                                               clip.audio.rate, clip.audio.length(), rng);

            float* fdst = out.frames[k]->data.data() + p * clip.frame_values();
            std::copy_n(clip.frame(sample.frame_index), clip.frame_values(), fdst);

            const auto window = slice_audio(clip.audio, sample, sampler.window_s);
            const auto hop = auto_hop(window.length(), cfg.stft_win, cfg.stft_min_frames);
            auto spec = stft_log_power(window, cfg.stft_win, hop);
            spec = band_limit(spec, cfg.spec_max_hz, window.rate);
            spec = resize_bilinear(spec, cfg.spec_height, cfg.spec_width);
            float* sdst = out.specs[k]->data.data() + p * cfg.spec_height * cfg.spec_width;
            for (std::size_t i = 0; i < spec.values.size(); ++i) {
                sdst[i] = (spec.values[i] - floor_db) / -floor_db;
            }
        }
    }
    return out;
}

namespace {

std::vector<SegmentBatch> build_eval_batches(const std::vector<Clip>& clips,
                                             std::span<const std::int64_t> indices,
                                             const TrainConfig& cfg) {
    std::vector<SegmentBatch> batches;
    const auto total = static_cast<std::int64_t>(indices.size());
    for (std::int64_t start = 0; start < total; start += cfg.batch_size) {
        const auto count = std::min(cfg.batch_size, total - start);
        batches.push_back(assemble_segment_batch(clips, indices.subspan(start, count), cfg,
                                                 SampleMode::kDeterministic, 0));
    }
    return batches;
}

EvalForward forward_eval_batches(EnsembleParams& params,
                                 const std::vector<SegmentBatch>& batches,
                                 const TrainConfig& cfg) {
    NoGradGuard ng;
    EvalForward out;
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
        std::vector<TensorPtr> probs;
        for (std::int64_t k = 0; k < cfg.segments; ++k) {
            probs.push_back(
                forward_segment(params.net(k), batch.frames[k], batch.specs[k], Phase::kEval));
        }
        auto agg = aggregate(probs);
        auto dist = scale(agg, 1.0f / static_cast<float>(cfg.segments));
        const auto count = static_cast<std::int64_t>(batch.labels.size());
        loss_sum += cross_entropy(dist, batch.labels)->scalar_value() * static_cast<double>(count);
        out.scores.insert(out.scores.end(), agg->data.begin(), agg->data.end());
        out.labels.insert(out.labels.end(), batch.labels.begin(), batch.labels.end());
    }
    out.loss = loss_sum / static_cast<double>(out.labels.size());
    return out;
}

} // namespace

EvalForward forward_eval(EnsembleParams& params, const std::vector<Clip>& clips,
                         std::span<const std::int64_t> indices, const TrainConfig& cfg) {
    if (indices.empty()) fail("eval", "forward_eval: empty clip set");
    return forward_eval_batches(params, build_eval_batches(clips, indices, cfg), cfg);
}

TrainResult train_fold(const std::vector<Clip>& clips, const FoldSplit& split,
                       const TrainConfig& cfg) {
    if (split.train.empty() || split.val.empty()) {
        fail("train", "train_fold: empty train or validation split");
    }
    const Clip& probe = clips[split.train[0]];
    auto ens = init_ensemble(cfg.segments, cfg.sharing, probe.channels,
                             mix_seed(cfg.seed, 0x1417ull));
    auto params = ens.trainable_parameters();
    SgdState sgd;

    TrainResult result;
    result.params = clone_ensemble(ens);
    double best_acc = -1.0;

    // deterministic-mode validation inputs never change across epochs
    const auto val_batches = build_eval_batches(clips, split.val, cfg);

    std::vector<std::int64_t> order(split.train.begin(), split.train.end());
    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)));
        for (std::int64_t i = static_cast<std::int64_t>(order.size()) - 1; i > 0; --i) {
            const std::int64_t j = shuffle_rng.uniform_int(0, i);
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        std::int64_t correct = 0;
        std::int64_t epoch_step = 0;
        const auto total = static_cast<std::int64_t>(order.size());
        for (std::int64_t start = 0; start < total; start += cfg.batch_size) {
            const auto count = std::min(cfg.batch_size, total - start);
            const auto batch =
                assemble_segment_batch(clips, std::span(order).subspan(start, count), cfg,
                                       SampleMode::kStochastic, epoch);

            for (auto& [name, p] : params) p->zero_grad();
            std::vector<TensorPtr> probs;
            for (std::int64_t k = 0; k < cfg.segments; ++k) {
                probs.push_back(
                    forward_segment(ens.net(k), batch.frames[k], batch.specs[k], Phase::kTrain));
            }
            auto agg = aggregate(probs);
            auto dist = scale(agg, 1.0f / static_cast<float>(cfg.segments));
            auto loss = cross_entropy(dist, batch.labels);
            loss->backward();
            // The schedule restarts each epoch ("for each epoch, the rate was
            // initially set to lr0"); it only bites once an epoch exceeds
            // decay_every steps.
            sgd_step(params, sgd, lr_at(epoch_step, cfg), cfg.momentum);
            ++epoch_step;

            loss_sum += loss->scalar_value() * static_cast<double>(count);
            for (std::int64_t r = 0; r < count; ++r) {
                const std::span<const float> row(agg->data.data() + r * kNumClasses, kNumClasses);
                correct += predict(row) == batch.labels[r] ? 1 : 0;
            }
        }

        const auto val = forward_eval_batches(ens, val_batches, cfg);
        std::int64_t val_correct = 0;
        for (std::size_t r = 0; r < val.labels.size(); ++r) {
            const std::span<const float> row(val.scores.data() + r * kNumClasses, kNumClasses);
            val_correct += predict(row) == val.labels[r] ? 1 : 0;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(total);
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(total);
        stats.val_loss = val.loss;
        stats.val_acc = static_cast<double>(val_correct) / static_cast<double>(val.labels.size());
        result.history.push_back(stats);

        if (stats.val_acc > best_acc) {
            best_acc = stats.val_acc;
            result.best_epoch = epoch;
            result.params = clone_ensemble(ens);
        }
    }
    return result;
}

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochStats>& history) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail("io", "cannot open " + path.string() + " for writing");
    f << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    f.precision(17);
    for (const auto& row : history) {
        f << row.epoch << ',' << row.train_loss << ',' << row.train_acc << ',' << row.val_loss
          << ',' << row.val_acc << '\n';
    }
}

} // namespace tempagg
