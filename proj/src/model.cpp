#include "tempagg/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tempagg/checkpoint.hpp"
#include "tempagg/dataset.hpp"
#include "tempagg/error.hpp"

namespace tempagg {

namespace {

constexpr std::array<std::int64_t, 3> kStreamChannels = {8, 16, 32};

TensorPtr glorot_uniform(std::vector<std::int64_t> shape, std::int64_t fan_in,
                         std::int64_t fan_out, Rng& rng) {
    const auto bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
    return uniform_tensor<float>(std::move(shape), rng, -bound, bound, true);
}

StreamParams init_stream(std::int64_t in_channels, Rng& rng) {
    StreamParams stream;
    std::int64_t cin = in_channels;
    for (std::size_t b = 0; b < stream.blocks.size(); ++b) {
        const std::int64_t cout = kStreamChannels[b];
        stream.blocks[b].weight =
            glorot_uniform({cout, cin, 3, 3}, cin * 9, cout * 9, rng);
        stream.blocks[b].bias = zeros<float>({cout}, true);
        stream.blocks[b].bn = make_batchnorm_state<float>(cout);
        cin = cout;
    }
    return stream;
}

TensorPtr forward_stream(StreamParams& stream, const TensorPtr& input, Phase phase) {
    TensorPtr x = input;
    for (auto& block : stream.blocks) {
        x = conv2d(x, block.weight, block.bias, 1, 1);
        x = batchnorm2d(x, block.bn, phase);
        x = relu(x);
        x = maxpool2d(x, 2, 2);
    }
    return global_avg_pool(x);
}

void collect_stream(std::vector<std::pair<std::string, TensorPtr>>& out, StreamParams& stream,
                    const std::string& prefix, bool with_running) {
    for (std::size_t b = 0; b < stream.blocks.size(); ++b) {
        const std::string base = prefix + "/block" + std::to_string(b + 1);
        auto& block = stream.blocks[b];
        out.emplace_back(base + "/conv/weight", block.weight);
        out.emplace_back(base + "/conv/bias", block.bias);
        out.emplace_back(base + "/bn/gamma", block.bn.gamma);
        out.emplace_back(base + "/bn/beta", block.bn.beta);
        if (with_running) {
            out.emplace_back(base + "/bn/running_mean", block.bn.running_mean);
            out.emplace_back(base + "/bn/running_var", block.bn.running_var);
        }
    }
}

void collect_net(std::vector<std::pair<std::string, TensorPtr>>& out, AVNetParams& net,
                 const std::string& prefix, bool with_running) {
    collect_stream(out, net.video, prefix + "/video", with_running);
    collect_stream(out, net.audio, prefix + "/audio", with_running);
    out.emplace_back(prefix + "/head/fc/weight", net.fc_weight);
    out.emplace_back(prefix + "/head/fc/bias", net.fc_bias);
}

TensorPtr copy_tensor(const TensorPtr& t) {
    auto out = make_tensor<float>(t->shape, t->data, t->requires_grad);
    return out;
}

} // namespace

AVNetParams init_avnet(std::int64_t video_channels, Rng& rng) {
    AVNetParams net;
    net.video = init_stream(video_channels, rng);
    net.audio = init_stream(1, rng);
    net.fc_weight = glorot_uniform({kNumClasses, kFusedFeature}, kFusedFeature,
                                   kNumClasses, rng);
    net.fc_bias = zeros<float>({kNumClasses}, true);
    return net;
}

TensorPtr forward_segment(AVNetParams& params, const TensorPtr& frames, const TensorPtr& spec,
                          Phase phase) {
    if (frames->shape.size() != 4 || spec->shape.size() != 4) {
        fail("shape", "forward_segment: frame and spectrogram batches must have rank 4");
    }
    if (frames->extent(0) != spec->extent(0)) {
        fail("shape", "forward_segment: frame batch " + std::to_string(frames->extent(0)) +
                          " does not match spectrogram batch " + std::to_string(spec->extent(0)));
    }
    auto vfeat = forward_stream(params.video, frames, phase);
    auto afeat = forward_stream(params.audio, spec, phase);
    auto fused = concat_cols(vfeat, afeat);
    auto logits = linear(fused, params.fc_weight, params.fc_bias);
    return softmax(logits);
}

std::vector<std::pair<std::string, TensorPtr>> EnsembleParams::trainable_parameters() {
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (std::size_t k = 0; k < nets.size(); ++k) {
        collect_net(out, nets[k], "seg" + std::to_string(k), false);
    }
    return out;
}

std::vector<std::pair<std::string, TensorPtr>> EnsembleParams::state_entries() {
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (std::size_t k = 0; k < nets.size(); ++k) {
        collect_net(out, nets[k], "seg" + std::to_string(k), true);
    }
    return out;
}

EnsembleParams init_ensemble(std::int64_t segments, Sharing sharing, std::int64_t video_channels,
                             std::uint64_t seed) {
    if (segments < 1) fail("model", "ensemble needs at least one segment");
    EnsembleParams ens;
    ens.sharing = sharing;
    ens.segments = segments;
    const std::int64_t count = sharing == Sharing::kShared ? 1 : segments;
    for (std::int64_t k = 0; k < count; ++k) {
        Rng rng(mix_seed(seed, 0x11E7ull, static_cast<std::uint64_t>(k)));
        ens.nets.push_back(init_avnet(video_channels, rng));
    }
    return ens;
}

EnsembleParams clone_ensemble(const EnsembleParams& src) {
    EnsembleParams out;
    out.sharing = src.sharing;
    out.segments = src.segments;
    for (const auto& net : src.nets) {
        AVNetParams copy;
        for (std::size_t s = 0; s < 2; ++s) {
            const StreamParams& from = s == 0 ? net.video : net.audio;
            StreamParams& to = s == 0 ? copy.video : copy.audio;
            for (std::size_t b = 0; b < from.blocks.size(); ++b) {
                to.blocks[b].weight = copy_tensor(from.blocks[b].weight);
                to.blocks[b].bias = copy_tensor(from.blocks[b].bias);
                to.blocks[b].bn.gamma = copy_tensor(from.blocks[b].bn.gamma);
                to.blocks[b].bn.beta = copy_tensor(from.blocks[b].bn.beta);
                to.blocks[b].bn.running_mean = copy_tensor(from.blocks[b].bn.running_mean);
                to.blocks[b].bn.running_var = copy_tensor(from.blocks[b].bn.running_var);
                to.blocks[b].bn.eps = from.blocks[b].bn.eps;
                to.blocks[b].bn.momentum = from.blocks[b].bn.momentum;
            }
        }
        copy.fc_weight = copy_tensor(net.fc_weight);
        copy.fc_bias = copy_tensor(net.fc_bias);
        out.nets.push_back(std::move(copy));
    }
    return out;
}

TensorPtr aggregate(const std::vector<TensorPtr>& segment_probs) {
    if (segment_probs.empty()) fail("model", "aggregate: empty probability list");
    TensorPtr sum = segment_probs[0];
    for (std::size_t k = 1; k < segment_probs.size(); ++k) sum = add(sum, segment_probs[k]);
    return sum;
}

std::int64_t predict(std::span<const float> scores) {
    if (scores.empty()) fail("model", "predict: empty score vector");
    std::int64_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = static_cast<std::int64_t>(i);
    }
    return best;
}

void save_ensemble(const EnsembleParams& params, const std::filesystem::path& path) {
    auto& mutable_params = const_cast<EnsembleParams&>(params);
    save_checkpoint(path, mutable_params.state_entries());
}

EnsembleParams load_ensemble(const std::filesystem::path& path) {
    const auto entries = load_checkpoint(path);
    std::map<std::string, TensorPtr> by_name;
    std::int64_t groups = 0;
    for (const auto& [name, tensor] : entries) {
        by_name[name] = tensor;
        if (name.rfind("seg", 0) == 0) {
            const auto slash = name.find('/');
            if (slash != std::string::npos) {
                const std::int64_t k = std::stoll(name.substr(3, slash - 3));
                groups = std::max(groups, k + 1);
            }
        }
    }
    if (groups == 0) fail("io", path.string() + ": no seg<k>/ parameters found");

    const auto fetch = [&](const std::string& name) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) fail("io", path.string() + ": missing parameter '" + name + "'");
        it->second->requires_grad = true;
        return it->second;
    };

    EnsembleParams ens;
    ens.segments = groups;
    ens.sharing = Sharing::kIndependent;
    for (std::int64_t k = 0; k < groups; ++k) {
        const std::string prefix = "seg" + std::to_string(k);
        AVNetParams net;
        for (std::size_t s = 0; s < 2; ++s) {
            StreamParams& stream = s == 0 ? net.video : net.audio;
            const std::string sname = prefix + (s == 0 ? "/video" : "/audio");
            for (std::size_t b = 0; b < stream.blocks.size(); ++b) {
                const std::string base = sname + "/block" + std::to_string(b + 1);
                stream.blocks[b].weight = fetch(base + "/conv/weight");
                stream.blocks[b].bias = fetch(base + "/conv/bias");
                stream.blocks[b].bn = make_batchnorm_state<float>(
                    stream.blocks[b].weight->extent(0));
                stream.blocks[b].bn.gamma = fetch(base + "/bn/gamma");
                stream.blocks[b].bn.beta = fetch(base + "/bn/beta");
                stream.blocks[b].bn.running_mean = fetch(base + "/bn/running_mean");
                stream.blocks[b].bn.running_var = fetch(base + "/bn/running_var");
                stream.blocks[b].bn.running_mean->requires_grad = false;
                stream.blocks[b].bn.running_var->requires_grad = false;
            }
        }
        net.fc_weight = fetch(prefix + "/head/fc/weight");
        net.fc_bias = fetch(prefix + "/head/fc/bias");
        ens.nets.push_back(std::move(net));
    }
    return ens;
}

} // namespace tempagg
