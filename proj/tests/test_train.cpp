#include <doctest.h>

#include <fstream>
#include <cmath>

#include "tempagg/error.hpp"
#include "tempagg/train.hpp"

using namespace tempagg;

namespace {

// small in-memory synthetic set, shrunk dims for speed
std::vector<Clip> tiny_clips(std::int64_t actors, std::int64_t per_actor, GenConfig cfg,
                             std::uint64_t seed) {
    std::vector<Clip> clips;
    for (std::int64_t a = 0; a < actors; ++a) {
        const auto nuisance = actor_nuisance(seed, a, cfg);
        for (std::int64_t i = 0; i < per_actor; ++i) {
            const std::int64_t global = a * per_actor + i;
            clips.push_back(make_synthetic_clip(global % kNumClasses, a, nuisance,
                                                mix_seed(seed, 0xC11Bull, global), cfg));
        }
    }
    return clips;
}

GenConfig small_gen() {
    GenConfig cfg;
    cfg.frames_per_clip = 30;
    cfg.height = 32;
    cfg.width = 32;
    return cfg;
}

TrainConfig small_train(std::int64_t segments) {
    TrainConfig cfg;
    cfg.segments = segments;
    cfg.batch_size = 8;
    cfg.spec_height = 32;
    cfg.spec_width = 32;
    cfg.seed = 5;
    return cfg;
}

FoldSplit actor_holdout(const std::vector<Clip>& clips, std::int64_t held_actor) {
    FoldSplit split;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(clips.size()); ++i) {
        (clips[i].actor_id == held_actor ? split.val : split.train).push_back(i);
    }
    return split;
}

} // namespace

TEST_SUITE_BEGIN("train");

TEST_CASE("learning rate decays by the factor every decay_every steps, exactly") {
    TrainConfig cfg;
    CHECK(lr_at(0, cfg) == 1e-3);
    CHECK(lr_at(49, cfg) == 1e-3);
    CHECK(lr_at(50, cfg) == 1e-4);
    CHECK(lr_at(99, cfg) == 1e-4);
    CHECK(lr_at(100, cfg) == 1e-5);
    // exact equality against an independently computed product
    for (const std::int64_t step : {0, 17, 50, 99, 100, 230}) {
        const double expected = cfg.lr0 * std::pow(cfg.decay_factor,
                                                   -static_cast<double>(step / cfg.decay_every));
        CHECK(lr_at(step, cfg) == expected);
    }
}

TEST_CASE("lr_at is piecewise constant with jumps only at multiples of decay_every") {
    TrainConfig cfg;
    for (std::int64_t step = 1; step < 200; ++step) {
        if (step % cfg.decay_every == 0) {
            CHECK(lr_at(step, cfg) < lr_at(step - 1, cfg));
        } else {
            CHECK(lr_at(step, cfg) == lr_at(step - 1, cfg));
        }
    }
}

TEST_CASE("sgd with zero gradient and zero velocity leaves parameters unchanged") {
    auto p = make_tensor<float>({3}, {1.0f, -2.0f, 0.5f}, true);
    p->ensure_grad();
    SgdState state;
    sgd_step({{"p", p}}, state, 0.1, 0.9);
    CHECK(p->data == std::vector<float>{1.0f, -2.0f, 0.5f});
    CHECK(state.step == 1);
}

TEST_CASE("sgd momentum follows the hand-iterated update") {
    auto p = make_tensor<float>({1}, {1.0f}, true);
    p->ensure_grad();
    p->grad[0] = 1.0f;
    SgdState state;
    sgd_step({{"p", p}}, state, 0.1, 0.9);
    CHECK(p->data[0] == doctest::Approx(0.9).epsilon(1e-6));
    p->grad[0] = 1.0f;
    sgd_step({{"p", p}}, state, 0.1, 0.9);
    CHECK(state.velocity[0][0] == doctest::Approx(1.9).epsilon(1e-6));
    CHECK(p->data[0] == doctest::Approx(0.71).epsilon(1e-6));
}

TEST_CASE("zero momentum reduces to vanilla sgd") {
    auto p = make_tensor<float>({1}, {2.0f}, true);
    p->ensure_grad();
    p->grad[0] = 0.5f;
    SgdState state;
    sgd_step({{"p", p}}, state, 0.2, 0.0);
    CHECK(p->data[0] == doctest::Approx(2.0 - 0.2 * 0.5).epsilon(1e-7));
}

TEST_CASE("a missing gradient is an error") {
    auto p = make_tensor<float>({2}, {1.0f, 1.0f}, true);
    SgdState state;
    CHECK_THROWS_AS(sgd_step({{"p", p}}, state, 0.1, 0.9), Error);
}

TEST_CASE("one sgd step on the quadratic loss p^2/2 decreases it") {
    for (const double momentum : {0.0, 0.9}) {
        const double lr = 0.5; // below 2/(1+momentum) either way
        auto p = make_tensor<float>({1}, {3.0f}, true);
        p->ensure_grad();
        p->grad[0] = p->data[0]; // d(p^2/2)/dp
        SgdState state;
        sgd_step({{"p", p}}, state, lr, momentum);
        CHECK(0.5 * p->data[0] * p->data[0] < 0.5 * 3.0 * 3.0);
    }
}

TEST_CASE("batch assembly is deterministic given (seed, epoch) and resamples across epochs") {
    const auto clips = tiny_clips(2, 4, small_gen(), 9);
    const auto cfg = small_train(2);
    const std::vector<std::int64_t> idx = {0, 3, 5};

    const auto a = assemble_segment_batch(clips, idx, cfg, SampleMode::kStochastic, 1);
    const auto b = assemble_segment_batch(clips, idx, cfg, SampleMode::kStochastic, 1);
    const auto c = assemble_segment_batch(clips, idx, cfg, SampleMode::kStochastic, 2);
    CHECK(a.labels == b.labels);
    for (std::int64_t k = 0; k < cfg.segments; ++k) {
        CHECK(a.frames[k]->data == b.frames[k]->data);
        CHECK(a.specs[k]->data == b.specs[k]->data);
    }
    bool any_differs = false;
    for (std::int64_t k = 0; k < cfg.segments; ++k) {
        any_differs = any_differs || a.frames[k]->data != c.frames[k]->data;
    }
    CHECK(any_differs);
}

TEST_CASE("after one batch every stream weight and affine parameter has gradient mass") {
    const auto clips = tiny_clips(2, 6, small_gen(), 11);
    auto cfg = small_train(3);
    auto ens = init_ensemble(cfg.segments, Sharing::kIndependent, 1, 21);
    const std::vector<std::int64_t> idx = {0, 1, 2, 3, 6, 7};
    const auto batch = assemble_segment_batch(clips, idx, cfg, SampleMode::kStochastic, 0);

    std::vector<TensorPtr> probs;
    for (std::int64_t k = 0; k < cfg.segments; ++k) {
        probs.push_back(forward_segment(ens.net(k), batch.frames[k], batch.specs[k], Phase::kTrain));
    }
    auto loss = cross_entropy(scale(aggregate(probs), 1.0f / 3.0f), batch.labels);
    loss->backward();

    for (auto& [name, p] : ens.trainable_parameters()) {
        if (name.find("conv/bias") != std::string::npos) continue; // absorbed by batchnorm
        double norm = 0.0;
        REQUIRE(p->grad.size() == p->data.size());
        for (const float g : p->grad) norm += static_cast<double>(g) * g;
        INFO(name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("identical seeds give bitwise-identical histories and parameters") {
    const auto clips = tiny_clips(3, 4, small_gen(), 13);
    auto cfg = small_train(2);
    cfg.epochs = 2;
    const auto split = actor_holdout(clips, 0);

    const auto a = train_fold(clips, split, cfg);
    const auto b = train_fold(clips, split, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].train_loss == b.history[e].train_loss);
        CHECK(a.history[e].val_loss == b.history[e].val_loss);
        CHECK(a.history[e].train_acc == b.history[e].train_acc);
        CHECK(a.history[e].val_acc == b.history[e].val_acc);
    }
    auto pa = const_cast<TrainResult&>(a).params.state_entries();
    auto pb = const_cast<TrainResult&>(b).params.state_entries();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->data == pb[i].second->data);
}

TEST_CASE("zero epochs returns the initialization with an empty history") {
    const auto clips = tiny_clips(2, 4, small_gen(), 15);
    auto cfg = small_train(2);
    cfg.epochs = 0;
    const auto split = actor_holdout(clips, 0);
    auto result = train_fold(clips, split, cfg);
    CHECK(result.history.empty());
    CHECK(result.best_epoch == -1);

    auto fresh = init_ensemble(cfg.segments, cfg.sharing, 1, mix_seed(cfg.seed, 0x1417ull));
    auto got = result.params.state_entries();
    auto want = fresh.state_entries();
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].second->data == want[i].second->data);
}

TEST_CASE("training pushes the loss under the uniform baseline within five epochs") {
    const auto clips = tiny_clips(6, 6, small_gen(), 17);
    auto cfg = small_train(2);
    cfg.epochs = 5;
    cfg.batch_size = 4;
    const auto split = actor_holdout(clips, 0);
    const auto result = train_fold(clips, split, cfg);
    REQUIRE(result.history.size() == 5);
    const double baseline = std::log(6.0);
    for (const auto& row : result.history) {
        CHECK(std::isfinite(row.train_loss));
    }
    CHECK(result.history.back().train_loss < baseline);
}

TEST_CASE("history csv carries the five-column header") {
    const auto path = std::filesystem::temp_directory_path() / "tempagg_hist.csv";
    write_history_csv(path, {{0, 1.5, 0.2, 1.6, 0.25}, {1, 1.2, 0.4, 1.3, 0.5}});
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "epoch,train_loss,train_acc,val_loss,val_acc");
    int rows = 0;
    std::string line;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 2);
    std::filesystem::remove(path);
}

TEST_SUITE_END();
