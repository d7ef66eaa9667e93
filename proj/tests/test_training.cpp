#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "precip_slomo/checkpoint.hpp"
#include "precip_slomo/synth.hpp"
#include "precip_slomo/training.hpp"

namespace ps = precip_slomo;
namespace fs = std::filesystem;

namespace {

ps::UNetSpec tiny(int in, int out)
{
    ps::UNetSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.channels = {4, 6};
    s.kernels = {3, 3};
    return s;
}

ps::TrainConfig tiny_config()
{
    ps::TrainConfig c;
    c.epochs = 2;
    c.seed = 5;
    c.batch_size = 2;
    c.crop_size = 8;
    c.learning_rate = 1e-3;
    c.flow_spec = tiny(ps::kFlowNetInputs, ps::kFlowNetOutputs);
    c.refine_spec = tiny(ps::kRefineInputsTopo, ps::kRefineOutputs);
    return c;
}

ps::synth::Scenario blobs_30min(std::size_t frames = 7)
{
    ps::synth::BlobOptions o;
    o.rows = 12;
    o.cols = 12;
    o.frames = frames;
    o.step_minutes = 30;
    o.vx = 2.0;
    return ps::synth::translating_blob(o);
}

ps::FrameSeries flat_series(std::size_t n, int step)
{
    ps::FrameSeries s;
    s.step_minutes = step;
    const auto meta = ps::synth::synthetic_meta(2, 2);
    for (std::size_t i = 0; i < n; ++i)
        s.frames.push_back(
            ps::PrecipFrame::filled(meta, ps::synth::synthetic_start() + std::chrono::minutes(step * static_cast<int>(i)), 1.0f));
    return s;
}

std::vector<float> flat_params(ps::ModelParams& p)
{
    std::vector<float> out;
    for (const auto* q : p.parameters()) out.insert(out.end(), q->value.begin(), q->value.end());
    return out;
}

fs::path fresh_dir(const std::string& name)
{
    const auto d = fs::temp_directory_path() / ("precip_slomo_train_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

template <class F>
ps::ErrorCode code_of(F&& f)
{
    try {
        f();
    } catch (const ps::Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ps::ErrorCode::InvalidArgument;
}

} // namespace

TEST(BuildTriplets, Counts)
{
    EXPECT_EQ(ps::build_triplets(flat_series(3, 30)).size(), 1u);
    EXPECT_EQ(ps::build_triplets(flat_series(5, 30)).size(), 3u);
    EXPECT_EQ(ps::build_triplets(flat_series(1440, 30)).size(), 1438u);
    const auto t = ps::build_triplets(flat_series(5, 30));
    EXPECT_EQ(t[1].i0.time, ps::synth::synthetic_start() + std::chrono::minutes(30));
    EXPECT_EQ(t[1].i_mid.time, ps::synth::synthetic_start() + std::chrono::minutes(60));
    EXPECT_EQ(t[1].i1.time, ps::synth::synthetic_start() + std::chrono::minutes(90));
    EXPECT_EQ(t[1].t_mid, 0.5);
}

TEST(BuildTriplets, Errors)
{
    EXPECT_EQ(code_of([] { ps::build_triplets(flat_series(2, 30)); }), ps::ErrorCode::SeriesTooShort);
    EXPECT_EQ(code_of([] { ps::build_triplets(flat_series(5, 5)); }), ps::ErrorCode::IncompatibleSteps);
}

TEST(BuildTriplets, FullyMissingMiddleIsDropped)
{
    auto s = flat_series(5, 30);
    for (auto& v : s.frames[2].missing.values()) v = 1;
    EXPECT_EQ(ps::build_triplets(s).size(), 2u);
    s.frames[2].missing[0] = 0;
    EXPECT_EQ(ps::build_triplets(s).size(), 3u);
}

TEST(EpochOrder, PermutationDeterministicAndReshuffled)
{
    const auto a = ps::epoch_order(50, 9, 1);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_EQ(a, ps::epoch_order(50, 9, 1));
    EXPECT_NE(a, ps::epoch_order(50, 9, 2));
    EXPECT_NE(a, ps::epoch_order(50, 10, 1));
}

TEST(TrainConfig, Validation)
{
    auto c = tiny_config();
    c.epochs = 0;
    EXPECT_EQ(code_of([&] { c.validate(); }), ps::ErrorCode::ConfigError);
    c = tiny_config();
    c.crop_size = 7;  // not a multiple of 2 for a two-level net
    EXPECT_EQ(code_of([&] { c.validate(); }), ps::ErrorCode::ConfigError);
    c = tiny_config();
    c.learning_rate = 0.0;
    EXPECT_EQ(code_of([&] { c.validate(); }), ps::ErrorCode::ConfigError);
    const auto sc = blobs_30min();
    c = tiny_config();
    c.epochs = 0;
    EXPECT_EQ(code_of([&] { ps::train(c, ps::build_triplets(sc.series), sc.dem); }), ps::ErrorCode::ConfigError);
}

TEST(Train, DeterministicForFixedSeed)
{
    const auto sc = blobs_30min();
    const auto triplets = ps::build_triplets(sc.series);
    auto a = ps::train(tiny_config(), triplets, sc.dem);
    auto b = ps::train(tiny_config(), triplets, sc.dem);
    ASSERT_EQ(a.log.size(), 2u);
    EXPECT_EQ(flat_params(a.params), flat_params(b.params));
    EXPECT_EQ(a.log[1].mean_loss, b.log[1].mean_loss);
    auto c = tiny_config();
    c.seed = 6;
    auto other = ps::train(c, triplets, sc.dem);
    EXPECT_NE(flat_params(a.params), flat_params(other.params));
    EXPECT_TRUE(std::isfinite(a.log[1].mean_loss));
}

TEST(Train, WritesCheckpointAndLog)
{
    const auto dir = fresh_dir("ckpt");
    const auto sc = blobs_30min();
    auto c = tiny_config();
    c.checkpoint_dir = dir;
    std::vector<int> seen;
    auto r = ps::train(c, ps::build_triplets(sc.series), sc.dem, [&](const ps::EpochLog& e) { seen.push_back(e.epoch); });
    EXPECT_EQ(seen, (std::vector<int>{1, 2}));
    auto loaded = ps::load_checkpoint(dir / "model.ckpt");
    EXPECT_EQ(flat_params(loaded), flat_params(r.params));
    EXPECT_EQ(loaded.norm_stats.dot_scale, r.params.norm_stats.dot_scale);
    std::ifstream log(dir / "train_log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("epoch").get<int>(), ++lines);
        EXPECT_TRUE(j.contains("mean_loss") && j.contains("wall_seconds"));
    }
    EXPECT_EQ(lines, 2);
}

TEST(Checkpoint, RoundTripIsBitExact)
{
    const auto dir = fresh_dir("rt");
    auto p = ps::ModelParams::create(tiny(2, 6), tiny(13, 7), 3);
    p.norm_stats.dot_scale = 2.75;
    ps::save_checkpoint(p, dir / "m.ckpt");
    auto q = ps::load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(flat_params(q), flat_params(p));
    EXPECT_EQ(q.flow_net.spec(), p.flow_net.spec());
    EXPECT_EQ(q.refine_net.spec(), p.refine_net.spec());
    EXPECT_EQ(q.norm_stats.dot_scale, 2.75);
    EXPECT_EQ(q.version, p.version);
}

TEST(Checkpoint, CorruptionIsDetected)
{
    const auto dir = fresh_dir("bad");
    auto p = ps::ModelParams::create(tiny(2, 6), tiny(13, 7), 3);
    p.version = "precip-slomo-model-v0";
    ps::save_checkpoint(p, dir / "old.ckpt");
    EXPECT_EQ(code_of([&] { ps::load_checkpoint(dir / "old.ckpt"); }), ps::ErrorCode::CorruptCheckpoint);

    p.version = ps::kModelVersion;
    ps::save_checkpoint(p, dir / "m.ckpt");
    const auto size = fs::file_size(dir / "m.ckpt");
    fs::copy_file(dir / "m.ckpt", dir / "short.ckpt");
    fs::resize_file(dir / "short.ckpt", size / 2);
    EXPECT_EQ(code_of([&] { ps::load_checkpoint(dir / "short.ckpt"); }), ps::ErrorCode::CorruptCheckpoint);

    fs::copy_file(dir / "m.ckpt", dir / "flip.ckpt");
    {
        std::fstream f(dir / "flip.ckpt", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(size - 20));
        f.put('\x5a');
    }
    EXPECT_EQ(code_of([&] { ps::load_checkpoint(dir / "flip.ckpt"); }), ps::ErrorCode::CorruptCheckpoint);
    EXPECT_EQ(code_of([&] { ps::load_checkpoint(dir / "absent.ckpt"); }), ps::ErrorCode::IoError);
}

TEST(Train, NonFiniteLossIsDiverged)
{
    const auto sc = blobs_30min();
    auto tri = ps::build_triplets(sc.series).front();
    auto p = ps::ModelParams::create(tiny(2, 6), tiny(13, 7), 3);
    p.flow_net.parameters().front()->value[0] = std::numeric_limits<float>::quiet_NaN();
    auto dem = sc.dem;
    EXPECT_EQ(code_of([&] { ps::accumulate_sample(p, tri, &dem, {}, 1.0); }), ps::ErrorCode::DivergedLoss);
}
