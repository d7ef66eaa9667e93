#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "precip_slomo/floodsim.hpp"
#include "precip_slomo/synth.hpp"

namespace ps = precip_slomo;

namespace {

ps::Dem flat_dem(const ps::GridMeta& meta, double h)
{
    return ps::terrain_gradient({meta, ps::Grid<double>(meta.rows, meta.cols, h), {}, {}});
}

ps::FrameSeries uniform_rain(const ps::GridMeta& meta, std::size_t n, float rate)
{
    ps::FrameSeries s;
    s.step_minutes = 5;
    for (std::size_t i = 0; i < n; ++i)
        s.frames.push_back(ps::PrecipFrame::filled(meta, ps::synth::synthetic_start() + std::chrono::minutes(5 * i), rate));
    return s;
}

} // namespace

TEST(FloodStep, ZeroRainStaysDry)
{
    const auto dem = ps::synth::valley_storm({}).dem;
    const auto small = ps::synth::synthetic_meta(64, 64);
    auto s = ps::FloodState::dry(small, ps::synth::synthetic_start());
    const auto rain = ps::PrecipFrame::filled(small, s.time, 0.0f);
    for (int i = 0; i < 10; ++i) s = ps::step(s, rain, dem, {});
    EXPECT_EQ(s.volume(), 0.0);
}

TEST(FloodStep, FlatDemUniformRainGivesUniformDepth)
{
    const auto meta = ps::synth::synthetic_meta(6, 7);
    const auto series = uniform_rain(meta, 24, 12.0f);  // 2 h at 12 mm/hr
    const auto states = ps::run(series, flat_dem(meta, 100.0), {});
    ASSERT_EQ(states.size(), 24u);
    for (double d : states.back().depth.values()) EXPECT_NEAR(d, 0.024, 1e-12);
}

TEST(FloodStep, InfiltrationRemovesAtMostTheDepth)
{
    const auto meta = ps::synth::synthetic_meta(4, 4);
    ps::SimConfig cfg;
    cfg.infiltration_mm_per_hr = 6.0;
    const auto states = ps::run(uniform_rain(meta, 12, 2.0f), flat_dem(meta, 0.0), cfg);
    EXPECT_EQ(states.back().volume(), 0.0);
    cfg.infiltration_mm_per_hr = 1.0;
    const auto wet = ps::run(uniform_rain(meta, 12, 2.0f), flat_dem(meta, 0.0), cfg);
    for (double d : wet.back().depth.values()) EXPECT_NEAR(d, 0.001, 1e-12);
}

TEST(FloodStep, WaterPondsOnValleyFloor)
{
    // V-shaped valley along columns, floor at column 10, rain on one slope only.
    const auto meta = ps::synth::synthetic_meta(12, 21);
    ps::Dem dem{meta, ps::Grid<double>(12, 21), {}, {}};
    for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t c = 0; c < 21; ++c) dem.elevation(r, c) = 50.0 + 2.0 * std::abs(static_cast<double>(c) - 10.0);
    ps::FrameSeries series;
    for (std::size_t i = 0; i < 300; ++i) {
        auto f = ps::PrecipFrame::filled(meta, ps::synth::synthetic_start() + std::chrono::minutes(5 * i));
        if (i < 24) f.values(6, 15) = 50.0f;
        series.frames.push_back(f);
    }
    const auto states = ps::run(series, dem, {});
    const auto& d = states.back().depth;
    const auto it = std::max_element(d.values().begin(), d.values().end());
    EXPECT_EQ(static_cast<std::size_t>(it - d.values().begin()) % 21, 10u);
}

TEST(FloodStep, RoutingConservesMassAndDepthStaysNonNegative)
{
    const auto sc = ps::synth::valley_storm({});
    std::vector<ps::StepBalance> bal;
    ps::SimConfig cfg;
    cfg.sim_hours = 12.0;
    const auto states = ps::run(sc.series, sc.dem, cfg, &bal);
    ASSERT_EQ(states.size(), 144u);
    for (const auto& b : bal) EXPECT_LT(b.relative_error(), 1e-9);
    for (const auto& s : states)
        for (double v : s.depth.values()) ASSERT_GE(v, 0.0);
    double out = 0.0;
    for (const auto& b : bal) out += b.boundary_out;
    EXPECT_GT(out, 0.0);
}

TEST(FloodStep, NeverRoutesUphillInHead)
{
    // Two cells: the deeper one on lower ground must only lose water to lower heads.
    const auto meta = ps::synth::synthetic_meta(3, 4);
    ps::Dem dem{meta, ps::Grid<double>(3, 4, 10.0), {}, {}};
    dem.elevation(1, 1) = 0.0;
    dem.elevation(1, 2) = 0.5;
    auto s = ps::FloodState::dry(meta, ps::synth::synthetic_start());
    s.depth(1, 1) = 0.2;  // head 0.2, below every neighbour's head
    const auto next = ps::step(s, ps::PrecipFrame::filled(meta, s.time), dem, {});
    EXPECT_EQ(next.depth(1, 1), 0.2);
}

TEST(FloodStep, MoreRainNeverLessWater)
{
    const auto sc = ps::synth::valley_storm({});
    ps::SimConfig cfg;
    cfg.sim_hours = 8.0;
    auto heavier = sc.series;
    for (auto& f : heavier.frames)
        for (auto& v : f.values.values()) v *= 1.5f;
    const auto a = ps::run(sc.series, sc.dem, cfg);
    const auto b = ps::run(heavier, sc.dem, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_GE(b[i].volume(), a[i].volume() - 1e-12);
}

TEST(FloodRun, OneStatePerFrame)
{
    const auto sc = ps::synth::valley_storm({});
    ASSERT_EQ(sc.series.size(), 577u);
    const auto states = ps::run(sc.series, sc.dem, {});
    ASSERT_EQ(states.size(), 577u);
    EXPECT_EQ(states.front().time, sc.series.frames.front().time);
    EXPECT_EQ(states.back().time, sc.series.frames.back().time);
}

TEST(FloodRun, Errors)
{
    const auto meta = ps::synth::synthetic_meta(4, 4);
    ps::SimConfig cfg;
    cfg.dt_seconds = 60.0;
    try {
        ps::run(uniform_rain(meta, 3, 1.0f), flat_dem(meta, 0.0), cfg);
        FAIL();
    } catch (const ps::Error& e) {
        EXPECT_EQ(e.code(), ps::ErrorCode::IncompatibleSteps);
    }
    cfg = {};
    cfg.routing_coefficient = 0.3;
    EXPECT_THROW(cfg.validate(), ps::Error);
    try {
        ps::run(uniform_rain(meta, 3, 1.0f), flat_dem(ps::synth::synthetic_meta(5, 4), 0.0), {});
        FAIL();
    } catch (const ps::Error& e) {
        EXPECT_EQ(e.code(), ps::ErrorCode::GridMismatch);
    }
}

TEST(FloodExtent, ThresholdIsInclusive)
{
    auto s = ps::FloodState::dry(ps::synth::synthetic_meta(2, 2), {});
    s.depth = ps::Grid<double>(2, 2, std::vector<double>{0.1, 0.2, 0.15, 0.0});
    const auto m = ps::flood_extent(s, ps::kFloodThresholdM);
    EXPECT_EQ(m[0], 0);
    EXPECT_EQ(m[1], 1);
    EXPECT_EQ(m[2], 1);
    EXPECT_EQ(m[3], 0);
}

TEST(FloodExtent, DiffTruthTable)
{
    const ps::Mask a(1, 4, std::vector<std::uint8_t>{1, 1, 0, 0});
    const ps::Mask b(1, 4, std::vector<std::uint8_t>{1, 0, 1, 0});
    const auto d = ps::extent_diff(a, b);
    EXPECT_EQ(d[0], ps::ExtentDiff::same);
    EXPECT_EQ(d[1], ps::ExtentDiff::missing);
    EXPECT_EQ(d[2], ps::ExtentDiff::extra);
    EXPECT_EQ(d[3], ps::ExtentDiff::same);
    try {
        ps::extent_diff(a, ps::Mask(2, 2));
        FAIL();
    } catch (const ps::Error& e) {
        EXPECT_EQ(e.code(), ps::ErrorCode::ShapeMismatch);
    }
}
