#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "precip_slomo/grid.hpp"

namespace ps = precip_slomo;

namespace {

ps::GridMeta meta(std::size_t rows, std::size_t cols, double lat, double lon, double cell)
{
    ps::GridMeta m;
    m.rows = rows;
    m.cols = cols;
    m.lat_sw = lat;
    m.lon_sw = lon;
    m.cell_deg = cell;
    return m;
}

ps::PrecipFrame numbered_frame(const ps::GridMeta& m)
{
    auto f = ps::PrecipFrame::filled(m, ps::parse_time("2018-10-15T00:00:00Z"));
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = static_cast<float>(i);
    return f;
}

ps::FrameSeries series_of(std::size_t n, int step)
{
    ps::FrameSeries s{{}, step};
    const auto m = meta(3, 3, 0, 0, 1);
    for (std::size_t i = 0; i < n; ++i) {
        auto f = ps::PrecipFrame::filled(m, ps::parse_time("2018-10-15T00:00:00Z") + std::chrono::minutes(step * i),
            static_cast<float>(i));
        s.frames.push_back(f);
    }
    return s;
}

} // namespace

TEST(GridMeta, RejectsDegenerateGrids)
{
    EXPECT_THROW(meta(1, 4, 0, 0, 1).validate(), ps::Error);
    EXPECT_THROW(meta(4, 4, 0, 0, 0).validate(), ps::Error);
    EXPECT_NO_THROW(meta(2, 2, 0, 0, 0.5).validate());
}

TEST(GridMeta, AlignmentTolerance)
{
    const auto a = meta(4, 4, 43.0, 2.8, 0.01);
    auto b = a;
    b.lat_sw += 5e-10;
    EXPECT_TRUE(ps::aligned(a, b));
    b.lat_sw += 1e-8;
    EXPECT_FALSE(ps::aligned(a, b));
}

TEST(PrecipFrame, ValidationRejectsNegativeObservedValues)
{
    auto f = ps::PrecipFrame::filled(meta(2, 2, 0, 0, 1), {});
    f.values[1] = -1.0f;
    try {
        f.validate();
        FAIL();
    } catch (const ps::Error& e) {
        EXPECT_EQ(e.code(), ps::ErrorCode::NegativeInput);
    }
    f.missing[1] = 1;
    EXPECT_NO_THROW(f.validate());
}

TEST(CropToBbox, WholeExtentIsIdentity)
{
    const auto m = meta(10, 10, 43.0, 2.8, 0.05);
    const auto f = numbered_frame(m);
    const auto out = ps::crop_to_bbox(f, {43.0, 2.8, 43.5, 3.3});
    EXPECT_TRUE(ps::aligned(out.meta, m));
    EXPECT_EQ(out.values, f.values);
}

TEST(CropToBbox, NortheastQuadrantOfFourByFour)
{
    // Centers at 0.5, 1.5, 2.5, 3.5; the box keeps rows/cols 2 and 3.
    const auto m = meta(4, 4, 0.0, 0.0, 1.0);
    const auto f = numbered_frame(m);
    const auto out = ps::crop_to_bbox(f, {2.0, 2.0, 4.0, 4.0});
    ASSERT_EQ(out.meta.rows, 2u);
    ASSERT_EQ(out.meta.cols, 2u);
    EXPECT_DOUBLE_EQ(out.meta.lat_sw, 2.0);
    EXPECT_DOUBLE_EQ(out.meta.lon_sw, 2.0);
    EXPECT_EQ(out.values(0, 0), f.values(2, 2));
    EXPECT_EQ(out.values(1, 1), f.values(3, 3));
}

TEST(CropToBbox, AudeBoxOnRegionalGrid)
{
    // A 0.01 degree lattice over the southeast of France.
    const auto m = meta(300, 400, 42.0, 1.0, 0.01);
    const auto f = numbered_frame(m);
    const auto out = ps::crop_to_bbox(f, ps::kAudeBox);
    const auto& b = ps::kAudeBox;
    EXPECT_GE(out.meta.center_lat(0), b.lat_min);
    EXPECT_LE(out.meta.center_lat(static_cast<double>(out.meta.rows - 1)), b.lat_max);
    EXPECT_LT(out.meta.center_lat(0) - m.cell_deg, b.lat_min);
    EXPECT_GT(out.meta.center_lat(static_cast<double>(out.meta.rows)), b.lat_max);
    EXPECT_GE(out.meta.center_lon(0), b.lon_min);
    EXPECT_LT(out.meta.center_lon(0) - m.cell_deg, b.lon_min);
    EXPECT_EQ(out.meta.rows, 20u);
    EXPECT_EQ(out.meta.cols, 31u);
}

TEST(CropToBbox, NestedCropsCompose)
{
    const auto m = meta(20, 20, 0.0, 0.0, 0.1);
    const auto f = numbered_frame(m);
    const ps::BBox outer{0.3, 0.2, 1.7, 1.9}, inner{0.6, 0.55, 1.2, 1.45};
    const auto twice = ps::crop_to_bbox(ps::crop_to_bbox(f, outer), inner);
    const auto once = ps::crop_to_bbox(f, inner);
    EXPECT_TRUE(ps::aligned(twice.meta, once.meta));
    EXPECT_EQ(twice.values, once.values);
}

TEST(CropToBbox, EmptyCrop)
{
    const auto f = numbered_frame(meta(4, 4, 0.0, 0.0, 1.0));
    try {
        ps::crop_to_bbox(f, {0.6, 0.6, 1.4, 1.4});
        FAIL();
    } catch (const ps::Error& e) {
        EXPECT_EQ(e.code(), ps::ErrorCode::EmptyCrop);
    }
}

TEST(ResampleTo, IdentityAndConstant)
{
    const auto m = meta(5, 6, 10.0, 20.0, 0.1);
    const auto f = numbered_frame(m);
    EXPECT_EQ(ps::resample_to(f, m).values, f.values);

    auto c = ps::PrecipFrame::filled(m, {}, 5.0f);
    const auto fine = meta(9, 11, 10.05, 20.05, 0.045);
    const auto out = ps::resample_to(c, fine);
    for (float v : out.values.values()) EXPECT_FLOAT_EQ(v, 5.0f);
}

TEST(ResampleTo, MidpointBetweenColumns)
{
    // Source [[0,1],[0,1]] with centers at lon 0.5 and 1.5; first target column at lon 1.0.
    ps::Dem src{meta(2, 2, 0.0, 0.0, 1.0), ps::Grid<double>(2, 2, std::vector<double>{0, 1, 0, 1}), {}, {}};
    const auto target = meta(2, 2, 0.0, 0.75, 0.5);
    const auto out = ps::resample_grid(src.elevation, src.meta, target);
    EXPECT_DOUBLE_EQ(out(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(out(1, 0), 0.5);
}

TEST(ResampleTo, ExactOnPlanes)
{
    const auto m = meta(8, 8, 0.0, 0.0, 1.0);
    ps::Grid<double> h(8, 8);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) h(r, c) = 1.5 * static_cast<double>(r) - 0.7 * static_cast<double>(c) + 3;
    const auto target = meta(13, 11, 0.6, 0.55, 0.5);
    const auto out = ps::resample_grid(h, m, target);
    for (std::size_t r = 0; r < target.rows; ++r)
        for (std::size_t c = 0; c < target.cols; ++c) {
            const double fr = target.center_lat(static_cast<double>(r)) - 0.5;
            const double fc = target.center_lon(static_cast<double>(c)) - 0.5;
            EXPECT_NEAR(out(r, c), 1.5 * fr - 0.7 * fc + 3, 1e-9);
        }
}

TEST(ResampleTo, OutsideExtent)
{
    const auto f = numbered_frame(meta(4, 4, 0.0, 0.0, 1.0));
    try {
        ps::resample_to(f, meta(4, 4, 1.0, 1.0, 1.0));
        FAIL();
    } catch (const ps::Error& e) {
        EXPECT_EQ(e.code(), ps::ErrorCode::ExtentMismatch);
    }
}

TEST(ResampleTo, MissingPropagates)
{
    auto f = numbered_frame(meta(4, 4, 0.0, 0.0, 1.0));
    f.missing(1, 1) = 1;
    const auto out = ps::resample_to(f, meta(2, 2, 0.0, 0.0, 2.0));
    // Target (0,0) samples between source rows/cols 0 and 1.
    EXPECT_TRUE(out.missing(0, 0));
    EXPECT_FALSE(out.missing(1, 1));
}

TEST(TerrainGradient, FlatDem)
{
    ps::Dem d{meta(5, 5, 0, 0, 1), ps::Grid<double>(5, 5, 100.0), {}, {}};
    d = ps::terrain_gradient(d);
    for (std::size_t i = 0; i < 25; ++i) {
        EXPECT_EQ((*d.grad_x)[i], 0.0);
        EXPECT_EQ((*d.grad_y)[i], 0.0);
    }
}

TEST(TerrainGradient, PlanesEverywhereIncludingBorders)
{
    ps::Dem d{meta(5, 5, 0, 0, 1), ps::Grid<double>(5, 5), {}, {}};
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 5; ++c) d.elevation(r, c) = 2.0 * static_cast<double>(r) + 3.0 * static_cast<double>(c);
    d = ps::terrain_gradient(d);
    for (std::size_t i = 0; i < 25; ++i) {
        EXPECT_DOUBLE_EQ((*d.grad_x)[i], 3.0);
        EXPECT_DOUBLE_EQ((*d.grad_y)[i], 2.0);
    }
}

TEST(TerrainGradient, CentralInsideOneSidedOnBorder)
{
    ps::Dem d{meta(3, 3, 0, 0, 1), ps::Grid<double>(3, 3, std::vector<double>{0, 1, 4, 0, 1, 4, 0, 1, 4}), {}, {}};
    d = ps::terrain_gradient(d);
    EXPECT_DOUBLE_EQ((*d.grad_x)(1, 0), 1.0);
    EXPECT_DOUBLE_EQ((*d.grad_x)(1, 1), 2.0);
    EXPECT_DOUBLE_EQ((*d.grad_x)(1, 2), 3.0);
}

TEST(Undersample, KeepsEveryNthFrame)
{
    const auto s = ps::undersample(series_of(13, 5), 6);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s.step_minutes, 30);
    EXPECT_EQ(s.frames[2].values[0], 12.0f);
    EXPECT_NO_THROW(s.validate());

    const auto h = ps::undersample(series_of(25, 5), 12);
    ASSERT_EQ(h.size(), 3u);
    EXPECT_EQ(h.frames[2].time - h.frames[0].time, std::chrono::minutes(120));

    const auto same = ps::undersample(series_of(4, 5), 1);
    EXPECT_EQ(same.size(), 4u);
}

TEST(Undersample, Composes)
{
    const auto s = series_of(37, 5);
    const auto a = ps::undersample(ps::undersample(s, 2), 3);
    const auto b = ps::undersample(s, 6);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a.step_minutes, b.step_minutes);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.frames[i].time, b.frames[i].time);
}

TEST(FrameSeries, ValidationChecksSpacing)
{
    auto s = series_of(3, 5);
    EXPECT_NO_THROW(s.validate());
    s.frames[2].time += std::chrono::minutes(1);
    EXPECT_THROW(s.validate(), ps::Error);
}

TEST(Normalize, Log1pRoundTrip)
{
    EXPECT_EQ(ps::normalize_precip(0.0), 0.0);
    EXPECT_NEAR(ps::normalize_precip(std::numbers::e - 1.0), 1.0, 1e-15);
    for (double x : {0.1, 1.0, 10.0, 100.0})
        EXPECT_NEAR(ps::denormalize_precip(ps::normalize_precip(x)), x, 1e-9 * x);
    try {
        ps::normalize_precip(-0.5);
        FAIL();
    } catch (const ps::Error& e) {
        EXPECT_EQ(e.code(), ps::ErrorCode::NegativeInput);
    }
}

TEST(Normalize, MissingCellsMapToZero)
{
    auto f = ps::PrecipFrame::filled(meta(2, 2, 0, 0, 1), {}, 3.0f);
    f.missing[0] = 1;
    f.values[0] = -9999.0f;
    const auto n = ps::normalize_precip(f);
    EXPECT_EQ(n[0], 0.0);
    EXPECT_NEAR(n[1], std::log1p(3.0), 1e-12);
}

TEST(Time, RoundTrip)
{
    const auto t = ps::parse_time("2018-10-15T06:35:00Z");
    EXPECT_EQ(ps::format_time(t), "2018-10-15T06:35:00Z");
}
