#pragma once
// Synthetic fixtures: rain fields with known motion and terrain with known
// drainage, so the pipeline can be exercised without external archives.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "precip_slomo/error.hpp"
#include "precip_slomo/grid.hpp"
#include "precip_slomo/nn.hpp"

namespace precip_slomo::synth {

struct Scenario {
    FrameSeries series;  // fine (5-min) truth
    Dem dem;             // gradients populated
};

inline GridMeta synthetic_meta(std::size_t rows, std::size_t cols)
{
    // A lattice whose interior contains the Aude study box.
    GridMeta m;
    m.rows = rows;
    m.cols = cols;
    m.cell_deg = 0.01;
    m.lat_sw = 43.05;
    m.lon_sw = 2.80;
    m.crs_note = "EPSG:4326 (synthetic)";
    return m;
}

inline Timestamp synthetic_start() { return parse_time("2018-10-14T00:00:00Z"); }

struct BlobOptions {
    std::size_t rows = 64;
    std::size_t cols = 64;
    std::size_t frames = 865;  // 72 h at 5 min, inclusive
    int step_minutes = 5;
    int blobs = 6;
    double vx = 0.35;  // cells per step
    double vy = 0.1;
    double sigma_min = 2.5, sigma_max = 5.0;
    double peak_min = 4.0, peak_max = 30.0;
    std::uint64_t seed = 7;
};

/// Gaussian rain cells advecting with a uniform velocity through a
/// periodic strip slightly wider than the grid, over gently rolling terrain.
inline Scenario translating_blob(const BlobOptions& o = {})
{
    std::mt19937_64 rng(o.seed);
    const double period_x = static_cast<double>(o.cols) + 24.0;
    const double period_y = static_cast<double>(o.rows) + 24.0;
    struct Blob {
        double x, y, sigma, peak;
    };
    std::vector<Blob> blobs;
    for (int k = 0; k < o.blobs; ++k) {
        blobs.push_back({period_x * (k + nn::uniform(rng, 0.0, 0.8)) / o.blobs, nn::uniform(rng, 0.0, period_y),
            nn::uniform(rng, o.sigma_min, o.sigma_max), nn::uniform(rng, o.peak_min, o.peak_max)});
    }
    Scenario s;
    const auto meta = synthetic_meta(o.rows, o.cols);
    s.series.step_minutes = o.step_minutes;
    for (std::size_t n = 0; n < o.frames; ++n) {
        auto f = PrecipFrame::filled(meta, synthetic_start() + std::chrono::minutes(o.step_minutes * n));
        for (const auto& b : blobs) {
            const double cx = b.x + o.vx * static_cast<double>(n);
            const double cy = b.y + o.vy * static_cast<double>(n);
            for (std::size_t r = 0; r < o.rows; ++r) {
                double dy = std::remainder(static_cast<double>(r) - cy, period_y);
                for (std::size_t c = 0; c < o.cols; ++c) {
                    const double dx = std::remainder(static_cast<double>(c) - cx, period_x);
                    f.values(r, c) += static_cast<float>(b.peak * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma)));
                }
            }
        }
        s.series.frames.push_back(std::move(f));
    }
    s.dem.meta = meta;
    s.dem.elevation = Grid<double>(o.rows, o.cols);
    for (std::size_t r = 0; r < o.rows; ++r)
        for (std::size_t c = 0; c < o.cols; ++c)
            s.dem.elevation(r, c) = 200.0 + 60.0 * std::sin(0.11 * static_cast<double>(c))
                * std::cos(0.07 * static_cast<double>(r)) + 2.0 * static_cast<double>(r);
    s.dem = terrain_gradient(std::move(s.dem));
    return s;
}

struct RampOptions {
    std::size_t rows = 16;
    std::size_t cols = 16;
    std::size_t frames = 13;
    int step_minutes = 5;
    std::uint64_t seed = 3;
};

/// Every cell varies linearly in time: base + slope * step, never negative.
inline Scenario linear_ramp(const RampOptions& o = {})
{
    std::mt19937_64 rng(o.seed);
    const auto meta = synthetic_meta(o.rows, o.cols);
    Grid<double> base(o.rows, o.cols), slope(o.rows, o.cols);
    for (std::size_t i = 0; i < base.size(); ++i) {
        // multiples of 1/64 so every frame is exact in float
        base[i] = std::floor(nn::uniform(rng, 0.0, 20.0) * 64.0) / 64.0;
        // keep base + slope * (frames - 1) >= 0
        const double lo = -base[i] / static_cast<double>(o.frames - 1);
        slope[i] = std::ceil(nn::uniform(rng, lo, 2.0) * 64.0) / 64.0;
    }
    Scenario s;
    s.series.step_minutes = o.step_minutes;
    for (std::size_t n = 0; n < o.frames; ++n) {
        auto f = PrecipFrame::filled(meta, synthetic_start() + std::chrono::minutes(o.step_minutes * n));
        for (std::size_t i = 0; i < base.size(); ++i)
            f.values[i] = static_cast<float>(std::max(0.0, base[i] + slope[i] * static_cast<double>(n)));
        s.series.frames.push_back(std::move(f));
    }
    s.dem.meta = meta;
    s.dem.elevation = Grid<double>(o.rows, o.cols, 100.0);
    s.dem = terrain_gradient(std::move(s.dem));
    return s;
}

struct ValleyOptions {
    std::size_t rows = 64;
    std::size_t cols = 64;
    std::size_t frames = 577;  // 48 h at 5 min, inclusive
    int step_minutes = 5;
    double storm_start_hours = 6.0;
    double storm_hours = 5.0;
    double storm_peak = 60.0;  // mm/hr
    double storm_sigma = 6.0;  // cells
    double storm_speed = 1.0;  // cells per step
    std::uint64_t seed = 5;
};

/// A valley whose floor is a chain of closed basins, hit by a fast-moving
/// intense convective cell. Water ponds in the basins and never drains, so
/// differences in where rain fell persist long after the storm.
inline Scenario valley_storm(const ValleyOptions& o = {})
{
    const auto meta = synthetic_meta(o.rows, o.cols);
    Scenario s;
    s.dem.meta = meta;
    s.dem.elevation = Grid<double>(o.rows, o.cols);
    const double mid = static_cast<double>(o.cols - 1) / 2.0;
    for (std::size_t r = 0; r < o.rows; ++r) {
        for (std::size_t c = 0; c < o.cols; ++c) {
            const double across = std::abs(static_cast<double>(c) - mid);
            // V-shaped cross-section, a rising valley floor, and basins every 16 rows.
            const double basin = 3.0 * std::cos(2.0 * M_PI * static_cast<double>(r) / 16.0);
            s.dem.elevation(r, c) = 100.0 + 1.5 * across + 0.05 * static_cast<double>(r) + basin;
        }
    }
    s.dem = terrain_gradient(std::move(s.dem));

    std::mt19937_64 rng(o.seed);
    const double y0 = nn::uniform(rng, 0.25, 0.4) * static_cast<double>(o.rows);
    const double start = o.storm_start_hours * 60.0 / o.step_minutes;
    const double length = o.storm_hours * 60.0 / o.step_minutes;
    s.series.step_minutes = o.step_minutes;
    for (std::size_t n = 0; n < o.frames; ++n) {
        auto f = PrecipFrame::filled(meta, synthetic_start() + std::chrono::minutes(o.step_minutes * n));
        const double k = static_cast<double>(n) - start;
        if (k >= 0.0 && k <= length) {
            const double envelope = std::sin(M_PI * k / length);
            // Diagonal track crossing the valley several times.
            const double cx = std::fmod(o.storm_speed * k, 2.0 * static_cast<double>(o.cols));
            const double x = cx < static_cast<double>(o.cols) ? cx : 2.0 * static_cast<double>(o.cols) - cx;
            const double y = y0 + 0.35 * o.storm_speed * k * 0.5;
            for (std::size_t r = 0; r < o.rows; ++r)
                for (std::size_t c = 0; c < o.cols; ++c) {
                    const double dx = static_cast<double>(c) - x, dy = static_cast<double>(r) - y;
                    f.values(r, c) = static_cast<float>(
                        o.storm_peak * envelope * std::exp(-(dx * dx + dy * dy) / (2 * o.storm_sigma * o.storm_sigma)));
                }
        }
        s.series.frames.push_back(std::move(f));
    }
    return s;
}

inline Scenario by_name(const std::string& name, std::uint64_t seed)
{
    if (name == "translating-blob") {
        BlobOptions o;
        o.seed = seed;
        return translating_blob(o);
    }
    if (name == "linear-ramp") {
        RampOptions o;
        o.seed = seed;
        return linear_ramp(o);
    }
    if (name == "valley-storm") {
        ValleyOptions o;
        o.seed = seed;
        return valley_storm(o);
    }
    fail(ErrorCode::InvalidArgument, "unknown scenario '" + name + "'");
}

} // namespace precip_slomo::synth
