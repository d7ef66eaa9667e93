#pragma once
// Mass-conserving overland-flow surrogate.
//
// Each step adds rain, removes a constant infiltration, then moves water
// from every cell towards its lower-head 4-neighbours. Transfers are all
// computed from the heads at the start of routing and committed together.
// Water routed into a border cell leaves the domain and is tallied as
// boundary outflow; rain falling on a border cell stays there until routed.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "precip_slomo/error.hpp"
#include "precip_slomo/grid.hpp"

namespace precip_slomo {

struct FloodState {
    GridMeta meta;
    Grid<double> depth;  // m
    Timestamp time{};

    static FloodState dry(const GridMeta& meta, Timestamp time)
    {
        return {meta, Grid<double>(meta.rows, meta.cols), time};
    }

    double volume() const noexcept
    {
        double s = 0.0;
        for (double v : depth.values()) s += v;
        return s;
    }
};

struct SimConfig {
    double dt_seconds = 300.0;
    double infiltration_mm_per_hr = 0.0;
    double routing_coefficient = 0.1;
    double sim_hours = 0.0;  // 0: as long as the forcing lasts

    void validate() const
    {
        expect(dt_seconds > 0.0, ErrorCode::ConfigError, "dt_seconds must be positive");
        expect(infiltration_mm_per_hr >= 0.0, ErrorCode::ConfigError, "infiltration must be non-negative");
        expect(routing_coefficient > 0.0 && routing_coefficient <= 0.2, ErrorCode::ConfigError,
            "routing_coefficient must lie in (0, 0.2]");
        expect(sim_hours >= 0.0, ErrorCode::ConfigError, "sim_hours must be non-negative");
    }

    friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

/// Water budget of one step, in meters summed over cells.
struct StepBalance {
    double before = 0.0;
    double rain_in = 0.0;
    double infiltration_out = 0.0;
    double boundary_out = 0.0;
    double after = 0.0;

    double residual() const noexcept { return after - (before + rain_in - infiltration_out - boundary_out); }

    double relative_error() const noexcept
    {
        const double scale = std::max({before + rain_in, after, 1e-300});
        return std::abs(residual()) / scale;
    }
};

inline FloodState step(
    const FloodState& state, const PrecipFrame& rain, const Dem& dem, const SimConfig& cfg, StepBalance* balance = nullptr)
{
    cfg.validate();
    if (!aligned(state.meta, rain.meta) || !aligned(state.meta, dem.meta))
        fail(ErrorCode::GridMismatch, "flood state, rain and DEM must share one grid");
    const std::size_t rows = state.meta.rows, cols = state.meta.cols;
    const double rain_scale = cfg.dt_seconds / 3.6e6;  // mm/hr over dt, in m
    const double infil = cfg.infiltration_mm_per_hr * rain_scale;
    const double kappa = cfg.routing_coefficient;

    StepBalance b;
    b.before = state.volume();
    Grid<double> depth = state.depth;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        const double r = rain.is_missing(i) ? 0.0 : static_cast<double>(rain.values[i]) * rain_scale;
        expect(r >= 0.0 && std::isfinite(r), ErrorCode::NegativeInput, "rain forcing must be finite and non-negative");
        depth[i] += r;
        b.rain_in += r;
        const double lost = std::min(depth[i], infil);
        depth[i] -= lost;
        b.infiltration_out += lost;
    }

    // Compute every transfer from the same heads, then commit.
    Grid<double> delta(rows, cols);
    const auto& z = dem.elevation;
    constexpr int dr[4] = {-1, 1, 0, 0};
    constexpr int dc[4] = {0, 0, -1, 1};
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = depth(r, c);
            if (d <= 0.0) continue;
            const double head = z(r, c) + d;
            std::array<double, 4> drop{};
            double want = 0.0;
            for (int k = 0; k < 4; ++k) {
                const long rr = static_cast<long>(r) + dr[k], cc = static_cast<long>(c) + dc[k];
                if (rr < 0 || cc < 0 || rr >= static_cast<long>(rows) || cc >= static_cast<long>(cols)) continue;
                const double other = z(rr, cc) + depth(rr, cc);
                if (head > other) {
                    drop[k] = kappa * (head - other);
                    want += drop[k];
                }
            }
            if (want <= 0.0) continue;
            const double scale = want > d ? d / want : 1.0;
            double moved = 0.0;
            for (int k = 0; k < 4; ++k) {
                if (drop[k] <= 0.0) continue;
                const double q = drop[k] * scale;
                moved += q;
                const auto rr = static_cast<std::size_t>(static_cast<long>(r) + dr[k]);
                const auto cc = static_cast<std::size_t>(static_cast<long>(c) + dc[k]);
                if (rr == 0 || cc == 0 || rr + 1 == rows || cc + 1 == cols)
                    b.boundary_out += q;
                else
                    delta(rr, cc) += q;
            }
            delta(r, c) -= moved;
        }
    }

    FloodState out{state.meta, std::move(depth), state.time + std::chrono::seconds(static_cast<long long>(cfg.dt_seconds))};
    for (std::size_t i = 0; i < out.depth.size(); ++i) {
        double v = out.depth[i] + delta[i];
        if (!std::isfinite(v) || v < -1e-12 * std::max(1.0, out.depth[i]))
            fail(ErrorCode::InstabilityDetected, "routing removed more water than a cell held");
        out.depth[i] = std::max(v, 0.0);
    }
    b.after = out.volume();
    if (balance) *balance = b;
    return out;
}

/// One state per forcing frame: the state after applying that frame.
inline std::vector<FloodState> run(const FrameSeries& series, const Dem& dem, const SimConfig& cfg,
    std::vector<StepBalance>* balances = nullptr)
{
    cfg.validate();
    if (series.frames.empty()) return {};
    if (std::abs(series.step_minutes * 60.0 - cfg.dt_seconds) > 1e-9)
        fail(ErrorCode::IncompatibleSteps, "forcing step must equal the simulation time step");
    std::size_t n = series.size();
    if (cfg.sim_hours > 0.0)
        n = std::min(n, static_cast<std::size_t>(std::llround(cfg.sim_hours * 3600.0 / cfg.dt_seconds)));
    std::vector<FloodState> out;
    out.reserve(n);
    FloodState s = FloodState::dry(series.meta(), series.frames.front().time);
    if (balances) balances->clear();
    for (std::size_t i = 0; i < n; ++i) {
        StepBalance b;
        s = step(s, series.frames[i], dem, cfg, &b);
        s.time = series.frames[i].time;
        out.push_back(s);
        if (balances) balances->push_back(b);
    }
    return out;
}

/// Cells with depth at or above the threshold.
inline Mask flood_extent(const FloodState& state, double threshold_m)
{
    expect(threshold_m > 0.0, ErrorCode::InvalidArgument, "flood threshold must be positive");
    Mask m(state.depth.rows(), state.depth.cols());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = state.depth[i] >= threshold_m;
    return m;
}

inline constexpr double kFloodThresholdM = 0.15;

enum class ExtentDiff : std::uint8_t { same = 0, missing = 1, extra = 2 };

/// `missing`: flooded in the reference `a` only; `extra`: flooded in `b` only.
inline Grid<ExtentDiff> extent_diff(const Mask& a, const Mask& b)
{
    require_same_shape(a, b, "extent diff");
    Grid<ExtentDiff> out(a.rows(), a.cols(), ExtentDiff::same);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] && !b[i]) out[i] = ExtentDiff::missing;
        else if (!a[i] && b[i]) out[i] = ExtentDiff::extra;
    }
    return out;
}

} // namespace precip_slomo
