#pragma once
// Series densification: the linear baseline and the learned interpolator.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>

#include "precip_slomo/error.hpp"
#include "precip_slomo/flownet.hpp"
#include "precip_slomo/grid.hpp"

namespace precip_slomo {

/// (1 - t) i0 + t i1 in mm/hr, cell by cell.
inline PrecipFrame linear_interpolate(const PrecipFrame& i0, const PrecipFrame& i1, double t)
{
    if (!aligned(i0.meta, i1.meta)) fail(ErrorCode::ShapeMismatch, "input frames are not aligned");
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::TOutOfRange, "t must lie in [0, 1]");
    PrecipFrame out = PrecipFrame::filled(i0.meta, i0.time);
    const auto span = std::chrono::duration<double>(i1.time - i0.time).count();
    out.time = i0.time + std::chrono::seconds(static_cast<long long>(std::llround(t * span)));
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = static_cast<float>((1.0 - t) * i0.values[i] + t * i1.values[i]);
        out.missing[i] = i0.missing[i] || i1.missing[i];
    }
    return out;
}

/// Produces the frame at fraction t between two neighbours.
using FrameInterpolator = std::function<PrecipFrame(const PrecipFrame&, const PrecipFrame&, double)>;

inline FrameInterpolator linear_method() { return linear_interpolate; }

/// The two-stage network; `params` and `dem` must outlive the interpolator.
inline FrameInterpolator model_method(const ModelParams& params, const Dem& dem)
{
    return [&params, &dem](const PrecipFrame& a, const PrecipFrame& b, double t) {
        return forward_interpolate(params, a, b, dem, t);
    };
}

/// Inserts interpolated frames so consecutive frames are `target_step_minutes`
/// apart. Original frames are copied through untouched.
inline FrameSeries densify_series(const FrameSeries& series, int target_step_minutes, const FrameInterpolator& method)
{
    if (target_step_minutes <= 0 || series.step_minutes % target_step_minutes != 0)
        fail(ErrorCode::IncompatibleSteps,
            "step " + std::to_string(series.step_minutes) + " min is not a multiple of "
                + std::to_string(target_step_minutes) + " min");
    const int k = series.step_minutes / target_step_minutes;
    FrameSeries out;
    out.step_minutes = target_step_minutes;
    if (series.frames.empty()) return out;
    out.frames.reserve((series.frames.size() - 1) * static_cast<std::size_t>(k) + 1);
    for (std::size_t g = 0; g + 1 < series.frames.size(); ++g) {
        const auto& a = series.frames[g];
        const auto& b = series.frames[g + 1];
        out.frames.push_back(a);
        for (int j = 1; j < k; ++j) {
            auto f = method(a, b, static_cast<double>(j) / k);
            f.time = a.time + std::chrono::minutes(j * target_step_minutes);
            out.frames.push_back(std::move(f));
        }
    }
    out.frames.push_back(series.frames.back());
    return out;
}

} // namespace precip_slomo
