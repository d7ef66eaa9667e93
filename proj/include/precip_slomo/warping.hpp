#pragma once
// Differentiable backward warping, intermediate-flow approximation and
// visibility-weighted fusion of warped frames.
//
// Flow convention: output cell (r, c) reads the source at
//     x' = c - dx(r, c),  y' = r - dy(r, c)
// so a flow of dx = +1 moves content one column to the east. Sample
// positions outside the grid are clamped to the border; the clamped
// coordinate then carries no gradient.

#include <algorithm>
#include <cmath>
#include <utility>

#include "precip_slomo/error.hpp"
#include "precip_slomo/grid.hpp"

namespace precip_slomo {

/// Displacement (cells) plus intensity change per pixel.
template <class T>
struct FlowField3 {
    GridMeta meta;
    Grid<T> dx, dy, dz;

    static FlowField3 zeros(std::size_t rows, std::size_t cols)
    {
        FlowField3 f;
        f.meta.rows = rows;
        f.meta.cols = cols;
        f.dx = Grid<T>(rows, cols);
        f.dy = Grid<T>(rows, cols);
        f.dz = Grid<T>(rows, cols);
        return f;
    }

    static FlowField3 constant(std::size_t rows, std::size_t cols, T x, T y, T z)
    {
        FlowField3 f;
        f.meta.rows = rows;
        f.meta.cols = cols;
        f.dx = Grid<T>(rows, cols, x);
        f.dy = Grid<T>(rows, cols, y);
        f.dz = Grid<T>(rows, cols, z);
        return f;
    }

    std::size_t rows() const noexcept { return dx.rows(); }
    std::size_t cols() const noexcept { return dx.cols(); }

    Grid<T>& channel(int k) noexcept { return k == 0 ? dx : (k == 1 ? dy : dz); }
    const Grid<T>& channel(int k) const noexcept { return k == 0 ? dx : (k == 1 ? dy : dz); }

    void check_shape() const
    {
        require_same_shape(dx, dy, "flow dy");
        require_same_shape(dx, dz, "flow dz");
    }

    bool finite() const noexcept
    {
        for (int k = 0; k < 3; ++k)
            for (T v : channel(k).values())
                if (!std::isfinite(v)) return false;
        return true;
    }
};

template <class T>
struct VisibilityMap {
    GridMeta meta;
    Grid<T> v;
};

template <class T>
struct FusionWeights {
    Grid<T> alpha;
};

enum class WarpClamp { none, non_negative };

namespace detail {

template <class T>
struct AxisSample {
    std::size_t i0 = 0, i1 = 0;
    T w = 0;          // weight of i1
    bool clamped = false;
};

template <class T>
AxisSample<T> axis_sample(T pos, std::size_t n)
{
    AxisSample<T> s;
    if (n == 1) {
        s.clamped = true;
        return s;
    }
    const T hi = static_cast<T>(n - 1);
    if (pos < T(0) || pos > hi) s.clamped = true;
    pos = std::clamp(pos, T(0), hi);
    const auto base = std::min(static_cast<std::size_t>(std::floor(pos)), n - 2);
    s.i0 = base;
    s.i1 = base + 1;
    s.w = pos - static_cast<T>(base);
    return s;
}

} // namespace detail

/// g(image + dz, flow): bilinear backward warp; dz is ignored when null.
template <class T>
Grid<T> warp_impl(const Grid<T>& image, const Grid<T>& dx, const Grid<T>& dy, const Grid<T>* dz)
{
    require_same_shape(image, dx, "warp flow");
    require_same_shape(image, dy, "warp flow");
    if (dz) require_same_shape(image, *dz, "warp dz");
    const std::size_t rows = image.rows(), cols = image.cols();
    Grid<T> out(rows, cols);
    auto src = [&](std::size_t r, std::size_t c) { return dz ? image(r, c) + (*dz)(r, c) : image(r, c); };
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const auto sx = detail::axis_sample<T>(static_cast<T>(c) - dx(r, c), cols);
            const auto sy = detail::axis_sample<T>(static_cast<T>(r) - dy(r, c), rows);
            const T top = (T(1) - sx.w) * src(sy.i0, sx.i0) + sx.w * src(sy.i0, sx.i1);
            const T bot = (T(1) - sx.w) * src(sy.i1, sx.i0) + sx.w * src(sy.i1, sx.i1);
            out(r, c) = (T(1) - sy.w) * top + sy.w * bot;
        }
    }
    return out;
}

template <class T>
Grid<T> backward_warp_2d(const Grid<T>& image, const FlowField3<T>& flow)
{
    return warp_impl(image, flow.dx, flow.dy, static_cast<const Grid<T>*>(nullptr));
}

template <class T>
Grid<T> backward_warp_3d(const Grid<T>& image, const FlowField3<T>& flow, WarpClamp clamp = WarpClamp::non_negative)
{
    auto out = warp_impl(image, flow.dx, flow.dy, &flow.dz);
    if (clamp == WarpClamp::non_negative)
        for (auto& v : out.values()) v = std::max(v, T(0));
    return out;
}

/// Gradient accumulators for the unclamped 3D warp.
template <class T>
struct WarpGrad {
    Grid<T> image;
    FlowField3<T> flow;

    static WarpGrad zeros(std::size_t rows, std::size_t cols)
    {
        return {Grid<T>(rows, cols), FlowField3<T>::zeros(rows, cols)};
    }
};

/// Adds the vector-Jacobian product of the unclamped backward_warp_3d to
/// `grad`. The image and dz gradients are identical scatters of the
/// bilinear weights. Pass `with_dz = false` for the 2D warp.
template <class T>
void backward_warp_3d_vjp(const Grid<T>& image, const FlowField3<T>& flow, const Grid<T>& grad_out,
    WarpGrad<T>& grad, bool with_dz = true)
{
    require_same_shape(image, flow.dx, "warp flow");
    require_same_shape(image, grad_out, "warp grad");
    const std::size_t rows = image.rows(), cols = image.cols();
    auto src = [&](std::size_t r, std::size_t c) { return with_dz ? image(r, c) + flow.dz(r, c) : image(r, c); };
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const T g = grad_out(r, c);
            if (g == T(0)) continue;
            const auto sx = detail::axis_sample<T>(static_cast<T>(c) - flow.dx(r, c), cols);
            const auto sy = detail::axis_sample<T>(static_cast<T>(r) - flow.dy(r, c), rows);
            const T w00 = (T(1) - sy.w) * (T(1) - sx.w), w01 = (T(1) - sy.w) * sx.w;
            const T w10 = sy.w * (T(1) - sx.w), w11 = sy.w * sx.w;
            auto scatter = [&](std::size_t rr, std::size_t cc, T w) {
                grad.image(rr, cc) += g * w;
                if (with_dz) grad.flow.dz(rr, cc) += g * w;
            };
            scatter(sy.i0, sx.i0, w00);
            scatter(sy.i0, sx.i1, w01);
            scatter(sy.i1, sx.i0, w10);
            scatter(sy.i1, sx.i1, w11);

            const T v00 = src(sy.i0, sx.i0), v01 = src(sy.i0, sx.i1);
            const T v10 = src(sy.i1, sx.i0), v11 = src(sy.i1, sx.i1);
            // d out / d x' and d out / d y'; x' = c - dx so d x'/d dx = -1.
            if (!sx.clamped) grad.flow.dx(r, c) -= g * ((T(1) - sy.w) * (v01 - v00) + sy.w * (v11 - v10));
            if (!sy.clamped) grad.flow.dy(r, c) -= g * ((T(1) - sx.w) * (v10 - v00) + sx.w * (v11 - v01));
        }
    }
}

/// Linear fusion of bidirectional flows into the flows from time t back to
/// each reference frame, applied to all three channels.
template <class T>
std::pair<FlowField3<T>, FlowField3<T>> approx_intermediate_flows(
    const FlowField3<T>& f01, const FlowField3<T>& f10, double t)
{
    if (!(t > 0.0 && t < 1.0)) fail(ErrorCode::TOutOfRange, "t must lie strictly between 0 and 1");
    f01.check_shape();
    f10.check_shape();
    require_same_shape(f01.dx, f10.dx, "bidirectional flows");
    const T a0 = static_cast<T>(-(1.0 - t) * t), b0 = static_cast<T>(t * t);
    const T a1 = static_cast<T>((1.0 - t) * (1.0 - t)), b1 = static_cast<T>(-t * (1.0 - t));
    auto ft0 = FlowField3<T>::zeros(f01.rows(), f01.cols());
    auto ft1 = FlowField3<T>::zeros(f01.rows(), f01.cols());
    ft0.meta = ft1.meta = f01.meta;
    for (int k = 0; k < 3; ++k) {
        const auto& p = f01.channel(k);
        const auto& q = f10.channel(k);
        auto& o0 = ft0.channel(k);
        auto& o1 = ft1.channel(k);
        for (std::size_t i = 0; i < p.size(); ++i) {
            o0[i] = a0 * p[i] + b0 * q[i];
            o1[i] = a1 * p[i] + b1 * q[i];
        }
    }
    return {std::move(ft0), std::move(ft1)};
}

/// Adjoint of approx_intermediate_flows: accumulates into g01/g10.
template <class T>
void approx_intermediate_flows_vjp(const FlowField3<T>& g_t0, const FlowField3<T>& g_t1, double t,
    FlowField3<T>& g01, FlowField3<T>& g10)
{
    const T a0 = static_cast<T>(-(1.0 - t) * t), b0 = static_cast<T>(t * t);
    const T a1 = static_cast<T>((1.0 - t) * (1.0 - t)), b1 = static_cast<T>(-t * (1.0 - t));
    for (int k = 0; k < 3; ++k) {
        const auto& u = g_t0.channel(k);
        const auto& w = g_t1.channel(k);
        auto& p = g01.channel(k);
        auto& q = g10.channel(k);
        for (std::size_t i = 0; i < u.size(); ++i) {
            p[i] += a0 * u[i] + a1 * w[i];
            q[i] += b0 * u[i] + b1 * w[i];
        }
    }
}

inline constexpr double kFusionEpsilon = 1e-12;

template <class T>
struct Fused {
    Grid<T> frame;
    FusionWeights<T> alpha;
};

/// Visibility- and time-weighted convex combination of the two warped
/// frames; the visibility of frame 1 is 1 - v0.
template <class T>
Fused<T> fuse_frames(const Grid<T>& w0, const Grid<T>& w1, const VisibilityMap<T>& v0, double t)
{
    require_same_shape(w0, w1, "fuse warped frames");
    require_same_shape(w0, v0.v, "fuse visibility");
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::TOutOfRange, "t must lie in [0, 1]");
    Fused<T> out{Grid<T>(w0.rows(), w0.cols()), {Grid<T>(w0.rows(), w0.cols())}};
    for (std::size_t i = 0; i < w0.size(); ++i) {
        const double v = v0.v[i];
        const double num = (1.0 - t) * v;
        const double den = std::max(num + t * (1.0 - v), kFusionEpsilon);
        const T a = static_cast<T>(num / den);
        out.alpha.alpha[i] = a;
        out.frame[i] = a * w0[i] + (T(1) - a) * w1[i];
    }
    return out;
}

template <class T>
struct FuseGrad {
    Grid<T> w0, w1, v0;
};

template <class T>
FuseGrad<T> fuse_frames_vjp(
    const Grid<T>& w0, const Grid<T>& w1, const VisibilityMap<T>& v0, double t, const Grid<T>& grad_out)
{
    FuseGrad<T> g{Grid<T>(w0.rows(), w0.cols()), Grid<T>(w0.rows(), w0.cols()), Grid<T>(w0.rows(), w0.cols())};
    for (std::size_t i = 0; i < w0.size(); ++i) {
        const double v = v0.v[i];
        const double num = (1.0 - t) * v;
        const double raw = num + t * (1.0 - v);
        const double den = std::max(raw, kFusionEpsilon);
        const double a = num / den;
        const double go = grad_out[i];
        g.w0[i] = static_cast<T>(go * a);
        g.w1[i] = static_cast<T>(go * (1.0 - a));
        const double dadv = raw > kFusionEpsilon ? (1.0 - t) * t / (den * den) : 0.0;
        g.v0[i] = static_cast<T>(go * (static_cast<double>(w0[i]) - static_cast<double>(w1[i])) * dadv);
    }
    return g;
}

} // namespace precip_slomo
