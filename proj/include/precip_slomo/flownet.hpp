#pragma once
// Two-stage interpolation network.
//
// Stage one predicts bidirectional 3D flows (dx, dy in cells, dz in log1p
// units) between two normalized frames. The flows are fused into
// approximate flows from time t to each reference frame, the references are
// warped with them, and stage two refines those flows and predicts a soft
// visibility map from the frames, the warps, the approximate flows and the
// terrain channels. The refined warps are fused with the visibility map.
//
// Everything between the two U-Nets runs in double precision; the
// networks themselves run in single precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "precip_slomo/error.hpp"
#include "precip_slomo/grid.hpp"
#include "precip_slomo/nn.hpp"
#include "precip_slomo/unet.hpp"
#include "precip_slomo/warping.hpp"

namespace precip_slomo {

inline constexpr const char* kModelVersion = "precip-slomo-model-v1";

inline constexpr int kFlowNetInputs = 2;
inline constexpr int kFlowNetOutputs = 6;
inline constexpr int kRefineInputsTopo = 13;
inline constexpr int kRefineInputsNoTopo = 10;
inline constexpr int kRefineOutputs = 7;

struct NormStats {
    /// Dot-product channels are divided by this before entering the network.
    double dot_scale = 1.0;

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline UNetSpec default_flow_spec()
{
    UNetSpec s;
    s.in_channels = kFlowNetInputs;
    s.out_channels = kFlowNetOutputs;
    return s;
}

inline UNetSpec default_refine_spec(bool with_topo = true)
{
    UNetSpec s;
    s.in_channels = with_topo ? kRefineInputsTopo : kRefineInputsNoTopo;
    s.out_channels = kRefineOutputs;
    return s;
}

/// Both networks plus the constants needed to feed them.
struct ModelParams {
    UNet flow_net;
    UNet refine_net;
    NormStats norm_stats;
    std::string version = kModelVersion;

    static ModelParams create(UNetSpec flow_spec, UNetSpec refine_spec, std::uint64_t seed)
    {
        expect(flow_spec.in_channels == kFlowNetInputs && flow_spec.out_channels == kFlowNetOutputs,
            ErrorCode::InvalidArgument, "flow network must map 2 channels to 6");
        expect((refine_spec.in_channels == kRefineInputsTopo || refine_spec.in_channels == kRefineInputsNoTopo)
                && refine_spec.out_channels == kRefineOutputs,
            ErrorCode::InvalidArgument, "refinement network must map 13 (or 10 without terrain) channels to 7");
        ModelParams p;
        p.flow_net = UNet(std::move(flow_spec));
        p.refine_net = UNet(std::move(refine_spec));
        std::mt19937_64 rng(seed);
        p.flow_net.initialize(rng);
        p.refine_net.initialize(rng);
        return p;
    }

    bool initialized() const noexcept { return !flow_net.empty() && !refine_net.empty(); }
    bool uses_topo() const noexcept { return refine_net.spec().in_channels == kRefineInputsTopo; }

    std::vector<nn::Param*> parameters()
    {
        auto out = flow_net.parameters();
        for (auto* p : refine_net.parameters()) out.push_back(p);
        return out;
    }

    std::vector<const nn::Param*> parameters() const
    {
        auto out = flow_net.parameters();
        for (const auto* p : refine_net.parameters()) out.push_back(p);
        return out;
    }

    void zero_grad()
    {
        for (auto* p : parameters()) p->zero_grad();
    }
};

struct TopoChannels {
    Grid<double> dem_norm;  // elevation rescaled to [0, 1]
    Grid<double> dot_fwd;   // F01 . grad h
    Grid<double> dot_bwd;   // F10 . grad h
};

namespace detail {

inline nn::Tensor to_tensor(std::initializer_list<const Grid<double>*> channels)
{
    const auto& first = **channels.begin();
    nn::Tensor t(static_cast<int>(channels.size()), static_cast<int>(first.rows()), static_cast<int>(first.cols()));
    int k = 0;
    for (const auto* g : channels) {
        require_same_shape(first, *g, "network input");
        float* dst = t.channel(k++);
        for (std::size_t i = 0; i < g->size(); ++i) dst[i] = static_cast<float>((*g)[i]);
    }
    return t;
}

inline Grid<double> from_tensor(const nn::Tensor& t, int k)
{
    Grid<double> g(static_cast<std::size_t>(t.height), static_cast<std::size_t>(t.width));
    const float* src = t.channel(k);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = src[i];
    return g;
}

inline void write_channel(nn::Tensor& t, int k, const Grid<double>& g)
{
    float* dst = t.channel(k);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] = static_cast<float>(g[i]);
}

inline FlowField3<double> flow_from_tensor(const nn::Tensor& t, int first, const GridMeta& meta)
{
    FlowField3<double> f{meta, from_tensor(t, first), from_tensor(t, first + 1), from_tensor(t, first + 2)};
    return f;
}

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace detail

/// Stage one: bidirectional flows (F01, F10) between normalized frames.
inline std::pair<FlowField3<double>, FlowField3<double>> compute_bidirectional_flow(
    const ModelParams& params, const Grid<double>& i0, const Grid<double>& i1, UNetWorkspace* ws = nullptr)
{
    if (!params.initialized()) fail(ErrorCode::UninitializedParams, "model parameters are not initialized");
    require_same_shape(i0, i1, "bidirectional flow inputs");
    GridMeta meta;
    meta.rows = i0.rows();
    meta.cols = i0.cols();
    UNetWorkspace local;
    const auto out = params.flow_net.forward(detail::to_tensor({&i0, &i1}), ws ? *ws : local);
    return {detail::flow_from_tensor(out, 0, meta), detail::flow_from_tensor(out, 3, meta)};
}

/// Terrain inputs of stage two. The DEM must be on the flow grid and carry
/// gradients.
inline TopoChannels build_topo_channels(const Dem& dem, const FlowField3<double>& f01, const FlowField3<double>& f10)
{
    if (!dem.has_gradient()) fail(ErrorCode::MisalignedDem, "DEM gradients are not populated");
    if (dem.elevation.rows() != f01.rows() || dem.elevation.cols() != f01.cols())
        fail(ErrorCode::MisalignedDem, "DEM is not on the flow grid");
    require_same_shape(f01.dx, f10.dx, "bidirectional flows");
    const auto& h = dem.elevation;
    const auto [lo, hi] = std::minmax_element(h.values().begin(), h.values().end());
    const double range = *hi - *lo;
    TopoChannels topo{Grid<double>(h.rows(), h.cols()), Grid<double>(h.rows(), h.cols()),
        Grid<double>(h.rows(), h.cols())};
    for (std::size_t i = 0; i < h.size(); ++i) {
        topo.dem_norm[i] = range > 0.0 ? (h[i] - *lo) / range : 0.0;
        const double gx = (*dem.grad_x)[i], gy = (*dem.grad_y)[i];
        topo.dot_fwd[i] = f01.dx[i] * gx + f01.dy[i] * gy;
        topo.dot_bwd[i] = f10.dx[i] * gx + f10.dy[i] * gy;
    }
    return topo;
}

struct Refined {
    FlowField3<double> ft0, ft1;
    VisibilityMap<double> v0;
    Grid<double> logit;
};

/// Stage two: refined flows from time t and the visibility of frame 0
/// (the visibility of frame 1 is 1 - v0). `topo` is ignored by a
/// refinement network built without terrain inputs.
inline Refined refine(const ModelParams& params, const Grid<double>& i0, const Grid<double>& i1,
    const Grid<double>& warped0, const Grid<double>& warped1, const FlowField3<double>& approx_t0,
    const FlowField3<double>& approx_t1, const TopoChannels* topo, double t, UNetWorkspace* ws = nullptr)
{
    if (!params.initialized()) fail(ErrorCode::UninitializedParams, "model parameters are not initialized");
    if (!(t > 0.0 && t < 1.0)) fail(ErrorCode::TOutOfRange, "t must lie strictly between 0 and 1");
    for (const auto* g : {&i1, &warped0, &warped1, &approx_t0.dx, &approx_t1.dx})
        require_same_shape(i0, *g, "refinement inputs");
    const bool with_topo = params.uses_topo();
    if (with_topo) {
        expect(topo != nullptr, ErrorCode::InvalidArgument, "refinement network expects terrain channels");
        require_same_shape(i0, topo->dem_norm, "terrain channels");
    }
    const double s = params.norm_stats.dot_scale;
    Grid<double> dot_f, dot_b;
    if (with_topo) {
        dot_f = topo->dot_fwd;
        dot_b = topo->dot_bwd;
        for (auto& v : dot_f.values()) v /= s;
        for (auto& v : dot_b.values()) v /= s;
    }
    const nn::Tensor x = with_topo
        ? detail::to_tensor({&i0, &i1, &warped0, &warped1, &approx_t0.dx, &approx_t0.dy, &approx_t0.dz,
            &approx_t1.dx, &approx_t1.dy, &approx_t1.dz, &topo->dem_norm, &dot_f, &dot_b})
        : detail::to_tensor({&i0, &i1, &warped0, &warped1, &approx_t0.dx, &approx_t0.dy, &approx_t0.dz,
            &approx_t1.dx, &approx_t1.dy, &approx_t1.dz});
    UNetWorkspace local;
    const auto out = params.refine_net.forward(x, ws ? *ws : local);

    Refined r;
    r.ft0 = approx_t0;
    r.ft1 = approx_t1;
    for (int k = 0; k < 3; ++k) {
        const float* d0 = out.channel(k);
        const float* d1 = out.channel(3 + k);
        auto& c0 = r.ft0.channel(k);
        auto& c1 = r.ft1.channel(k);
        for (std::size_t i = 0; i < c0.size(); ++i) {
            c0[i] += d0[i];
            c1[i] += d1[i];
        }
    }
    r.logit = detail::from_tensor(out, 6);
    r.v0.meta = approx_t0.meta;
    r.v0.v = Grid<double>(i0.rows(), i0.cols());
    for (std::size_t i = 0; i < r.logit.size(); ++i) r.v0.v[i] = detail::sigmoid(r.logit[i]);
    return r;
}

/// Every intermediate of one pass through the pipeline in normalized
/// space, kept so the pass can be differentiated.
struct PipelineTrace {
    double t = 0.5;
    Grid<double> n0, n1;
    FlowField3<double> f01, f10;
    FlowField3<double> approx_t0, approx_t1;
    Grid<double> approx_w0, approx_w1;
    TopoChannels topo;
    Refined refined;
    Grid<double> w0, w1;
    Fused<double> fused;
    UNetWorkspace flow_ws, refine_ws;
};

/// Runs both stages on normalized inputs. `dem` may be null only when the
/// refinement network has no terrain inputs.
inline PipelineTrace run_pipeline(
    const ModelParams& params, const Grid<double>& n0, const Grid<double>& n1, const Dem* dem, double t)
{
    if (!(t > 0.0 && t < 1.0)) fail(ErrorCode::TOutOfRange, "t must lie strictly between 0 and 1");
    PipelineTrace tr;
    tr.t = t;
    tr.n0 = n0;
    tr.n1 = n1;
    std::tie(tr.f01, tr.f10) = compute_bidirectional_flow(params, n0, n1, &tr.flow_ws);
    std::tie(tr.approx_t0, tr.approx_t1) = approx_intermediate_flows(tr.f01, tr.f10, t);
    tr.approx_w0 = backward_warp_3d(n0, tr.approx_t0, WarpClamp::none);
    tr.approx_w1 = backward_warp_3d(n1, tr.approx_t1, WarpClamp::none);
    if (params.uses_topo()) {
        expect(dem != nullptr, ErrorCode::MisalignedDem, "a DEM is required by this model");
        tr.topo = build_topo_channels(*dem, tr.f01, tr.f10);
    }
    tr.refined = refine(params, n0, n1, tr.approx_w0, tr.approx_w1, tr.approx_t0, tr.approx_t1,
        params.uses_topo() ? &tr.topo : nullptr, t, &tr.refine_ws);
    tr.w0 = backward_warp_3d(n0, tr.refined.ft0, WarpClamp::none);
    tr.w1 = backward_warp_3d(n1, tr.refined.ft1, WarpClamp::none);
    tr.fused = fuse_frames(tr.w0, tr.w1, tr.refined.v0, t);
    return tr;
}

/// Loss gradients flowing into a pipeline pass.
struct PipelineGrad {
    Grid<double> fused;                  // d loss / d fused frame
    FlowField3<double> f01, f10;         // direct terms on stage-one flows
    FlowField3<double> approx_t0, approx_t1;

    static PipelineGrad zeros(std::size_t rows, std::size_t cols)
    {
        const auto z = FlowField3<double>::zeros(rows, cols);
        return {Grid<double>(rows, cols), z, z, z, z};
    }
};

/// Back-propagates `grad` through a recorded pass and accumulates the
/// parameter gradients of both networks.
inline void backward_pipeline(ModelParams& params, const PipelineTrace& tr, const Dem* dem, PipelineGrad grad)
{
    const std::size_t rows = tr.n0.rows(), cols = tr.n0.cols();
    const int h = static_cast<int>(rows), w = static_cast<int>(cols);

    // Fusion and the refined warps.
    const auto gf = fuse_frames_vjp(tr.w0, tr.w1, tr.refined.v0, tr.t, grad.fused);
    auto wg0 = WarpGrad<double>::zeros(rows, cols);
    auto wg1 = WarpGrad<double>::zeros(rows, cols);
    backward_warp_3d_vjp(tr.n0, tr.refined.ft0, gf.w0, wg0);
    backward_warp_3d_vjp(tr.n1, tr.refined.ft1, gf.w1, wg1);

    // Refined flow = approximation + residual; visibility = sigmoid(logit).
    nn::Tensor g_refine_out(kRefineOutputs, h, w);
    for (int k = 0; k < 3; ++k) {
        detail::write_channel(g_refine_out, k, wg0.flow.channel(k));
        detail::write_channel(g_refine_out, 3 + k, wg1.flow.channel(k));
        auto& a0 = grad.approx_t0.channel(k);
        auto& a1 = grad.approx_t1.channel(k);
        for (std::size_t i = 0; i < a0.size(); ++i) {
            a0[i] += wg0.flow.channel(k)[i];
            a1[i] += wg1.flow.channel(k)[i];
        }
    }
    {
        float* dst = g_refine_out.channel(6);
        for (std::size_t i = 0; i < rows * cols; ++i) {
            const double v = tr.refined.v0.v[i];
            dst[i] = static_cast<float>(gf.v0[i] * v * (1.0 - v));
        }
    }
    const nn::Tensor g_in = params.refine_net.backward(tr.refine_ws, g_refine_out, true);

    // Stage-two inputs that depend on stage one.
    const auto grid_of = [&](int k) { return detail::from_tensor(g_in, k); };
    auto awg0 = WarpGrad<double>::zeros(rows, cols);
    auto awg1 = WarpGrad<double>::zeros(rows, cols);
    backward_warp_3d_vjp(tr.n0, tr.approx_t0, grid_of(2), awg0);
    backward_warp_3d_vjp(tr.n1, tr.approx_t1, grid_of(3), awg1);
    for (int k = 0; k < 3; ++k) {
        const auto in0 = grid_of(4 + k);
        const auto in1 = grid_of(7 + k);
        auto& a0 = grad.approx_t0.channel(k);
        auto& a1 = grad.approx_t1.channel(k);
        for (std::size_t i = 0; i < a0.size(); ++i) {
            a0[i] += in0[i] + awg0.flow.channel(k)[i];
            a1[i] += in1[i] + awg1.flow.channel(k)[i];
        }
    }
    approx_intermediate_flows_vjp(grad.approx_t0, grad.approx_t1, tr.t, grad.f01, grad.f10);

    if (params.uses_topo()) {
        expect(dem != nullptr && dem->has_gradient(), ErrorCode::MisalignedDem, "a DEM is required by this model");
        const double s = params.norm_stats.dot_scale;
        const auto g_dot_f = grid_of(11);
        const auto g_dot_b = grid_of(12);
        for (std::size_t i = 0; i < rows * cols; ++i) {
            const double gx = (*dem->grad_x)[i], gy = (*dem->grad_y)[i];
            grad.f01.dx[i] += g_dot_f[i] / s * gx;
            grad.f01.dy[i] += g_dot_f[i] / s * gy;
            grad.f10.dx[i] += g_dot_b[i] / s * gx;
            grad.f10.dy[i] += g_dot_b[i] / s * gy;
        }
    }

    nn::Tensor g_flow_out(kFlowNetOutputs, h, w);
    for (int k = 0; k < 3; ++k) {
        detail::write_channel(g_flow_out, k, grad.f01.channel(k));
        detail::write_channel(g_flow_out, 3 + k, grad.f10.channel(k));
    }
    params.flow_net.backward(tr.flow_ws, g_flow_out, false);
}

/// Interpolated frame at fraction t between i0 and i1, in mm/hr.
inline PrecipFrame forward_interpolate(
    const ModelParams& params, const PrecipFrame& i0, const PrecipFrame& i1, const Dem& dem, double t)
{
    if (!(t > 0.0 && t < 1.0)) fail(ErrorCode::TOutOfRange, "t must lie strictly between 0 and 1");
    if (!aligned(i0.meta, i1.meta)) fail(ErrorCode::ShapeMismatch, "input frames are not aligned");
    if (params.uses_topo() && !aligned(dem.meta, i0.meta))
        fail(ErrorCode::MisalignedDem, "DEM is not on the frame grid");
    const Dem* d = params.uses_topo() ? &dem : nullptr;
    Dem with_grad;
    if (d && !d->has_gradient()) {
        with_grad = terrain_gradient(dem);
        d = &with_grad;
    }
    const auto tr = run_pipeline(params, normalize_precip(i0), normalize_precip(i1), d, t);

    PrecipFrame out = PrecipFrame::filled(i0.meta, i0.time);
    const auto span = std::chrono::duration<double>(i1.time - i0.time).count();
    out.time = i0.time + std::chrono::seconds(static_cast<long long>(std::llround(t * span)));
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = static_cast<float>(std::max(0.0, denormalize_precip(tr.fused.frame[i])));
        out.missing[i] = i0.missing[i] || i1.missing[i];
    }
    return out;
}

} // namespace precip_slomo
