#pragma once
// Training objective: reconstruction, warping and smoothness terms.
//
// Every term optionally accumulates its gradient, pre-multiplied by `scale`,
// into caller-owned buffers so the composite objective can be differentiated
// in one pass. L1 kinks use sign(0) = 0.

#include <cmath>
#include <cstddef>
#include <type_traits>

#include "precip_slomo/error.hpp"
#include "precip_slomo/grid.hpp"
#include "precip_slomo/warping.hpp"

namespace precip_slomo {

struct LossWeights {
    double reconstruction = 0.8;
    double perceptual = 0.0;  // no pretrained feature extractor exists for rain fields
    double warping = 0.4;
    double smoothness = 1.0;

    void validate() const
    {
        expect(reconstruction >= 0 && perceptual >= 0 && warping >= 0 && smoothness >= 0,
            ErrorCode::InvalidArgument, "loss weights must be non-negative");
        expect(perceptual == 0.0, ErrorCode::InvalidArgument, "the perceptual term is not supported");
    }

    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossParts {
    double reconstruction = 0.0;
    double perceptual = 0.0;
    double warping = 0.0;
    double smoothness = 0.0;
};

inline double total_loss(const LossParts& parts, const LossWeights& w)
{
    w.validate();
    const double used[] = {parts.reconstruction, parts.warping, parts.smoothness};
    for (double v : used) expect(std::isfinite(v), ErrorCode::NonFiniteLoss, "loss component is not finite");
    double total = w.reconstruction * parts.reconstruction + w.warping * parts.warping
        + w.smoothness * parts.smoothness;
    if (w.perceptual != 0.0) total += w.perceptual * parts.perceptual;
    return total;
}

namespace detail {

template <class T>
T sign(T v) noexcept
{
    return static_cast<T>((v > T(0)) - (v < T(0)));
}

inline std::size_t count_valid(const Mask& valid)
{
    std::size_t n = 0;
    for (auto m : valid.values()) n += m != 0;
    if (n == 0) fail(ErrorCode::EmptyMask, "no valid cells under the loss mask");
    return n;
}

} // namespace detail

/// Mean absolute difference over cells where `valid` is nonzero.
template <class T>
double reconstruction_loss(
    const Grid<T>& pred, const Grid<T>& target, const Mask& valid, std::type_identity_t<Grid<T>>* grad_pred = nullptr, double scale = 1.0)
{
    require_same_shape(pred, target, "reconstruction target");
    require_same_shape(pred, valid, "reconstruction mask");
    const auto n = static_cast<double>(detail::count_valid(valid));
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!valid[i]) continue;
        const T r = pred[i] - target[i];
        sum += std::abs(static_cast<double>(r));
        if (grad_pred) (*grad_pred)[i] += static_cast<T>(scale / n) * detail::sign(r);
    }
    return sum / n;
}

template <class T>
struct WarpingLossGrad {
    FlowField3<T> f01, f10, ft0, ft1;

    static WarpingLossGrad zeros(std::size_t rows, std::size_t cols)
    {
        const auto z = FlowField3<T>::zeros(rows, cols);
        return {z, z, z, z};
    }
};

namespace detail {

// Masked mean of |target - g(source, flow)|; invalid source cells read as 0.
template <class T>
double warp_term(const Grid<T>& source, const Grid<T>& target, const FlowField3<T>& flow, const Mask& valid,
    double n, FlowField3<T>* grad_flow, double scale)
{
    Grid<T> src = source;
    for (std::size_t i = 0; i < src.size(); ++i)
        if (!valid[i]) src[i] = T(0);
    const auto warped = backward_warp_3d(src, flow, WarpClamp::none);
    double sum = 0.0;
    Grid<T> g(src.rows(), src.cols());
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (!valid[i]) continue;
        const T r = warped[i] - target[i];
        sum += std::abs(static_cast<double>(r));
        g[i] = static_cast<T>(scale / n) * sign(r);
    }
    if (grad_flow) {
        WarpGrad<T> wg{Grid<T>(src.rows(), src.cols()), std::move(*grad_flow)};
        backward_warp_3d_vjp(src, flow, g, wg);
        *grad_flow = std::move(wg.flow);
    }
    return sum / n;
}

} // namespace detail

/// Sum of four masked L1 terms checking each flow against the frame it
/// should reconstruct. With `intermediate_terms = false` only the two
/// endpoint terms are used.
template <class T>
double warping_loss(const Grid<T>& i0, const Grid<T>& i1, const Grid<T>& it, const FlowField3<T>& f01,
    const FlowField3<T>& f10, const FlowField3<T>& ft0, const FlowField3<T>& ft1, const Mask& valid,
    std::type_identity_t<WarpingLossGrad<T>>* grad = nullptr, double scale = 1.0, bool intermediate_terms = true)
{
    require_same_shape(i0, i1, "warping loss frames");
    require_same_shape(i0, it, "warping loss frames");
    require_same_shape(i0, valid, "warping loss mask");
    const auto n = static_cast<double>(detail::count_valid(valid));
    double loss = detail::warp_term(i1, i0, f01, valid, n, grad ? &grad->f01 : nullptr, scale)
        + detail::warp_term(i0, i1, f10, valid, n, grad ? &grad->f10 : nullptr, scale);
    if (intermediate_terms) {
        loss += detail::warp_term(i0, it, ft0, valid, n, grad ? &grad->ft0 : nullptr, scale)
            + detail::warp_term(i1, it, ft1, valid, n, grad ? &grad->ft1 : nullptr, scale);
    }
    return loss;
}

namespace detail {

template <class T>
double smooth_one(const FlowField3<T>& f, FlowField3<T>* grad, double scale)
{
    double total = 0.0;
    const std::size_t rows = f.rows(), cols = f.cols();
    for (int k = 0; k < 3; ++k) {
        const auto& ch = f.channel(k);
        if (cols > 1) {
            const double n = static_cast<double>(rows * (cols - 1));
            double sum = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c + 1 < cols; ++c) {
                    const T d = ch(r, c + 1) - ch(r, c);
                    sum += std::abs(static_cast<double>(d));
                    if (grad) {
                        const T g = static_cast<T>(scale / n) * sign(d);
                        grad->channel(k)(r, c + 1) += g;
                        grad->channel(k)(r, c) -= g;
                    }
                }
            }
            total += sum / n;
        }
        if (rows > 1) {
            const double n = static_cast<double>((rows - 1) * cols);
            double sum = 0.0;
            for (std::size_t r = 0; r + 1 < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    const T d = ch(r + 1, c) - ch(r, c);
                    sum += std::abs(static_cast<double>(d));
                    if (grad) {
                        const T g = static_cast<T>(scale / n) * sign(d);
                        grad->channel(k)(r + 1, c) += g;
                        grad->channel(k)(r, c) -= g;
                    }
                }
            }
            total += sum / n;
        }
    }
    return total;
}

} // namespace detail

/// First-difference L1 penalty on both bidirectional flows: for every
/// channel, the mean |x-difference| plus the mean |y-difference|.
template <class T>
double smoothness_loss(const FlowField3<T>& f01, const FlowField3<T>& f10, std::type_identity_t<FlowField3<T>>* grad01 = nullptr,
    std::type_identity_t<FlowField3<T>>* grad10 = nullptr, double scale = 1.0)
{
    f01.check_shape();
    f10.check_shape();
    require_same_shape(f01.dx, f10.dx, "smoothness flows");
    return detail::smooth_one(f01, grad01, scale) + detail::smooth_one(f10, grad10, scale);
}

} // namespace precip_slomo
