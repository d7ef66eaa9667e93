#pragma once
// Minimal CPU neural-network layers with explicit backward passes.
//
// Tensors are single images laid out channel-major (C x H x W). Forward
// passes are const and write whatever backward needs into caller-owned
// buffers. Convolutions are stride-1 "same" convolutions implemented as
// im2col followed by a GEMM.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "precip_slomo/error.hpp"

namespace precip_slomo::nn {

struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int c, int h, int w, float fill = 0.0f)
        : channels(c)
        , height(h)
        , width(w)
        , data(static_cast<std::size_t>(c) * h * w, fill)
    {
    }

    std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
    float* channel(int k) noexcept { return data.data() + k * plane(); }
    const float* channel(int k) const noexcept { return data.data() + k * plane(); }
    float& at(int k, int y, int x) noexcept { return data[k * plane() + static_cast<std::size_t>(y) * width + x]; }
    float at(int k, int y, int x) const noexcept
    {
        return data[k * plane() + static_cast<std::size_t>(y) * width + x];
    }
};

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

/// Uniform draws in [lo, hi) built directly from the 64-bit engine output
/// so the stream does not depend on the standard library's distributions.
inline double uniform(std::mt19937_64& rng, double lo, double hi)
{
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

/// A learnable buffer and its gradient accumulator.
struct Param {
    std::vector<float> value;
    std::vector<float> grad;

    explicit Param(std::size_t n = 0)
        : value(n, 0.0f)
        , grad(n, 0.0f)
    {
    }
    std::size_t size() const noexcept { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int kernel)
        : in_(in_channels)
        , out_(out_channels)
        , k_(kernel)
        , weight_(static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel)
        , bias_(static_cast<std::size_t>(out_channels))
    {
        expect(kernel % 2 == 1, ErrorCode::InvalidArgument, "convolution kernels must be odd");
    }

    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }
    int kernel() const noexcept { return k_; }
    Param& weight() noexcept { return weight_; }
    Param& bias() noexcept { return bias_; }
    const Param& weight() const noexcept { return weight_; }
    const Param& bias() const noexcept { return bias_; }

    /// Fan-in scaled uniform initialization for a leaky rectifier.
    void init_kaiming(std::mt19937_64& rng, double slope)
    {
        const double fan_in = static_cast<double>(in_) * k_ * k_;
        const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * fan_in));
        for (auto& w : weight_.value) w = static_cast<float>(uniform(rng, -bound, bound));
        std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
    }

    void init_zero()
    {
        std::fill(weight_.value.begin(), weight_.value.end(), 0.0f);
        std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
    }

    /// `col` receives the im2col buffer that backward needs.
    Tensor forward(const Tensor& x, std::vector<float>& col) const
    {
        expect(x.channels == in_, ErrorCode::ShapeMismatch, "convolution input channel mismatch");
        im2col(x, col);
        Tensor y(out_, x.height, x.width);
        const auto hw = static_cast<Eigen::Index>(x.plane());
        const auto kdim = static_cast<Eigen::Index>(in_) * k_ * k_;
        ConstMatMap w(weight_.value.data(), out_, kdim);
        ConstMatMap cm(col.data(), kdim, hw);
        MatMap out(y.data.data(), out_, hw);
        out.noalias() = w * cm;
        for (int o = 0; o < out_; ++o) out.row(o).array() += bias_.value[o];
        return y;
    }

    /// Accumulates parameter gradients; returns the input gradient unless
    /// `need_input_grad` is false.
    Tensor backward(const Tensor& gy, const std::vector<float>& col, bool need_input_grad = true)
    {
        const auto hw = static_cast<Eigen::Index>(gy.plane());
        const auto kdim = static_cast<Eigen::Index>(in_) * k_ * k_;
        ConstMatMap g(gy.data.data(), out_, hw);
        ConstMatMap cm(col.data(), kdim, hw);
        MatMap gw(weight_.grad.data(), out_, kdim);
        gw.noalias() += g * cm.transpose();
        // Plain loop: Eigen's vectorized sum depends on the row's alignment,
        // which would make results vary with heap addresses.
        for (int o = 0; o < out_; ++o) {
            float s = 0.0f;
            for (Eigen::Index i = 0; i < hw; ++i) s += g(o, i);
            bias_.grad[o] += s;
        }
        if (!need_input_grad) return {};
        ConstMatMap w(weight_.value.data(), out_, kdim);
        std::vector<float> gcol(static_cast<std::size_t>(kdim) * hw);
        MatMap gc(gcol.data(), kdim, hw);
        gc.noalias() = w.transpose() * g;
        return col2im(gcol, gy.height, gy.width);
    }

private:
    void im2col(const Tensor& x, std::vector<float>& col) const
    {
        const int pad = k_ / 2;
        const int h_ = x.height, w_ = x.width;
        const std::size_t hw = x.plane();
        col.assign(static_cast<std::size_t>(in_) * k_ * k_ * hw, 0.0f);
        for (int ci = 0; ci < in_; ++ci) {
            const float* src = x.channel(ci);
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    float* dst = col.data() + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * hw;
                    const int ox = kx - pad;
                    const int x_lo = std::max(0, -ox), x_hi = std::min(w_, w_ - ox);
                    for (int y = 0; y < h_; ++y) {
                        const int sy = y + ky - pad;
                        if (sy < 0 || sy >= h_ || x_lo >= x_hi) continue;
                        std::copy(src + static_cast<std::size_t>(sy) * w_ + x_lo + ox,
                            src + static_cast<std::size_t>(sy) * w_ + x_hi + ox,
                            dst + static_cast<std::size_t>(y) * w_ + x_lo);
                    }
                }
            }
        }
    }

    Tensor col2im(const std::vector<float>& gcol, int h_, int w_) const
    {
        const int pad = k_ / 2;
        Tensor gx(in_, h_, w_);
        const std::size_t hw = gx.plane();
        for (int ci = 0; ci < in_; ++ci) {
            float* dst = gx.channel(ci);
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const float* src = gcol.data() + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * hw;
                    const int ox = kx - pad;
                    const int x_lo = std::max(0, -ox), x_hi = std::min(w_, w_ - ox);
                    for (int y = 0; y < h_; ++y) {
                        const int sy = y + ky - pad;
                        if (sy < 0 || sy >= h_) continue;
                        float* drow = dst + static_cast<std::size_t>(sy) * w_ + ox;
                        const float* srow = src + static_cast<std::size_t>(y) * w_;
                        for (int x = x_lo; x < x_hi; ++x) drow[x] += srow[x];
                    }
                }
            }
        }
        return gx;
    }

    int in_ = 0, out_ = 0, k_ = 1;
    Param weight_, bias_;
};

/// In-place leaky rectifier; `positive` records the sign pattern.
inline void leaky_relu(Tensor& x, float slope, std::vector<std::uint8_t>& positive)
{
    positive.resize(x.data.size());
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        positive[i] = x.data[i] > 0.0f;
        if (!positive[i]) x.data[i] *= slope;
    }
}

inline void leaky_relu_backward(Tensor& g, float slope, const std::vector<std::uint8_t>& positive)
{
    for (std::size_t i = 0; i < g.data.size(); ++i)
        if (!positive[i]) g.data[i] *= slope;
}

inline Tensor avg_pool2(const Tensor& x)
{
    expect(x.height % 2 == 0 && x.width % 2 == 0, ErrorCode::ShapeMismatch, "pooling needs even dimensions");
    Tensor y(x.channels, x.height / 2, x.width / 2);
    for (int k = 0; k < x.channels; ++k)
        for (int r = 0; r < y.height; ++r)
            for (int c = 0; c < y.width; ++c)
                y.at(k, r, c) = 0.25f
                    * (x.at(k, 2 * r, 2 * c) + x.at(k, 2 * r, 2 * c + 1) + x.at(k, 2 * r + 1, 2 * c)
                        + x.at(k, 2 * r + 1, 2 * c + 1));
    return y;
}

inline Tensor avg_pool2_backward(const Tensor& gy)
{
    Tensor gx(gy.channels, gy.height * 2, gy.width * 2);
    for (int k = 0; k < gy.channels; ++k)
        for (int r = 0; r < gx.height; ++r)
            for (int c = 0; c < gx.width; ++c) gx.at(k, r, c) = 0.25f * gy.at(k, r / 2, c / 2);
    return gx;
}

namespace detail {

struct UpTap {
    int i0, i1;
    float w1;
};

// Half-pixel-centred source coordinate for output index i of a 2x upsample.
inline UpTap up_tap(int i, int n)
{
    const float src = std::max(0.0f, (static_cast<float>(i) + 0.5f) * 0.5f - 0.5f);
    const int i0 = std::min(static_cast<int>(src), n - 1);
    const int i1 = std::min(i0 + 1, n - 1);
    return {i0, i1, src - static_cast<float>(i0)};
}

} // namespace detail

inline Tensor upsample2(const Tensor& x)
{
    Tensor y(x.channels, x.height * 2, x.width * 2);
    for (int r = 0; r < y.height; ++r) {
        const auto ty = detail::up_tap(r, x.height);
        for (int c = 0; c < y.width; ++c) {
            const auto tx = detail::up_tap(c, x.width);
            for (int k = 0; k < x.channels; ++k) {
                const float top = (1 - tx.w1) * x.at(k, ty.i0, tx.i0) + tx.w1 * x.at(k, ty.i0, tx.i1);
                const float bot = (1 - tx.w1) * x.at(k, ty.i1, tx.i0) + tx.w1 * x.at(k, ty.i1, tx.i1);
                y.at(k, r, c) = (1 - ty.w1) * top + ty.w1 * bot;
            }
        }
    }
    return y;
}

inline Tensor upsample2_backward(const Tensor& gy)
{
    Tensor gx(gy.channels, gy.height / 2, gy.width / 2);
    for (int r = 0; r < gy.height; ++r) {
        const auto ty = detail::up_tap(r, gx.height);
        for (int c = 0; c < gy.width; ++c) {
            const auto tx = detail::up_tap(c, gx.width);
            for (int k = 0; k < gy.channels; ++k) {
                const float g = gy.at(k, r, c);
                gx.at(k, ty.i0, tx.i0) += (1 - ty.w1) * (1 - tx.w1) * g;
                gx.at(k, ty.i0, tx.i1) += (1 - ty.w1) * tx.w1 * g;
                gx.at(k, ty.i1, tx.i0) += ty.w1 * (1 - tx.w1) * g;
                gx.at(k, ty.i1, tx.i1) += ty.w1 * tx.w1 * g;
            }
        }
    }
    return gx;
}

inline Tensor concat(const Tensor& a, const Tensor& b)
{
    expect(a.height == b.height && a.width == b.width, ErrorCode::ShapeMismatch, "concat spatial mismatch");
    Tensor y(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return y;
}

inline std::pair<Tensor, Tensor> split(const Tensor& g, int first_channels)
{
    Tensor a(first_channels, g.height, g.width), b(g.channels - first_channels, g.height, g.width);
    std::copy(g.data.begin(), g.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), a.data.begin());
    std::copy(g.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), g.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

/// Edge-replicating pad on the bottom/right to (h, w).
inline Tensor pad_replicate(const Tensor& x, int h, int w)
{
    Tensor y(x.channels, h, w);
    for (int k = 0; k < x.channels; ++k)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) y.at(k, r, c) = x.at(k, std::min(r, x.height - 1), std::min(c, x.width - 1));
    return y;
}

inline Tensor pad_replicate_backward(const Tensor& gy, int h, int w)
{
    Tensor gx(gy.channels, h, w);
    for (int k = 0; k < gy.channels; ++k)
        for (int r = 0; r < gy.height; ++r)
            for (int c = 0; c < gy.width; ++c) gx.at(k, std::min(r, h - 1), std::min(c, w - 1)) += gy.at(k, r, c);
    return gx;
}

inline Tensor crop(const Tensor& x, int h, int w)
{
    Tensor y(x.channels, h, w);
    for (int k = 0; k < x.channels; ++k)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) y.at(k, r, c) = x.at(k, r, c);
    return y;
}

inline Tensor crop_backward(const Tensor& gy, int h, int w)
{
    Tensor gx(gy.channels, h, w);
    for (int k = 0; k < gy.channels; ++k)
        for (int r = 0; r < gy.height; ++r)
            for (int c = 0; c < gy.width; ++c) gx.at(k, r, c) = gy.at(k, r, c);
    return gx;
}

/// Adaptive moment estimation over a fixed list of parameters.
class Adam {
public:
    Adam(std::vector<Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params))
        , lr_(lr)
        , beta1_(beta1)
        , beta2_(beta2)
        , eps_(eps)
    {
        for (auto* p : params_) {
            m_.emplace_back(p->size(), 0.0f);
            v_.emplace_back(p->size(), 0.0f);
        }
    }

    void step()
    {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
        const auto step = static_cast<float>(lr_ / c1);
        const auto inv_c2 = static_cast<float>(1.0 / c2);
        const auto eps = static_cast<float>(eps_);
        for (std::size_t j = 0; j < params_.size(); ++j) {
            auto& p = *params_[j];
            auto& m = m_[j];
            auto& v = v_[j];
            for (std::size_t i = 0; i < p.size(); ++i) {
                const float g = p.grad[i];
                m[i] = b1 * m[i] + (1 - b1) * g;
                v[i] = b2 * v[i] + (1 - b2) * g * g;
                p.value[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
            }
        }
    }

    void zero_grad()
    {
        for (auto* p : params_) p->zero_grad();
    }

    long steps() const noexcept { return t_; }

private:
    std::vector<Param*> params_;
    std::vector<std::vector<float>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

} // namespace precip_slomo::nn
