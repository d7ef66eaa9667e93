#pragma once
// Fully convolutional encoder/decoder with skip connections.
//
// Level 0 runs at full resolution; every further level halves the
// resolution with 2x average pooling. Each encoder level is two
// convolutions with leaky rectification, each decoder level upsamples
// bilinearly, convolves, concatenates the matching encoder output and
// convolves again. A final 3x3 convolution (no activation) produces the
// output channels and is zero-initialized.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "precip_slomo/error.hpp"
#include "precip_slomo/nn.hpp"

namespace precip_slomo {

struct UNetSpec {
    int in_channels = 2;
    int out_channels = 6;
    std::vector<int> channels{32, 64, 128, 256, 512, 512};
    std::vector<int> kernels{7, 5, 3, 3, 3, 3};
    double activation_slope = 0.1;

    int levels() const noexcept { return static_cast<int>(channels.size()); }

    /// Spatial dimensions must be multiples of this.
    int granularity() const noexcept { return 1 << (levels() - 1); }

    void validate() const
    {
        expect(levels() >= 1, ErrorCode::InvalidArgument, "U-Net needs at least one level");
        expect(kernels.size() == channels.size(), ErrorCode::InvalidArgument,
            "U-Net needs one kernel size per level");
        expect(in_channels >= 1 && out_channels >= 1, ErrorCode::InvalidArgument, "U-Net channel counts");
        for (int c : channels) expect(c >= 1, ErrorCode::InvalidArgument, "U-Net level width must be >= 1");
        for (int k : kernels) expect(k >= 1 && k % 2 == 1, ErrorCode::InvalidArgument, "U-Net kernels must be odd");
        expect(activation_slope >= 0.0, ErrorCode::InvalidArgument, "activation slope must be >= 0");
    }

    friend bool operator==(const UNetSpec&, const UNetSpec&) = default;
};

/// Activations a backward pass needs; one per in-flight forward.
struct UNetWorkspace {
    std::vector<std::vector<float>> cols;
    std::vector<std::vector<std::uint8_t>> signs;
    std::vector<nn::Tensor> skips;
    int in_h = 0, in_w = 0, pad_h = 0, pad_w = 0;
};

class UNet {
public:
    UNet() = default;

    explicit UNet(UNetSpec spec)
        : spec_(std::move(spec))
    {
        spec_.validate();
        const int n = spec_.levels();
        int prev = spec_.in_channels;
        for (int l = 0; l < n; ++l) {
            const int c = spec_.channels[l], k = spec_.kernels[l];
            enc_.push_back({nn::Conv2d(prev, c, k), nn::Conv2d(c, c, k)});
            prev = c;
        }
        for (int l = n - 1; l >= 1; --l) {
            const int from = spec_.channels[l], to = spec_.channels[l - 1];
            dec_.push_back({nn::Conv2d(from, to, 3), nn::Conv2d(2 * to, to, 3)});
        }
        head_ = nn::Conv2d(spec_.channels[0], spec_.out_channels, 3);
    }

    const UNetSpec& spec() const noexcept { return spec_; }
    bool empty() const noexcept { return enc_.empty(); }

    /// Kaiming init everywhere except the zeroed output head.
    void initialize(std::mt19937_64& rng)
    {
        for (auto* blocks : {&enc_, &dec_}) {
            for (auto& b : *blocks) {
                b.a.init_kaiming(rng, spec_.activation_slope);
                b.b.init_kaiming(rng, spec_.activation_slope);
            }
        }
        head_.init_zero();
    }

    /// Parameters in the fixed serialization order: encoder levels from
    /// fine to coarse, decoder levels from coarse to fine, then the head;
    /// within each convolution the weight precedes the bias.
    std::vector<nn::Param*> parameters()
    {
        std::vector<nn::Param*> out;
        auto add = [&](nn::Conv2d& c) {
            out.push_back(&c.weight());
            out.push_back(&c.bias());
        };
        for (auto& b : enc_) {
            add(b.a);
            add(b.b);
        }
        for (auto& b : dec_) {
            add(b.a);
            add(b.b);
        }
        add(head_);
        return out;
    }

    std::vector<const nn::Param*> parameters() const
    {
        std::vector<const nn::Param*> out;
        for (auto* p : const_cast<UNet*>(this)->parameters()) out.push_back(p);
        return out;
    }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto* p : parameters()) n += p->size();
        return n;
    }

    nn::Conv2d& head() noexcept { return head_; }
    nn::Conv2d& first_conv() noexcept { return enc_.front().a; }
    const nn::Conv2d& first_conv() const noexcept { return enc_.front().a; }

    nn::Tensor forward(const nn::Tensor& x) const
    {
        UNetWorkspace ws;
        return forward(x, ws);
    }

    /// Any spatial size is accepted; inputs are edge-padded up to the
    /// pooling granularity and the output cropped back.
    nn::Tensor forward(const nn::Tensor& x, UNetWorkspace& ws) const
    {
        if (empty()) fail(ErrorCode::UninitializedParams, "U-Net has no layers");
        expect(x.channels == spec_.in_channels, ErrorCode::ShapeMismatch,
            "U-Net expects " + std::to_string(spec_.in_channels) + " input channels");
        const int g = spec_.granularity();
        ws.in_h = x.height;
        ws.in_w = x.width;
        ws.pad_h = (x.height + g - 1) / g * g;
        ws.pad_w = (x.width + g - 1) / g * g;
        const bool padded = ws.pad_h != ws.in_h || ws.pad_w != ws.in_w;
        const std::size_t convs = 2 * (enc_.size() + dec_.size()) + 1;
        ws.cols.resize(convs);
        ws.signs.resize(convs - 1);
        ws.skips.clear();
        const auto slope = static_cast<float>(spec_.activation_slope);

        nn::Tensor h = padded ? nn::pad_replicate(x, ws.pad_h, ws.pad_w) : x;
        std::size_t slot = 0;
        auto conv_act = [&](const nn::Conv2d& conv, const nn::Tensor& in) {
            nn::Tensor out = conv.forward(in, ws.cols[slot]);
            nn::leaky_relu(out, slope, ws.signs[slot]);
            ++slot;
            return out;
        };
        const int n = spec_.levels();
        for (int l = 0; l < n; ++l) {
            if (l > 0) h = nn::avg_pool2(h);
            h = conv_act(enc_[l].a, h);
            h = conv_act(enc_[l].b, h);
            if (l + 1 < n) ws.skips.push_back(h);
        }
        for (std::size_t d = 0; d < dec_.size(); ++d) {
            h = conv_act(dec_[d].a, nn::upsample2(h));
            h = conv_act(dec_[d].b, nn::concat(h, ws.skips[ws.skips.size() - 1 - d]));
        }
        h = head_.forward(h, ws.cols[slot]);
        return padded ? nn::crop(h, ws.in_h, ws.in_w) : h;
    }

    /// Accumulates parameter gradients for the forward pass recorded in
    /// `ws` and returns the input gradient (empty if not requested).
    nn::Tensor backward(const UNetWorkspace& ws, const nn::Tensor& grad_out, bool need_input_grad = true)
    {
        const bool padded = ws.pad_h != ws.in_h || ws.pad_w != ws.in_w;
        const auto slope = static_cast<float>(spec_.activation_slope);
        std::size_t slot = ws.cols.size() - 1;
        nn::Tensor g = padded ? nn::crop_backward(grad_out, ws.pad_h, ws.pad_w) : grad_out;
        g = head_.backward(g, ws.cols[slot]);
        auto conv_act_back = [&](nn::Conv2d& conv, nn::Tensor& grad, bool need = true) {
            --slot;
            nn::leaky_relu_backward(grad, slope, ws.signs[slot]);
            return conv.backward(grad, ws.cols[slot], need);
        };
        const int n = spec_.levels();
        std::vector<nn::Tensor> skip_grads(ws.skips.size());
        // Decoder blocks were applied in order 0..D-1, so unwind D-1..0.
        for (std::size_t k = dec_.size(); k-- > 0;) {
            g = conv_act_back(dec_[k].b, g);
            auto [g_up, g_skip] = nn::split(g, dec_[k].a.out_channels());
            skip_grads[ws.skips.size() - 1 - k] = std::move(g_skip);
            g = nn::upsample2_backward(conv_act_back(dec_[k].a, g_up));
        }
        for (int l = n - 1; l >= 0; --l) {
            if (l + 1 < n) {
                const auto& sg = skip_grads[static_cast<std::size_t>(l)];
                for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += sg.data[i];
            }
            g = conv_act_back(enc_[l].b, g);
            const bool need = need_input_grad || l > 0;
            g = conv_act_back(enc_[l].a, g, need);
            if (!need) return {};
            if (l > 0) g = nn::avg_pool2_backward(g);
        }
        return padded ? nn::pad_replicate_backward(g, ws.in_h, ws.in_w) : g;
    }

private:
    struct Block {
        nn::Conv2d a, b;
    };

    UNetSpec spec_;
    std::vector<Block> enc_, dec_;
    nn::Conv2d head_;
};

} // namespace precip_slomo
