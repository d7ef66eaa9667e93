#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "precip_slomo/nn.hpp"
#include "precip_slomo/unet.hpp"

namespace ps = precip_slomo;
namespace nn = precip_slomo::nn;

namespace {

nn::Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng)
{
    nn::Tensor t(c, h, w);
    for (auto& v : t.data) v = static_cast<float>(nn::uniform(rng, -1, 1));
    return t;
}

double dot(const nn::Tensor& a, const nn::Tensor& b)
{
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += static_cast<double>(a.data[i]) * b.data[i];
    return s;
}

// Direct 'same' convolution used as the reference for the im2col path.
nn::Tensor naive_conv(const nn::Conv2d& conv, const nn::Tensor& x)
{
    const int k = conv.kernel(), pad = k / 2;
    nn::Tensor y(conv.out_channels(), x.height, x.width);
    const auto& w = conv.weight().value;
    for (int o = 0; o < conv.out_channels(); ++o)
        for (int r = 0; r < x.height; ++r)
            for (int c = 0; c < x.width; ++c) {
                double s = conv.bias().value[o];
                for (int i = 0; i < conv.in_channels(); ++i)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int sy = r + ky - pad, sx = c + kx - pad;
                            if (sy < 0 || sy >= x.height || sx < 0 || sx >= x.width) continue;
                            s += w[((o * conv.in_channels() + i) * k + ky) * k + kx] * x.at(i, sy, sx);
                        }
                y.at(o, r, c) = static_cast<float>(s);
            }
    return y;
}

} // namespace

TEST(Conv2d, MatchesDirectConvolution)
{
    std::mt19937_64 rng(3);
    nn::Conv2d conv(3, 4, 5);
    conv.init_kaiming(rng, 0.1);
    for (auto& b : conv.bias().value) b = static_cast<float>(nn::uniform(rng, -1, 1));
    const auto x = random_tensor(3, 7, 6, rng);
    std::vector<float> col;
    const auto y = conv.forward(x, col);
    const auto ref = naive_conv(conv, x);
    for (std::size_t i = 0; i < y.data.size(); ++i) EXPECT_NEAR(y.data[i], ref.data[i], 1e-5);
}

TEST(Conv2d, BackwardIsAdjointOfForward)
{
    // <conv(x + e*dx) - conv(x), gy> / e = <dx, grad_x> for a linear layer.
    std::mt19937_64 rng(4);
    nn::Conv2d conv(2, 3, 3);
    conv.init_kaiming(rng, 0.1);
    const auto x = random_tensor(2, 5, 6, rng);
    const auto dx = random_tensor(2, 5, 6, rng);
    const auto gy = random_tensor(3, 5, 6, rng);
    std::vector<float> col, col2;
    const auto y0 = conv.forward(x, col);
    auto gx = conv.backward(gy, col);
    const auto y1 = conv.forward(dx, col2);
    // Linear in x up to the bias: conv(dx) - bias is the directional derivative.
    double lhs = dot(y1, gy);
    for (int o = 0; o < 3; ++o)
        for (std::size_t i = 0; i < y1.plane(); ++i) lhs -= conv.bias().value[o] * gy.channel(o)[i];
    EXPECT_NEAR(lhs, dot(dx, gx), 1e-3);

    // Weight gradient: <y(W + dW) - y(W), gy> = <dW, gW>.
    nn::Conv2d conv2 = conv;
    double expected = 0;
    for (std::size_t i = 0; i < conv2.weight().size(); ++i) {
        const float d = static_cast<float>(nn::uniform(rng, -1, 1));
        conv2.weight().value[i] = d;
        expected += static_cast<double>(d) * conv.weight().grad[i];
    }
    std::fill(conv2.bias().value.begin(), conv2.bias().value.end(), 0.0f);
    std::vector<float> col3;
    EXPECT_NEAR(dot(conv2.forward(x, col3), gy), expected, 1e-3);
}

TEST(Layers, PoolAndUpsampleAreAdjoint)
{
    std::mt19937_64 rng(5);
    const auto x = random_tensor(2, 4, 6, rng);
    const auto gy = random_tensor(2, 2, 3, rng);
    EXPECT_NEAR(dot(nn::avg_pool2(x), gy), dot(x, nn::avg_pool2_backward(gy)), 1e-5);
    const auto u = random_tensor(2, 3, 5, rng);
    const auto gu = random_tensor(2, 6, 10, rng);
    EXPECT_NEAR(dot(nn::upsample2(u), gu), dot(u, nn::upsample2_backward(gu)), 1e-4);
    const auto p = random_tensor(1, 3, 5, rng);
    const auto gp = random_tensor(1, 4, 8, rng);
    EXPECT_NEAR(dot(nn::pad_replicate(p, 4, 8), gp), dot(p, nn::pad_replicate_backward(gp, 3, 5)), 1e-4);
}

TEST(Layers, UpsamplePreservesConstants)
{
    nn::Tensor x(1, 3, 4, 2.5f);
    for (float v : nn::upsample2(x).data) EXPECT_FLOAT_EQ(v, 2.5f);
}

class UNetGradient : public ::testing::TestWithParam<double> {};

TEST_P(UNetGradient, MatchesFiniteDifferences)
{
    ps::UNetSpec spec;
    spec.activation_slope = GetParam();
    spec.in_channels = 2;
    spec.out_channels = 3;
    spec.channels = {4, 6, 8};
    spec.kernels = {3, 3, 3};
    ps::UNet net(spec);
    std::mt19937_64 rng(11);
    net.initialize(rng);
    for (auto& w : net.head().weight().value) w = static_cast<float>(nn::uniform(rng, -0.3, 0.3));
    const auto x = random_tensor(2, 6, 7, rng);  // padded internally to 8x8
    const auto gy = random_tensor(3, 6, 7, rng);

    ps::UNetWorkspace ws;
    const auto y = net.forward(x, ws);
    ASSERT_EQ(y.height, 6);
    ASSERT_EQ(y.width, 7);
    const auto gx = net.backward(ws, gy, true);

    // Rectifier kinks make a few finite differences unreliable for slope
    // 0.1, so the nonlinear case checks that the bulk of probes agree.
    const bool linear = GetParam() == 1.0;
    const double eps = linear ? 1e-2 : 1e-3;
    auto objective = [&](const nn::Tensor& in) { return dot(net.forward(in), gy); };
    int probes = 0, agree = 0;
    auto check = [&](double fd, double analytic) {
        ++probes;
        const bool ok = std::abs(fd - analytic) <= 2e-2 * std::max(1.0, std::abs(fd));
        agree += ok;
        if (linear) EXPECT_TRUE(ok) << fd << " vs " << analytic;
    };
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t i = static_cast<std::size_t>(rng() % x.data.size());
        auto xp = x, xm = x;
        xp.data[i] += static_cast<float>(eps);
        xm.data[i] -= static_cast<float>(eps);
        check((objective(xp) - objective(xm)) / (2 * eps), gx.data[i]);
    }
    auto params = net.parameters();
    for (int trial = 0; trial < 40; ++trial) {
        auto* p = params[rng() % params.size()];
        const std::size_t i = static_cast<std::size_t>(rng() % p->size());
        const float orig = p->value[i];
        p->value[i] = orig + static_cast<float>(eps);
        const double up = objective(x);
        p->value[i] = orig - static_cast<float>(eps);
        const double down = objective(x);
        p->value[i] = orig;
        check((up - down) / (2 * eps), p->grad[i]);
    }
    EXPECT_GE(agree, probes * 9 / 10);
}

// Slope 1 makes the network linear, which isolates wiring errors from
// rectifier kinks.
INSTANTIATE_TEST_SUITE_P(Slopes, UNetGradient, ::testing::Values(1.0, 0.1));

TEST(UNet, FullyConvolutionalAcrossSizes)
{
    ps::UNetSpec spec;
    spec.channels = {4, 4, 4};
    spec.kernels = {3, 3, 3};
    spec.out_channels = 2;
    ps::UNet net(spec);
    std::mt19937_64 rng(1);
    net.initialize(rng);
    EXPECT_EQ(net.forward(nn::Tensor(2, 8, 12)).height, 8);
    const auto big = net.forward(nn::Tensor(2, 16, 24));
    EXPECT_EQ(big.height, 16);
    EXPECT_EQ(big.width, 24);
}

TEST(UNet, DefaultSpecMatchesDocumentedShape)
{
    ps::UNetSpec spec;
    EXPECT_EQ(spec.levels(), 6);
    EXPECT_EQ(spec.channels, (std::vector<int>{32, 64, 128, 256, 512, 512}));
    EXPECT_DOUBLE_EQ(spec.activation_slope, 0.1);
    EXPECT_EQ(spec.granularity(), 32);
}

TEST(Adam, MovesAgainstGradientByLearningRateOnFirstStep)
{
    nn::Param p(3);
    p.grad = {1.0f, -2.0f, 0.0f};
    nn::Adam opt({&p}, 1e-3);
    opt.step();
    EXPECT_NEAR(p.value[0], -1e-3, 1e-6);
    EXPECT_NEAR(p.value[1], 1e-3, 1e-6);
    EXPECT_FLOAT_EQ(p.value[2], 0.0f);
}
