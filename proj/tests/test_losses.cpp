#include <gtest/gtest.h>

#include <random>

#include "precip_slomo/losses.hpp"

namespace ps = precip_slomo;
using Flow = ps::FlowField3<double>;
using G = ps::Grid<double>;

namespace {

G random_grid(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    G g(rows, cols);
    for (auto& v : g.values()) v = u(rng);
    return g;
}

} // namespace

TEST(ReconstructionLoss, Examples)
{
    const ps::Mask all(1, 4, 1);
    const G pred(1, 4, std::vector<double>{1, 2, 3, 4});
    EXPECT_EQ(ps::reconstruction_loss(pred, pred, all), 0.0);
    G shifted = pred;
    for (auto& v : shifted.values()) v += 2;
    EXPECT_DOUBLE_EQ(ps::reconstruction_loss(shifted, pred, all), 2.0);
    EXPECT_DOUBLE_EQ(ps::reconstruction_loss(pred, G(1, 4, std::vector<double>{1, 3, 3, 6}), all), 0.75);
}

TEST(ReconstructionLoss, MaskedCellsAreIgnored)
{
    ps::Mask m(1, 4, 1);
    m[3] = 0;
    const G pred(1, 4, std::vector<double>{1, 2, 3, 4});
    G target(1, 4, std::vector<double>{1, 3, 3, 100});
    const double a = ps::reconstruction_loss(pred, target, m);
    target[3] = -7;
    EXPECT_DOUBLE_EQ(ps::reconstruction_loss(pred, target, m), a);
    EXPECT_DOUBLE_EQ(a, 1.0 / 3.0);
}

TEST(ReconstructionLoss, EmptyMask)
{
    try {
        ps::reconstruction_loss(G(2, 2), G(2, 2), ps::Mask(2, 2, 0));
        FAIL();
    } catch (const ps::Error& e) {
        EXPECT_EQ(e.code(), ps::ErrorCode::EmptyMask);
    }
}

TEST(WarpingLoss, ConstantFramesZeroFlows)
{
    const G c(4, 4, 1.5);
    const auto z = Flow::zeros(4, 4);
    EXPECT_EQ(ps::warping_loss(c, c, c, z, z, z, z, ps::Mask(4, 4, 1)), 0.0);
}

TEST(WarpingLoss, ExactShiftZeroesFirstTerm)
{
    // i0 is i1 read two columns to the left (clamped at the border), so f01.dx = 2.
    std::mt19937_64 rng(1);
    const auto i1 = random_grid(5, 8, rng, 0, 3);
    G i0(5, 8);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 8; ++c) i0(r, c) = i1(r, c < 2 ? 0 : c - 2);
    const ps::Mask all(5, 8, 1);
    const auto f01 = Flow::constant(5, 8, 2.0, 0.0, 0.0);
    const auto z = Flow::zeros(5, 8);
    // With f10 = 0 the second term is the plain distance between i0 and i1.
    const double endpoint_terms = ps::warping_loss(i0, i1, i1, f01, z, z, z, all, nullptr, 1.0, false);
    EXPECT_NEAR(endpoint_terms - ps::reconstruction_loss(i0, i1, all), 0.0, 1e-12);
    EXPECT_GT(ps::warping_loss(i0, i1, i1, z, z, z, z, all, nullptr, 1.0, false), endpoint_terms);
}

TEST(WarpingLoss, HomogeneousInResidual)
{
    const G i0(3, 3, 1.0), i1(3, 3, 0.0);
    const G i0b(3, 3, 2.0);
    const auto z = Flow::zeros(3, 3);
    const ps::Mask all(3, 3, 1);
    const double one = ps::warping_loss(i0, i1, i1, z, z, z, z, all, nullptr, 1.0, false);
    const double two = ps::warping_loss(i0b, i1, i1, z, z, z, z, all, nullptr, 1.0, false);
    EXPECT_DOUBLE_EQ(two, 2 * one);
}

TEST(WarpingLoss, FourTermsBySwitch)
{
    std::mt19937_64 rng(2);
    const auto i0 = random_grid(4, 4, rng, 0, 2), i1 = random_grid(4, 4, rng, 0, 2), it = random_grid(4, 4, rng, 0, 2);
    const auto z = Flow::zeros(4, 4);
    const ps::Mask all(4, 4, 1);
    const double four = ps::warping_loss(i0, i1, it, z, z, z, z, all);
    const double two = ps::warping_loss(i0, i1, it, z, z, z, z, all, nullptr, 1.0, false);
    EXPECT_NEAR(four - two, ps::reconstruction_loss(i0, it, all) + ps::reconstruction_loss(i1, it, all), 1e-12);
}

TEST(SmoothnessLoss, Examples)
{
    const auto z = Flow::zeros(1, 3);
    EXPECT_EQ(ps::smoothness_loss(Flow::constant(4, 4, 1, 2, 3), Flow::constant(4, 4, -1, 0, 5)), 0.0);

    auto ramp = Flow::zeros(1, 3);
    ramp.dx = G(1, 3, std::vector<double>{0, 1, 2});
    EXPECT_DOUBLE_EQ(ps::smoothness_loss(ramp, z), 1.0);

    auto scaled = ramp;
    for (auto& v : scaled.dx.values()) v *= 3;
    EXPECT_DOUBLE_EQ(ps::smoothness_loss(scaled, z), 3.0);
}

TEST(TotalLoss, WeightedSum)
{
    const ps::LossWeights w;
    EXPECT_EQ(ps::total_loss({}, w), 0.0);
    EXPECT_DOUBLE_EQ(ps::total_loss({1, 1, 1, 1}, w), 2.2);
    EXPECT_DOUBLE_EQ(ps::total_loss({2, 2, 2, 2}, w), 4.4);
}

TEST(TotalLoss, RejectsNonFiniteAndPerceptual)
{
    try {
        ps::total_loss({std::nan(""), 0, 0, 0}, {});
        FAIL();
    } catch (const ps::Error& e) {
        EXPECT_EQ(e.code(), ps::ErrorCode::NonFiniteLoss);
    }
    ps::LossWeights w;
    w.perceptual = 0.005;
    EXPECT_THROW(w.validate(), ps::Error);
}

TEST(LossGradients, MatchCentralDifferences)
{
    std::mt19937_64 rng(3);
    const std::size_t n = 5;
    const auto i0 = random_grid(n, n, rng, 0, 3), i1 = random_grid(n, n, rng, 0, 3), it = random_grid(n, n, rng, 0, 3);
    auto rnd_flow = [&] {
        return Flow{{}, random_grid(n, n, rng, -1.3, 1.3), random_grid(n, n, rng, -1.3, 1.3),
            random_grid(n, n, rng, -0.5, 0.5)};
    };
    Flow flows[4] = {rnd_flow(), rnd_flow(), rnd_flow(), rnd_flow()};
    auto pred = random_grid(n, n, rng, 0, 3);
    ps::Mask valid(n, n, 1);
    valid[7] = 0;
    const ps::LossWeights w;

    auto objective = [&](const G& p, const Flow (&f)[4]) {
        ps::LossParts parts;
        parts.reconstruction = ps::reconstruction_loss(p, it, valid);
        parts.warping = ps::warping_loss(i0, i1, it, f[0], f[1], f[2], f[3], valid);
        parts.smoothness = ps::smoothness_loss(f[0], f[1]);
        return ps::total_loss(parts, w);
    };

    G g_pred(n, n);
    auto wg = ps::WarpingLossGrad<double>::zeros(n, n);
    ps::reconstruction_loss(pred, it, valid, &g_pred, w.reconstruction);
    ps::warping_loss(i0, i1, it, flows[0], flows[1], flows[2], flows[3], valid, &wg, w.warping);
    ps::smoothness_loss(flows[0], flows[1], &wg.f01, &wg.f10, w.smoothness);
    const Flow* analytic[4] = {&wg.f01, &wg.f10, &wg.ft0, &wg.ft1};

    const double h = 1e-7;
    for (std::size_t i = 0; i < n * n; ++i) {
        auto p = pred, m = pred;
        p[i] += h;
        m[i] -= h;
        EXPECT_NEAR((objective(p, flows) - objective(m, flows)) / (2 * h), g_pred[i], 1e-6);
        for (int f = 0; f < 4; ++f)
            for (int k = 0; k < 3; ++k) {
                Flow fp[4] = {flows[0], flows[1], flows[2], flows[3]};
                Flow fm[4] = {flows[0], flows[1], flows[2], flows[3]};
                fp[f].channel(k)[i] += h;
                fm[f].channel(k)[i] -= h;
                EXPECT_NEAR((objective(pred, fp) - objective(pred, fm)) / (2 * h), analytic[f]->channel(k)[i], 1e-6)
                    << "flow " << f << " channel " << k << " cell " << i;
            }
    }
}
