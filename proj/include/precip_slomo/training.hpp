#pragma once
// Self-supervised training on consecutive coarse frames: the middle frame of
// every triplet is the target for interpolation at t = 0.5.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "precip_slomo/checkpoint.hpp"
#include "precip_slomo/error.hpp"
#include "precip_slomo/flownet.hpp"
#include "precip_slomo/grid.hpp"
#include "precip_slomo/losses.hpp"

namespace precip_slomo {

struct CropBox {
    std::size_t row = 0, col = 0, size = 0;
};

struct Triplet {
    PrecipFrame i0, i_mid, i1;
    double t_mid = 0.5;
    CropBox crop_window;  // whole frame unless narrowed by the trainer
};

struct TrainConfig {
    int epochs = 20;
    std::uint64_t seed = 0;
    int batch_size = 4;
    int crop_size = 128;
    double learning_rate = 1e-4;
    LossWeights weights;
    std::filesystem::path checkpoint_dir;  // empty: no files written
    UNetSpec flow_spec = default_flow_spec();
    UNetSpec refine_spec = default_refine_spec(true);

    void validate() const
    {
        expect(epochs >= 1, ErrorCode::ConfigError, "epochs must be >= 1");
        expect(batch_size >= 1, ErrorCode::ConfigError, "batch_size must be >= 1");
        expect(learning_rate > 0.0, ErrorCode::ConfigError, "learning_rate must be positive");
        expect(crop_size >= 1, ErrorCode::ConfigError, "crop_size must be positive");
        flow_spec.validate();
        refine_spec.validate();
        const int g = std::max(flow_spec.granularity(), refine_spec.granularity());
        expect(crop_size % g == 0, ErrorCode::ConfigError,
            "crop_size must be a multiple of " + std::to_string(g) + " for this network depth");
        weights.validate();
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochLog> log;
};

/// Sliding windows of three consecutive frames. Windows whose middle frame
/// has no observed cell are dropped.
inline std::vector<Triplet> build_triplets(const FrameSeries& series, int required_step_minutes = 30)
{
    if (series.size() < 3) fail(ErrorCode::SeriesTooShort, "at least 3 frames are needed for a triplet");
    if (required_step_minutes > 0 && series.step_minutes != required_step_minutes)
        fail(ErrorCode::IncompatibleSteps,
            "training frames must be " + std::to_string(required_step_minutes) + " min apart");
    series.validate();
    std::vector<Triplet> out;
    const auto& m = series.meta();
    for (std::size_t i = 1; i + 1 < series.size(); ++i) {
        const auto& mid = series.frames[i];
        if (std::all_of(mid.missing.values().begin(), mid.missing.values().end(), [](auto v) { return v != 0; }))
            continue;
        out.push_back({series.frames[i - 1], mid, series.frames[i + 1], 0.5, {0, 0, std::min(m.rows, m.cols)}});
    }
    return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

inline Grid<double> crop_grid(const Grid<double>& g, const CropBox& b)
{
    return sub_grid(g, {b.row, b.size}, {b.col, b.size});
}

} // namespace detail

/// Visiting order for one epoch; a permutation of 0..n-1.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(detail::derive_seed(seed, 0x5348554646ULL, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    return order;
}

/// Largest DEM slope magnitude; scales the dot-product channels to flow units.
inline double dot_scale_for(const Dem& dem)
{
    double s = 0.0;
    for (std::size_t i = 0; i < dem.elevation.size(); ++i)
        s = std::max(s, std::hypot((*dem.grad_x)[i], (*dem.grad_y)[i]));
    return s > 0.0 ? s : 1.0;
}

struct SampleLoss {
    LossParts parts;
    double total = 0.0;
};

/// One forward and backward pass on a (cropped) triplet. Gradients are
/// accumulated into `params`, scaled by `scale`. Returns nothing if the
/// crop has no cell observed in all three frames.
inline std::optional<SampleLoss> accumulate_sample(ModelParams& params, const Triplet& tri, const Dem* dem,
    const LossWeights& w, double scale)
{
    const auto& b = tri.crop_window;
    const auto n0 = detail::crop_grid(normalize_precip(tri.i0), b);
    const auto nm = detail::crop_grid(normalize_precip(tri.i_mid), b);
    const auto n1 = detail::crop_grid(normalize_precip(tri.i1), b);
    Mask valid(b.size, b.size);
    bool any = false;
    for (std::size_t r = 0; r < b.size; ++r)
        for (std::size_t c = 0; c < b.size; ++c) {
            const std::size_t rr = b.row + r, cc = b.col + c;
            const bool ok = !tri.i0.missing(rr, cc) && !tri.i_mid.missing(rr, cc) && !tri.i1.missing(rr, cc);
            valid(r, c) = ok;
            any = any || ok;
        }
    if (!any) return std::nullopt;

    Dem cropped;
    if (dem) {
        cropped.meta = dem->meta;
        cropped.meta.rows = cropped.meta.cols = b.size;
        cropped.elevation = detail::crop_grid(dem->elevation, b);
        cropped.grad_x = detail::crop_grid(*dem->grad_x, b);
        cropped.grad_y = detail::crop_grid(*dem->grad_y, b);
    }
    const Dem* d = dem ? &cropped : nullptr;
    const auto tr = run_pipeline(params, n0, n1, d, tri.t_mid);

    SampleLoss out;
    auto grad = PipelineGrad::zeros(b.size, b.size);
    out.parts.reconstruction = reconstruction_loss(tr.fused.frame, nm, valid, &grad.fused, scale * w.reconstruction);
    WarpingLossGrad<double> wg{grad.f01, grad.f10, grad.approx_t0, grad.approx_t1};
    out.parts.warping = warping_loss(
        n0, n1, nm, tr.f01, tr.f10, tr.approx_t0, tr.approx_t1, valid, &wg, scale * w.warping);
    grad.f01 = std::move(wg.f01);
    grad.f10 = std::move(wg.f10);
    grad.approx_t0 = std::move(wg.ft0);
    grad.approx_t1 = std::move(wg.ft1);
    out.parts.smoothness = smoothness_loss(tr.f01, tr.f10, &grad.f01, &grad.f10, scale * w.smoothness);
    try {
        out.total = total_loss(out.parts, w);
    } catch (const Error&) {
        fail(ErrorCode::DivergedLoss, "training loss became non-finite");
    }
    backward_pipeline(params, tr, d, std::move(grad));
    return out;
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains both networks from scratch. With a checkpoint directory, the
/// model after each epoch replaces `model.ckpt` there and one JSON line per
/// epoch is appended to `train_log.jsonl`.
inline TrainResult train(const TrainConfig& config, const std::vector<Triplet>& triplets, const Dem& dem_in,
    const EpochCallback& on_epoch = {})
{
    config.validate();
    expect(!triplets.empty(), ErrorCode::SeriesTooShort, "no training triplets");
    const auto& meta = triplets.front().i0.meta;
    const bool topo = config.refine_spec.in_channels == kRefineInputsTopo;
    Dem dem;
    if (topo) {
        if (!aligned(dem_in.meta, meta)) fail(ErrorCode::MisalignedDem, "DEM is not on the frame grid");
        dem = dem_in.has_gradient() ? dem_in : terrain_gradient(dem_in);
    }

    TrainResult result;
    result.params = ModelParams::create(config.flow_spec, config.refine_spec, config.seed);
    auto& params = result.params;
    if (topo) params.norm_stats.dot_scale = dot_scale_for(dem);
    nn::Adam adam(params.parameters(), config.learning_rate);

    const std::size_t crop = std::min<std::size_t>(static_cast<std::size_t>(config.crop_size), std::min(meta.rows, meta.cols));
    std::ofstream log_file;
    if (!config.checkpoint_dir.empty()) {
        std::filesystem::create_directories(config.checkpoint_dir);
        log_file.open(config.checkpoint_dir / "train_log.jsonl", std::ios::trunc);
        if (!log_file) fail(ErrorCode::IoError, "cannot write the training log");
    }

    const auto start = std::chrono::steady_clock::now();
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto order = epoch_order(triplets.size(), config.seed, epoch);
        double loss_sum = 0.0;
        std::size_t samples = 0;
        for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(config.batch_size));
            const double scale = 1.0 / static_cast<double>(last - first);
            adam.zero_grad();
            double batch_loss = 0.0;
            std::size_t used = 0;
            for (std::size_t k = first; k < last; ++k) {
                Triplet tri = triplets[order[k]];
                std::mt19937_64 rng(detail::derive_seed(config.seed, static_cast<std::uint64_t>(epoch), k));
                tri.crop_window = {rng() % (meta.rows - crop + 1), rng() % (meta.cols - crop + 1), crop};
                const auto s = accumulate_sample(params, tri, topo ? &dem : nullptr, config.weights, scale);
                if (!s) continue;
                batch_loss += s->total;
                ++used;
            }
            if (used == 0) continue;
            for (const auto* p : params.parameters())
                for (float g : p->grad)
                    if (!std::isfinite(g)) fail(ErrorCode::DivergedLoss, "non-finite gradient");
            adam.step();
            loss_sum += batch_loss;
            samples += used;
        }
        EpochLog entry{epoch, samples ? loss_sum / static_cast<double>(samples) : 0.0,
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
        result.log.push_back(entry);
        if (!config.checkpoint_dir.empty()) {
            save_checkpoint(params, config.checkpoint_dir / "model.ckpt");
            log_file << nlohmann::json{{"epoch", entry.epoch}, {"mean_loss", entry.mean_loss},
                                         {"wall_seconds", entry.wall_seconds}}
                            .dump()
                     << '\n'
                     << std::flush;
        }
        if (on_epoch) on_epoch(entry);
    }
    params.zero_grad();
    return result;
}

} // namespace precip_slomo
