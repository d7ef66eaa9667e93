// precip-slomo: command-line front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print
// one line to stderr:  error code=<Code> message="<text>"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "precip_slomo/checkpoint.hpp"
#include "precip_slomo/evaluation.hpp"
#include "precip_slomo/floodsim.hpp"
#include "precip_slomo/interpolation.hpp"
#include "precip_slomo/io.hpp"
#include "precip_slomo/synth.hpp"
#include "precip_slomo/training.hpp"

namespace ps = precip_slomo;
namespace fs = std::filesystem;

namespace {

std::string quoted(const std::string& s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

void report(const std::string& code, const std::string& message)
{
    std::cerr << "error code=" << code << " message=" << quoted(message) << std::endl;
}

std::optional<ps::BBox> parse_bbox(const std::vector<double>& v)
{
    if (v.empty()) return std::nullopt;
    if (v.size() != 4) ps::fail(ps::ErrorCode::InvalidArgument, "--bbox takes lat_min lon_min lat_max lon_max");
    ps::BBox b{v[0], v[1], v[2], v[3]};
    b.validate();
    return b;
}

/// "name=path" pairs; a bare path is named after its parent directory.
std::map<std::string, fs::path> parse_named(const std::vector<std::string>& items)
{
    std::map<std::string, fs::path> out;
    for (const auto& s : items) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            fs::path p(s);
            out[p.parent_path().filename().string()] = p;
        } else {
            out[s.substr(0, eq)] = s.substr(eq + 1);
        }
    }
    return out;
}

/// "name=START/END" with ISO-8601 UTC times.
ps::TimeWindow parse_window(const std::string& s)
{
    const auto eq = s.find('='), slash = s.find('/');
    if (eq == std::string::npos || slash == std::string::npos || slash < eq)
        ps::fail(ps::ErrorCode::InvalidArgument, "window must look like name=START/END: " + s);
    ps::TimeWindow w{s.substr(0, eq), ps::parse_time(s.substr(eq + 1, slash - eq - 1)), ps::parse_time(s.substr(slash + 1))};
    if (w.end < w.start) ps::fail(ps::ErrorCode::EmptyWindow, "window ends before it starts: " + s);
    return w;
}

ps::FrameSeries at_step(const ps::FrameSeries& s, int step)
{
    if (s.step_minutes == step) return s;
    if (step % s.step_minutes != 0)
        ps::fail(ps::ErrorCode::IncompatibleSteps,
            "cannot reach a " + std::to_string(step) + "-min step from " + std::to_string(s.step_minutes) + " min");
    return ps::undersample(s, step / s.step_minutes);
}

fs::path out_dir_or(const std::string& flag, const ps::RunConfig& cfg, const std::string& sub)
{
    if (!flag.empty()) return flag;
    if (cfg.paths.out_dir.empty()) ps::fail(ps::ErrorCode::ConfigError, "no output directory: pass --out or set paths.out_dir");
    return cfg.paths.out_dir / sub;
}

ps::RunConfig load_config(const std::string& path)
{
    return path.empty() ? ps::run_config_from_json(nlohmann::json::object()) : ps::load_run_config(path);
}

ps::Dem load_dem_for(const ps::RunConfig& cfg, const ps::GridMeta& meta)
{
    if (cfg.paths.dem.empty()) ps::fail(ps::ErrorCode::ConfigError, "paths.dem is not set");
    return ps::ingest_dem(cfg.paths.dem, meta);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string scenario, out;
    std::optional<std::uint64_t> seed;
    std::size_t rows = 0, cols = 0, frames = 0;
};

int run_synth(const SynthArgs& a)
{
    const std::uint64_t seed = a.seed.value_or(ps::default_seed());
    ps::synth::Scenario sc;
    if (a.rows || a.cols || a.frames) {
        // Size overrides for quick runs.
        if (a.scenario == "translating-blob") {
            ps::synth::BlobOptions o;
            o.seed = seed ? seed : o.seed;
            if (a.rows) o.rows = a.rows;
            if (a.cols) o.cols = a.cols;
            if (a.frames) o.frames = a.frames;
            sc = ps::synth::translating_blob(o);
        } else if (a.scenario == "linear-ramp") {
            ps::synth::RampOptions o;
            o.seed = seed ? seed : o.seed;
            if (a.rows) o.rows = a.rows;
            if (a.cols) o.cols = a.cols;
            if (a.frames) o.frames = a.frames;
            sc = ps::synth::linear_ramp(o);
        } else if (a.scenario == "valley-storm") {
            ps::synth::ValleyOptions o;
            o.seed = seed ? seed : o.seed;
            if (a.rows) o.rows = a.rows;
            if (a.cols) o.cols = a.cols;
            if (a.frames) o.frames = a.frames;
            sc = ps::synth::valley_storm(o);
        } else {
            ps::fail(ps::ErrorCode::InvalidArgument, "unknown scenario '" + a.scenario + "'");
        }
    } else {
        sc = ps::synth::by_name(a.scenario, seed);
    }
    const fs::path out(a.out);
    ps::write_series(out / "rain", sc.series, "synthetic:" + a.scenario);
    ps::write_dem(out / "dem.tif", sc.dem);
    std::cout << "wrote " << sc.series.size() << " frames (" << sc.series.meta().rows << "x" << sc.series.meta().cols
              << ", " << sc.series.step_minutes << " min) to " << (out / "rain").string() << "\n";
    return 0;
}

struct IngestArgs {
    std::string manifest, dem, out;
    std::vector<double> bbox;
};

int run_ingest(const IngestArgs& a)
{
    auto series = ps::ingest_radar(fs::path(a.manifest));
    if (const auto box = parse_bbox(a.bbox)) series = ps::crop_to_bbox(series, *box);
    const fs::path out(a.out);
    ps::write_series(out / "rain", series, "ingest:" + fs::path(a.manifest).string());
    if (!a.dem.empty()) ps::write_dem(out / "dem.tif", ps::ingest_dem(a.dem, series.meta()));
    std::cout << "ingested " << series.size() << " frames on a " << series.meta().rows << "x" << series.meta().cols
              << " grid into " << out.string() << "\n";
    return 0;
}

struct TrainArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, batch_size, crop_size;
    std::optional<double> lr;
    int train_step = 30;
};

int run_train(const TrainArgs& a)
{
    auto cfg = load_config(a.config);
    if (a.seed) cfg.seed = cfg.train.seed = *a.seed;
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (a.batch_size) cfg.train.batch_size = *a.batch_size;
    if (a.crop_size) cfg.train.crop_size = *a.crop_size;
    if (a.lr) cfg.train.learning_rate = *a.lr;
    if (cfg.paths.radar_manifest.empty()) ps::fail(ps::ErrorCode::ConfigError, "paths.radar_manifest is not set");
    const fs::path out = out_dir_or(a.out, cfg, "train");
    if (cfg.train.checkpoint_dir.empty() || !a.out.empty()) cfg.train.checkpoint_dir = out;

    auto series = ps::ingest_radar(cfg.paths.radar_manifest);
    if (cfg.bbox) series = ps::crop_to_bbox(series, *cfg.bbox);
    const auto coarse = at_step(series, a.train_step);
    const auto triplets = ps::build_triplets(coarse, a.train_step);
    const auto dem = load_dem_for(cfg, series.meta());
    std::cout << triplets.size() << " triplets at " << a.train_step << " min, " << cfg.train.epochs << " epochs\n";
    ps::train(cfg.train, triplets, dem, [](const ps::EpochLog& e) {
        std::printf("epoch %d  loss %.6f  %.1f s\n", e.epoch, e.mean_loss, e.wall_seconds);
        std::fflush(stdout);
    });
    ps::write_json_file(out / "run_config.json", ps::to_json(cfg));
    std::cout << "checkpoint: " << (out / "model.ckpt").string() << "\n";
    return 0;
}

struct InterpArgs {
    std::string config, method = "linear", checkpoint, out;
    int from_step = 30, to_step = 5;
};

int run_interpolate(const InterpArgs& a)
{
    const auto cfg = load_config(a.config);
    if (cfg.paths.radar_manifest.empty()) ps::fail(ps::ErrorCode::ConfigError, "paths.radar_manifest is not set");
    auto series = ps::ingest_radar(cfg.paths.radar_manifest);
    if (cfg.bbox) series = ps::crop_to_bbox(series, *cfg.bbox);
    const auto coarse = at_step(series, a.from_step);
    const fs::path out = out_dir_or(a.out, cfg, "interp_" + a.method);
    ps::FrameSeries dense;
    if (a.method == "linear") {
        dense = ps::densify_series(coarse, a.to_step, ps::linear_method());
    } else if (a.method == "model") {
        fs::path ckpt = a.checkpoint;
        if (ckpt.empty()) ckpt = (cfg.train.checkpoint_dir.empty() ? cfg.paths.out_dir / "train" : cfg.train.checkpoint_dir) / "model.ckpt";
        const auto params = ps::load_checkpoint(ckpt);
        const auto dem = load_dem_for(cfg, series.meta());
        dense = ps::densify_series(coarse, a.to_step, ps::model_method(params, dem));
    } else {
        ps::fail(ps::ErrorCode::InvalidArgument, "unknown method '" + a.method + "'");
    }
    ps::write_series(out, dense, "interpolate:" + a.method);
    std::cout << "wrote " << dense.size() << " frames at " << a.to_step << " min to " << out.string() << "\n";
    return 0;
}

struct EvalArgs {
    std::string truth, truth_depth, out;
    std::vector<std::string> preds, depths, windows;
    std::vector<double> bbox;
    int coarse_step = 30;
    double flood_threshold = ps::kFloodThresholdM;
};

int run_evaluate(const EvalArgs& a)
{
    const auto region = parse_bbox(a.bbox);
    const auto truth = ps::ingest_radar(fs::path(a.truth));
    std::vector<ps::TimeWindow> windows;
    for (const auto& w : a.windows) windows.push_back(parse_window(w));
    if (windows.empty()) windows.push_back({"all", truth.frames.front().time, truth.frames.back().time});

    const auto preds = parse_named(a.preds);
    if (preds.empty()) ps::fail(ps::ErrorCode::InvalidArgument, "at least one --pred is required");
    std::map<std::string, ps::FrameSeries> pred_series;
    for (const auto& [name, path] : preds) pred_series[name] = ps::ingest_radar(path);

    ps::ResultsBundle bundle;
    for (const auto& w : windows) {
        ps::MaeWindowResult r{w.name, {}};
        for (const auto& [name, s] : pred_series) r.methods[name] = ps::mae_by_offset(truth, s, a.coarse_step, region, w);
        bundle.mae.push_back(std::move(r));
    }

    const auto depths = parse_named(a.depths);
    if (!depths.empty()) {
        if (a.truth_depth.empty()) ps::fail(ps::ErrorCode::InvalidArgument, "--depth needs --truth-depth");
        const auto truth_depth = ps::read_trajectory(a.truth_depth);
        for (const auto& [name, path] : depths) {
            const auto it = pred_series.find(name);
            if (it == pred_series.end()) ps::fail(ps::ErrorCode::InvalidArgument, "--depth " + name + " has no matching --pred");
            const auto traj = ps::read_trajectory(path);
            ps::RmseResult r{name, {}, ps::normalize_series(ps::rmse_series(truth, it->second, region)).values,
                ps::normalize_series(ps::rmse_series(truth_depth, traj, region)).values};
            for (const auto& f : truth.frames) r.times.push_back(f.time);
            bundle.rmse.push_back(std::move(r));
            bundle.extents.push_back({name, ps::format_time(traj.back().time),
                ps::flood_extent(truth_depth.back(), a.flood_threshold), ps::flood_extent(traj.back(), a.flood_threshold)});
        }
    }

    const fs::path out(a.out);
    fs::create_directories(out);
    ps::write_json_file(out / "results.json", ps::to_json(bundle));
    std::ofstream csv(out / "mae_by_offset.csv");
    csv << "window,method,offset_minutes,mae\n";
    for (const auto& w : bundle.mae)
        for (const auto& [name, m] : w.methods)
            for (const auto& [o, v] : m.by_offset) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.17g", v);
                csv << w.window << "," << name << "," << o << "," << buf << "\n";
            }
    for (const auto& w : bundle.mae)
        for (const auto& [name, m] : w.methods) {
            std::printf("%-10s %-10s", w.window.c_str(), name.c_str());
            for (const auto& [key, v] : m.grouped) std::printf("  %s: %.4f", key.c_str(), v);
            std::printf("\n");
        }
    return 0;
}

struct FloodArgs {
    std::string rain, dem, config, out;
};

int run_floodsim(const FloodArgs& a)
{
    const auto cfg = load_config(a.config);
    const auto series = ps::ingest_radar(fs::path(a.rain));
    const auto dem = ps::ingest_dem(a.dem, series.meta());
    ps::SimConfig sim = cfg.sim;
    if (a.config.empty()) sim.dt_seconds = series.step_minutes * 60.0;
    std::vector<ps::StepBalance> balance;
    const auto states = ps::run(series, dem, sim, &balance);
    const fs::path out = out_dir_or(a.out, cfg, "floodsim");
    ps::write_trajectory(out, states);
    std::ofstream csv(out / "mass_balance.csv");
    csv << "step,time,before,rain_in,infiltration_out,boundary_out,after,relative_error\n";
    double worst = 0.0;
    for (std::size_t i = 0; i < balance.size(); ++i) {
        const auto& b = balance[i];
        char buf[256];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.3g", b.before, b.rain_in, b.infiltration_out,
            b.boundary_out, b.after, b.relative_error());
        csv << i << "," << ps::format_time(states[i].time) << "," << buf << "\n";
        worst = std::max(worst, b.relative_error());
    }
    std::printf("%zu states written to %s; worst relative mass error %.3g\n", states.size(), out.string().c_str(), worst);
    return 0;
}

struct PlotArgs {
    std::string results, out;
};

int run_plot(const PlotArgs& a)
{
    const auto bundle = ps::bundle_from_json(ps::read_json_file(a.results, ps::ErrorCode::InvalidArgument));
    const auto files = ps::emit_figures(bundle, a.out);
    std::cout << files.size() << " files written to " << a.out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Radar precipitation frame interpolation and flood-impact analysis"};
    app.name("precip-slomo");
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic rain series and DEM");
    s->add_option("--scenario", synth.scenario, "translating-blob | linear-ramp | valley-storm")->required();
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--seed", synth.seed, "Random seed (default: PRECIP_SLOMO_SEED or scenario default)");
    s->add_option("--rows", synth.rows, "Override grid rows");
    s->add_option("--cols", synth.cols, "Override grid columns");
    s->add_option("--frames", synth.frames, "Override frame count");

    IngestArgs ingest;
    auto* in = app.add_subcommand("ingest", "Load radar frames from a manifest, crop, and store them");
    in->add_option("--manifest", ingest.manifest, "Dataset manifest (JSON)")->required();
    in->add_option("--bbox", ingest.bbox, "lat_min lon_min lat_max lon_max")->expected(4);
    in->add_option("--dem", ingest.dem, "DEM raster to resample onto the cropped grid");
    in->add_option("--out", ingest.out, "Output directory")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the interpolation networks");
    t->add_option("--config", tr.config, "Run configuration (JSON)")->required();
    t->add_option("--out", tr.out, "Checkpoint directory (default: <out_dir>/train)");
    t->add_option("--seed", tr.seed, "Seed");
    t->add_option("--epochs", tr.epochs, "Epochs");
    t->add_option("--batch-size", tr.batch_size, "Batch size");
    t->add_option("--crop-size", tr.crop_size, "Crop size");
    t->add_option("--lr", tr.lr, "Learning rate");
    t->add_option("--train-step", tr.train_step, "Triplet spacing in minutes")->capture_default_str();

    InterpArgs ip;
    auto* i = app.add_subcommand("interpolate", "Densify a coarse series");
    i->add_option("--config", ip.config, "Run configuration (JSON)")->required();
    i->add_option("--method", ip.method, "linear | model")->capture_default_str();
    i->add_option("--from-step", ip.from_step, "Coarse step in minutes")->capture_default_str();
    i->add_option("--to-step", ip.to_step, "Target step in minutes")->capture_default_str();
    i->add_option("--checkpoint", ip.checkpoint, "Model checkpoint (default: <checkpoint_dir>/model.ckpt)");
    i->add_option("--out", ip.out, "Output directory (default: <out_dir>/interp_<method>)");

    EvalArgs ev;
    auto* e = app.add_subcommand("evaluate", "Compute metrics against a reference series");
    e->add_option("--truth", ev.truth, "Reference series manifest")->required();
    e->add_option("--pred", ev.preds, "Predicted series manifest, as name=path (repeatable)")->required();
    e->add_option("--windows", ev.windows, "Averaging windows, as name=START/END (repeatable)");
    e->add_option("--coarse-step", ev.coarse_step, "Coarse step in minutes")->capture_default_str();
    e->add_option("--bbox", ev.bbox, "lat_min lon_min lat_max lon_max")->expected(4);
    e->add_option("--truth-depth", ev.truth_depth, "Reference depth trajectory manifest");
    e->add_option("--depth", ev.depths, "Depth trajectory per method, as name=path (repeatable)");
    e->add_option("--flood-threshold", ev.flood_threshold, "Flooded depth in m")->capture_default_str();
    e->add_option("--out", ev.out, "Output directory")->required();

    FloodArgs fl;
    auto* f = app.add_subcommand("floodsim", "Run the flood surrogate");
    f->add_option("--rain", fl.rain, "Rain series manifest")->required();
    f->add_option("--dem", fl.dem, "DEM raster")->required();
    f->add_option("--config", fl.config, "Run configuration (JSON); sim section is used");
    f->add_option("--out", fl.out, "Output directory (default: <out_dir>/floodsim)");

    PlotArgs pl;
    auto* p = app.add_subcommand("plot", "Render figures from evaluate's results.json");
    p->add_option("--results", pl.results, "results.json")->required();
    p->add_option("--out", pl.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        report("UsageError", err.what());
        std::cerr << "run 'precip-slomo --help' for usage\n";
        return 2;
    }

    try {
        if (*s) return run_synth(synth);
        if (*in) return run_ingest(ingest);
        if (*t) return run_train(tr);
        if (*i) return run_interpolate(ip);
        if (*e) return run_evaluate(ev);
        if (*f) return run_floodsim(fl);
        if (*p) return run_plot(pl);
    } catch (const ps::Error& err) {
        const std::string code(ps::to_string(err.code()));
        std::string msg = err.what();
        if (msg.rfind(code + ": ", 0) == 0) msg.erase(0, code.size() + 2);
        report(code, msg);
        return 1;
    } catch (const std::exception& err) {
        report("Internal", err.what());
        return 1;
    }
    return 2;
}
