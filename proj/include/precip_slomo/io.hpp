#pragma once
// Dataset manifests, radar and DEM ingestion, series and trajectory output,
// and the run configuration file.
//
// A manifest is a JSON document next to its frame files:
//
//   {"source": "...", "units": "mm/hr", "step_minutes": 5,
//    "missing_value": -1, "dtype": "float32", "scale": 1.0,
//    "grid": {"rows": R, "cols": C, "lat_sw": ..., "lon_sw": ...,
//             "cell_deg": ..., "crs_note": "..."},
//    "frames": [{"file": "f_00000.bin", "time": "2018-10-14T00:00:00Z"}, ...]}
//
// Frame files ending in .tif/.tiff are GeoTIFF; anything else is a flat
// little-endian array of R*C values of `dtype`, row-major, row 0 at the
// south edge. A frame entry may carry its own "grid", which must match the
// manifest grid. Stored values equal to `missing_value` are masked; the
// rest are multiplied by `scale` and converted from `units` to mm/hr.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "precip_slomo/checkpoint.hpp"
#include "precip_slomo/error.hpp"
#include "precip_slomo/floodsim.hpp"
#include "precip_slomo/geotiff.hpp"
#include "precip_slomo/grid.hpp"
#include "precip_slomo/time.hpp"
#include "precip_slomo/training.hpp"

namespace precip_slomo {

namespace fs = std::filesystem;
using nlohmann::json;

inline json meta_to_json(const GridMeta& m)
{
    return {{"rows", m.rows}, {"cols", m.cols}, {"lat_sw", m.lat_sw}, {"lon_sw", m.lon_sw}, {"cell_deg", m.cell_deg},
        {"crs_note", m.crs_note}};
}

inline GridMeta meta_from_json(const json& j)
{
    GridMeta m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.lat_sw = j.at("lat_sw").get<double>();
    m.lon_sw = j.at("lon_sw").get<double>();
    m.cell_deg = j.at("cell_deg").get<double>();
    m.crs_note = j.value("crs_note", std::string("EPSG:4326"));
    return m;
}

struct ManifestFrame {
    std::string file;
    Timestamp time{};
    std::optional<GridMeta> grid;
};

struct DatasetManifest {
    std::string source;
    std::string units = "mm/hr";
    int step_minutes = 5;
    double missing_value = -1.0;
    std::string dtype = "float32";
    double scale = 1.0;
    GridMeta grid;
    std::vector<ManifestFrame> frames;
    fs::path base_dir;  // frame files are relative to this

    void validate() const
    {
        expect(step_minutes > 0, ErrorCode::ManifestError, "step_minutes must be positive");
        expect(std::isfinite(scale) && scale > 0.0, ErrorCode::ManifestError, "scale must be positive");
        try {
            grid.validate();
        } catch (const Error& e) {
            fail(ErrorCode::ManifestError, e.what());
        }
        for (std::size_t i = 0; i < frames.size(); ++i) {
            expect(!frames[i].file.empty(), ErrorCode::ManifestError, "frame " + std::to_string(i) + " has no file");
            if (i == 0) continue;
            expect(frames[i].time > frames[i - 1].time, ErrorCode::ManifestError, "frame timestamps must increase");
            expect(frames[i].time - frames[i - 1].time == std::chrono::minutes(step_minutes), ErrorCode::ManifestError,
                "frames are not spaced by step_minutes");
        }
    }
};

inline json to_json(const DatasetManifest& m)
{
    json frames = json::array();
    for (const auto& f : m.frames) {
        json jf = {{"file", f.file}, {"time", format_time(f.time)}};
        if (f.grid) jf["grid"] = meta_to_json(*f.grid);
        frames.push_back(jf);
    }
    return {{"source", m.source}, {"units", m.units}, {"step_minutes", m.step_minutes},
        {"missing_value", m.missing_value}, {"dtype", m.dtype}, {"scale", m.scale}, {"grid", meta_to_json(m.grid)},
        {"frames", frames}};
}

inline json read_json_file(const fs::path& path, ErrorCode on_parse_error)
{
    std::ifstream f(path);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        fail(on_parse_error, path.string() + ": " + e.what());
    }
}

inline void write_json_file(const fs::path& path, const json& j)
{
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(ErrorCode::IoError, "cannot write " + path.string());
    f << j.dump(2) << "\n";
    if (!f) fail(ErrorCode::IoError, "write failed: " + path.string());
}

inline DatasetManifest load_manifest(const fs::path& path)
{
    const json j = read_json_file(path, ErrorCode::ManifestError);
    DatasetManifest m;
    try {
        m.source = j.value("source", std::string());
        m.units = j.at("units").get<std::string>();
        m.step_minutes = j.at("step_minutes").get<int>();
        m.missing_value = j.value("missing_value", -1.0);
        m.dtype = j.value("dtype", std::string("float32"));
        m.scale = j.value("scale", 1.0);
        m.grid = meta_from_json(j.at("grid"));
        for (const auto& jf : j.at("frames")) {
            ManifestFrame f;
            f.file = jf.at("file").get<std::string>();
            f.time = parse_time(jf.at("time").get<std::string>());
            if (jf.contains("grid")) f.grid = meta_from_json(jf.at("grid"));
            m.frames.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::ManifestError, path.string() + ": " + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::ManifestError, path.string() + ": " + e.what());
    }
    m.base_dir = path.parent_path();
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Flat binary grids

inline std::size_t dtype_size(const std::string& dtype)
{
    if (dtype == "uint8" || dtype == "int8") return 1;
    if (dtype == "uint16" || dtype == "int16") return 2;
    if (dtype == "uint32" || dtype == "int32" || dtype == "float32") return 4;
    if (dtype == "float64") return 8;
    fail(ErrorCode::ManifestError, "unknown dtype '" + dtype + "'");
}

inline Grid<double> read_flat_grid(const fs::path& path, std::size_t rows, std::size_t cols, const std::string& dtype)
{
    const std::size_t sz = dtype_size(dtype);
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
    const std::vector<unsigned char> b{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    if (b.size() != rows * cols * sz)
        fail(ErrorCode::GridMismatch, path.string() + ": " + std::to_string(b.size()) + " bytes, expected "
                + std::to_string(rows * cols * sz) + " for a " + std::to_string(rows) + "x" + std::to_string(cols)
                + " " + dtype + " grid");
    Grid<double> g(rows, cols);
    for (std::size_t i = 0; i < g.size(); ++i) {
        std::uint64_t v = 0;
        for (std::size_t k = 0; k < sz; ++k) v |= static_cast<std::uint64_t>(b[i * sz + k]) << (8 * k);
        if (dtype == "uint8") g[i] = static_cast<double>(v);
        else if (dtype == "int8") g[i] = static_cast<std::int8_t>(v);
        else if (dtype == "uint16") g[i] = static_cast<double>(v);
        else if (dtype == "int16") g[i] = static_cast<std::int16_t>(v);
        else if (dtype == "uint32") g[i] = static_cast<double>(v);
        else if (dtype == "int32") g[i] = static_cast<std::int32_t>(v);
        else if (dtype == "float32") g[i] = std::bit_cast<float>(static_cast<std::uint32_t>(v));
        else g[i] = std::bit_cast<double>(v);
    }
    return g;
}

template <class T>
void write_flat_grid(const fs::path& path, const Grid<T>& g)
{
    static_assert(std::endian::native == std::endian::little, "flat grids are written little-endian");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::IoError, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(g.storage().data()), static_cast<std::streamsize>(g.size() * sizeof(T)));
    if (!f) fail(ErrorCode::IoError, "write failed: " + path.string());
}

inline bool is_geotiff(const fs::path& p)
{
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".tif" || ext == ".tiff";
}

// ---------------------------------------------------------------------------
// Units

/// Factor taking a stored value in `units` to mm/hr for frames `step_minutes` apart.
inline double unit_factor(std::string units, int step_minutes)
{
    std::transform(units.begin(), units.end(), units.begin(), [](unsigned char c) { return std::tolower(c); });
    units.erase(std::remove(units.begin(), units.end(), ' '), units.end());
    const double per_step = 60.0 / step_minutes;
    if (units == "mm/hr" || units == "mm/h" || units == "mmh-1" || units == "mm.h-1") return 1.0;
    if (units == "mm/min") return 60.0;
    if (units == "mm/s" || units == "kgm-2s-1" || units == "kg/m2/s") return 3600.0;
    if (units == "m/s") return 3.6e6;
    if (units == "in/hr" || units == "in/h") return 25.4;
    // Accumulations over one frame step.
    if (units == "mm") return per_step;
    if (units == "1/100mm" || units == "0.01mm") return 0.01 * per_step;
    if (units == "1/10mm" || units == "0.1mm") return 0.1 * per_step;
    fail(ErrorCode::UnitUnknown, "unknown precipitation units '" + units + "'");
}

namespace detail {

struct LoadedGrid {
    Grid<double> values;
    Mask missing;
};

inline LoadedGrid load_manifest_frame(const DatasetManifest& m, const ManifestFrame& f)
{
    const fs::path path = m.base_dir / f.file;
    const GridMeta expected = f.grid.value_or(m.grid);
    if (!aligned(expected, m.grid))
        fail(ErrorCode::GridMismatch, f.file + " is declared on a different grid than the manifest");
    Grid<double> raw;
    std::optional<double> nodata;
    if (is_geotiff(path)) {
        auto r = read_geotiff(path);
        if (r.georeferenced ? !aligned(r.meta, m.grid) : !r.values.same_shape(Grid<double>(m.grid.rows, m.grid.cols)))
            fail(ErrorCode::GridMismatch, f.file + " does not match the manifest grid");
        raw = std::move(r.values);
        nodata = r.nodata;
    } else {
        raw = read_flat_grid(path, m.grid.rows, m.grid.cols, m.dtype);
    }
    LoadedGrid out{Grid<double>(raw.rows(), raw.cols()), Mask(raw.rows(), raw.cols(), 0)};
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = raw[i];
        const bool sentinel = v == m.missing_value || (nodata && (v == *nodata || (std::isnan(*nodata) && std::isnan(v))));
        if (sentinel || !std::isfinite(v)) {
            out.missing[i] = 1;
            continue;
        }
        out.values[i] = v * m.scale;
    }
    return out;
}

} // namespace detail

inline FrameSeries ingest_radar(const DatasetManifest& m)
{
    const double factor = unit_factor(m.units, m.step_minutes);
    FrameSeries s;
    s.step_minutes = m.step_minutes;
    for (const auto& f : m.frames) {
        auto g = detail::load_manifest_frame(m, f);
        PrecipFrame frame = PrecipFrame::filled(m.grid, f.time);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            frame.missing[i] = g.missing[i];
            frame.values[i] = g.missing[i] ? 0.0f : static_cast<float>(g.values[i] * factor);
        }
        s.frames.push_back(std::move(frame));
    }
    s.validate();
    return s;
}

inline FrameSeries ingest_radar(const fs::path& manifest_path) { return ingest_radar(load_manifest(manifest_path)); }

/// Writes frames as float32 flat grids (missing cells as -1) plus manifest.json.
inline fs::path write_series(const fs::path& dir, const FrameSeries& s, const std::string& source)
{
    expect(!s.frames.empty(), ErrorCode::InvalidArgument, "cannot write an empty series");
    fs::create_directories(dir);
    DatasetManifest m;
    m.source = source;
    m.step_minutes = s.step_minutes;
    m.grid = s.meta();
    for (std::size_t i = 0; i < s.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05zu.bin", i);
        Field g = s.frames[i].values;
        for (std::size_t k = 0; k < g.size(); ++k)
            if (s.frames[i].missing[k]) g[k] = -1.0f;
        write_flat_grid(dir / name, g);
        m.frames.push_back({name, s.frames[i].time, std::nullopt});
    }
    write_json_file(dir / "manifest.json", to_json(m));
    return dir / "manifest.json";
}

// ---------------------------------------------------------------------------
// DEM

/// Reads a DEM raster: a GeoTIFF, or a manifest (.json) with a single frame
/// in meters. No-data cells become NaN.
inline Raster read_dem_raster(const fs::path& path)
{
    if (is_geotiff(path)) {
        auto r = read_geotiff(path);
        if (!r.georeferenced) fail(ErrorCode::ExtentMismatch, path.string() + " carries no georeference");
        if (r.nodata)
            for (auto& v : r.values.values())
                if (v == *r.nodata) v = std::nan("");
        return r;
    }
    const auto m = load_manifest(path);
    expect(m.frames.size() == 1, ErrorCode::ManifestError, "a DEM manifest lists exactly one grid");
    expect(m.units == "m", ErrorCode::UnitUnknown, "DEM units must be 'm'");
    auto g = detail::load_manifest_frame(m, m.frames.front());
    for (std::size_t i = 0; i < g.values.size(); ++i)
        if (g.missing[i]) g.values[i] = std::nan("");
    return {m.grid, std::move(g.values), std::nullopt, true};
}

inline Dem ingest_dem(const Raster& raster, const GridMeta& target)
{
    target.validate();
    Grid<double> filled = raster.values, hole(raster.values.rows(), raster.values.cols());
    for (std::size_t i = 0; i < filled.size(); ++i)
        if (std::isnan(filled[i])) {
            filled[i] = 0.0;
            hole[i] = 1.0;
        }
    Dem dem{target, resample_grid(filled, raster.meta, target), std::nullopt, std::nullopt};
    const auto holes = resample_grid(hole, raster.meta, target);
    for (double v : holes.values())
        expect(v == 0.0, ErrorCode::ExtentMismatch, "DEM has no data over part of the target grid");
    return terrain_gradient(std::move(dem));
}

inline Dem ingest_dem(const fs::path& path, const GridMeta& target) { return ingest_dem(read_dem_raster(path), target); }

inline void write_dem(const fs::path& path, const Dem& dem)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_geotiff(path, dem.meta, dem.elevation, -9999.0);
}

// ---------------------------------------------------------------------------
// Depth trajectories

inline fs::path write_trajectory(const fs::path& dir, const std::vector<FloodState>& states)
{
    expect(!states.empty(), ErrorCode::InvalidArgument, "cannot write an empty trajectory");
    fs::create_directories(dir);
    json times = json::array(), files = json::array();
    for (std::size_t i = 0; i < states.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "depth_%05zu.bin", i);
        write_flat_grid(dir / name, states[i].depth);
        times.push_back(format_time(states[i].time));
        files.push_back(name);
    }
    const auto& meta = states.front().meta;
    const json manifest = {{"kind", "depth_trajectory"}, {"units", "m"}, {"dtype", "float64"}, {"scale", 1.0},
        {"dims", {states.size(), meta.rows, meta.cols}}, {"grid", meta_to_json(meta)}, {"times", times},
        {"files", files}};
    write_json_file(dir / "manifest.json", manifest);
    return dir / "manifest.json";
}

inline std::vector<FloodState> read_trajectory(const fs::path& manifest_path)
{
    const json j = read_json_file(manifest_path, ErrorCode::ManifestError);
    std::vector<FloodState> out;
    try {
        const auto meta = meta_from_json(j.at("grid"));
        const auto& times = j.at("times");
        const auto& files = j.at("files");
        expect(times.size() == files.size(), ErrorCode::ManifestError, "file count differs from timestamp count");
        const auto dtype = j.value("dtype", std::string("float64"));
        const double scale = j.value("scale", 1.0);
        for (std::size_t i = 0; i < files.size(); ++i) {
            auto g = read_flat_grid(manifest_path.parent_path() / files[i].get<std::string>(), meta.rows, meta.cols, dtype);
            for (auto& v : g.values()) v *= scale;
            out.push_back({meta, std::move(g), parse_time(times[i].get<std::string>())});
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::ManifestError, manifest_path.string() + ": " + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunPaths {
    fs::path radar_manifest;
    fs::path dem;
    fs::path out_dir;

    friend bool operator==(const RunPaths&, const RunPaths&) = default;
};

struct RunConfig {
    RunPaths paths;
    std::optional<BBox> bbox;
    TrainConfig train;
    SimConfig sim;
    std::vector<std::string> methods{"linear", "model"};
    std::uint64_t seed = 0;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Seed default: PRECIP_SLOMO_SEED when set, else 0.
inline std::uint64_t default_seed()
{
    if (const char* s = std::getenv("PRECIP_SLOMO_SEED"); s && *s) {
        char* end = nullptr;
        const auto v = std::strtoull(s, &end, 10);
        if (end && *end == '\0') return v;
        fail(ErrorCode::ConfigError, "PRECIP_SLOMO_SEED is not an unsigned integer");
    }
    return 0;
}

inline json to_json(const RunConfig& c)
{
    const auto& t = c.train;
    json j = {{"paths",
                  {{"radar_manifest", c.paths.radar_manifest.string()}, {"dem", c.paths.dem.string()},
                      {"out_dir", c.paths.out_dir.string()}}},
        {"train",
            {{"epochs", t.epochs}, {"seed", t.seed}, {"batch_size", t.batch_size}, {"crop_size", t.crop_size},
                {"learning_rate", t.learning_rate},
                {"weights",
                    {{"reconstruction", t.weights.reconstruction}, {"perceptual", t.weights.perceptual},
                        {"warping", t.weights.warping}, {"smoothness", t.weights.smoothness}}},
                {"checkpoint_dir", t.checkpoint_dir.string()}, {"flow_spec", spec_to_json(t.flow_spec)},
                {"refine_spec", spec_to_json(t.refine_spec)}}},
        {"sim",
            {{"dt_seconds", c.sim.dt_seconds}, {"infiltration_mm_per_hr", c.sim.infiltration_mm_per_hr},
                {"routing_coefficient", c.sim.routing_coefficient}, {"sim_hours", c.sim.sim_hours}}},
        {"methods", c.methods}, {"seed", c.seed}};
    if (c.bbox)
        j["bbox"] = {{"lat_min", c.bbox->lat_min}, {"lon_min", c.bbox->lon_min}, {"lat_max", c.bbox->lat_max},
            {"lon_max", c.bbox->lon_max}};
    return j;
}

/// Missing keys keep their defaults. A missing train.seed follows `seed`.
inline RunConfig run_config_from_json(const json& j)
{
    RunConfig c;
    try {
        c.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : default_seed();
        c.train.seed = c.seed;
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            c.paths.radar_manifest = p.value("radar_manifest", std::string());
            c.paths.dem = p.value("dem", std::string());
            c.paths.out_dir = p.value("out_dir", std::string());
        }
        if (j.contains("bbox"))
            c.bbox = BBox{j["bbox"].at("lat_min").get<double>(), j["bbox"].at("lon_min").get<double>(),
                j["bbox"].at("lat_max").get<double>(), j["bbox"].at("lon_max").get<double>()};
        if (j.contains("train")) {
            const auto& t = j.at("train");
            auto& o = c.train;
            o.epochs = t.value("epochs", o.epochs);
            o.seed = t.value("seed", o.seed);
            o.batch_size = t.value("batch_size", o.batch_size);
            o.crop_size = t.value("crop_size", o.crop_size);
            o.learning_rate = t.value("learning_rate", o.learning_rate);
            if (t.contains("weights")) {
                const auto& w = t.at("weights");
                o.weights.reconstruction = w.value("reconstruction", o.weights.reconstruction);
                o.weights.perceptual = w.value("perceptual", o.weights.perceptual);
                o.weights.warping = w.value("warping", o.weights.warping);
                o.weights.smoothness = w.value("smoothness", o.weights.smoothness);
            }
            o.checkpoint_dir = t.value("checkpoint_dir", std::string());
            if (t.contains("flow_spec")) {
                auto merged = spec_to_json(o.flow_spec);
                merged.merge_patch(t.at("flow_spec"));
                o.flow_spec = spec_from_json(merged);
            }
            if (t.contains("refine_spec")) {
                auto merged = spec_to_json(o.refine_spec);
                merged.merge_patch(t.at("refine_spec"));
                o.refine_spec = spec_from_json(merged);
            }
        }
        if (j.contains("sim")) {
            const auto& s = j.at("sim");
            c.sim.dt_seconds = s.value("dt_seconds", c.sim.dt_seconds);
            c.sim.infiltration_mm_per_hr = s.value("infiltration_mm_per_hr", c.sim.infiltration_mm_per_hr);
            c.sim.routing_coefficient = s.value("routing_coefficient", c.sim.routing_coefficient);
            c.sim.sim_hours = s.value("sim_hours", c.sim.sim_hours);
        }
        if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, e.what());
    }
    if (c.bbox) {
        try {
            c.bbox->validate();
        } catch (const Error& e) {
            fail(ErrorCode::ConfigError, e.what());
        }
    }
    for (const auto& m : c.methods)
        expect(m == "linear" || m == "model", ErrorCode::ConfigError, "unknown method '" + m + "'");
    c.sim.validate();
    return c;
}

/// Relative paths in the file resolve against its directory. With
/// `check_paths`, the radar manifest and DEM must exist when named.
inline RunConfig load_run_config(const fs::path& path, bool check_paths = true)
{
    auto c = run_config_from_json(read_json_file(path, ErrorCode::ConfigError));
    const auto base = path.parent_path();
    auto resolve = [&](fs::path& p) {
        if (!p.empty() && p.is_relative()) p = base / p;
    };
    resolve(c.paths.radar_manifest);
    resolve(c.paths.dem);
    resolve(c.paths.out_dir);
    resolve(c.train.checkpoint_dir);
    if (check_paths)
        for (const auto* p : {&c.paths.radar_manifest, &c.paths.dem})
            if (!p->empty() && !fs::exists(*p)) fail(ErrorCode::ConfigError, "path does not exist: " + p->string());
    return c;
}

} // namespace precip_slomo
