#pragma once
// Metrics over gridded series and figure emission (SVG + CSV).

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "precip_slomo/error.hpp"
#include "precip_slomo/floodsim.hpp"
#include "precip_slomo/grid.hpp"
#include "precip_slomo/time.hpp"

namespace precip_slomo {

/// Cells whose centers fall inside `region` (all cells when absent).
inline Mask region_mask(const GridMeta& meta, const std::optional<BBox>& region)
{
    Mask m(meta.rows, meta.cols, 1);
    if (!region) return m;
    region->validate();
    std::size_t n = 0;
    for (std::size_t r = 0; r < meta.rows; ++r)
        for (std::size_t c = 0; c < meta.cols; ++c) {
            m(r, c) = region->contains(meta.center_lat(static_cast<double>(r)), meta.center_lon(static_cast<double>(c)),
                1e-9);
            n += m(r, c);
        }
    expect(n > 0, ErrorCode::EmptyCrop, "region contains no cell centers");
    return m;
}

struct TimeWindow {
    std::string name;
    Timestamp start{};
    Timestamp end{};  // inclusive

    bool contains(Timestamp t) const noexcept { return t >= start && t <= end; }
};

struct MaeByOffset {
    int coarse_step_minutes = 0;
    std::map<int, double> by_offset;  // minutes past the preceding coarse frame
    std::map<std::string, double> grouped;  // "5|25" averages the two offsets
};

inline std::string offset_group_key(int offset, int coarse_step)
{
    const int lo = std::min(offset, coarse_step - offset), hi = std::max(offset, coarse_step - offset);
    return lo == hi ? std::to_string(lo) : std::to_string(lo) + "|" + std::to_string(hi);
}

namespace detail {

inline void require_matching(const FrameSeries& a, const FrameSeries& b)
{
    if (a.size() != b.size()) fail(ErrorCode::TimestampMismatch, "series lengths differ");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.frames[i].time != b.frames[i].time)
            fail(ErrorCode::TimestampMismatch, "frame " + std::to_string(i) + ": " + format_time(a.frames[i].time)
                    + " vs " + format_time(b.frames[i].time));
        if (!aligned(a.frames[i].meta, b.frames[i].meta)) fail(ErrorCode::GridMismatch, "series grids differ");
    }
}

} // namespace detail

/// MAE in mm/hr per offset; offsets are measured from the first truth frame,
/// which is taken to be a coarse frame. Offset-0 frames are skipped.
inline MaeByOffset mae_by_offset(const FrameSeries& truth, const FrameSeries& pred, int coarse_step_minutes,
    const std::optional<BBox>& region = std::nullopt, const std::optional<TimeWindow>& window = std::nullopt)
{
    detail::require_matching(truth, pred);
    expect(coarse_step_minutes > 0 && coarse_step_minutes % truth.step_minutes == 0, ErrorCode::IncompatibleSteps,
        "coarse step must be a multiple of the series step");
    MaeByOffset out;
    out.coarse_step_minutes = coarse_step_minutes;
    if (truth.frames.empty()) return out;
    const Mask roi = region_mask(truth.meta(), region);
    std::map<int, std::pair<double, std::size_t>> acc;
    for (int o = truth.step_minutes; o < coarse_step_minutes; o += truth.step_minutes) acc[o] = {0.0, 0};
    const auto t0 = truth.frames.front().time;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto& a = truth.frames[i];
        const auto& b = pred.frames[i];
        if (window && !window->contains(a.time)) continue;
        const auto minutes = std::chrono::duration_cast<std::chrono::minutes>(a.time - t0).count();
        const int offset = static_cast<int>(minutes % coarse_step_minutes);
        if (offset == 0) continue;
        auto& [sum, n] = acc[offset];
        for (std::size_t k = 0; k < a.values.size(); ++k) {
            if (!roi[k] || a.is_missing(k) || b.is_missing(k)) continue;
            sum += std::abs(static_cast<double>(a.values[k]) - static_cast<double>(b.values[k]));
            ++n;
        }
    }
    for (const auto& [o, sn] : acc)
        out.by_offset[o] = sn.second ? sn.first / static_cast<double>(sn.second) : std::nan("");
    for (const auto& [o, v] : out.by_offset) {
        const int mirror = coarse_step_minutes - o;
        if (mirror < o) continue;
        out.grouped[offset_group_key(o, coarse_step_minutes)] = 0.5 * (v + out.by_offset.at(mirror));
    }
    return out;
}

namespace detail {

template <class GetA, class GetB>
double rmse_frame(std::size_t cells, const Mask& roi, GetA a, GetB b)
{
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < cells; ++k) {
        if (!roi[k]) continue;
        const double d = a(k) - b(k);
        s += d * d;
        ++n;
    }
    return n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

} // namespace detail

/// Per-frame RMSE in mm/hr. Cells missing in either series are skipped.
inline std::vector<double> rmse_series(
    const FrameSeries& a, const FrameSeries& b, const std::optional<BBox>& region = std::nullopt)
{
    detail::require_matching(a, b);
    std::vector<double> out;
    if (a.frames.empty()) return out;
    const Mask roi = region_mask(a.meta(), region);
    out.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& fa = a.frames[i];
        const auto& fb = b.frames[i];
        Mask m = roi;
        for (std::size_t k = 0; k < m.size(); ++k) m[k] = m[k] && !fa.is_missing(k) && !fb.is_missing(k);
        out.push_back(detail::rmse_frame(m.size(), m, [&](std::size_t k) { return double(fa.values[k]); },
            [&](std::size_t k) { return double(fb.values[k]); }));
    }
    return out;
}

/// Per-state RMSE of flood depth in m.
inline std::vector<double> rmse_series(const std::vector<FloodState>& a, const std::vector<FloodState>& b,
    const std::optional<BBox>& region = std::nullopt)
{
    if (a.size() != b.size()) fail(ErrorCode::TimestampMismatch, "trajectory lengths differ");
    std::vector<double> out;
    if (a.empty()) return out;
    const Mask roi = region_mask(a.front().meta, region);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].time != b[i].time) fail(ErrorCode::TimestampMismatch, "trajectory timestamps differ");
        if (!aligned(a[i].meta, b[i].meta)) fail(ErrorCode::GridMismatch, "trajectory grids differ");
        out.push_back(detail::rmse_frame(roi.size(), roi, [&](std::size_t k) { return a[i].depth[k]; },
            [&](std::size_t k) { return b[i].depth[k]; }));
    }
    return out;
}

struct NormalizedSeries {
    std::vector<double> values;
    bool all_zero = false;  // nothing to divide by; values are zeros
};

inline NormalizedSeries normalize_series(const std::vector<double>& values)
{
    NormalizedSeries out{values, false};
    double peak = 0.0;
    for (double v : values) {
        expect(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidArgument, "series values must be finite and >= 0");
        peak = std::max(peak, v);
    }
    if (peak == 0.0) {
        out.all_zero = true;
        std::fill(out.values.begin(), out.values.end(), 0.0);
        return out;
    }
    for (auto& v : out.values) v /= peak;
    return out;
}

/// Mean over each inclusive index window.
inline std::vector<double> window_aggregate(
    const std::vector<double>& series, const std::vector<std::pair<std::size_t, std::size_t>>& windows)
{
    std::vector<double> out;
    out.reserve(windows.size());
    for (const auto& [lo, hi] : windows) {
        if (lo > hi || hi >= series.size())
            fail(ErrorCode::EmptyWindow,
                "window [" + std::to_string(lo) + ", " + std::to_string(hi) + "] outside series of "
                    + std::to_string(series.size()));
        double s = 0.0;
        for (std::size_t i = lo; i <= hi; ++i) s += series[i];
        out.push_back(s / static_cast<double>(hi - lo + 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Results bundle

struct MaeWindowResult {
    std::string window;
    std::map<std::string, MaeByOffset> methods;
};

struct RmseResult {
    std::string method;
    std::vector<Timestamp> times;
    std::vector<double> precip;  // normalized
    std::vector<double> depth;  // normalized
};

struct ExtentResult {
    std::string method;
    std::string label;  // e.g. the timestamp shown
    Mask truth;
    Mask pred;
};

struct ResultsBundle {
    std::vector<MaeWindowResult> mae;
    std::vector<RmseResult> rmse;
    std::vector<ExtentResult> extents;
};

namespace detail {

// JSON has no NaN; offsets without data travel as null.
inline nlohmann::json num_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
inline double num_from(const nlohmann::json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

} // namespace detail

inline nlohmann::json to_json(const MaeByOffset& m)
{
    nlohmann::json j = {{"coarse_step_minutes", m.coarse_step_minutes}, {"by_offset", nlohmann::json::object()},
        {"grouped", nlohmann::json::object()}};
    for (const auto& [o, v] : m.by_offset) j["by_offset"][std::to_string(o)] = detail::num_or_null(v);
    for (const auto& [k, v] : m.grouped) j["grouped"][k] = detail::num_or_null(v);
    return j;
}

inline MaeByOffset mae_from_json(const nlohmann::json& j)
{
    MaeByOffset m;
    m.coarse_step_minutes = j.at("coarse_step_minutes").get<int>();
    for (const auto& [k, v] : j.at("by_offset").items()) m.by_offset[std::stoi(k)] = detail::num_from(v);
    for (const auto& [k, v] : j.at("grouped").items()) m.grouped[k] = detail::num_from(v);
    return m;
}

namespace detail {

inline nlohmann::json mask_to_json(const Mask& m)
{
    std::string bits(m.size(), '0');
    for (std::size_t i = 0; i < m.size(); ++i) bits[i] = m[i] ? '1' : '0';
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"bits", bits}};
}

inline Mask mask_from_json(const nlohmann::json& j)
{
    Mask m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto bits = j.at("bits").get<std::string>();
    expect(bits.size() == m.size(), ErrorCode::InvalidArgument, "mask bit count does not match its shape");
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = bits[i] == '1';
    return m;
}

} // namespace detail

inline nlohmann::json to_json(const ResultsBundle& b)
{
    nlohmann::json j = {{"mae", nlohmann::json::array()}, {"rmse", nlohmann::json::array()},
        {"extents", nlohmann::json::array()}};
    for (const auto& w : b.mae) {
        nlohmann::json jw = {{"window", w.window}, {"methods", nlohmann::json::object()}};
        for (const auto& [name, m] : w.methods) jw["methods"][name] = to_json(m);
        j["mae"].push_back(jw);
    }
    for (const auto& r : b.rmse) {
        nlohmann::json times = nlohmann::json::array();
        for (auto t : r.times) times.push_back(format_time(t));
        j["rmse"].push_back({{"method", r.method}, {"times", times}, {"precip", r.precip}, {"depth", r.depth}});
    }
    for (const auto& e : b.extents)
        j["extents"].push_back({{"method", e.method}, {"label", e.label}, {"truth", detail::mask_to_json(e.truth)},
            {"pred", detail::mask_to_json(e.pred)}});
    return j;
}

inline ResultsBundle bundle_from_json(const nlohmann::json& j)
{
    ResultsBundle b;
    try {
        for (const auto& jw : j.at("mae")) {
            MaeWindowResult w;
            w.window = jw.at("window").get<std::string>();
            for (const auto& [name, m] : jw.at("methods").items()) w.methods[name] = mae_from_json(m);
            b.mae.push_back(std::move(w));
        }
        for (const auto& jr : j.value("rmse", nlohmann::json::array())) {
            RmseResult r;
            r.method = jr.at("method").get<std::string>();
            for (const auto& t : jr.at("times")) r.times.push_back(parse_time(t.get<std::string>()));
            r.precip = jr.at("precip").get<std::vector<double>>();
            r.depth = jr.at("depth").get<std::vector<double>>();
            b.rmse.push_back(std::move(r));
        }
        for (const auto& je : j.value("extents", nlohmann::json::array()))
            b.extents.push_back({je.at("method").get<std::string>(), je.value("label", std::string()),
                detail::mask_from_json(je.at("truth")), detail::mask_from_json(je.at("pred"))});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed results bundle: ") + e.what());
    }
    return b;
}

// ---------------------------------------------------------------------------
// Figures

namespace detail {

inline std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string px(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string slug(const std::string& s)
{
    std::string out;
    for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
    return out.empty() ? "_" : out;
}

inline std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    f << text;
    if (!f) fail(ErrorCode::IoError, "write failed: " + path.string());
}

inline constexpr const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"};

struct Series {
    std::string name;
    std::vector<double> y;
};

/// Line chart over x positions; y axis from 0 to the largest value.
inline std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
    const std::vector<double>& x, const std::vector<Series>& series)
{
    const double w = 640, h = 400, left = 70, right = 150, top = 40, bottom = 50;
    double xmin = x.empty() ? 0.0 : x.front(), xmax = x.empty() ? 1.0 : x.back(), ymax = 0.0;
    for (const auto& s : series)
        for (double v : s.y)
            if (std::isfinite(v)) ymax = std::max(ymax, v);
    if (ymax <= 0.0) ymax = 1.0;
    if (xmax <= xmin) xmax = xmin + 1.0;
    auto sx = [&](double v) { return left + (v - xmin) / (xmax - xmin) * (w - left - right); };
    auto sy = [&](double v) { return h - bottom - v / ymax * (h - top - bottom); };
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
      << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = ymax * k / 4.0;
        o << "<text x=\"" << left - 6 << "\" y=\"" << px(sy(v) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
          << px(v) << "</text>\n";
    }
    const std::size_t ticks = std::min<std::size_t>(x.size(), 8);
    for (std::size_t k = 0; k < ticks; ++k) {
        const std::size_t i = ticks == 1 ? 0 : k * (x.size() - 1) / (ticks - 1);
        o << "<text x=\"" << px(sx(x[i])) << "\" y=\"" << h - bottom + 16
          << "\" text-anchor=\"middle\" font-size=\"11\">" << num(x[i]) << "</text>\n";
    }
    o << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << xml_escape(x_label) << "</text>\n";
    o << "<text x=\"16\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << h / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % std::size(kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < x.size() && i < series[s].y.size(); ++i)
            if (std::isfinite(series[s].y[i])) o << px(sx(x[i])) << "," << px(sy(series[s].y[i])) << " ";
        o << "\"/>\n";
        if (x.size() <= 16)
            for (std::size_t i = 0; i < x.size() && i < series[s].y.size(); ++i)
                if (std::isfinite(series[s].y[i]))
                    o << "<circle cx=\"" << px(sx(x[i])) << "\" cy=\"" << px(sy(series[s].y[i])) << "\" r=\"3\" fill=\""
                      << color << "\"/>\n";
        const double ly = top + 18.0 * static_cast<double>(s);
        o << "<rect x=\"" << w - right + 12 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"" << color
          << "\"/>\n";
        o << "<text x=\"" << w - right + 30 << "\" y=\"" << ly + 10 << "\" font-size=\"12\">"
          << xml_escape(series[s].name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

inline std::string extent_map(const std::string& title, const Mask& truth, const Grid<ExtentDiff>& diff)
{
    const double cell = std::clamp(480.0 / static_cast<double>(std::max(truth.rows(), truth.cols())), 2.0, 24.0);
    const double w = cell * static_cast<double>(truth.cols()) + 20, h = cell * static_cast<double>(truth.rows()) + 60;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(w) << "\" height=\"" << px(h) << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"10\" y=\"20\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
    o << "<text x=\"10\" y=\"38\" font-size=\"11\">grey: flooded in both, red: missing, blue: extra</text>\n";
    for (std::size_t r = 0; r < truth.rows(); ++r)
        for (std::size_t c = 0; c < truth.cols(); ++c) {
            const char* fill = nullptr;
            switch (diff(r, c)) {
            case ExtentDiff::missing: fill = "red"; break;
            case ExtentDiff::extra: fill = "blue"; break;
            case ExtentDiff::same: fill = truth(r, c) ? "#888888" : nullptr; break;
            }
            if (!fill) continue;
            // Row 0 is the southern edge, drawn at the bottom.
            const double y = 50 + cell * static_cast<double>(truth.rows() - 1 - r);
            o << "<rect x=\"" << px(10 + cell * static_cast<double>(c)) << "\" y=\"" << px(y) << "\" width=\""
              << px(cell) << "\" height=\"" << px(cell) << "\" fill=\"" << fill << "\"/>\n";
        }
    o << "</svg>\n";
    return o.str();
}

} // namespace detail

/// Writes one MAE chart per window, one normalized-RMSE chart per method and
/// one extent map per method, each with a CSV of the plotted numbers.
/// Returns the written file names.
inline std::vector<std::string> emit_figures(const ResultsBundle& bundle, const std::filesystem::path& out_dir)
{
    expect(!bundle.mae.empty(), ErrorCode::InvalidArgument, "results bundle has no MAE windows");
    for (const auto& w : bundle.mae)
        expect(!w.methods.empty(), ErrorCode::InvalidArgument, "window '" + w.window + "' has no methods");
    for (const auto& r : bundle.rmse)
        expect(r.precip.size() == r.times.size() && r.depth.size() == r.times.size(), ErrorCode::InvalidArgument,
            "RMSE series lengths differ");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

    std::vector<std::string> written;
    auto put = [&](const std::string& name, const std::string& text) {
        detail::write_text(out_dir / name, text);
        written.push_back(name);
    };

    for (const auto& w : bundle.mae) {
        std::vector<int> offsets;
        for (const auto& [o, v] : w.methods.begin()->second.by_offset) offsets.push_back(o);
        std::string csv = "offset_minutes";
        for (const auto& [name, m] : w.methods) csv += "," + name;
        csv += "\n";
        std::vector<detail::Series> series;
        for (const auto& [name, m] : w.methods) series.push_back({name, {}});
        for (int o : offsets) {
            csv += std::to_string(o);
            std::size_t s = 0;
            for (const auto& [name, m] : w.methods) {
                const auto it = m.by_offset.find(o);
                const double v = it == m.by_offset.end() ? std::nan("") : it->second;
                csv += "," + detail::num(v);
                series[s++].y.push_back(v);
            }
            csv += "\n";
        }
        std::string grouped = "group";
        for (const auto& [name, m] : w.methods) grouped += "," + name;
        grouped += "\n";
        for (const auto& [key, v0] : w.methods.begin()->second.grouped) {
            grouped += key;
            for (const auto& [name, m] : w.methods) {
                const auto it = m.grouped.find(key);
                grouped += "," + detail::num(it == m.grouped.end() ? std::nan("") : it->second);
            }
            grouped += "\n";
        }
        std::vector<double> x(offsets.begin(), offsets.end());
        const std::string stem = "mae_" + detail::slug(w.window);
        put(stem + ".csv", csv);
        put(stem + "_grouped.csv", grouped);
        put(stem + ".svg",
            detail::line_chart("MAE by interpolation offset (" + w.window + ")", "minutes after coarse frame",
                "MAE (mm/hr)", x, series));
    }

    for (const auto& r : bundle.rmse) {
        std::string csv = "step,time,precip_rmse_normalized,depth_rmse_normalized\n";
        std::vector<double> x;
        for (std::size_t i = 0; i < r.times.size(); ++i) {
            csv += std::to_string(i) + "," + format_time(r.times[i]) + "," + detail::num(r.precip[i]) + ","
                + detail::num(r.depth[i]) + "\n";
            x.push_back(static_cast<double>(i));
        }
        const std::string stem = "rmse_" + detail::slug(r.method);
        put(stem + ".csv", csv);
        put(stem + ".svg",
            detail::line_chart("Normalized RMSE, " + r.method + " vs reference", "step", "normalized RMSE", x,
                {{"precipitation", r.precip}, {"flood depth", r.depth}}));
    }

    for (const auto& e : bundle.extents) {
        const auto diff = extent_diff(e.truth, e.pred);
        std::string csv = "row,col,truth,pred,diff\n";
        for (std::size_t r = 0; r < diff.rows(); ++r)
            for (std::size_t c = 0; c < diff.cols(); ++c) {
                static constexpr const char* names[] = {"same", "missing", "extra"};
                csv += std::to_string(r) + "," + std::to_string(c) + "," + std::to_string(int(e.truth(r, c))) + ","
                    + std::to_string(int(e.pred(r, c))) + "," + names[static_cast<int>(diff(r, c))] + "\n";
            }
        const std::string stem = "extent_" + detail::slug(e.method);
        put(stem + ".csv", csv);
        put(stem + ".svg",
            detail::extent_map("Flood extent, " + e.method + (e.label.empty() ? "" : " at " + e.label), e.truth, diff));
    }
    return written;
}

} // namespace precip_slomo
