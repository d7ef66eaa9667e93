#pragma once
// Georeferenced grids shared by every other module.
//
// All grids use cell-center registration on a uniform lat/lon lattice. Row 0
// is the southernmost row and column 0 the westernmost column, so the center
// of cell (r, c) sits at
//     lat = lat_sw + (r + 0.5) * cell_deg
//     lon = lon_sw + (c + 0.5) * cell_deg

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "precip_slomo/error.hpp"
#include "precip_slomo/time.hpp"

namespace precip_slomo {

template <class T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows)
        , cols_(cols)
        , data_(rows * cols, fill)
    {
    }
    Grid(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows)
        , cols_(cols)
        , data_(std::move(data))
    {
        expect(data_.size() == rows * cols, ErrorCode::ShapeMismatch, "grid data size does not match shape");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool same_shape(const auto& other) const noexcept { return rows_ == other.rows() && cols_ == other.cols(); }

    template <class U>
    Grid<U> cast() const
    {
        Grid<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Field = Grid<float>;
using Mask = Grid<std::uint8_t>;

template <class A, class B>
void require_same_shape(const A& a, const B& b, const char* what)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrorCode::ShapeMismatch,
            std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs "
                + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

struct GridMeta {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double lat_sw = 0.0;
    double lon_sw = 0.0;
    double cell_deg = 1.0;
    std::string crs_note = "EPSG:4326";

    double center_lat(double r) const noexcept { return lat_sw + (r + 0.5) * cell_deg; }
    double center_lon(double c) const noexcept { return lon_sw + (c + 0.5) * cell_deg; }
    double lat_ne() const noexcept { return lat_sw + static_cast<double>(rows) * cell_deg; }
    double lon_ne() const noexcept { return lon_sw + static_cast<double>(cols) * cell_deg; }

    void validate() const
    {
        expect(rows >= 2 && cols >= 2, ErrorCode::InvalidArgument, "grid must be at least 2x2");
        expect(cell_deg > 0.0 && std::isfinite(cell_deg), ErrorCode::InvalidArgument, "cell_deg must be positive");
    }

    friend bool operator==(const GridMeta&, const GridMeta&) = default;
};

inline bool aligned(const GridMeta& a, const GridMeta& b) noexcept
{
    constexpr double tol = 1e-9;
    return a.rows == b.rows && a.cols == b.cols && std::abs(a.lat_sw - b.lat_sw) <= tol
        && std::abs(a.lon_sw - b.lon_sw) <= tol && std::abs(a.cell_deg - b.cell_deg) <= tol;
}

struct BBox {
    double lat_min = 0.0;
    double lon_min = 0.0;
    double lat_max = 0.0;
    double lon_max = 0.0;

    void validate() const
    {
        expect(lat_min < lat_max && lon_min < lon_max, ErrorCode::InvalidArgument, "bbox corners out of order");
    }

    bool contains(double lat, double lon, double tol = 0.0) const noexcept
    {
        return lat >= lat_min - tol && lat <= lat_max + tol && lon >= lon_min - tol && lon <= lon_max + tol;
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Study area around Aude, France (southwest and northeast corners).
inline constexpr BBox kAudeBox{43.1161, 2.8717, 43.3218, 3.1795};

struct PrecipFrame {
    GridMeta meta;
    Timestamp time{};
    Field values;  // mm/hr
    Mask missing;  // 1 = no observation

    static PrecipFrame filled(const GridMeta& meta, Timestamp time, float value = 0.0f)
    {
        return {meta, time, Field(meta.rows, meta.cols, value), Mask(meta.rows, meta.cols, 0)};
    }

    bool is_missing(std::size_t i) const noexcept { return missing[i] != 0; }

    void validate() const
    {
        meta.validate();
        expect(values.rows() == meta.rows && values.cols() == meta.cols, ErrorCode::ShapeMismatch,
            "frame values do not match meta");
        require_same_shape(values, missing, "frame mask");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (missing[i]) continue;
            expect(std::isfinite(values[i]), ErrorCode::InvalidArgument, "non-finite rain rate");
            expect(values[i] >= 0.0f, ErrorCode::NegativeInput, "negative rain rate");
        }
    }
};

struct FrameSeries {
    std::vector<PrecipFrame> frames;
    int step_minutes = 5;

    std::size_t size() const noexcept { return frames.size(); }
    const GridMeta& meta() const { return frames.front().meta; }

    void validate() const
    {
        expect(step_minutes > 0, ErrorCode::InvalidArgument, "step_minutes must be positive");
        for (std::size_t i = 0; i < frames.size(); ++i) {
            frames[i].validate();
            if (i == 0) continue;
            expect(aligned(frames[i].meta, frames[0].meta), ErrorCode::GridMismatch, "frames are not aligned");
            expect(frames[i].time - frames[i - 1].time == std::chrono::minutes(step_minutes),
                ErrorCode::InvalidArgument, "frames are not evenly spaced by step_minutes");
        }
    }
};

struct Dem {
    GridMeta meta;
    Grid<double> elevation;  // m
    std::optional<Grid<double>> grad_x;  // m per cell, along columns
    std::optional<Grid<double>> grad_y;  // m per cell, along rows

    bool has_gradient() const noexcept { return grad_x.has_value() && grad_y.has_value(); }
};

namespace detail {

struct IndexRange {
    std::size_t first = 0;
    std::size_t count = 0;
};

// Cells whose centers lie within [lo, hi] along one axis.
inline IndexRange centers_within(double origin, double cell, std::size_t n, double lo, double hi)
{
    constexpr double eps = 1e-9;
    const double first = std::ceil((lo - origin) / cell - 0.5 - eps);
    const double last = std::floor((hi - origin) / cell - 0.5 + eps);
    const double a = std::max(first, 0.0);
    const double b = std::min(last, static_cast<double>(n) - 1.0);
    if (b < a) return {0, 0};
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(b - a) + 1};
}

template <class T>
Grid<T> sub_grid(const Grid<T>& g, IndexRange rows, IndexRange cols)
{
    Grid<T> out(rows.count, cols.count);
    for (std::size_t r = 0; r < rows.count; ++r)
        for (std::size_t c = 0; c < cols.count; ++c) out(r, c) = g(rows.first + r, cols.first + c);
    return out;
}

struct CropWindow {
    IndexRange rows;
    IndexRange cols;
    GridMeta meta;
};

inline CropWindow crop_window(const GridMeta& meta, const BBox& box)
{
    box.validate();
    const auto rows = centers_within(meta.lat_sw, meta.cell_deg, meta.rows, box.lat_min, box.lat_max);
    const auto cols = centers_within(meta.lon_sw, meta.cell_deg, meta.cols, box.lon_min, box.lon_max);
    if (rows.count == 0 || cols.count == 0) fail(ErrorCode::EmptyCrop, "no cell center falls inside the box");
    GridMeta out = meta;
    out.rows = rows.count;
    out.cols = cols.count;
    out.lat_sw = meta.lat_sw + static_cast<double>(rows.first) * meta.cell_deg;
    out.lon_sw = meta.lon_sw + static_cast<double>(cols.first) * meta.cell_deg;
    return {rows, cols, out};
}

// Bilinear sample position of a target cell center in source index space.
struct SamplePoint {
    std::size_t r0, r1, c0, c1;
    double wr, wc;
};

inline SamplePoint locate(const GridMeta& src, double lat, double lon)
{
    constexpr double eps = 1e-9;
    if (lat < src.lat_sw - eps || lat > src.lat_ne() + eps || lon < src.lon_sw - eps || lon > src.lon_ne() + eps)
        fail(ErrorCode::ExtentMismatch, "target cell center outside source extent");
    // Positions within rounding error of a cell center snap onto it.
    auto index = [&](double v, double origin, std::size_t n) {
        double f = (v - origin) / src.cell_deg - 0.5;
        if (std::abs(f - std::round(f)) <= eps) f = std::round(f);
        return std::clamp(f, 0.0, static_cast<double>(n - 1));
    };
    const double fr = index(lat, src.lat_sw, src.rows);
    const double fc = index(lon, src.lon_sw, src.cols);
    SamplePoint p{};
    p.r0 = static_cast<std::size_t>(std::floor(fr));
    p.c0 = static_cast<std::size_t>(std::floor(fc));
    p.r1 = std::min(p.r0 + 1, src.rows - 1);
    p.c1 = std::min(p.c0 + 1, src.cols - 1);
    p.wr = fr - static_cast<double>(p.r0);
    p.wc = fc - static_cast<double>(p.c0);
    return p;
}

template <class T>
double bilinear(const Grid<T>& g, const SamplePoint& p)
{
    const double v00 = g(p.r0, p.c0), v01 = g(p.r0, p.c1), v10 = g(p.r1, p.c0), v11 = g(p.r1, p.c1);
    return (1.0 - p.wr) * ((1.0 - p.wc) * v00 + p.wc * v01) + p.wr * ((1.0 - p.wc) * v10 + p.wc * v11);
}

} // namespace detail

/// Elevation derivatives in meters per cell: central differences inside,
/// one-sided differences on the border.
inline Dem terrain_gradient(Dem dem)
{
    const auto& h = dem.elevation;
    const std::size_t rows = h.rows(), cols = h.cols();
    expect(rows >= 2 && cols >= 2, ErrorCode::InvalidArgument, "DEM must be at least 2x2");
    for (double v : h.values()) expect(!std::isnan(v), ErrorCode::InvalidArgument, "DEM contains NaN");
    Grid<double> gx(rows, cols), gy(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c == 0)
                gx(r, c) = h(r, 1) - h(r, 0);
            else if (c == cols - 1)
                gx(r, c) = h(r, c) - h(r, c - 1);
            else
                gx(r, c) = 0.5 * (h(r, c + 1) - h(r, c - 1));

            if (r == 0)
                gy(r, c) = h(1, c) - h(0, c);
            else if (r == rows - 1)
                gy(r, c) = h(r, c) - h(r - 1, c);
            else
                gy(r, c) = 0.5 * (h(r + 1, c) - h(r - 1, c));
        }
    }
    dem.grad_x = std::move(gx);
    dem.grad_y = std::move(gy);
    return dem;
}

inline PrecipFrame crop_to_bbox(const PrecipFrame& frame, const BBox& box)
{
    const auto win = detail::crop_window(frame.meta, box);
    return {win.meta, frame.time, detail::sub_grid(frame.values, win.rows, win.cols),
        detail::sub_grid(frame.missing, win.rows, win.cols)};
}

/// Gradients are recomputed on the cropped elevation so the border rule holds.
inline Dem crop_to_bbox(const Dem& dem, const BBox& box)
{
    const auto win = detail::crop_window(dem.meta, box);
    Dem out{win.meta, detail::sub_grid(dem.elevation, win.rows, win.cols), std::nullopt, std::nullopt};
    if (dem.has_gradient() && out.meta.rows >= 2 && out.meta.cols >= 2) out = terrain_gradient(std::move(out));
    return out;
}

inline FrameSeries crop_to_bbox(const FrameSeries& series, const BBox& box)
{
    FrameSeries out{{}, series.step_minutes};
    out.frames.reserve(series.size());
    for (const auto& f : series.frames) out.frames.push_back(crop_to_bbox(f, box));
    return out;
}

template <class T>
Grid<T> resample_grid(const Grid<T>& src, const GridMeta& src_meta, const GridMeta& target)
{
    expect(src.rows() == src_meta.rows && src.cols() == src_meta.cols, ErrorCode::ShapeMismatch,
        "resample source does not match its meta");
    Grid<T> out(target.rows, target.cols);
    for (std::size_t r = 0; r < target.rows; ++r) {
        for (std::size_t c = 0; c < target.cols; ++c) {
            const auto p = detail::locate(src_meta, target.center_lat(static_cast<double>(r)),
                target.center_lon(static_cast<double>(c)));
            out(r, c) = static_cast<T>(detail::bilinear(src, p));
        }
    }
    return out;
}

/// Target cells touching a missing source cell with nonzero weight are missing.
inline PrecipFrame resample_to(const PrecipFrame& src, const GridMeta& target)
{
    PrecipFrame out = PrecipFrame::filled(target, src.time);
    for (std::size_t r = 0; r < target.rows; ++r) {
        for (std::size_t c = 0; c < target.cols; ++c) {
            const auto p = detail::locate(src.meta, target.center_lat(static_cast<double>(r)),
                target.center_lon(static_cast<double>(c)));
            const bool m00 = src.missing(p.r0, p.c0) && (1 - p.wr) * (1 - p.wc) > 0;
            const bool m01 = src.missing(p.r0, p.c1) && (1 - p.wr) * p.wc > 0;
            const bool m10 = src.missing(p.r1, p.c0) && p.wr * (1 - p.wc) > 0;
            const bool m11 = src.missing(p.r1, p.c1) && p.wr * p.wc > 0;
            if (m00 || m01 || m10 || m11) {
                out.missing(r, c) = 1;
                continue;
            }
            out.values(r, c) = static_cast<float>(detail::bilinear(src.values, p));
        }
    }
    return out;
}

inline Dem resample_to(const Dem& src, const GridMeta& target)
{
    Dem out{target, resample_grid(src.elevation, src.meta, target), std::nullopt, std::nullopt};
    if (src.has_gradient()) out = terrain_gradient(std::move(out));
    return out;
}

inline FrameSeries undersample(const FrameSeries& series, int factor)
{
    expect(factor >= 1, ErrorCode::InvalidArgument, "undersample factor must be >= 1");
    expect(series.size() > static_cast<std::size_t>(factor), ErrorCode::SeriesTooShort,
        "series must be longer than the undersample factor");
    FrameSeries out{{}, series.step_minutes * factor};
    for (std::size_t i = 0; i < series.size(); i += static_cast<std::size_t>(factor))
        out.frames.push_back(series.frames[i]);
    return out;
}

/// log1p transform used for network inputs. Missing cells map to 0.
inline Grid<double> normalize_precip(const PrecipFrame& frame)
{
    Grid<double> out(frame.values.rows(), frame.values.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (frame.is_missing(i)) continue;
        const double v = frame.values[i];
        expect(v >= 0.0, ErrorCode::NegativeInput, "cannot normalize a negative rain rate");
        out[i] = std::log1p(v);
    }
    return out;
}

inline double normalize_precip(double mm_per_hr)
{
    expect(mm_per_hr >= 0.0, ErrorCode::NegativeInput, "cannot normalize a negative rain rate");
    return std::log1p(mm_per_hr);
}

inline double denormalize_precip(double v) noexcept { return std::expm1(v); }

inline Grid<double> denormalize_precip(const Grid<double>& g)
{
    Grid<double> out(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::expm1(g[i]);
    return out;
}

} // namespace precip_slomo
