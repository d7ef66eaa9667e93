#pragma once
// Minimal single-band GeoTIFF reading and writing.
//
// Reads baseline TIFF (either byte order, strips or tiles, uncompressed,
// one sample per pixel, 8/16/32/64-bit integer or float samples) with the
// ModelPixelScale / ModelTiepoint georeference. Writes float32 rasters in
// geographic coordinates. TIFF rows run north to south; rasters returned
// here use the library convention of row 0 at the south edge.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "precip_slomo/error.hpp"
#include "precip_slomo/grid.hpp"

namespace precip_slomo {

struct Raster {
    GridMeta meta;
    Grid<double> values;  // row 0 = south
    std::optional<double> nodata;
    bool georeferenced = false;
};

namespace tiff {

enum Tag : std::uint16_t {
    ImageWidth = 256,
    ImageLength = 257,
    BitsPerSample = 258,
    Compression = 259,
    Photometric = 262,
    StripOffsets = 273,
    SamplesPerPixel = 277,
    RowsPerStrip = 278,
    StripByteCounts = 279,
    PlanarConfig = 284,
    Predictor = 317,
    TileWidth = 322,
    TileLength = 323,
    TileOffsets = 324,
    TileByteCounts = 325,
    SampleFormat = 339,
    ModelPixelScale = 33550,
    ModelTiepoint = 33922,
    GeoKeyDirectory = 34735,
    GdalNodata = 42113,
};

struct Entry {
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::size_t offset = 0;  // of the value bytes in the file
};

inline std::size_t type_size(std::uint16_t type)
{
    switch (type) {
    case 1: case 2: case 6: case 7: return 1;
    case 3: case 8: return 2;
    case 4: case 9: case 11: return 4;
    case 5: case 10: case 12: return 8;
    default: return 0;
    }
}

class Reader {
public:
    explicit Reader(std::vector<std::uint8_t> bytes, std::string name)
        : b_(std::move(bytes))
        , name_(std::move(name))
    {
        need(8);
        if (b_[0] == 'I' && b_[1] == 'I') big_ = false;
        else if (b_[0] == 'M' && b_[1] == 'M') big_ = true;
        else bad("not a TIFF file");
        if (u16(2) == 43) bad("BigTIFF is not supported");
        if (u16(2) != 42) bad("bad TIFF magic");
        const std::size_t ifd = u32(4);
        need(ifd + 2);
        const std::size_t n = u16(ifd);
        need(ifd + 2 + n * 12);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t at = ifd + 2 + k * 12;
            Entry e{u16(at + 2), u32(at + 4), 0};
            const std::size_t bytes_needed = type_size(e.type) * e.count;
            e.offset = bytes_needed <= 4 ? at + 8 : u32(at + 8);
            if (type_size(e.type) && e.count) need(e.offset + bytes_needed);
            tags_[u16(at)] = e;
        }
    }

    bool has(std::uint16_t tag) const { return tags_.count(tag) != 0; }

    std::vector<double> numbers(std::uint16_t tag) const
    {
        const auto& e = entry(tag);
        std::vector<double> out;
        const std::size_t sz = type_size(e.type);
        for (std::size_t i = 0; i < e.count; ++i) out.push_back(scalar(e.type, e.offset + i * sz));
        return out;
    }

    double number(std::uint16_t tag, double fallback) const
    {
        if (!has(tag)) return fallback;
        const auto v = numbers(tag);
        return v.empty() ? fallback : v.front();
    }

    std::string text(std::uint16_t tag) const
    {
        const auto& e = entry(tag);
        std::string s(reinterpret_cast<const char*>(b_.data() + e.offset), e.count);
        while (!s.empty() && (s.back() == '\0' || s.back() == ' ')) s.pop_back();
        return s;
    }

    double sample(std::size_t at, int bits, int format) const
    {
        need(at + static_cast<std::size_t>(bits / 8));
        switch (format) {
        case 1:
            if (bits == 8) return b_[at];
            if (bits == 16) return u16(at);
            if (bits == 32) return u32(at);
            if (bits == 64) return static_cast<double>(u64(at));
            break;
        case 2:
            if (bits == 8) return static_cast<std::int8_t>(b_[at]);
            if (bits == 16) return static_cast<std::int16_t>(u16(at));
            if (bits == 32) return static_cast<std::int32_t>(u32(at));
            if (bits == 64) return static_cast<double>(static_cast<std::int64_t>(u64(at)));
            break;
        case 3:
            if (bits == 32) return std::bit_cast<float>(u32(at));
            if (bits == 64) return std::bit_cast<double>(u64(at));
            break;
        }
        bad("unsupported sample type");
    }

    [[noreturn]] void bad(const std::string& what) const { fail(ErrorCode::IoError, name_ + ": " + what); }

    void need(std::size_t end) const
    {
        if (end > b_.size()) bad("truncated file");
    }

private:
    const Entry& entry(std::uint16_t tag) const
    {
        const auto it = tags_.find(tag);
        if (it == tags_.end()) bad("missing tag " + std::to_string(tag));
        return it->second;
    }

    std::uint64_t raw(std::size_t at, int n) const
    {
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            const std::uint64_t byte = b_[at + static_cast<std::size_t>(i)];
            v |= big_ ? byte << (8 * (n - 1 - i)) : byte << (8 * i);
        }
        return v;
    }
    std::uint16_t u16(std::size_t at) const { return static_cast<std::uint16_t>(raw(at, 2)); }
    std::uint32_t u32(std::size_t at) const { return static_cast<std::uint32_t>(raw(at, 4)); }
    std::uint64_t u64(std::size_t at) const { return raw(at, 8); }

    double scalar(std::uint16_t type, std::size_t at) const
    {
        switch (type) {
        case 1: case 7: return b_[at];
        case 6: return static_cast<std::int8_t>(b_[at]);
        case 3: return u16(at);
        case 8: return static_cast<std::int16_t>(u16(at));
        case 4: return u32(at);
        case 9: return static_cast<std::int32_t>(u32(at));
        case 5: return static_cast<double>(u32(at)) / static_cast<double>(u32(at + 4));
        case 10: return static_cast<double>(static_cast<std::int32_t>(u32(at)))
            / static_cast<double>(static_cast<std::int32_t>(u32(at + 4)));
        case 11: return std::bit_cast<float>(u32(at));
        case 12: return std::bit_cast<double>(u64(at));
        }
        bad("unsupported tag type " + std::to_string(type));
    }

    std::vector<std::uint8_t> b_;
    std::string name_;
    bool big_ = false;
    std::map<std::uint16_t, Entry> tags_;
};

class Writer {
public:
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
    void bytes(const std::string& s) { buf.insert(buf.end(), s.begin(), s.end()); }
    std::size_t size() const noexcept { return buf.size(); }
    void patch_u32(std::size_t at, std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) buf[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
    }

    std::vector<std::uint8_t> buf;

private:
    void put(std::uint64_t v, int n)
    {
        for (int i = 0; i < n; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

} // namespace tiff

inline Raster read_geotiff(const std::filesystem::path& path)
{
    const tiff::Reader t(tiff::read_file(path), path.string());
    const auto width = static_cast<std::size_t>(t.number(tiff::ImageWidth, 0));
    const auto height = static_cast<std::size_t>(t.number(tiff::ImageLength, 0));
    if (width == 0 || height == 0) t.bad("empty image");
    if (t.number(tiff::SamplesPerPixel, 1) != 1) t.bad("only single-band rasters are supported");
    if (t.number(tiff::Compression, 1) != 1) t.bad("compressed rasters are not supported");
    if (t.number(tiff::Predictor, 1) != 1) t.bad("predictors are not supported");
    const int bits = static_cast<int>(t.number(tiff::BitsPerSample, 1));
    const int format = static_cast<int>(t.number(tiff::SampleFormat, 1));
    if (bits % 8 != 0) t.bad("sub-byte samples are not supported");
    const std::size_t bps = static_cast<std::size_t>(bits / 8);

    Raster out;
    out.values = Grid<double>(height, width);
    auto put = [&](std::size_t file_row, std::size_t col, std::size_t at) {
        out.values(height - 1 - file_row, col) = t.sample(at, bits, format);
    };
    if (t.has(tiff::TileOffsets)) {
        const auto tw = static_cast<std::size_t>(t.number(tiff::TileWidth, 0));
        const auto th = static_cast<std::size_t>(t.number(tiff::TileLength, 0));
        if (tw == 0 || th == 0) t.bad("bad tile size");
        const auto offsets = t.numbers(tiff::TileOffsets);
        const std::size_t across = (width + tw - 1) / tw, down = (height + th - 1) / th;
        if (offsets.size() < across * down) t.bad("too few tiles");
        for (std::size_t ty = 0; ty < down; ++ty)
            for (std::size_t tx = 0; tx < across; ++tx) {
                const auto base = static_cast<std::size_t>(offsets[ty * across + tx]);
                for (std::size_t y = 0; y < th && ty * th + y < height; ++y)
                    for (std::size_t x = 0; x < tw && tx * tw + x < width; ++x)
                        put(ty * th + y, tx * tw + x, base + (y * tw + x) * bps);
            }
    } else {
        const auto offsets = t.numbers(tiff::StripOffsets);
        const auto rps = static_cast<std::size_t>(std::min<double>(t.number(tiff::RowsPerStrip, double(height)), double(height)));
        if (rps == 0 || offsets.size() < (height + rps - 1) / rps) t.bad("too few strips");
        for (std::size_t r = 0; r < height; ++r) {
            const auto base = static_cast<std::size_t>(offsets[r / rps]) + (r % rps) * width * bps;
            for (std::size_t c = 0; c < width; ++c) put(r, c, base + c * bps);
        }
    }

    out.meta.rows = height;
    out.meta.cols = width;
    if (t.has(tiff::ModelPixelScale) && t.has(tiff::ModelTiepoint)) {
        const auto scale = t.numbers(tiff::ModelPixelScale);
        const auto tie = t.numbers(tiff::ModelTiepoint);
        if (scale.size() < 2 || tie.size() < 6) t.bad("malformed georeference tags");
        const double sx = scale[0], sy = scale[1];
        if (!(sx > 0.0) || std::abs(sx - sy) > 1e-9 * sx) t.bad("pixels must be square");
        double lon_w = tie[3] - tie[0] * sx, lat_n = tie[4] + tie[1] * sy;
        bool point = false;
        if (t.has(tiff::GeoKeyDirectory)) {
            const auto keys = t.numbers(tiff::GeoKeyDirectory);
            for (std::size_t k = 4; k + 3 < keys.size(); k += 4)
                if (keys[k] == 1025 && keys[k + 1] == 0) point = keys[k + 3] == 2;
        }
        if (point) {
            lon_w -= 0.5 * sx;
            lat_n += 0.5 * sy;
        }
        out.meta.cell_deg = sx;
        out.meta.lon_sw = lon_w;
        out.meta.lat_sw = lat_n - static_cast<double>(height) * sy;
        out.georeferenced = true;
    } else {
        out.meta.crs_note = "ungeoreferenced";
    }
    if (t.has(tiff::GdalNodata)) {
        const auto s = t.text(tiff::GdalNodata);
        try {
            out.nodata = std::stod(s);
        } catch (const std::exception&) {
            if (s == "nan" || s == "NaN") out.nodata = std::nan("");
        }
    }
    return out;
}

inline void write_geotiff(const std::filesystem::path& path, const GridMeta& meta, const Grid<double>& values,
    std::optional<double> nodata = std::nullopt)
{
    require_same_shape(values, Grid<double>(meta.rows, meta.cols), "GeoTIFF raster");
    const auto w = static_cast<std::uint32_t>(meta.cols), h = static_cast<std::uint32_t>(meta.rows);
    std::string nodata_text;
    if (nodata) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", *nodata);
        nodata_text = std::string(buf) + '\0';
    }
    const std::vector<std::uint16_t> geokeys{1, 1, 0, 3, 1024, 0, 1, 2, 1025, 0, 1, 1, 2048, 0, 1, 4326};

    struct Field {
        std::uint16_t tag, type;
        std::uint32_t count, value;  // value or offset, patched later
    };
    std::vector<Field> fields{{tiff::ImageWidth, 4, 1, w}, {tiff::ImageLength, 4, 1, h},
        {tiff::BitsPerSample, 3, 1, 32}, {tiff::Compression, 3, 1, 1}, {tiff::Photometric, 3, 1, 1},
        {tiff::StripOffsets, 4, 1, 0}, {tiff::SamplesPerPixel, 3, 1, 1}, {tiff::RowsPerStrip, 4, 1, h},
        {tiff::StripByteCounts, 4, 1, w * h * 4}, {tiff::PlanarConfig, 3, 1, 1}, {tiff::SampleFormat, 3, 1, 3},
        {tiff::ModelPixelScale, 12, 3, 0}, {tiff::ModelTiepoint, 12, 6, 0},
        {tiff::GeoKeyDirectory, 3, static_cast<std::uint32_t>(geokeys.size()), 0}};
    if (nodata) fields.push_back({tiff::GdalNodata, 2, static_cast<std::uint32_t>(nodata_text.size()), 0});

    tiff::Writer o;
    o.bytes("II");
    o.u16(42);
    o.u32(8);
    o.u16(static_cast<std::uint16_t>(fields.size()));
    std::map<std::uint16_t, std::size_t> slot;
    for (const auto& f : fields) {
        o.u16(f.tag);
        o.u16(f.type);
        o.u32(f.count);
        slot[f.tag] = o.size();
        if (f.type == 3 && f.count == 1) {
            o.u16(static_cast<std::uint16_t>(f.value));
            o.u16(0);
        } else {
            o.u32(f.value);
        }
    }
    o.u32(0);
    auto here = [&](std::uint16_t tag) { o.patch_u32(slot[tag], static_cast<std::uint32_t>(o.size())); };
    here(tiff::ModelPixelScale);
    for (double v : {meta.cell_deg, meta.cell_deg, 0.0}) o.f64(v);
    here(tiff::ModelTiepoint);
    for (double v : {0.0, 0.0, 0.0, meta.lon_sw, meta.lat_ne(), 0.0}) o.f64(v);
    here(tiff::GeoKeyDirectory);
    for (auto v : geokeys) o.u16(v);
    if (nodata) {
        here(tiff::GdalNodata);
        o.bytes(nodata_text);
    }
    if (o.size() % 2) o.bytes(std::string(1, '\0'));
    here(tiff::StripOffsets);
    for (std::size_t r = 0; r < meta.rows; ++r)
        for (std::size_t c = 0; c < meta.cols; ++c) o.f32(static_cast<float>(values(meta.rows - 1 - r, c)));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::IoError, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(o.buf.data()), static_cast<std::streamsize>(o.buf.size()));
    if (!f) fail(ErrorCode::IoError, "write failed: " + path.string());
}

} // namespace precip_slomo
