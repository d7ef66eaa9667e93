#pragma once
// Model archive.
//
// Layout (all integers little-endian u64):
//   "PSLOMOCK"                    8-byte magic
//   header_bytes, header          JSON: version, flow_spec, refine_spec,
//                                 norm_stats, tensor sizes
//   payload_count, payload        float32 values of every parameter tensor,
//                                 flow_net then refine_net, each in
//                                 UNet::parameters() order
//   checksum                      FNV-1a 64 over the payload bytes

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "precip_slomo/error.hpp"
#include "precip_slomo/flownet.hpp"

namespace precip_slomo {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline nlohmann::json spec_to_json(const UNetSpec& s)
{
    return {{"in_channels", s.in_channels}, {"out_channels", s.out_channels}, {"channels", s.channels},
        {"kernels", s.kernels}, {"activation_slope", s.activation_slope}};
}

inline UNetSpec spec_from_json(const nlohmann::json& j)
{
    UNetSpec s;
    s.in_channels = j.at("in_channels").get<int>();
    s.out_channels = j.at("out_channels").get<int>();
    s.channels = j.at("channels").get<std::vector<int>>();
    s.kernels = j.at("kernels").get<std::vector<int>>();
    s.activation_slope = j.at("activation_slope").get<double>();
    return s;
}

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'P', 'S', 'L', 'O', 'M', 'O', 'C', 'K'};

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

inline std::uint64_t read_u64(std::istream& is)
{
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) fail(ErrorCode::CorruptCheckpoint, "checkpoint is truncated");
    return v;
}

} // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::filesystem::path& path)
{
    if (!params.initialized()) fail(ErrorCode::UninitializedParams, "cannot save uninitialized parameters");
    const auto tensors = params.parameters();
    std::vector<std::size_t> sizes;
    std::size_t total = 0;
    for (const auto* p : tensors) {
        sizes.push_back(p->size());
        total += p->size();
    }
    nlohmann::json header = {{"version", params.version}, {"flow_spec", spec_to_json(params.flow_net.spec())},
        {"refine_spec", spec_to_json(params.refine_net.spec())},
        {"norm_stats", {{"dot_scale", params.norm_stats.dot_scale}}}, {"tensor_sizes", sizes}};
    const std::string text = header.dump();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) fail(ErrorCode::IoError, "cannot write " + tmp.string());
        os.write(detail::kCheckpointMagic, 8);
        detail::write_u64(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        detail::write_u64(os, total);
        std::uint64_t h = 1469598103934665603ULL;
        for (const auto* p : tensors) {
            const auto bytes = p->value.size() * sizeof(float);
            os.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(bytes));
            h = detail::fnv1a(p->value.data(), bytes, h);
        }
        detail::write_u64(os, h);
        if (!os) fail(ErrorCode::IoError, "failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline ModelParams load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::IoError, "cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
        fail(ErrorCode::CorruptCheckpoint, "not a model checkpoint");
    const auto header_bytes = detail::read_u64(is);
    if (header_bytes > (1u << 24)) fail(ErrorCode::CorruptCheckpoint, "implausible header size");
    std::string text(header_bytes, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(header_bytes)))
        fail(ErrorCode::CorruptCheckpoint, "checkpoint is truncated");

    ModelParams params;
    std::vector<std::size_t> sizes;
    try {
        const auto header = nlohmann::json::parse(text);
        const auto version = header.at("version").get<std::string>();
        if (version != kModelVersion)
            fail(ErrorCode::CorruptCheckpoint, "unsupported checkpoint version '" + version + "'");
        params.flow_net = UNet(spec_from_json(header.at("flow_spec")));
        params.refine_net = UNet(spec_from_json(header.at("refine_spec")));
        params.norm_stats.dot_scale = header.at("norm_stats").at("dot_scale").get<double>();
        params.version = version;
        sizes = header.at("tensor_sizes").get<std::vector<std::size_t>>();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::CorruptCheckpoint) throw;
        fail(ErrorCode::CorruptCheckpoint, std::string("bad checkpoint header: ") + e.what());
    } catch (const std::exception& e) {
        fail(ErrorCode::CorruptCheckpoint, std::string("bad checkpoint header: ") + e.what());
    }

    auto tensors = params.parameters();
    if (tensors.size() != sizes.size()) fail(ErrorCode::CorruptCheckpoint, "tensor count does not match the specs");
    std::size_t total = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i]->size() != sizes[i]) fail(ErrorCode::CorruptCheckpoint, "tensor shape does not match the specs");
        total += sizes[i];
    }
    if (detail::read_u64(is) != total) fail(ErrorCode::CorruptCheckpoint, "payload size does not match the specs");
    std::uint64_t h = 1469598103934665603ULL;
    for (auto* p : tensors) {
        const auto bytes = p->value.size() * sizeof(float);
        if (!is.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(bytes)))
            fail(ErrorCode::CorruptCheckpoint, "checkpoint is truncated");
        h = detail::fnv1a(p->value.data(), bytes, h);
    }
    if (detail::read_u64(is) != h) fail(ErrorCode::CorruptCheckpoint, "checksum mismatch");
    return params;
}

} // namespace precip_slomo
