#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "warpkit/tensor.hpp"

// Checkpoint file: magic "CPWK", little-endian u32 version = 1,
// u32 tensor count; per tensor: u32 name byte-length, UTF-8 name,
// u32 rank, u32 extents[rank], f32 row-major payload.

namespace warpkit {

inline constexpr char kCkptMagic[4] = {'C', 'P', 'W', 'K'};
inline constexpr std::uint32_t kCkptVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    require(is.gcount() == 4, "checkpoint " + path + ": truncated while reading " + what +
                                  " at byte offset " + std::to_string(static_cast<long>(is.tellg()) < 0
                                                                          ? -1
                                                                          : static_cast<long>(is.tellg())));
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_ckpt(const std::string& path, const std::map<std::string, Tensor<float>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "save_ckpt: cannot open " + path);
    os.write(kCkptMagic, 4);
    detail::write_u32(os, kCkptVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<long>(name.size()));
        detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (Index e : t.dims) detail::write_u32(os, static_cast<std::uint32_t>(e));
        static_assert(sizeof(float) == 4);
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<long>(t.size() * sizeof(float)));
    }
    require(os.good(), "save_ckpt: write failed for " + path);
}

inline std::map<std::string, Tensor<float>> load_ckpt(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "load_ckpt: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(is.gcount() == 4 && std::memcmp(magic, kCkptMagic, 4) == 0,
            "load_ckpt: " + path + " has unknown magic (want CPWK)");
    std::uint32_t version = detail::read_u32(is, path, "version");
    require(version == kCkptVersion,
            "load_ckpt: " + path + " has unsupported version " + std::to_string(version));
    std::uint32_t count = detail::read_u32(is, path, "tensor count");
    std::map<std::string, Tensor<float>> out;
    for (std::uint32_t ti = 0; ti < count; ++ti) {
        std::uint32_t name_len = detail::read_u32(is, path, "name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        require(is.gcount() == static_cast<long>(name_len),
                "load_ckpt: " + path + ": truncated tensor name at byte offset " +
                    std::to_string(static_cast<long>(is.tellg())));
        std::uint32_t rank = detail::read_u32(is, path, "rank");
        require(rank >= 1, "load_ckpt: " + path + ": tensor '" + name + "' has rank 0");
        std::vector<Index> dims(rank);
        for (auto& d : dims) d = detail::read_u32(is, path, "extent");
        Tensor<float> t(dims);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<long>(t.data.size() * sizeof(float)));
        require(is.gcount() == static_cast<long>(t.data.size() * sizeof(float)),
                "load_ckpt: " + path + ": truncated payload of tensor '" + name +
                    "' at byte offset " + std::to_string(static_cast<long>(is.tellg())));
        out.emplace(name, std::move(t));
    }
    return out;
}

}  // namespace warpkit
