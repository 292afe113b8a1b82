// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file checkpoint.hpp
 * @brief Flat binary checkpoint format.
 *
 * Layout (all integers little-endian u32, floats little-endian IEEE-754
 * binary64):
 *
 *   magic   4 bytes  "CNKT"
 *   version u32      format version, currently 1
 *   count   u32      number of named blocks
 *   per block:
 *     name_len u32, name bytes, rank u32, extents u32 * rank, data f64 * n
 *
 * Blocks cover every learnable parameter plus batch-norm running statistics,
 * so a save/load round trip reproduces inference bit-for-bit.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "channelkit/tensor.hpp"

namespace channelkit {

namespace detail_ckpt {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated while reading u32");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
    const uint64_t u = std::bit_cast<uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated while reading f64");
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

}  // namespace detail_ckpt

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor*>>& blocks) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write("CNKT", 4);
    detail_ckpt::put_u32(os, kCheckpointVersion);
    detail_ckpt::put_u32(os, static_cast<uint32_t>(blocks.size()));
    for (const auto& [name, tensor] : blocks) {
        detail_ckpt::put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail_ckpt::put_u32(os, static_cast<uint32_t>(tensor->rank()));
        for (int64_t e : tensor->shape) detail_ckpt::put_u32(os, static_cast<uint32_t>(e));
        for (double v : tensor->data) detail_ckpt::put_f64(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "CNKT", 4) != 0)
        throw std::runtime_error("checkpoint: '" + path + "' has no CNKT magic");
    const uint32_t version = detail_ckpt::get_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t count = detail_ckpt::get_u32(is);
    std::vector<std::pair<std::string, Tensor>> blocks;
    blocks.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = detail_ckpt::get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated block name");
        const uint32_t rank = detail_ckpt::get_u32(is);
        if (rank < 1 || rank > 4)
            throw std::runtime_error("checkpoint: block '" + name + "' has invalid rank " +
                                     std::to_string(rank));
        Shape shape(rank);
        for (uint32_t r = 0; r < rank; ++r)
            shape[r] = static_cast<int64_t>(detail_ckpt::get_u32(is));
        std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
        for (double& v : data) v = detail_ckpt::get_f64(is);
        blocks.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return blocks;
}

/// Copies loaded blocks into live state tensors, matching by name.
inline void restore_state(std::vector<std::pair<std::string, Tensor*>> live,
                          const std::vector<std::pair<std::string, Tensor>>& loaded) {
    for (const auto& [name, tensor] : loaded) {
        bool found = false;
        for (auto& [lname, ltensor] : live) {
            if (lname != name) continue;
            if (ltensor->shape != tensor.shape)
                throw std::runtime_error("checkpoint: block '" + name + "' has shape " +
                                         shape_str(tensor.shape) + " but model expects " +
                                         shape_str(ltensor->shape));
            *ltensor = tensor;
            found = true;
            break;
        }
        if (!found)
            throw std::runtime_error("checkpoint: block '" + name + "' not present in model");
    }
}

}  // namespace channelkit
