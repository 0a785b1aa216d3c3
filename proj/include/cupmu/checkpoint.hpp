// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "json.hpp"

#include "cupmu/common.hpp"
#include "cupmu/nn.hpp"

namespace cupmu {

// Binary layout, all little-endian:
//   "CUPM" | u32 version | u64 d | 8-byte spec hash | d x float64
inline constexpr char kCheckpointMagic[4] = {'C', 'U', 'P', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json spec_to_json(const MlpSpec& spec) {
    return {{"input_dim", spec.input_dim()},
            {"hidden_dims", spec.hidden_dims()},
            {"output_dim", spec.output_dim()},
            {"activation", to_string(spec.activation())}};
}

inline MlpSpec spec_from_json(const nlohmann::json& j) {
    try {
        return MlpSpec(j.at("input_dim").get<std::size_t>(), j.at("hidden_dims").get<std::vector<std::size_t>>(),
                       j.at("output_dim").get<std::size_t>(),
                       parse_activation(j.value("activation", std::string("relu"))));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("model spec: ") + e.what());
    }
}

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
    require(pos + sizeof(U) <= in.size(), ErrorCode::Io, "checkpoint truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(U);
    return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const ParamVector& p) {
    std::string out(kCheckpointMagic, 4);
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint64_t>(out, p.size());
    detail::put_le<std::uint64_t>(out, p.spec_hash);
    out.reserve(out.size() + 8 * p.size());
    for (double v : p.values) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

inline ParamVector decode_checkpoint(const std::string& bytes) {
    require(bytes.size() >= 24 && std::memcmp(bytes.data(), kCheckpointMagic, 4) == 0, ErrorCode::Io,
            "not a checkpoint file");
    std::size_t pos = 4;
    const auto version = detail::get_le<std::uint32_t>(bytes, pos);
    require(version == kCheckpointVersion, ErrorCode::Io, "unsupported checkpoint version");
    const auto d = detail::get_le<std::uint64_t>(bytes, pos);
    ParamVector p;
    p.spec_hash = detail::get_le<std::uint64_t>(bytes, pos);
    require(bytes.size() == pos + 8 * d, ErrorCode::Io, "checkpoint length does not match header");
    p.values.resize(d);
    for (auto& v : p.values) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes, pos));
    return p;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::Io, "cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(f), ErrorCode::Io, "write failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::Io, "cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Writes `path` (binary) and `path.json` (model spec sidecar).
inline void save_checkpoint(const std::string& path, const MlpSpec& spec, const ParamVector& p) {
    p.validate(spec);
    write_file(path, encode_checkpoint(p));
    write_file(path + ".json", spec_to_json(spec).dump(2) + "\n");
}

inline std::pair<MlpSpec, ParamVector> load_checkpoint(const std::string& path) {
    auto p = decode_checkpoint(read_file(path));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path + ".json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Io, "bad checkpoint sidecar: " + std::string(e.what()));
    }
    auto spec = spec_from_json(j);
    p.validate(spec);
    return {std::move(spec), std::move(p)};
}

}  // namespace cupmu
