#ifndef SFWM_CHECKPOINT_HPP
#define SFWM_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfwm/common.hpp"
#include "sfwm/mat.hpp"
#include "sfwm/optim.hpp"

namespace sfwm {

// Shared checkpoint container.
// Layout (all little-endian):
//   "SFWM" | u32 version | u32 metadata length | UTF-8 JSON metadata |
//   repeated tensor records until EOF:
//     u32 name length | name | u64 rank | u64 dims[rank] | f32 payload
// Round trips byte-exactly: metadata keys are sorted, tensors ordered by name.

struct TensorRecord {
    std::vector<uint64_t> dims;
    std::vector<float> data;
};

struct Checkpoint {
    nlohmann::json meta;
    std::map<std::string, TensorRecord> tensors;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
    for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::vector<uint8_t>& b, size_t& at, const char* what) {
    if (at + sizeof(T) > b.size()) throw ParseError(std::string("truncated checkpoint: ") + what, at);
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[at + i]) << (8 * i);
    at += sizeof(T);
    return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    std::string out;
    out.append("SFWM");
    detail::put_le<uint32_t>(out, 1);
    const std::string meta = ck.meta.dump();
    detail::put_le<uint32_t>(out, static_cast<uint32_t>(meta.size()));
    out.append(meta);
    for (const auto& [name, t] : ck.tensors) {
        detail::put_le<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        detail::put_le<uint64_t>(out, static_cast<uint64_t>(t.dims.size()));
        uint64_t n = 1;
        for (uint64_t d : t.dims) {
            detail::put_le<uint64_t>(out, d);
            n *= d;
        }
        if (n != t.data.size()) throw IoError("tensor '" + name + "': dims do not match payload");
        const size_t base = out.size();
        out.resize(base + t.data.size() * 4);
        for (size_t i = 0; i < t.data.size(); ++i) {
            uint32_t bits;
            std::memcpy(&bits, &t.data[i], 4);
            for (size_t k = 0; k < 4; ++k)
                out[base + i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xff);
        }
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
    size_t at = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "SFWM", 4) != 0)
        throw ParseError("bad checkpoint magic", 0);
    at = 4;
    const uint32_t version = detail::get_le<uint32_t>(bytes, at, "version");
    if (version != 1) throw ParseError("unsupported checkpoint version", 4);
    const uint32_t meta_len = detail::get_le<uint32_t>(bytes, at, "metadata length");
    if (at + meta_len > bytes.size()) throw ParseError("truncated metadata", at);
    Checkpoint ck;
    try {
        ck.meta = nlohmann::json::parse(bytes.begin() + static_cast<long>(at),
                                        bytes.begin() + static_cast<long>(at + meta_len));
    } catch (const nlohmann::json::exception&) {
        throw ParseError("invalid metadata JSON", at);
    }
    at += meta_len;
    while (at < bytes.size()) {
        const uint32_t name_len = detail::get_le<uint32_t>(bytes, at, "tensor name length");
        if (at + name_len > bytes.size()) throw ParseError("truncated tensor name", at);
        std::string name(bytes.begin() + static_cast<long>(at),
                         bytes.begin() + static_cast<long>(at + name_len));
        at += name_len;
        const uint64_t rank = detail::get_le<uint64_t>(bytes, at, "tensor rank");
        if (rank > 8) throw ParseError("implausible tensor rank", at - 8);
        TensorRecord t;
        uint64_t n = 1;
        for (uint64_t r = 0; r < rank; ++r) {
            const uint64_t d = detail::get_le<uint64_t>(bytes, at, "tensor dim");
            t.dims.push_back(d);
            n *= d;
        }
        if (at + n * 4 > bytes.size()) throw ParseError("truncated tensor payload", at);
        t.data.resize(n);
        for (uint64_t i = 0; i < n; ++i) {
            uint32_t bits = 0;
            for (size_t k = 0; k < 4; ++k) bits |= static_cast<uint32_t>(bytes[at + i * 4 + k]) << (8 * k);
            std::memcpy(&t.data[i], &bits, 4);
        }
        at += n * 4;
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    const std::string bytes = serialize_checkpoint(ck);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DependencyError("missing checkpoint: " + path);
    std::vector<uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return deserialize_checkpoint(bytes);
}

inline void store_params(Checkpoint& ck, const ParamStore<float>& store) {
    for (const auto& [name, p] : store.params) {
        TensorRecord t;
        t.dims = {static_cast<uint64_t>(p.rows), static_cast<uint64_t>(p.cols)};
        t.data = p.v;
        ck.tensors.emplace(name, std::move(t));
    }
    ck.meta["step"] = store.step;
}

inline ParamStore<float> load_params(const Checkpoint& ck) {
    ParamStore<float> store;
    for (const auto& [name, t] : ck.tensors) {
        if (t.dims.size() != 2) throw DependencyError("tensor '" + name + "' is not rank-2");
        Mat<float> m(static_cast<int64_t>(t.dims[0]), static_cast<int64_t>(t.dims[1]));
        m.v = t.data;
        store.add(name, std::move(m));
    }
    if (ck.meta.contains("step")) store.step = ck.meta["step"].get<int64_t>();
    return store;
}

}  // namespace sfwm

#endif
