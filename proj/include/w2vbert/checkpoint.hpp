#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "w2vbert/tensor.hpp"

namespace w2v {

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Format: magic "W2VB", version u32 LE, tensor count u32 LE, then per tensor:
// name length u16 LE + UTF-8 name, dtype u8 (0=f32, 1=f64, 2=i64), rank u8,
// dims u64 LE, payload LE. Trailing u32 LE CRC32 over all payload bytes.

constexpr uint32_t kCheckpointVersion = 1;

enum class DType : uint8_t { F32 = 0, F64 = 1, I64 = 2 };

inline size_t dtype_size(DType d) {
    switch (d) {
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::I64: return 8;
    }
    throw CheckpointError("unknown dtype code");
}

struct CheckpointEntry {
    std::string name;
    DType dtype = DType::F32;
    std::vector<uint64_t> dims;
    std::vector<unsigned char> payload;

    uint64_t n_elements() const {
        uint64_t n = 1;
        for (uint64_t d : dims) n *= d;
        return n;
    }
};

namespace detail {

inline uint32_t crc32_update(uint32_t crc, const unsigned char* data, size_t len) {
    static const auto table = [] {
        std::vector<uint32_t> t(256);
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

template <typename U>
void write_le(std::ostream& out, U v) {
    unsigned char b[sizeof(U)];
    for (size_t i = 0; i < sizeof(U); ++i) b[i] = (unsigned char)((uint64_t)v >> (8 * i));
    out.write(reinterpret_cast<char*>(b), sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
    unsigned char b[sizeof(U)];
    in.read(reinterpret_cast<char*>(b), sizeof(U));
    if (in.gcount() != (std::streamsize)sizeof(U))
        throw CheckpointError("integrity error: truncated file");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(U); ++i) v |= (uint64_t)b[i] << (8 * i);
    return (U)v;
}

} // namespace detail

inline void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path);
    out.write("W2VB", 4);
    detail::write_le<uint32_t>(out, kCheckpointVersion);
    detail::write_le<uint32_t>(out, (uint32_t)entries.size());
    uint32_t crc = 0;
    for (const auto& e : entries) {
        if (e.payload.size() != e.n_elements() * dtype_size(e.dtype))
            throw CheckpointError("entry '" + e.name + "' payload size does not match dims");
        detail::write_le<uint16_t>(out, (uint16_t)e.name.size());
        out.write(e.name.data(), (std::streamsize)e.name.size());
        detail::write_le<uint8_t>(out, (uint8_t)e.dtype);
        detail::write_le<uint8_t>(out, (uint8_t)e.dims.size());
        for (uint64_t d : e.dims) detail::write_le<uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(e.payload.data()), (std::streamsize)e.payload.size());
        crc = detail::crc32_update(crc, e.payload.data(), e.payload.size());
    }
    detail::write_le<uint32_t>(out, crc);
    if (!out) throw CheckpointError("I/O failure writing " + path);
}

inline std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "W2VB", 4) != 0)
        throw CheckpointError("incompatible file: bad magic (expected W2VB)");
    uint32_t version = detail::read_le<uint32_t>(in);
    if (version != kCheckpointVersion)
        throw CheckpointError("incompatible checkpoint version " + std::to_string(version) +
                              " (expected " + std::to_string(kCheckpointVersion) + ")");
    uint32_t count = detail::read_le<uint32_t>(in);
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    uint32_t crc = 0;
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        uint16_t name_len = detail::read_le<uint16_t>(in);
        e.name.resize(name_len);
        in.read(e.name.data(), name_len);
        if (in.gcount() != (std::streamsize)name_len)
            throw CheckpointError("integrity error: truncated tensor name");
        e.dtype = (DType)detail::read_le<uint8_t>(in);
        dtype_size(e.dtype); // validates the code
        uint8_t rank = detail::read_le<uint8_t>(in);
        for (uint8_t r = 0; r < rank; ++r) e.dims.push_back(detail::read_le<uint64_t>(in));
        size_t bytes = (size_t)(e.n_elements() * dtype_size(e.dtype));
        e.payload.resize(bytes);
        in.read(reinterpret_cast<char*>(e.payload.data()), (std::streamsize)bytes);
        if ((size_t)in.gcount() != bytes)
            throw CheckpointError("integrity error: truncated payload for tensor '" + e.name + "'");
        crc = detail::crc32_update(crc, e.payload.data(), bytes);
        entries.push_back(std::move(e));
    }
    uint32_t stored_crc = detail::read_le<uint32_t>(in);
    if (stored_crc != crc)
        throw CheckpointError("integrity error: payload CRC mismatch");
    return entries;
}

// ---------------------------------------------------------------------------
// tensor <-> entry helpers
// ---------------------------------------------------------------------------

template <typename T>
CheckpointEntry entry_from_tensor(const std::string& name, const Tensor<T>& t) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    CheckpointEntry e;
    e.name = name;
    e.dtype = std::is_same_v<T, float> ? DType::F32 : DType::F64;
    for (int d : t.shape()) e.dims.push_back((uint64_t)d);
    if (e.dims.empty()) e.dims.push_back(1);
    e.payload.resize((size_t)t.size() * sizeof(T));
    std::memcpy(e.payload.data(), t.values().data(), e.payload.size());
    return e;
}

inline CheckpointEntry entry_from_i64(const std::string& name, int64_t v) {
    CheckpointEntry e;
    e.name = name;
    e.dtype = DType::I64;
    e.dims = {1};
    e.payload.resize(8);
    std::memcpy(e.payload.data(), &v, 8);
    return e;
}

inline CheckpointEntry entry_from_f64(const std::string& name, double v) {
    CheckpointEntry e;
    e.name = name;
    e.dtype = DType::F64;
    e.dims = {1};
    e.payload.resize(8);
    std::memcpy(e.payload.data(), &v, 8);
    return e;
}

template <typename T>
void load_entry_into_tensor(const CheckpointEntry& e, Tensor<T>& t) {
    constexpr DType want = std::is_same_v<T, float> ? DType::F32 : DType::F64;
    if (e.dtype != want) throw CheckpointError("tensor '" + e.name + "' has unexpected dtype");
    Shape s;
    for (uint64_t d : e.dims) s.push_back((int)d);
    bool scalar_match = t.rank() == 0 && s == Shape{1};
    if (!scalar_match && s != t.shape())
        throw CheckpointError("shape mismatch for tensor '" + e.name + "': checkpoint has " +
                              shape_str(s) + ", model expects " + shape_str(t.shape()));
    std::memcpy(t.values_mut().data(), e.payload.data(), e.payload.size());
}

inline int64_t entry_to_i64(const CheckpointEntry& e) {
    if (e.dtype != DType::I64 || e.payload.size() != 8)
        throw CheckpointError("entry '" + e.name + "' is not a scalar i64");
    int64_t v;
    std::memcpy(&v, e.payload.data(), 8);
    return v;
}

inline double entry_to_f64(const CheckpointEntry& e) {
    if (e.dtype != DType::F64 || e.payload.size() != 8)
        throw CheckpointError("entry '" + e.name + "' is not a scalar f64");
    double v;
    std::memcpy(&v, e.payload.data(), 8);
    return v;
}

} // namespace w2v
