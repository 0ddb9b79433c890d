#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "epr/correlator.hpp"
#include "epr/detector.hpp"
#include "epr/error.hpp"

namespace epr::io {

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFFu));
}

template <typename T>
T get_le(const unsigned char* p) {
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
    return static_cast<T>(u);
}

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_le<std::uint64_t>(p)); }

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

} // namespace detail

// ---------------------------------------------------------------------------
// BPI1 frame-stack container
//
//   offset size field
//   0      4    magic "BPI1"
//   4      2    version (1)
//   6      4    width
//   10     4    height
//   14     4    n_frames
//   18     1    plane (0 near, 1 far)
//   19     1    packing (0 = 1 bit/pixel, row-major, rows padded to a byte, MSB first)
//   20     8    seed
//   28     4    reserved (0)
//   32     ...  n_frames * height * ceil(width/8) bytes of payload
//
// All integers little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 4> kStackMagic{'B', 'P', 'I', '1'};
inline constexpr std::uint16_t kStackVersion = 1;
inline constexpr std::size_t kStackHeaderSize = 32;

inline std::uint64_t stack_payload_size(std::uint32_t width, std::uint32_t height, std::uint32_t n_frames) {
    return std::uint64_t{n_frames} * height * ((std::uint64_t{width} + 7) / 8);
}

inline std::uint64_t stack_file_size(std::uint32_t width, std::uint32_t height, std::uint32_t n_frames) {
    return kStackHeaderSize + stack_payload_size(width, height, n_frames);
}

struct StackHeader {
    std::uint16_t version = kStackVersion;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t n_frames = 0;
    Plane plane = Plane::NearField;
    std::uint8_t packing = 0;
    std::uint64_t seed = 0;
};

inline std::string encode_stack_header(const StackHeader& h) {
    std::string out(kStackMagic.begin(), kStackMagic.end());
    detail::put_le(out, h.version);
    detail::put_le(out, h.width);
    detail::put_le(out, h.height);
    detail::put_le(out, h.n_frames);
    detail::put_le(out, static_cast<std::uint8_t>(h.plane));
    detail::put_le(out, h.packing);
    detail::put_le(out, h.seed);
    detail::put_le(out, std::uint32_t{0});
    return out;
}

inline StackHeader decode_stack_header(const unsigned char* p, std::size_t size) {
    if (size < kStackHeaderSize) throw FormatError("BPI1: file shorter than the 32-byte header");
    if (!std::equal(kStackMagic.begin(), kStackMagic.end(), reinterpret_cast<const char*>(p)))
        throw FormatError("BPI1: bad magic");
    StackHeader h;
    h.version = detail::get_le<std::uint16_t>(p + 4);
    h.width = detail::get_le<std::uint32_t>(p + 6);
    h.height = detail::get_le<std::uint32_t>(p + 10);
    h.n_frames = detail::get_le<std::uint32_t>(p + 14);
    const auto plane = p[18];
    h.packing = p[19];
    h.seed = detail::get_le<std::uint64_t>(p + 20);
    if (h.version != kStackVersion) throw FormatError("BPI1: unsupported version " + std::to_string(h.version));
    if (plane > 1) throw FormatError("BPI1: bad plane tag " + std::to_string(plane));
    if (h.packing != 0) throw FormatError("BPI1: unsupported packing " + std::to_string(h.packing));
    if (h.width == 0 || h.height == 0) throw FormatError("BPI1: zero frame size");
    h.plane = static_cast<Plane>(plane);
    return h;
}

//! Streams frames into a BPI1 file; the frame count is fixed up front and checked on finish().
class StackWriter {
public:
    StackWriter(const std::filesystem::path& path, const StackHeader& header)
        : path_(path), header_(header), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw FormatError("cannot open '" + path.string() + "' for writing");
        const std::string h = encode_stack_header(header);
        out_.write(h.data(), static_cast<std::streamsize>(h.size()));
    }

    void write(const Frame& f) {
        if (f.width() != static_cast<int>(header_.width) || f.height() != static_cast<int>(header_.height))
            throw FormatError("BPI1: frame size does not match the container");
        if (written_ >= header_.n_frames) throw FormatError("BPI1: more frames than declared");
        const auto b = f.bytes();
        out_.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
        ++written_;
    }

    void finish() {
        if (written_ != header_.n_frames)
            throw FormatError("BPI1: wrote " + std::to_string(written_) + " frames, declared " +
                              std::to_string(header_.n_frames));
        out_.flush();
        if (!out_) throw FormatError("write failed for '" + path_.string() + "'");
        out_.close();
    }

private:
    std::filesystem::path path_;
    StackHeader header_;
    std::ofstream out_;
    std::uint32_t written_ = 0;
};

inline void write_stack(const std::filesystem::path& path, const FrameStack& stack) {
    StackWriter w(path, {kStackVersion, static_cast<std::uint32_t>(stack.width), static_cast<std::uint32_t>(stack.height),
                         static_cast<std::uint32_t>(stack.size()), stack.plane, 0, stack.seed});
    for (const Frame& f : stack.frames) w.write(f);
    w.finish();
}

inline FrameStack read_stack(const std::filesystem::path& path) {
    const std::string data = detail::read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    const StackHeader h = decode_stack_header(p, data.size());
    const std::uint64_t expect = stack_payload_size(h.width, h.height, h.n_frames);
    if (data.size() - kStackHeaderSize != expect)
        throw FormatError("BPI1: payload is " + std::to_string(data.size() - kStackHeaderSize) + " bytes, expected " +
                          std::to_string(expect));
    FrameStack s;
    s.width = static_cast<int>(h.width);
    s.height = static_cast<int>(h.height);
    s.plane = h.plane;
    s.seed = h.seed;
    s.frames.reserve(h.n_frames);
    const std::size_t frame_bytes = static_cast<std::size_t>(h.height) * ((h.width + 7) / 8);
    for (std::uint32_t i = 0; i < h.n_frames; ++i) {
        Frame f(s.width, s.height, i);
        const auto* src = p + kStackHeaderSize + i * frame_bytes;
        std::copy(src, src + frame_bytes, f.bytes().begin());
        s.frames.push_back(std::move(f));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Correlation maps: 8 little-endian f64 header values
//   (magic, width, height, n_frames, plane, 0, 0, 0)
// followed by height rows of width f64 values in the centered displacement layout.
// ---------------------------------------------------------------------------

inline constexpr double kMapMagic = 1129136464.0; // "CMAP" read as a big-endian u32

inline std::string encode_map(const CorrMap& m, const std::vector<double>& values) {
    std::string out;
    out.reserve(8 * (8 + values.size()));
    for (double v : {kMapMagic, double(m.width), double(m.height), double(m.n_frames),
                     double(static_cast<int>(m.plane)), 0.0, 0.0, 0.0})
        detail::put_f64(out, v);
    for (double v : values) detail::put_f64(out, v);
    return out;
}

inline void write_map_bin(const std::filesystem::path& path, const CorrMap& m) {
    detail::write_file(path, encode_map(m, m.values));
}

//! Reads values and header fields; mask and standard errors are not part of this file.
inline CorrMap read_map_bin(const std::filesystem::path& path) {
    const std::string data = detail::read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    if (data.size() < 64) throw FormatError("map: file shorter than the header");
    if (detail::get_f64(p) != kMapMagic) throw FormatError("map: bad magic");
    const double w = detail::get_f64(p + 8), h = detail::get_f64(p + 16);
    const double nf = detail::get_f64(p + 24), plane = detail::get_f64(p + 32);
    if (!(w >= 1 && h >= 1 && w == std::floor(w) && h == std::floor(h) && w * h < 1e9))
        throw FormatError("map: bad dimensions");
    if (plane != 0.0 && plane != 1.0) throw FormatError("map: bad plane tag");
    CorrMap m;
    m.width = static_cast<int>(w);
    m.height = static_cast<int>(h);
    m.n_frames = static_cast<std::int64_t>(nf);
    m.plane = static_cast<Plane>(static_cast<int>(plane));
    const std::size_t n = static_cast<std::size_t>(m.width) * static_cast<std::size_t>(m.height);
    if (data.size() != 64 + 8 * n)
        throw FormatError("map: payload is " + std::to_string(data.size() - 64) + " bytes, expected " +
                          std::to_string(8 * n));
    m.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.values[i] = detail::get_f64(p + 64 + 8 * i);
    m.std_error.assign(n, 0.0);
    m.mask.assign(n, 0);
    return m;
}

//! One CSV row per displacement row, shortest round-trip formatting.
template <typename T>
std::string encode_csv(int width, int height, const std::vector<T>& values) {
    std::string out;
    char buf[32];
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (x) out.push_back(',');
            if constexpr (std::is_floating_point_v<T>)
                std::snprintf(buf, sizeof buf, "%.17g", values[static_cast<std::size_t>(y) * width + x]);
            else
                std::snprintf(buf, sizeof buf, "%d", static_cast<int>(values[static_cast<std::size_t>(y) * width + x]));
            out += buf;
        }
        out.push_back('\n');
    }
    return out;
}

inline std::vector<double> read_csv(const std::filesystem::path& path, int& width, int& height) {
    std::istringstream in(detail::read_file(path));
    std::vector<double> values;
    std::string line;
    width = -1;
    height = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        int n = 0;
        while (std::getline(row, cell, ',')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw FormatError("csv '" + path.string() + "' row " + std::to_string(height + 1) + ": bad number '" +
                                  cell + "'");
            }
            ++n;
        }
        if (width >= 0 && n != width) throw FormatError("csv '" + path.string() + "': ragged rows");
        width = n;
        ++height;
    }
    if (height == 0) throw FormatError("csv '" + path.string() + "': empty");
    return values;
}

// ---------------------------------------------------------------------------

//! Lowercase hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256: digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(detail::read_file(path)); }

} // namespace epr::io
