#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "errors.hpp"

namespace circuitgcl {

using Bytes = std::vector<std::uint8_t>;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline std::uint32_t crc32(std::span<const std::uint8_t> data) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large buffers.
    std::size_t off = 0;
    while (off < data.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
        c = ::crc32(c, data.data() + off, n);
        off += n;
    }
    return static_cast<std::uint32_t>(c);
}

/// Little-endian writer.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void f64s(std::span<const double> v) {
        u64(v.size());
        for (double x : v) f64(x);
    }

    std::size_t size() const noexcept { return buf_.size(); }
    const Bytes& bytes() const noexcept { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    template <class T>
    void put(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes buf_;
};

/// Little-endian reader; every overrun raises FormatError with the absolute offset.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data, std::uint64_t base = 0) : data_(data), base_(base) {}

    std::uint8_t u8() { return get<std::uint8_t>("u8"); }
    std::uint32_t u32() { return get<std::uint32_t>("u32"); }
    std::uint64_t u64() { return get<std::uint64_t>("u64"); }
    double f64() { return std::bit_cast<double>(get<std::uint64_t>("f64")); }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n, "byte block");
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::string str() {
        const std::uint32_t n = u32();
        auto s = raw(n);
        return {s.begin(), s.end()};
    }
    std::vector<double> f64s() {
        const std::uint64_t n = count(8, "f64 array");
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    /// Reads an element count and checks that `elem_size * count` bytes remain.
    std::uint64_t count(std::size_t elem_size, const char* what) {
        const std::uint64_t n = u64();
        if (elem_size && n > remaining() / elem_size) {
            throw FormatError(offset(), std::string(what) + " length " + std::to_string(n) + " exceeds payload");
        }
        return n;
    }

    std::uint64_t offset() const noexcept { return base_ + pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool done() const noexcept { return pos_ == data_.size(); }
    void expect_done(const char* what) const {
        if (!done()) throw FormatError(offset(), std::string("trailing bytes in ") + what);
    }

private:
    void need(std::size_t n, const char* what) const {
        if (n > remaining()) throw FormatError(offset(), std::string("truncated ") + what);
    }
    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::uint64_t base_;
};

/// Section container shared by every binary format:
///   magic[4] | u32 version | u32 n_sections | n * (u32 tag, u64 offset, u64 length)
///   | section payloads | u32 CRC32 of all preceding bytes
struct Container {
    std::string magic;
    std::uint32_t version = 0;
    std::map<std::uint32_t, Bytes> sections;
};

constexpr std::uint32_t fourcc(const char (&s)[5]) {
    return static_cast<std::uint32_t>(s[0]) | static_cast<std::uint32_t>(s[1]) << 8 |
           static_cast<std::uint32_t>(s[2]) << 16 | static_cast<std::uint32_t>(s[3]) << 24;
}

inline Bytes write_container(const Container& c) {
    if (c.magic.size() != 4) throw ArgumentError("container magic must be 4 bytes");
    ByteWriter w;
    w.raw({reinterpret_cast<const std::uint8_t*>(c.magic.data()), 4});
    w.u32(c.version);
    w.u32(static_cast<std::uint32_t>(c.sections.size()));
    std::uint64_t offset = 12 + 20 * c.sections.size();
    for (const auto& [tag, payload] : c.sections) {
        w.u32(tag);
        w.u64(offset);
        w.u64(payload.size());
        offset += payload.size();
    }
    for (const auto& [tag, payload] : c.sections) w.raw(payload);
    w.u32(crc32(w.bytes()));
    return w.take();
}

/// Parses and verifies a container. A wrong magic or corrupt layout raises
/// FormatError; a version other than `expected_version` raises VersionError.
inline Container read_container(std::span<const std::uint8_t> bytes, std::string_view magic,
                                std::uint32_t expected_version) {
    if (bytes.size() < 16) throw FormatError(bytes.size(), "truncated container header");
    if (std::memcmp(bytes.data(), magic.data(), 4) != 0) throw FormatError(0, "bad magic, expected " + std::string(magic));
    ByteReader head(bytes.subspan(4), 4);
    Container c;
    c.magic = std::string(magic);
    c.version = head.u32();
    if (c.version != expected_version) {
        throw VersionError(std::string(magic) + " file version " + std::to_string(c.version) +
                           " is not supported (expected " + std::to_string(expected_version) + ")");
    }
    const std::uint32_t n = head.u32();
    const std::uint64_t body_end = bytes.size() - 4;
    if (n > (body_end - 12) / 20) throw FormatError(8, "section count " + std::to_string(n) + " exceeds file size");
    std::uint64_t expected_offset = 12 + 20ull * n;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint64_t at = head.offset();
        const std::uint32_t tag = head.u32();
        const std::uint64_t off = head.u64();
        const std::uint64_t len = head.u64();
        if (off != expected_offset || len > body_end - off) throw FormatError(at, "section table entry out of bounds");
        expected_offset = off + len;
        c.sections.emplace(tag, Bytes(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                                      bytes.begin() + static_cast<std::ptrdiff_t>(off + len)));
    }
    if (expected_offset != body_end) throw FormatError(expected_offset, "unexpected bytes before checksum");
    ByteReader tail(bytes.subspan(body_end), body_end);
    const std::uint32_t stored = tail.u32();
    if (stored != crc32(bytes.first(body_end))) throw FormatError(body_end, "checksum mismatch");
    return c;
}

inline const Bytes& section(const Container& c, std::uint32_t tag, const char* name) {
    auto it = c.sections.find(tag);
    if (it == c.sections.end()) throw FormatError(0, c.magic + " file lacks the " + std::string(name) + " section");
    return it->second;
}

/// Byte offset of a section payload inside the container, for error reporting.
inline std::uint64_t section_offset(const Container& c, std::uint32_t tag) {
    std::uint64_t off = 12 + 20 * c.sections.size();
    for (const auto& [t, p] : c.sections) {
        if (t == tag) return off;
        off += p.size();
    }
    return 0;
}

inline Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("file not found: " + path);
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("file not found: " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline void write_text_file(const std::string& path, std::string_view text) {
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace circuitgcl
