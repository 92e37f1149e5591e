#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atss::io {

/// Little-endian byte sink backed by a growable buffer.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);
    void bytes(std::string_view s);

    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

/// Little-endian cursor over an immutable byte span. Every read throws
/// TruncatedInput when fewer bytes remain than requested.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    float f32();
    double f64();
    std::string bytes(std::size_t n);

    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    const std::uint8_t* take(std::size_t n);

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

struct TruncatedInput {};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to `path.tmp` then renames over `path`, so a failed write never
/// leaves a partial file behind.
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write(const std::filesystem::path& path, std::string_view text);

}  // namespace atss::io
