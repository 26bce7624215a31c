#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace raf {

// Writes to a temp file in the same directory, then renames into place, so
// failures never leave a partial artifact at `path`.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file_bytes(const std::string& path);

// Little-endian binary buffer helpers.
class ByteWriter {
public:
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void bytes(const void* data, std::size_t n);
    void lp_string(const std::string& s);  // u32 length prefix + raw bytes

    const std::string& buffer() const noexcept { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& buf) : buf_(buf) {}

    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    void bytes(void* out, std::size_t n);
    std::string lp_string();

    std::size_t remaining() const noexcept { return buf_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == buf_.size(); }

private:
    void need(std::size_t n);

    const std::string& buf_;
    std::size_t pos_ = 0;
};

}  // namespace raf
