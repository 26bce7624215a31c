#include "rafkit/io_util.hpp"

#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "rafkit/errors.hpp"

namespace raf {

void atomic_write_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path dir = target.parent_path();
    if (dir.empty()) dir = ".";
    std::error_code ec;
    fs::create_directories(dir, ec);

    fs::path tmp = dir / (target.filename().string() + ".tmp." +
                          std::to_string(static_cast<unsigned long>(::getpid())));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            fs::remove(tmp, ec);
            throw io_error("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw io_error("rename to " + path + " failed: " + ec.message());
    }
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

namespace {
template <typename T>
void append_le(std::string& buf, T v) {
    unsigned char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    // Host is little-endian on every supported target; memcpy is the layout.
    buf.append(reinterpret_cast<const char*>(tmp), sizeof(T));
}
}  // namespace

void ByteWriter::u32(std::uint32_t v) { append_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { append_le(buf_, v); }
void ByteWriter::f32(float v) { append_le(buf_, v); }
void ByteWriter::f64(double v) { append_le(buf_, v); }
void ByteWriter::bytes(const void* data, std::size_t n) {
    buf_.append(static_cast<const char*>(data), n);
}
void ByteWriter::lp_string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
}

void ByteReader::need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw truncated_file("unexpected end of file");
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf_.data() + pos_, 4);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

float ByteReader::f32() {
    need(4);
    float v;
    std::memcpy(&v, buf_.data() + pos_, 4);
    pos_ += 4;
    return v;
}

double ByteReader::f64() {
    need(8);
    double v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

void ByteReader::bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
}

std::string ByteReader::lp_string() {
    std::uint32_t n = u32();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
}

}  // namespace raf
