#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace flow4d {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

class BinWriter {
public:
    explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for write: " + path);
    }
    void magic(const char m[4]) { out_.write(m, 4); }
    void u32(uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), 4); }
    void f32(float v) { out_.write(reinterpret_cast<const char*>(&v), 4); }
    void f64(double v) { out_.write(reinterpret_cast<const char*>(&v), 8); }
    void f32_all(const std::vector<double>& vs) {
        for (double v : vs) f32(static_cast<float>(v));
    }
    void f64_all(const double* p, size_t n) {
        out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void close() {
        out_.close();
        if (!out_) throw std::runtime_error("write failed on close");
    }

private:
    std::ofstream out_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open for read: " + path);
    }
    void expect_magic(const char m[4], const std::string& what) {
        char buf[4];
        in_.read(buf, 4);
        if (!in_ || std::memcmp(buf, m, 4) != 0)
            throw std::runtime_error("bad magic, not a " + what + " file");
    }
    uint32_t u32() {
        uint32_t v;
        read(&v, 4);
        return v;
    }
    float f32() {
        float v;
        read(&v, 4);
        return v;
    }
    double f64() {
        double v;
        read(&v, 8);
        return v;
    }
    std::vector<double> f32_all(size_t n) {
        std::vector<double> out(n);
        for (size_t i = 0; i < n; ++i) out[i] = f32();
        return out;
    }
    void f64_all(double* p, size_t n) { read(p, n * 8); }
    std::string str() {
        uint32_t n = u32();
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

private:
    void read(void* p, size_t n) {
        in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in_) throw std::runtime_error("truncated file");
    }
    std::ifstream in_;
};

}  // namespace flow4d
