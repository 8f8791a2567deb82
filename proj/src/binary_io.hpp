#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "denseloc/image.hpp"

namespace denseloc::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }
  void magic(const char (&m)[5]) { out_.write(m, 4); }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void f32(float v) { raw(&v, 4); }
  void str(const std::string& s) {
    u32(std::uint32_t(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, size_t n) {
    out_.write(static_cast<const char*>(p), std::streamsize(n));
    if (!out_) throw IoError("write failed on '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path + "'");
  }
  void expect_magic(const char (&m)[5]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, m, 4) != 0) throw IoError("'" + path_ + "': bad magic, expected " + m);
  }
  std::string magic() {
    char got[4];
    raw(got, 4);
    return std::string(got, 4);
  }
  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  float f32() { float v; raw(&v, 4); return v; }
  std::string str() {
    const auto n = u32();
    if (n > (1u << 20)) throw IoError("'" + path_ + "': string too long");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  void raw(void* p, size_t n) {
    in_.read(static_cast<char*>(p), std::streamsize(n));
    if (size_t(in_.gcount()) != n) throw IoError("'" + path_ + "': truncated file");
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw IoError("'" + path_ + "': trailing bytes");
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace denseloc::detail
