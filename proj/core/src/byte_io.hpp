#pragma once

// Little-endian stream helpers shared by the binary formats.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "lga/tensor.hpp"

namespace lga::detail {

template <typename U>
void put_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

class ByteReader {
 public:
  ByteReader(std::istream& in, std::string file_kind) : in_(in), kind_(std::move(file_kind)) {}

  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("truncated " + kind_ + " while reading " + what, offset_);
    }
    offset_ += n;
  }

  template <typename U>
  U le(const char* what) {
    unsigned char buf[sizeof(U)];
    bytes(buf, sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<U>(v);
  }

  /// True when the stream has no bytes left.
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::string kind_;
  std::uint64_t offset_ = 0;
};

}  // namespace lga::detail
