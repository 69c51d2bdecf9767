#pragma once

// Little-endian primitive readers/writers shared by the dataset and model
// file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "lyapnet/errors.hpp"

namespace lyapnet::binio {

template <typename UInt>
void put_uint(std::ostream& os, UInt v) {
  char buf[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(UInt));
}

inline void put_f64(std::ostream& os, double v) { put_uint(os, std::bit_cast<std::uint64_t>(v)); }

inline void put_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

/// Reader that turns every short read into a FormatError naming the file.
class Reader {
 public:
  Reader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

  template <typename UInt>
  UInt get_uint(std::string_view what) {
    unsigned char buf[sizeof(UInt)];
    read(reinterpret_cast<char*>(buf), sizeof(UInt), what);
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(static_cast<UInt>(buf[i]) << (8 * i));
    return v;
  }

  double get_f64(std::string_view what) { return std::bit_cast<double>(get_uint<std::uint64_t>(what)); }

  void expect_magic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    read(got.data(), magic.size(), "magic");
    if (got != magic) fail(detail::concat("bad magic (expected ", magic, ")"));
  }

  /// Fails unless the stream is exhausted.
  void expect_end() {
    if (is_.peek() != std::char_traits<char>::eof()) fail("trailing bytes after last record");
  }

  [[noreturn]] void fail(std::string_view why) const { throw FormatError(detail::concat(source_, ": ", why)); }

 private:
  void read(char* dst, std::size_t n, std::string_view what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) fail(detail::concat("truncated while reading ", what));
  }

  std::istream& is_;
  std::string source_;
};

/// Writes through a temporary sibling and renames into place, so a failed
/// write never leaves a partial file at `path`.
template <typename WriteFn>
void atomic_write(const std::filesystem::path& path, WriteFn&& write, std::ios::openmode mode = std::ios::binary) {
  auto tmp = path;
  tmp += ".partial";
  try {
    {
      std::ofstream os(tmp, mode | std::ios::out | std::ios::trunc);
      if (!os) throw Error(detail::concat("cannot open ", tmp.string(), " for writing"));
      write(os);
      os.flush();
      if (!os) throw Error(detail::concat("write failed for ", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(detail::concat("cannot open ", path.string()));
  return is;
}

}  // namespace lyapnet::binio
