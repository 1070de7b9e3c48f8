#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "stshare/tensor.hpp"

namespace stshare {

// Binary tensor file: magic "STT1", u8 dtype code, u8 rank, rank x u32
// little-endian dims, then the raw little-endian payload. Used for datasets,
// checkpoints and golden test fixtures.
//
// dtype codes: 0 = float32, 1 = float64, 2 = uint8, 3 = int32.

namespace detail {

template <typename T>
constexpr std::uint8_t stt1_dtype_code() {
  if constexpr (std::is_same_v<T, float>) return 0;
  else if constexpr (std::is_same_v<T, double>) return 1;
  else if constexpr (std::is_same_v<T, std::uint8_t>) return 2;
  else if constexpr (std::is_same_v<T, std::int32_t>) return 3;
  else static_assert(sizeof(T) == 0, "unsupported STT1 dtype");
}

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

template <typename T>
void save_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write("STT1", 4);
  const std::uint8_t dtype = detail::stt1_dtype_code<T>();
  const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
  os.write(reinterpret_cast<const char*>(&dtype), 1);
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (int i = 0; i < t.rank(); ++i) detail::write_u32_le(os, static_cast<std::uint32_t>(t.dim(i)));
  // Payload is written verbatim; the library targets little-endian hosts.
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_tensor(os, t);
  if (!os) throw std::runtime_error("write failed: " + path);
}

template <typename T>
Tensor<T> load_tensor(std::istream& is, const std::string& what = "<stream>") {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "STT1", 4) != 0)
    throw std::runtime_error("not an STT1 tensor file: " + what);
  std::uint8_t dtype = 0, rank = 0;
  is.read(reinterpret_cast<char*>(&dtype), 1);
  is.read(reinterpret_cast<char*>(&rank), 1);
  if (dtype != detail::stt1_dtype_code<T>())
    throw std::runtime_error("STT1 dtype mismatch in " + what + ": file has code " +
                             std::to_string(int(dtype)));
  if (rank == 0) throw std::runtime_error("STT1 rank 0 in " + what);
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<int>(detail::read_u32_le(is));
  Tensor<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!is) throw std::runtime_error("truncated STT1 payload in " + what);
  return t;
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_tensor<T>(is, path);
}

inline std::uint8_t peek_tensor_dtype(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "STT1", 4) != 0)
    throw std::runtime_error("not an STT1 tensor file: " + path);
  std::uint8_t dtype = 0;
  is.read(reinterpret_cast<char*>(&dtype), 1);
  return dtype;
}

}  // namespace stshare
