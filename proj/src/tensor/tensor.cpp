// SPDX-License-Identifier: Apache-2.0
#include "tensor/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace semcc {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'C', 'C', 'T', '0', '1'};
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated tensor file " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

void save_tensor_file(const std::string& path, const Shape& shape, std::span<const float> values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_u32(os, static_cast<std::uint32_t>(d));
  for (float v : values) put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw DataError("write failed for " + path);
}

std::pair<Shape, std::vector<float>> load_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open tensor file " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw DataError("bad magic in " + path);
  std::uint32_t rank = get_u32(is, path);
  if (rank == 0 || rank > kMaxRank) throw DataError("unsupported rank " + std::to_string(rank) + " in " + path);
  Shape shape(rank);
  for (auto& d : shape) {
    std::uint32_t e = get_u32(is, path);
    if (e == 0 || e > (1u << 28)) throw DataError("bad extent in " + path);
    d = static_cast<int>(e);
  }
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = std::bit_cast<float>(get_u32(is, path));
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in " + path);
  return {shape, values};
}

}  // namespace semcc
