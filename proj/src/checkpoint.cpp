#include "vtr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace vtr::core {

namespace {

constexpr char kMagic[4] = {'V', 'T', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_f64(std::ostream& os, double d) {
  const auto u = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    VTR_CHECK(e.name.size() < 65536, "checkpoint entry name too long");
    put_u16(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const auto& shape = e.tensor.shape();
    VTR_CHECK(shape.size() < 256, "checkpoint entry rank too large");
    os.put(static_cast<char>(shape.size()));
    for (auto ext : shape) put_u32(os, static_cast<std::uint32_t>(ext));
    for (double v : e.tensor.vec()) put_f64(os, v);
  }
  if (!os) throw IoError("write failed for checkpoint: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad checkpoint magic in " + path);
  const int version = is.get();
  if (version != kVersion)
    throw IoError("unsupported checkpoint version in " + path);
  const std::uint32_t count = get_u32(is);
  std::vector<NamedTensor> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = get_u16(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const int ndim = is.get();
    if (ndim < 0) throw IoError("truncated checkpoint: " + path);
    Shape shape(static_cast<std::size_t>(ndim));
    for (int d = 0; d < ndim; ++d) shape[static_cast<std::size_t>(d)] = get_u32(is);
    const std::int64_t n = numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) data[static_cast<std::size_t>(j)] = get_f64(is);
    if (!is) throw IoError("truncated checkpoint: " + path);
    entries.push_back({std::move(name), Tensor::from_data(std::move(shape), std::move(data))});
  }
  return entries;
}

}  // namespace vtr::core
