// SPDX-License-Identifier: Apache-2.0
#include "scenafuse/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace scenafuse {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'N', 'F'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u;
  std::memcpy(&u, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  put_bytes(os, buf, sizeof(T));
}

void put_f64(std::ostream& os, double value) {
  put_le(os, std::bit_cast<std::uint64_t>(value));
}

void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw std::runtime_error(std::string("checkpoint: truncated file while reading ") + what);
  }
}

template <typename T>
T get_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(T)];
  get_bytes(is, buf, sizeof(T), what);
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<U>(buf[i]) << (8 * i);
  T value;
  std::memcpy(&value, &u, sizeof(T));
  return value;
}

double get_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(get_le<std::uint64_t>(is, what));
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  put_bytes(os, kMagic, 4);
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    if (name.size() > 0xffff) throw std::runtime_error("checkpoint: name too long: " + name);
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    put_bytes(os, name.data(), name.size());
    const Shape& shape = tensor.shape();
    if (shape.size() > 0xff) throw std::runtime_error("checkpoint: rank too large");
    unsigned char rank = static_cast<unsigned char>(shape.size());
    put_bytes(os, &rank, 1);
    for (std::size_t e : shape) put_le<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    for (double v : tensor.data()) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  get_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto version = get_le<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(is, "count");
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = get_le<std::uint16_t>(is, "name length");
    std::string name(name_len, '\0');
    get_bytes(is, name.data(), name_len, "name");
    unsigned char rank;
    get_bytes(is, &rank, 1, "rank");
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::size_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<std::size_t>(get_le<std::uint64_t>(is, "extent"));
      numel *= shape[i];
    }
    std::vector<double> data(numel);
    for (std::size_t i = 0; i < numel; ++i) data[i] = get_f64(is, "data");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

void restore_into(const NamedTensors& loaded, const NamedTensors& dest) {
  std::unordered_map<std::string, const Tensor*> index;
  for (const auto& [name, tensor] : loaded) index[name] = &tensor;
  for (const auto& [name, tensor] : dest) {
    auto it = index.find(name);
    if (it == index.end()) {
      throw std::runtime_error("checkpoint: missing parameter " + name);
    }
    if (it->second->shape() != tensor.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": file has " +
                               shape_str(it->second->shape()) + ", model has " +
                               shape_str(tensor.shape()));
    }
    std::copy(it->second->data().begin(), it->second->data().end(),
              const_cast<Tensor&>(tensor).data().begin());
  }
}

}  // namespace scenafuse
