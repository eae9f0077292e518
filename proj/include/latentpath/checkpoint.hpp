#pragma once

// Parameter checkpoint container. Layout, all little-endian:
//   magic "LPTH" | version u32 | block count u32
//   per block: name length u32 | name bytes | rank u32 | extents u64[rank]
//              | values f64[numel]

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "latentpath/common.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

namespace detail {

inline void write_bytes(std::ostream& out, const void* data, std::size_t count) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(count));
}

template <typename T>
void write_scalar(std::ostream& out, T value) {
  write_bytes(out, &value, sizeof(T));
}

inline void read_bytes(std::istream& in, void* data, std::size_t count, const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(count));
  if (!in) throw IoError(std::string("checkpoint: truncated while reading ") + what);
}

template <typename T>
T read_scalar(std::istream& in, const char* what) {
  T value{};
  read_bytes(in, &value, sizeof(T), what);
  return value;
}

}  // namespace detail

inline constexpr std::uint32_t checkpoint_version = 1;

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::vector<NamedTensor>& blocks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  out.write("LPTH", 4);
  detail::write_scalar<std::uint32_t>(out, checkpoint_version);
  detail::write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& block : blocks) {
    detail::write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(block.name.size()));
    detail::write_bytes(out, block.name.data(), block.name.size());
    const auto& shape = block.tensor.shape();
    detail::write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) detail::write_scalar<std::uint64_t>(out, e);
    detail::write_bytes(out, block.tensor.data(), block.tensor.numel() * sizeof(double));
  }
  if (!out) throw IoError("checkpoint: write failed for " + path.string());
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  char magic[4];
  detail::read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, "LPTH", 4) != 0) {
    throw IoError("checkpoint: bad magic in " + path.string());
  }
  const auto version = detail::read_scalar<std::uint32_t>(in, "version");
  if (version != checkpoint_version) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = detail::read_scalar<std::uint32_t>(in, "block count");
  std::vector<NamedTensor> blocks;
  blocks.reserve(count);
  for (std::uint32_t b = 0; b < count; ++b) {
    const auto name_len = detail::read_scalar<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    detail::read_bytes(in, name.data(), name_len, "name");
    const auto rank = detail::read_scalar<std::uint32_t>(in, "rank");
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(detail::read_scalar<std::uint64_t>(in, "extent"));
    std::vector<double> values(detail::shape_numel(shape));
    detail::read_bytes(in, values.data(), values.size() * sizeof(double), "values");
    blocks.push_back({std::move(name), Tensor::from_values(std::move(shape), std::move(values))});
  }
  return blocks;
}

// Copies checkpoint values into matching live parameters; every parameter
// must be present with an identical shape. Extra blocks (metadata) are
// ignored here.
inline void load_parameters(const std::vector<NamedTensor>& blocks,
                            std::vector<NamedTensor> params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& block : blocks) by_name[block.name] = &block.tensor;
  for (auto& param : params) {
    auto it = by_name.find(param.name);
    if (it == by_name.end()) {
      throw IoError("checkpoint: missing parameter " + param.name);
    }
    if (it->second->shape() != param.tensor.shape()) {
      throw IoError("checkpoint: shape mismatch for " + param.name);
    }
    std::copy(it->second->data(), it->second->data() + it->second->numel(),
              param.tensor.data());
  }
}

}  // namespace latentpath
