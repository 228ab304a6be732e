#pragma once

// "LGAW" weight files: little-endian, magic "LGAW", u32 version (1), u32 tensor
// count, then per tensor a u16 name length, the UTF-8 name, a u8 rank, u32
// extents and the values as raw 32-bit floats.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lga/tensor.hpp"

namespace lga {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using TensorList = std::vector<NamedTensor<T>>;

/// Decoded weight record; values are always the stored 32-bit floats.
struct WeightRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

template <typename T>
void write_weights(const TensorList<T>& tensors, std::ostream& out);
template <typename T>
void write_weights(const TensorList<T>& tensors, const std::filesystem::path& path);

std::vector<WeightRecord> read_weights(std::istream& in);
std::vector<WeightRecord> read_weights(const std::filesystem::path& path);

/// Copies records into same-named tensors. Every tensor must be present with
/// a matching shape; extra records are an error too.
template <typename T>
void assign_weights(const TensorList<T>& tensors, const std::vector<WeightRecord>& records);

template <typename T>
std::size_t count_elements(const TensorList<T>& tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.tensor.numel();
  return n;
}

}  // namespace lga
