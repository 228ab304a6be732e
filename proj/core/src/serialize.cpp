#include "lga/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "byte_io.hpp"

namespace lga {

namespace {

constexpr char kMagic[4] = {'L', 'G', 'A', 'W'};

using detail::put_le;

}  // namespace

template <typename T>
void write_weights(const TensorList<T>& tensors, std::ostream& out) {
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kWeightFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw UsageError("weight name too long: " + name);
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& shape = tensor.shape();
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (auto e : shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (T v : tensor.data()) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  if (!out) throw std::runtime_error("failed writing weight stream");
}

template <typename T>
void write_weights(const TensorList<T>& tensors, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_weights(tensors, out);
}

std::vector<WeightRecord> read_weights(std::istream& in) {
  detail::ByteReader r(in, "weight file");
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, expected LGAW", 0);
  const std::uint64_t version_at = r.offset();
  auto version = r.le<std::uint32_t>("version");
  if (version != kWeightFormatVersion) {
    throw FormatError("unsupported weight format version " + std::to_string(version), version_at);
  }
  auto count = r.le<std::uint32_t>("tensor count");
  std::vector<WeightRecord> records;
  for (std::uint32_t t = 0; t < count; ++t) {
    WeightRecord rec;
    auto len = r.le<std::uint16_t>("name length");
    rec.name.resize(len);
    r.bytes(rec.name.data(), len, "name");
    auto rank = r.le<std::uint8_t>("rank");
    for (std::uint8_t d = 0; d < rank; ++d) rec.shape.push_back(r.le<std::uint32_t>("extent"));
    rec.values.resize(shape_numel(rec.shape));
    for (auto& v : rec.values) v = std::bit_cast<float>(r.le<std::uint32_t>("values"));
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<WeightRecord> read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_weights(in);
}

template <typename T>
void assign_weights(const TensorList<T>& tensors, const std::vector<WeightRecord>& records) {
  std::unordered_map<std::string, const WeightRecord*> by_name;
  for (const auto& r : records) {
    if (!by_name.emplace(r.name, &r).second) throw UsageError("duplicate weight " + r.name);
  }
  if (records.size() != tensors.size()) {
    throw UsageError("weight file holds " + std::to_string(records.size()) +
                     " tensors, model expects " + std::to_string(tensors.size()));
  }
  for (const auto& [name, tensor] : tensors) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw UsageError("weight file lacks tensor " + name);
    if (it->second->shape != tensor.shape()) {
      throw ShapeError("weight " + name + " has shape " + shape_str(it->second->shape) +
                       ", model expects " + shape_str(tensor.shape()));
    }
    auto dst = Tensor<T>(tensor).mutable_data();
    const auto& src = it->second->values;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
}

template void write_weights<float>(const TensorList<float>&, std::ostream&);
template void write_weights<double>(const TensorList<double>&, std::ostream&);
template void write_weights<float>(const TensorList<float>&, const std::filesystem::path&);
template void write_weights<double>(const TensorList<double>&, const std::filesystem::path&);
template void assign_weights<float>(const TensorList<float>&, const std::vector<WeightRecord>&);
template void assign_weights<double>(const TensorList<double>&, const std::vector<WeightRecord>&);

}  // namespace lga
