#pragma once

// ECG datasets: the "LGAE" container, patient-wise splitting, mini-batching
// and a deterministic synthetic generator with one waveform signature per
// class.

#include <cstddef>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lga/tensor.hpp"

namespace lga::data {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

/// Abnormality names for the six-class task, in label order.
inline constexpr const char* kClassNames[] = {"1dAVB", "RBBB", "LBBB", "SB", "AF", "ST"};

struct EcgRecord {
  std::uint64_t patient_id = 0;
  std::vector<std::uint8_t> labels;  // K entries, each 0 or 1
  std::vector<float> signal;         // C * N0 values, lead-major (millivolts)
};

struct Dataset {
  std::size_t leads = 12;
  std::size_t length = 4096;
  std::size_t classes = 6;
  std::uint32_t sample_rate_hz = 400;
  std::vector<EcgRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  /// Same header, chosen records.
  Dataset subset(const std::vector<std::size_t>& indices) const;
  /// Checks every record against the header. Throws ShapeError.
  void validate() const;
};

void write_dataset(const Dataset& ds, std::ostream& out);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
/// FormatError (with byte offset) on bad magic, version, labels, values or truncation.
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

/// record_index,patient_id,<one column per class>
void write_labels_csv(const Dataset& ds, std::ostream& out);

struct SplitSpec {
  double train = 0.90;
  double val = 0.05;
  double dev = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SplitSpec&) const = default;
};

struct Split {
  Dataset train, val, dev;
};

/// Patients are shuffled with spec.seed and allotted to the subsets by the
/// largest-remainder rule on the patient count. Record order inside a subset
/// follows the source order.
Split split_by_patient(const Dataset& ds, const SplitSpec& spec);

/// Patient counts per subset for `patients` patients (largest remainder;
/// ties go to the earlier subset).
std::array<std::size_t, 3> allot_patients(std::size_t patients, const SplitSpec& spec);

struct SynthSpec {
  std::size_t n = 256;
  std::size_t classes = 6;
  std::uint64_t seed = 0;
  std::size_t leads = 12;
  std::size_t length = 4096;
  std::uint32_t sample_rate_hz = 400;
  /// Per-class probability that a record carries the signature.
  double label_probability = 0.3;
  /// Exactly one signature per record instead of independent draws.
  bool single_label = false;
  /// Consecutive records sharing one patient id.
  std::size_t records_per_patient = 2;
  double noise_mv = 0.05;

  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

/// Beat trains of Gaussian bumps plus white noise. Signatures:
/// 0 widened bump, 1 inverted bump on the first half of the leads,
/// 2 doubled bump, 3 lengthened inter-beat gap, 4 jittered beat times,
/// 5 shortened gap. Classes 3 and 5 never co-occur. Classes beyond 5 have
/// no waveform signature.
Dataset synth_dataset(const SynthSpec& spec);

template <typename T>
struct Batch {
  Tensor<T> signals;  // [B, C, N0]
  Tensor<T> labels;   // [B, K]
  std::vector<std::size_t> indices;
};

/// Index groups of at most batch_size; the last may be short. With a seed
/// the order is a Fisher-Yates shuffle, otherwise the natural order.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    const std::uint64_t* shuffle_seed);

template <typename T>
Batch<T> make_batch(const Dataset& ds, const std::vector<std::size_t>& indices);

/// Every batch of one epoch in order.
template <typename T>
std::vector<Batch<T>> batches(const Dataset& ds, std::size_t batch_size,
                              const std::uint64_t* shuffle_seed);

}  // namespace lga::data
