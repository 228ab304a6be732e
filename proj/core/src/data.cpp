#include "lga/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "byte_io.hpp"
#include "lga/random.hpp"

namespace lga::data {

namespace {

constexpr char kMagic[4] = {'L', 'G', 'A', 'E'};

template <typename V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

std::uint32_t to_u32(std::size_t v, const char* field) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw UsageError(std::string(field) + " does not fit the dataset header");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out{leads, length, classes, sample_rate_hz, {}};
  out.records.reserve(indices.size());
  for (auto i : indices) out.records.push_back(records.at(i));
  return out;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.labels.size() != classes || r.signal.size() != leads * length) {
      throw ShapeError("record " + std::to_string(i) + " has " + std::to_string(r.labels.size()) +
                       " labels and " + std::to_string(r.signal.size()) +
                       " samples; header expects " + std::to_string(classes) + " and " +
                       std::to_string(leads * length));
    }
  }
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  ds.validate();
  using detail::put_le;
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kDatasetFormatVersion);
  put_le<std::uint32_t>(out, to_u32(ds.records.size(), "record count"));
  put_le<std::uint32_t>(out, to_u32(ds.leads, "lead count"));
  put_le<std::uint32_t>(out, to_u32(ds.length, "signal length"));
  put_le<std::uint32_t>(out, to_u32(ds.classes, "class count"));
  put_le<std::uint32_t>(out, ds.sample_rate_hz);
  std::vector<unsigned char> buf;
  for (const auto& r : ds.records) {
    put_le<std::uint64_t>(out, r.patient_id);
    out.write(reinterpret_cast<const char*>(r.labels.data()),
              static_cast<std::streamsize>(r.labels.size()));
    buf.resize(r.signal.size() * 4);
    for (std::size_t i = 0; i < r.signal.size(); ++i) {
      auto bits = std::bit_cast<std::uint32_t>(r.signal[i]);
      for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw std::runtime_error("failed writing dataset stream");
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(ds, out);
}

Dataset read_dataset(std::istream& in) {
  detail::ByteReader r(in, "dataset file");
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, expected LGAE", 0);
  const auto version_at = r.offset();
  auto version = r.le<std::uint32_t>("version");
  if (version != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format version " + std::to_string(version), version_at);
  }
  Dataset ds;
  const auto count = r.le<std::uint32_t>("record count");
  ds.leads = r.le<std::uint32_t>("lead count");
  ds.length = r.le<std::uint32_t>("signal length");
  ds.classes = r.le<std::uint32_t>("class count");
  ds.sample_rate_hz = r.le<std::uint32_t>("sample rate");
  const std::size_t values = ds.leads * ds.length;
  std::vector<unsigned char> buf(values * 4);
  ds.records.reserve(std::min<std::size_t>(count, 1 << 16));
  for (std::uint32_t i = 0; i < count; ++i) {
    EcgRecord rec;
    rec.patient_id = r.le<std::uint64_t>("patient id");
    rec.labels.resize(ds.classes);
    const auto labels_at = r.offset();
    r.bytes(rec.labels.data(), ds.classes, "labels");
    for (std::size_t k = 0; k < ds.classes; ++k) {
      if (rec.labels[k] > 1) {
        throw FormatError("label byte " + std::to_string(rec.labels[k]) + " is not 0 or 1",
                          labels_at + k);
      }
    }
    const auto signal_at = r.offset();
    r.bytes(buf.data(), buf.size(), "signal");
    rec.signal.resize(values);
    for (std::size_t j = 0; j < values; ++j) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[4 * j + b]) << (8 * b);
      rec.signal[j] = std::bit_cast<float>(bits);
      if (!std::isfinite(rec.signal[j])) {
        throw FormatError("non-finite signal value", signal_at + 4 * j);
      }
    }
    ds.records.push_back(std::move(rec));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last record", r.offset());
  return ds;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_dataset(in);
}

void write_labels_csv(const Dataset& ds, std::ostream& out) {
  out << "record_index,patient_id";
  for (std::size_t k = 0; k < ds.classes; ++k) {
    out << ',' << (ds.classes == std::size(kClassNames) ? std::string(kClassNames[k])
                                                        : "label_" + std::to_string(k));
  }
  out << '\n';
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    out << i << ',' << ds.records[i].patient_id;
    for (auto l : ds.records[i].labels) out << ',' << int(l);
    out << '\n';
  }
}

void SplitSpec::validate() const {
  const double parts[] = {train, val, dev};
  const char* names[] = {"split.train", "split.val", "split.dev"};
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(parts[i]) || parts[i] < 0 || parts[i] > 1) {
      throw ConfigError(std::string(names[i]) + ": fraction must lie in [0, 1]");
    }
  }
  if (std::abs(train + val + dev - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must sum to 1");
  }
}

std::array<std::size_t, 3> allot_patients(std::size_t patients, const SplitSpec& spec) {
  spec.validate();
  const double fractions[] = {spec.train, spec.val, spec.dev};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = fractions[i] * static_cast<double>(patients);
    // The tolerance absorbs quotas such as 0.05 * 20 landing just below 1.
    const double whole = std::floor(quota + 1e-9);
    counts[i] = static_cast<std::size_t>(whole);
    remainders[i] = std::max(0.0, quota - whole);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < patients; ++i, ++assigned) ++counts[order[i % 3]];
  return counts;
}

Split split_by_patient(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  if (ds.empty()) throw ConfigError("split: dataset has no records");
  std::vector<std::uint64_t> patients;
  for (const auto& r : ds.records) patients.push_back(r.patient_id);
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
  Rng rng(spec.seed);
  shuffle(patients, rng);
  const auto counts = allot_patients(patients.size(), spec);
  std::map<std::uint64_t, int> subset_of;
  std::size_t next = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t j = 0; j < counts[s]; ++j) subset_of[patients[next++]] = s;
  }
  std::vector<std::size_t> picks[3];
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    picks[subset_of.at(ds.records[i].patient_id)].push_back(i);
  }
  return {ds.subset(picks[0]), ds.subset(picks[1]), ds.subset(picks[2])};
}

void SynthSpec::validate() const {
  if (n == 0) throw ConfigError("synth.n: must be positive");
  if (classes == 0) throw ConfigError("synth.classes: must be positive");
  if (leads == 0) throw ConfigError("synth.leads: must be positive");
  if (length == 0) throw ConfigError("synth.length: must be positive");
  if (sample_rate_hz == 0) throw ConfigError("synth.sample_rate_hz: must be positive");
  if (!(label_probability >= 0 && label_probability <= 1)) {
    throw ConfigError("synth.label_probability: must lie in [0, 1]");
  }
  if (records_per_patient == 0) throw ConfigError("synth.records_per_patient: must be positive");
  if (!(noise_mv >= 0) || !std::isfinite(noise_mv)) {
    throw ConfigError("synth.noise_mv: must be finite and non-negative");
  }
}

Dataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  Dataset ds{spec.leads, spec.length, spec.classes, spec.sample_rate_hz, {}};
  ds.records.reserve(spec.n);
  Rng rng(spec.seed);
  const double fs = spec.sample_rate_hz;
  const double duration = static_cast<double>(spec.length) / fs;
  std::vector<double> beat(spec.length);

  for (std::size_t i = 0; i < spec.n; ++i) {
    EcgRecord rec;
    rec.patient_id = i / spec.records_per_patient;
    rec.labels.assign(spec.classes, 0);
    if (spec.single_label) {
      rec.labels[rng.below(spec.classes)] = 1;
    } else {
      for (auto& l : rec.labels) l = rng.bernoulli(spec.label_probability) ? 1 : 0;
      if (spec.classes > 5 && rec.labels[3] && rec.labels[5]) {
        rec.labels[rng.bernoulli(0.5) ? 3 : 5] = 0;
      }
    }
    auto has = [&](std::size_t k) { return k < spec.classes && rec.labels[k] != 0; };

    double period = rng.uniform(0.75, 0.95);
    if (has(3)) period *= 1.45;
    if (has(5)) period *= 0.6;
    const double sigma = has(0) ? 0.06 : 0.025;
    const double jitter = has(4) ? 0.3 : 0.03;

    std::vector<double> times;
    for (double t = rng.uniform(0.0, period) - period; t < duration + period;) {
      times.push_back(t);
      t += period * (1.0 + rng.uniform(-jitter, jitter));
    }
    std::fill(beat.begin(), beat.end(), 0.0);
    const double reach = 5 * sigma;
    for (double tb : times) {
      const double centres[2] = {tb, tb + 0.12};
      const double amps[2] = {1.0, 0.8};
      for (int c = 0; c < (has(2) ? 2 : 1); ++c) {
        const auto lo = static_cast<std::ptrdiff_t>(std::ceil((centres[c] - reach) * fs));
        const auto hi = static_cast<std::ptrdiff_t>(std::floor((centres[c] + reach) * fs));
        for (auto n = std::max<std::ptrdiff_t>(lo, 0);
             n <= std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(spec.length) - 1);
             ++n) {
          const double dt = static_cast<double>(n) / fs - centres[c];
          beat[n] += amps[c] * std::exp(-dt * dt / (2 * sigma * sigma));
        }
      }
    }

    rec.signal.resize(spec.leads * spec.length);
    const std::size_t inverted = has(1) ? (spec.leads + 1) / 2 : 0;
    for (std::size_t c = 0; c < spec.leads; ++c) {
      double gain = rng.uniform(0.6, 1.4);
      if (c < inverted) gain = -gain;
      float* row = rec.signal.data() + c * spec.length;
      for (std::size_t n = 0; n < spec.length; ++n) {
        row[n] = static_cast<float>(gain * beat[n] + spec.noise_mv * rng.normal());
      }
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    const std::uint64_t* shuffle_seed) {
  if (batch_size == 0) throw UsageError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    shuffle(order, rng);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

template <typename T>
Batch<T> make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
  const std::size_t per = ds.leads * ds.length;
  std::vector<T> signals(indices.size() * per);
  std::vector<T> labels(indices.size() * ds.classes);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& r = ds.records.at(indices[b]);
    if (r.signal.size() != per || r.labels.size() != ds.classes) {
      throw ShapeError("record " + std::to_string(indices[b]) + " does not match the header");
    }
    std::copy(r.signal.begin(), r.signal.end(), signals.begin() + static_cast<std::ptrdiff_t>(b * per));
    for (std::size_t k = 0; k < ds.classes; ++k) labels[b * ds.classes + k] = r.labels[k];
  }
  return {Tensor<T>::from_data({indices.size(), ds.leads, ds.length}, std::move(signals)),
          Tensor<T>::from_data({indices.size(), ds.classes}, std::move(labels)), indices};
}

template <typename T>
std::vector<Batch<T>> batches(const Dataset& ds, std::size_t batch_size,
                              const std::uint64_t* shuffle_seed) {
  std::vector<Batch<T>> out;
  for (const auto& idx : batch_indices(ds.size(), batch_size, shuffle_seed)) {
    out.push_back(make_batch<T>(ds, idx));
  }
  return out;
}

template Batch<float> make_batch<float>(const Dataset&, const std::vector<std::size_t>&);
template Batch<double> make_batch<double>(const Dataset&, const std::vector<std::size_t>&);
template std::vector<Batch<float>> batches<float>(const Dataset&, std::size_t, const std::uint64_t*);
template std::vector<Batch<double>> batches<double>(const Dataset&, std::size_t,
                                                    const std::uint64_t*);

}  // namespace lga::data
