#pragma once

// Datasets, augmentation, synthetic generators, binary I/O and labeled-pool
// split schedules.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ojkd/layers.hpp"

namespace ojkd {

enum class Split { train, test };

/// Samples stored contiguously in row-major order as float in [0, 1] for
/// images, or unconstrained for flat feature vectors.
struct Dataset {
  Shape sample_shape;  // {D} or {C, H, W}
  std::vector<float> values;
  std::vector<std::int32_t> labels;
  std::size_t class_count = 0;
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return numel(sample_shape); }
  bool is_image() const { return sample_shape.size() == 3; }

  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(values).subspan(i * sample_size(), sample_size());
  }

  void validate() const {
    if (labels.empty()) throw ConfigError("dataset: empty");
    if (values.size() != labels.size() * sample_size())
      throw ConfigError("dataset: value count does not match sample shape");
    for (auto y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= class_count)
        throw ConfigError("dataset: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(class_count) + ")");
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d{sample_shape, {}, {}, class_count, split};
    d.values.reserve(idx.size() * sample_size());
    for (auto i : idx) {
      auto s = sample(i);
      d.values.insert(d.values.end(), s.begin(), s.end());
      d.labels.push_back(labels[i]);
    }
    return d;
  }
};

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentSpec {
  bool hflip = true;
  std::size_t crop_h = 0, crop_w = 0;  // 0: keep the input size
  std::size_t crop_padding = 0;
  std::vector<float> mean;  // per channel; empty: no normalization
  std::vector<float> std;
};

/// Per-channel mean and standard deviation over a (training) image dataset.
inline std::pair<std::vector<float>, std::vector<float>> channel_stats(const Dataset& d) {
  if (!d.is_image()) throw ConfigError("channel_stats: dataset is not an image dataset");
  const std::size_t C = d.sample_shape[0], HW = d.sample_shape[1] * d.sample_shape[2];
  std::vector<double> s(C, 0.0), s2(C, 0.0);
  for (std::size_t n = 0; n < d.size(); ++n) {
    auto img = d.sample(n);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t q = 0; q < HW; ++q) {
        const double v = img[c * HW + q];
        s[c] += v;
        s2[c] += v * v;
      }
  }
  std::vector<float> mean(C), stdev(C);
  const double m = static_cast<double>(d.size() * HW);
  for (std::size_t c = 0; c < C; ++c) {
    const double mu = s[c] / m;
    mean[c] = static_cast<float>(mu);
    stdev[c] = static_cast<float>(std::sqrt(std::max(s2[c] / m - mu * mu, 1e-12)));
  }
  return {mean, stdev};
}

/// Random horizontal flip (p = 0.5), zero-pad by crop_padding and take a
/// uniformly placed crop window, then per-channel standardization.
inline std::vector<float> augment(std::span<const float> image, const Shape& shape,
                                  const AugmentSpec& spec, Rng& rng) {
  if (shape.size() != 3) throw ShapeError("augment", "expected (C, H, W), got " + shape_str(shape));
  const std::size_t C = shape[0], H = shape[1], W = shape[2];
  const std::size_t ch = spec.crop_h ? spec.crop_h : H, cw = spec.crop_w ? spec.crop_w : W;
  const std::size_t p = spec.crop_padding;
  if (ch > H + 2 * p || cw > W + 2 * p)
    throw ConfigError("augment: crop larger than padded image");
  std::uniform_int_distribution<int> coin(0, 1);
  const bool flip = spec.hflip && coin(rng) == 1;
  std::uniform_int_distribution<std::size_t> oy(0, H + 2 * p - ch), ox(0, W + 2 * p - cw);
  const std::size_t y0 = oy(rng), x0 = ox(rng);
  std::vector<float> out(C * ch * cw, 0.0f);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < ch; ++y)
      for (std::size_t x = 0; x < cw; ++x) {
        // coordinates in the padded image, then back to the source
        const auto sy = static_cast<std::ptrdiff_t>(y0 + y) - static_cast<std::ptrdiff_t>(p);
        const auto sx_padded = static_cast<std::ptrdiff_t>(x0 + x) - static_cast<std::ptrdiff_t>(p);
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H) || sx_padded < 0 ||
            sx_padded >= static_cast<std::ptrdiff_t>(W))
          continue;
        const auto sx = flip ? static_cast<std::ptrdiff_t>(W) - 1 - sx_padded : sx_padded;
        out[(c * ch + y) * cw + x] = image[(c * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx)];
      }
  if (!spec.mean.empty()) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t q = 0; q < ch * cw; ++q)
        out[c * ch * cw + q] = (out[c * ch * cw + q] - spec.mean[c]) / spec.std[c];
  }
  return out;
}

/// Normalization only; the evaluation-time transform.
inline std::vector<float> normalize_only(std::span<const float> image, const Shape& shape,
                                         const AugmentSpec& spec) {
  std::vector<float> out(image.begin(), image.end());
  if (spec.mean.empty() || shape.size() != 3) return out;
  const std::size_t C = shape[0], HW = shape[1] * shape[2];
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t q = 0; q < HW; ++q) out[c * HW + q] = (out[c * HW + q] - spec.mean[c]) / spec.std[c];
  return out;
}

/// Stacks samples into a [N, ...sample_shape] tensor. With `augment_spec` and
/// `rng`, training-time augmentation is applied; with only `augment_spec`, the
/// normalization alone.
template <typename T>
Tensor<T> make_batch(const Dataset& d, std::span<const std::size_t> idx,
                     const AugmentSpec* augment_spec = nullptr, Rng* rng = nullptr) {
  Shape out_shape = d.sample_shape;
  if (augment_spec && d.is_image()) {
    if (augment_spec->crop_h) out_shape[1] = augment_spec->crop_h;
    if (augment_spec->crop_w) out_shape[2] = augment_spec->crop_w;
  }
  const std::size_t per = numel(out_shape);
  std::vector<T> values;
  values.reserve(idx.size() * per);
  for (auto i : idx) {
    if (augment_spec && d.is_image()) {
      auto img = rng ? augment(d.sample(i), d.sample_shape, *augment_spec, *rng)
                     : normalize_only(d.sample(i), d.sample_shape, *augment_spec);
      values.insert(values.end(), img.begin(), img.end());
    } else {
      auto s = d.sample(i);
      values.insert(values.end(), s.begin(), s.end());
    }
  }
  out_shape.insert(out_shape.begin(), idx.size());
  return Tensor<T>(std::move(out_shape), std::move(values));
}

inline std::vector<std::int32_t> gather_labels(const Dataset& d, std::span<const std::size_t> idx) {
  std::vector<std::int32_t> y;
  y.reserve(idx.size());
  for (auto i : idx) y.push_back(d.labels[i]);
  return y;
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class SyntheticKind { blobs, rings, toy_images };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "blobs") return SyntheticKind::blobs;
  if (s == "rings") return SyntheticKind::rings;
  if (s == "toy_images") return SyntheticKind::toy_images;
  throw ConfigError("unknown synthetic dataset kind '" + s + "'");
}

inline std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::blobs: return "blobs";
    case SyntheticKind::rings: return "rings";
    case SyntheticKind::toy_images: return "toy_images";
  }
  return "?";
}

/// blobs: Gaussian clusters around centers drawn from N(0, I) in `dim`
///   dimensions, with isotropic noise of standard deviation `noise`.
/// rings: 2-D concentric rings, class c at radius c + 1, radial noise.
/// toy_images: 1 x side x side images; each class has a random binary
///   prototype, samples add Gaussian pixel noise and are clamped to [0, 1].
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::blobs;
  std::size_t n_per_class = 100;
  std::size_t n_test_per_class = 100;
  std::size_t classes = 10;
  double noise = 1.0;
  std::size_t dim = 2;   // blobs
  std::size_t side = 8;  // toy_images
  std::uint64_t seed = 0;

  void validate() const {
    if (n_per_class < 1 || n_test_per_class < 1) throw ConfigError("synthetic: need >= 1 sample per class");
    if (classes < 2) throw ConfigError("synthetic: need >= 2 classes");
    if (!(noise >= 0.0)) throw ConfigError("synthetic: noise must be >= 0");
    if (kind == SyntheticKind::blobs && dim == 0) throw ConfigError("synthetic: dim must be > 0");
    if (kind == SyntheticKind::toy_images && side < 2) throw ConfigError("synthetic: side must be >= 2");
  }
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"kind", to_string(s.kind)}, {"n_per_class", s.n_per_class},
       {"n_test_per_class", s.n_test_per_class}, {"classes", s.classes},
       {"noise", s.noise}, {"dim", s.dim}, {"side", s.side}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.kind = synthetic_kind_from_string(j.value("kind", std::string("blobs")));
  s.n_per_class = j.value("n_per_class", s.n_per_class);
  s.n_test_per_class = j.value("n_test_per_class", s.n_test_per_class);
  s.classes = j.value("classes", s.classes);
  s.noise = j.value("noise", s.noise);
  s.dim = j.value("dim", s.dim);
  s.side = j.value("side", s.side);
  s.seed = j.value("seed", s.seed);
}

/// Returns (train, test). Both splits are class-balanced; samples are ordered
/// class-interleaved (sample i has label i % classes).
inline std::pair<Dataset, Dataset> make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t C = spec.classes;

  Shape shape;
  std::vector<std::vector<float>> prototypes(C);
  switch (spec.kind) {
    case SyntheticKind::blobs:
      shape = {spec.dim};
      for (auto& p : prototypes)
        for (std::size_t k = 0; k < spec.dim; ++k) p.push_back(static_cast<float>(gauss(rng)));
      break;
    case SyntheticKind::rings:
      shape = {2};
      break;
    case SyntheticKind::toy_images: {
      shape = {1, spec.side, spec.side};
      std::bernoulli_distribution bit(0.5);
      for (auto& p : prototypes)
        for (std::size_t k = 0; k < spec.side * spec.side; ++k) p.push_back(bit(rng) ? 1.0f : 0.0f);
      break;
    }
  }

  std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
  auto draw = [&](std::size_t c, std::vector<float>& out) {
    switch (spec.kind) {
      case SyntheticKind::blobs:
        for (std::size_t k = 0; k < spec.dim; ++k)
          out.push_back(static_cast<float>(prototypes[c][k] + spec.noise * gauss(rng)));
        break;
      case SyntheticKind::rings: {
        const double r = static_cast<double>(c + 1) + spec.noise * gauss(rng);
        const double a = angle(rng);
        out.push_back(static_cast<float>(r * std::cos(a)));
        out.push_back(static_cast<float>(r * std::sin(a)));
        break;
      }
      case SyntheticKind::toy_images:
        for (auto v : prototypes[c])
          out.push_back(static_cast<float>(std::clamp(v + spec.noise * gauss(rng), 0.0, 1.0)));
        break;
    }
  };

  auto fill = [&](std::size_t per_class, Split split) {
    Dataset d{shape, {}, {}, C, split};
    for (std::size_t i = 0; i < per_class * C; ++i) {
      const std::size_t c = i % C;
      draw(c, d.values);
      d.labels.push_back(static_cast<std::int32_t>(c));
    }
    return d;
  };
  auto train = fill(spec.n_per_class, Split::train);
  auto test = fill(spec.n_test_per_class, Split::test);
  return {std::move(train), std::move(test)};
}

/// Stratified split: within each class, the first round(train_fraction * n_c)
/// samples of a seeded permutation go to train. Returns (train idx, test idx),
/// each sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const Dataset& d, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("stratified_split: fraction must be in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(d.class_count);
  for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> train, test;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto k = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
    test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

// ---------------------------------------------------------------------------
// Binary dataset format
//
// Single file, little-endian:
//   offset 0   8 bytes  magic "OJKDIDX1"
//   offset 8   u32      sample count N
//   offset 12  u32      class count C
//   offset 16  u32      sample rank r (1 or 3)
//   offset 20  r x u32  sample dims (D) or (channels, height, width)
//   then       N x i32  labels
//   then       N x prod(dims) x f32 values, sample-major, row-major within a sample
//
// Manifest directory:
//   manifest.json  {"format": "ojkd-raw-v1", "count": N, "shape": [...],
//                   "class_count": C, "values": "values.f32", "labels": "labels.i32",
//                   "normalization": {"mean": [...], "std": [...]}}   (normalization optional)
//   values.f32     N x prod(shape) little-endian f32
//   labels.i32     N little-endian i32

class DataFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CorruptHeaderError : public DataFormatError {
 public:
  using DataFormatError::DataFormatError;
};
class TruncatedPayloadError : public DataFormatError {
 public:
  TruncatedPayloadError(std::size_t expected, std::size_t actual, const std::string& what)
      : DataFormatError(what + ": truncated payload, expected " + std::to_string(expected) +
                        " bytes, found " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected() const { return expected_; }
  std::size_t actual() const { return actual_; }

 private:
  std::size_t expected_, actual_;
};
class LabelRangeError : public DataFormatError {
 public:
  using DataFormatError::DataFormatError;
};

enum class DatasetFormat { idx, manifest_dir };

inline DatasetFormat dataset_format_from_string(const std::string& s) {
  if (s == "idx") return DatasetFormat::idx;
  if (s == "manifest" || s == "manifest_dir") return DatasetFormat::manifest_dir;
  throw ConfigError("unknown dataset format '" + s + "'");
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename U>
void append_raw(std::string& buf, const U* p, std::size_t n) {
  buf.append(reinterpret_cast<const char*>(p), n * sizeof(U));
}

inline std::uint32_t read_u32(const std::string& buf, std::size_t off) {
  std::uint32_t v;
  std::memcpy(&v, buf.data() + off, 4);
  return v;
}

inline void check_labels(const Dataset& d) {
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    const auto y = d.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= d.class_count)
      throw LabelRangeError("label " + std::to_string(y) + " of sample " + std::to_string(i) +
                            " outside [0, " + std::to_string(d.class_count) + ")");
  }
}

}  // namespace detail

inline void save_dataset_idx(const Dataset& d, const std::filesystem::path& path) {
  std::string buf = "OJKDIDX1";
  const std::uint32_t head[3] = {static_cast<std::uint32_t>(d.size()),
                                 static_cast<std::uint32_t>(d.class_count),
                                 static_cast<std::uint32_t>(d.sample_shape.size())};
  detail::append_raw(buf, head, 3);
  for (auto dim : d.sample_shape) {
    const auto v = static_cast<std::uint32_t>(dim);
    detail::append_raw(buf, &v, 1);
  }
  detail::append_raw(buf, d.labels.data(), d.labels.size());
  detail::append_raw(buf, d.values.data(), d.values.size());
  detail::write_file(path, buf);
}

inline Dataset load_dataset_idx(const std::filesystem::path& path) {
  const auto buf = detail::read_file(path);
  if (buf.size() < 20 || buf.compare(0, 8, "OJKDIDX1") != 0)
    throw CorruptHeaderError(path.string() + ": missing OJKDIDX1 header");
  const std::size_t n = detail::read_u32(buf, 8);
  const std::size_t classes = detail::read_u32(buf, 12);
  const std::size_t rank = detail::read_u32(buf, 16);
  if (rank != 1 && rank != 3) throw CorruptHeaderError(path.string() + ": sample rank must be 1 or 3");
  if (n == 0 || classes == 0) throw CorruptHeaderError(path.string() + ": zero sample or class count");
  if (buf.size() < 20 + 4 * rank) throw CorruptHeaderError(path.string() + ": header cut short");
  Dataset d;
  d.class_count = classes;
  for (std::size_t k = 0; k < rank; ++k) {
    d.sample_shape.push_back(detail::read_u32(buf, 20 + 4 * k));
    if (d.sample_shape.back() == 0) throw CorruptHeaderError(path.string() + ": zero sample dimension");
  }
  const std::size_t header = 20 + 4 * rank;
  const std::size_t expected = header + 4 * n + 4 * n * numel(d.sample_shape);
  if (buf.size() < expected) throw TruncatedPayloadError(expected, buf.size(), path.string());
  if (buf.size() > expected) throw CorruptHeaderError(path.string() + ": trailing bytes after payload");
  d.labels.resize(n);
  std::memcpy(d.labels.data(), buf.data() + header, 4 * n);
  d.values.resize(n * numel(d.sample_shape));
  std::memcpy(d.values.data(), buf.data() + header + 4 * n, 4 * d.values.size());
  detail::check_labels(d);
  return d;
}

inline void save_dataset_manifest(const Dataset& d, const std::filesystem::path& dir,
                                  const AugmentSpec* norm = nullptr) {
  std::filesystem::create_directories(dir);
  nlohmann::json m = {{"format", "ojkd-raw-v1"}, {"count", d.size()},
                      {"shape", d.sample_shape}, {"class_count", d.class_count},
                      {"values", "values.f32"}, {"labels", "labels.i32"}};
  if (norm && !norm->mean.empty()) m["normalization"] = {{"mean", norm->mean}, {"std", norm->std}};
  std::string values, labels;
  detail::append_raw(values, d.values.data(), d.values.size());
  detail::append_raw(labels, d.labels.data(), d.labels.size());
  detail::write_file(dir / "values.f32", values);
  detail::write_file(dir / "labels.i32", labels);
  detail::write_file(dir / "manifest.json", m.dump(2) + "\n");
}

inline Dataset load_dataset_manifest(const std::filesystem::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(detail::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeaderError((dir / "manifest.json").string() + ": " + e.what());
  }
  Dataset d;
  std::size_t n = 0;
  try {
    if (m.at("format").get<std::string>() != "ojkd-raw-v1")
      throw CorruptHeaderError(dir.string() + ": unknown manifest format");
    n = m.at("count").get<std::size_t>();
    d.sample_shape = m.at("shape").get<Shape>();
    d.class_count = m.at("class_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeaderError(dir.string() + ": manifest field error: " + e.what());
  }
  if (n == 0 || d.class_count == 0 || d.sample_shape.empty() || numel(d.sample_shape) == 0)
    throw CorruptHeaderError(dir.string() + ": manifest declares an empty dataset");
  const auto values = detail::read_file(dir / m.value("values", std::string("values.f32")));
  const auto labels = detail::read_file(dir / m.value("labels", std::string("labels.i32")));
  const std::size_t want_values = 4 * n * numel(d.sample_shape);
  if (values.size() < want_values) throw TruncatedPayloadError(want_values, values.size(), dir.string() + " values");
  if (labels.size() < 4 * n) throw TruncatedPayloadError(4 * n, labels.size(), dir.string() + " labels");
  d.values.resize(n * numel(d.sample_shape));
  std::memcpy(d.values.data(), values.data(), want_values);
  d.labels.resize(n);
  std::memcpy(d.labels.data(), labels.data(), 4 * n);
  const auto max_label = *std::max_element(d.labels.begin(), d.labels.end());
  if (max_label >= 0 && static_cast<std::size_t>(max_label) >= d.class_count)
    throw LabelRangeError(dir.string() + ": manifest class_count " + std::to_string(d.class_count) +
                          " but max label is " + std::to_string(max_label));
  detail::check_labels(d);
  return d;
}

inline Dataset load_image_dataset(const std::filesystem::path& path, DatasetFormat format) {
  return format == DatasetFormat::idx ? load_dataset_idx(path) : load_dataset_manifest(path);
}

// ---------------------------------------------------------------------------
// Labeled-pool schedules

/// Nested labeled sets: cycles[k] = cycles[k-1] followed by `budget` fresh
/// indices, all drawn from one seeded permutation of [0, dataset_size).
struct SplitSchedule {
  std::vector<std::vector<std::size_t>> cycles;

  std::size_t num_cycles() const { return cycles.size(); }
};

inline SplitSchedule make_initial_splits(std::size_t dataset_size, std::size_t initial_size,
                                         std::size_t num_cycles, std::size_t budget,
                                         std::uint64_t seed) {
  if (num_cycles == 0) throw ConfigError("splits: num_cycles must be >= 1");
  if (initial_size == 0) throw ConfigError("splits: initial pool must be nonempty");
  const std::size_t last = initial_size + (num_cycles - 1) * budget;
  if (last > dataset_size)
    throw ConfigError("splits: infeasible; " + std::to_string(last) + " labels requested from " +
                      std::to_string(dataset_size) + " samples");
  std::vector<std::size_t> perm(dataset_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates; only the first `last` positions are needed.
  for (std::size_t i = 0; i < last; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, dataset_size - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  SplitSchedule s;
  for (std::size_t k = 0; k < num_cycles; ++k)
    s.cycles.emplace_back(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(initial_size + k * budget));
  return s;
}

inline SplitSchedule make_initial_splits(const Dataset& d, std::size_t initial_size,
                                         std::size_t num_cycles, std::size_t budget,
                                         std::uint64_t seed) {
  return make_initial_splits(d.size(), initial_size, num_cycles, budget, seed);
}

/// Text form: "# ojkd split schedule v1", then per cycle a line
/// "cycle <k> <count>" followed by <count> lines with one index each.
inline std::string format_schedule(const SplitSchedule& s) {
  std::string out = "# ojkd split schedule v1\n";
  for (std::size_t k = 0; k < s.cycles.size(); ++k) {
    out += "cycle " + std::to_string(k) + " " + std::to_string(s.cycles[k].size()) + "\n";
    for (auto i : s.cycles[k]) out += std::to_string(i) + "\n";
  }
  return out;
}

inline SplitSchedule parse_schedule(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "# ojkd split schedule v1")
    throw DataFormatError("split schedule: missing header");
  SplitSchedule s;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream hdr(line);
    std::string word;
    std::size_t k = 0, count = 0;
    if (!(hdr >> word >> k >> count) || word != "cycle" || k != s.cycles.size())
      throw DataFormatError("split schedule: bad cycle line '" + line + "'");
    auto& cyc = s.cycles.emplace_back();
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::getline(in, line)) throw DataFormatError("split schedule: cycle " + std::to_string(k) + " cut short");
      cyc.push_back(static_cast<std::size_t>(std::stoull(line)));
    }
  }
  return s;
}

/// One index per line.
inline std::string format_index_list(std::span<const std::size_t> idx) {
  std::string out;
  for (auto i : idx) out += std::to_string(i) + "\n";
  return out;
}

inline std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(static_cast<std::size_t>(std::stoull(line)));
  return out;
}

}  // namespace ojkd
