#pragma once

// Dual-head network trained with online joint distillation: a shared
// backbone feeds the original linear classifier (behind a gradient gate) and
// a Feature Refiner head. Only backbone + original head are used at
// inference time.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ojkd/backbone.hpp"
#include "ojkd/feature_refiner.hpp"

namespace ojkd {

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t num_classes = 10;
  bool with_fr = true;  // false: plain baseline network
  FeatureRefinerConfig fr;  // d_bbf / num_classes are taken from the fields above
  bool gate_enabled = true;

  FeatureRefinerConfig resolved_fr() const {
    auto c = fr;
    c.d_bbf = backbone.d_bbf;
    c.num_classes = num_classes;
    return c;
  }

  void validate() const {
    backbone.validate();
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (with_fr) resolved_fr().validate();
  }
};

// JSON echo of the configuration, used by checkpoints and experiment files.
inline void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = {{"kind", to_string(c.kind)},
       {"input_shape", c.input_shape},
       {"stage_widths", c.stage_widths},
       {"d_bbf", c.d_bbf}};
}

inline void from_json(const nlohmann::json& j, BackboneConfig& c) {
  c.kind = backbone_kind_from_string(j.at("kind").get<std::string>());
  c.input_shape = j.at("input_shape").get<Shape>();
  c.stage_widths = j.value("stage_widths", std::vector<std::size_t>{});
  c.d_bbf = j.at("d_bbf").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const FeatureRefinerConfig& c) {
  j = {{"d_bbf", c.d_bbf},     {"d_frf", c.d_frf}, {"num_classes", c.num_classes},
       {"variant", to_string(c.variant)}, {"k", c.k}, {"second_relu", c.second_relu}};
}

inline void from_json(const nlohmann::json& j, FeatureRefinerConfig& c) {
  c.d_bbf = j.value("d_bbf", c.d_bbf);
  c.d_frf = j.value("d_frf", c.d_frf);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.variant = fr_variant_from_string(j.value("variant", std::string("full")));
  c.k = j.value("k", c.k);
  c.second_relu = j.value("second_relu", c.second_relu);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"backbone", c.backbone},
       {"num_classes", c.num_classes},
       {"with_fr", c.with_fr},
       {"fr", c.resolved_fr()},
       {"gate_enabled", c.gate_enabled}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.backbone = j.at("backbone").get<BackboneConfig>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.with_fr = j.value("with_fr", true);
  if (j.contains("fr")) c.fr = j.at("fr").get<FeatureRefinerConfig>();
  c.gate_enabled = j.value("gate_enabled", true);
}

template <typename T>
struct DualLogits {
  Tensor<T> original;
  Tensor<T> fr;  // undefined for a baseline network
};

struct LossWeights {
  double original = 1.0;
  double fr = 1.0;
};

template <typename T>
class DualHeadNetwork {
 public:
  DualHeadNetwork() = default;

  DualHeadNetwork(ModelConfig config, InitSpec init) : config_(std::move(config)) {
    config_.validate();
    Rng rng(init.seed);
    backbone_ = Backbone<T>(config_.backbone, init.scheme, rng);
    original_head_ = Linear<T>(config_.backbone.d_bbf, config_.num_classes, init.scheme, rng);
    if (config_.with_fr) fr_head_.emplace(config_.resolved_fr(), init.scheme, rng);
  }

  const ModelConfig& config() const { return config_; }
  bool has_fr() const { return fr_head_.has_value(); }
  bool gate_enabled() const { return config_.gate_enabled; }
  void set_gate(bool enabled) { config_.gate_enabled = enabled; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  Backbone<T>& backbone() { return backbone_; }
  Linear<T>& original_head() { return original_head_; }
  FeatureRefinerHead<T>& fr_head() { return fr_head_.value(); }

  Tensor<T> features(const Tensor<T>& x, Mode mode) { return backbone_.forward(x, mode); }

  /// One backbone pass feeding both heads.
  DualLogits<T> forward_train(const Tensor<T>& x) {
    auto f = backbone_.forward(x, mode_);
    DualLogits<T> out;
    out.original = original_head_.forward(config_.gate_enabled ? gradient_gate(f) : f);
    if (fr_head_) out.fr = fr_head_->forward(f);
    return out;
  }

  /// Deployed path: backbone (eval statistics) + original head.
  Tensor<T> forward_infer(const Tensor<T>& x) {
    return original_head_.forward(backbone_.forward(x, Mode::eval));
  }

  /// FR-head logits in eval mode, for per-head evaluation.
  Tensor<T> forward_fr_eval(const Tensor<T>& x) {
    return fr_head_.value().forward(backbone_.forward(x, Mode::eval));
  }

  /// All parameters and buffers of the training graph.
  ParamList<T> parameters() const {
    auto out = inference_parameters();
    if (fr_head_) fr_head_->collect("fr_head", out);
    return out;
  }

  ParamList<T> inference_parameters() const {
    ParamList<T> out;
    backbone_.collect("backbone", out);
    original_head_.collect("original_head", out);
    return out;
  }

  ParamList<T> backbone_parameters() const {
    ParamList<T> out;
    backbone_.collect("backbone", out);
    return out;
  }

  void zero_grad() {
    for (auto& p : parameters())
      if (p.trainable) p.tensor.zero_grad();
  }

 private:
  ModelConfig config_;
  Mode mode_ = Mode::train;
  Backbone<T> backbone_;
  Linear<T> original_head_;
  std::optional<FeatureRefinerHead<T>> fr_head_;
};

template <typename T>
std::size_t count_parameters(const DualHeadNetwork<T>& net) {
  return count_trainable(net.parameters());
}

template <typename T>
std::size_t count_inference_parameters(const DualHeadNetwork<T>& net) {
  return count_trainable(net.inference_parameters());
}

/// Weighted sum of the two heads' cross-entropies (1 + 1 by default). A zero
/// weight drops the term from the graph; a baseline network contributes only
/// the original term.
template <typename T>
Tensor<T> ojkd_loss(const DualLogits<T>& logits, std::span<const std::int32_t> labels,
                    LossWeights weights = {}) {
  auto term = [&](const Tensor<T>& z, double w) {
    auto ce = softmax_cross_entropy(z, labels);
    return w == 1.0 ? ce : scale(ce, static_cast<T>(w));
  };
  Tensor<T> loss;
  if (weights.original != 0.0 || !logits.fr.defined()) loss = term(logits.original, weights.original);
  if (logits.fr.defined() && weights.fr != 0.0) {
    auto fr_term = term(logits.fr, weights.fr);
    loss = loss.defined() ? add(loss, fr_term) : fr_term;
  }
  return loss;
}

template <typename T>
Tensor<T> ojkd_loss(const Tensor<T>& logits_original, const Tensor<T>& logits_fr,
                    std::span<const std::int32_t> labels, LossWeights weights = {}) {
  if (logits_fr.defined() && logits_original.shape() != logits_fr.shape()) {
    throw ShapeError("ojkd_loss", "head logits differ " + shape_str(logits_original.shape()) +
                                      " vs " + shape_str(logits_fr.shape()));
  }
  return ojkd_loss(DualLogits<T>{logits_original, logits_fr}, labels, weights);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Little-endian binary layout:
//   "OJKDCKPT"                       8-byte magic
//   u32 version (=1)
//   u8 gate_enabled, u8 mode (0 train, 1 eval), u8 scalar bytes (4|8), u8 0
//   u64 n, n bytes                   model config as JSON text
//   u32 tensor count
//   per tensor: u32 name length, name, u8 trainable, u32 rank, rank x u64 dims,
//               raw scalars in row-major order
// Tensors appear in parameters() order, buffers included.

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename U>
void put(std::string& buf, U v) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  buf.append(bytes, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw CheckpointError("checkpoint truncated: need " + std::to_string(pos_ + n) +
                            " bytes, have " + std::to_string(buf_.size()));
    }
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

inline constexpr char kCheckpointMagic[8] = {'O', 'J', 'K', 'D', 'C', 'K', 'P', 'T'};

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const DualHeadNetwork<T>& net) {
  std::string buf(detail::kCheckpointMagic, 8);
  detail::put<std::uint32_t>(buf, 1);
  detail::put<std::uint8_t>(buf, net.gate_enabled() ? 1 : 0);
  detail::put<std::uint8_t>(buf, net.mode() == Mode::eval ? 1 : 0);
  detail::put<std::uint8_t>(buf, sizeof(T));
  detail::put<std::uint8_t>(buf, 0);
  const std::string cfg = nlohmann::json(net.config()).dump();
  detail::put<std::uint64_t>(buf, cfg.size());
  buf += cfg;
  const auto params = net.parameters();
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.name.size()));
    buf += p.name;
    detail::put<std::uint8_t>(buf, p.trainable ? 1 : 0);
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) detail::put<std::uint64_t>(buf, d);
    buf.append(reinterpret_cast<const char*>(p.tensor.data().data()), p.tensor.size() * sizeof(T));
  }
  return buf;
}

template <typename T>
DualHeadNetwork<T> deserialize_checkpoint(const std::string& buf) {
  detail::Reader in(buf);
  if (in.bytes(8) != std::string(detail::kCheckpointMagic, 8))
    throw CheckpointError("checkpoint: bad magic");
  if (const auto version = in.get<std::uint32_t>(); version != 1)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  const bool gate = in.get<std::uint8_t>() != 0;
  const Mode mode = in.get<std::uint8_t>() != 0 ? Mode::eval : Mode::train;
  if (const auto width = in.get<std::uint8_t>(); width != sizeof(T))
    throw CheckpointError("checkpoint: stored scalar width " + std::to_string(width) +
                          " does not match " + std::to_string(sizeof(T)));
  in.get<std::uint8_t>();
  const auto cfg_len = in.get<std::uint64_t>();
  auto config = nlohmann::json::parse(in.bytes(cfg_len)).get<ModelConfig>();
  config.gate_enabled = gate;
  DualHeadNetwork<T> net(config, InitSpec{InitScheme::zeros, 0});
  net.set_mode(mode);
  auto params = net.parameters();
  const auto count = in.get<std::uint32_t>();
  if (count != params.size())
    throw CheckpointError("checkpoint: " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(params.size()));
  for (auto& p : params) {
    const auto name = in.bytes(in.get<std::uint32_t>());
    if (name != p.name) throw CheckpointError("checkpoint: expected tensor '" + p.name + "', found '" + name + "'");
    in.get<std::uint8_t>();
    Shape shape(in.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    if (shape != p.tensor.shape())
      throw CheckpointError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                            ", model expects " + shape_str(p.tensor.shape()));
    const auto raw = in.bytes(p.tensor.size() * sizeof(T));
    std::memcpy(p.tensor.mutable_data().data(), raw.data(), raw.size());
  }
  if (!in.done()) throw CheckpointError("checkpoint: trailing bytes");
  return net;
}

template <typename T>
void save_checkpoint(const DualHeadNetwork<T>& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  const auto buf = serialize_checkpoint(net);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

template <typename T>
DualHeadNetwork<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(buf);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Hash of the serialized checkpoint (config, flags and every tensor).
template <typename T>
std::uint64_t checkpoint_hash(const DualHeadNetwork<T>& net) {
  return fnv1a(serialize_checkpoint(net));
}

}  // namespace ojkd
