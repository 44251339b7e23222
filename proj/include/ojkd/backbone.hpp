#pragma once

// Feature extractors mapping an input batch to (batch, d_bbf) features.

#include <string>
#include <vector>

#include "ojkd/layers.hpp"

namespace ojkd {

enum class BackboneKind { mlp, mini_conv, resnet_tiny };

inline std::string to_string(BackboneKind k) {
  switch (k) {
    case BackboneKind::mlp: return "mlp";
    case BackboneKind::mini_conv: return "mini_conv";
    case BackboneKind::resnet_tiny: return "resnet_tiny";
  }
  return "?";
}

inline BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "mlp") return BackboneKind::mlp;
  if (s == "mini_conv") return BackboneKind::mini_conv;
  if (s == "resnet_tiny") return BackboneKind::resnet_tiny;
  throw ConfigError("unknown backbone kind '" + s + "'");
}

/// mlp: hidden linear+relu layers of `stage_widths`, then linear(-> d_bbf)+relu.
/// mini_conv: per stage conv3x3+relu+maxpool2, then global average pooling;
///   d_bbf is the last stage width.
/// resnet_tiny: conv3x3 stem, then per stage (a stride-2 transition conv when
///   the width changes) and one identity-shortcut residual block; global
///   average pooling; d_bbf is the last stage width.
struct BackboneConfig {
  BackboneKind kind = BackboneKind::mlp;
  Shape input_shape;  // {D} for mlp, {C, H, W} otherwise
  std::vector<std::size_t> stage_widths;
  std::size_t d_bbf = 0;

  void validate() const {
    if (d_bbf == 0) throw ConfigError("backbone: d_bbf must be > 0");
    for (auto w : stage_widths)
      if (w == 0) throw ConfigError("backbone: invalid stage widths (zero width)");
    if (kind == BackboneKind::mlp) {
      if (input_shape.empty() || numel(input_shape) == 0)
        throw ConfigError("backbone: mlp needs a nonempty input shape");
      return;
    }
    if (input_shape.size() != 3 || numel(input_shape) == 0)
      throw ConfigError("backbone: convolutional backbones need input shape (C, H, W)");
    if (stage_widths.empty()) throw ConfigError("backbone: invalid stage widths (empty)");
    if (stage_widths.back() != d_bbf)
      throw ConfigError("backbone: invalid stage widths; last width " +
                        std::to_string(stage_widths.back()) + " must equal d_bbf " +
                        std::to_string(d_bbf));
  }
};

template <typename T>
struct ResidualBlock {
  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;

  ResidualBlock() = default;
  ResidualBlock(std::size_t width, InitScheme scheme, Rng& rng)
      : conv1(width, width, 3, {1, 1}, scheme, rng),
        conv2(width, width, 3, {1, 1}, scheme, rng),
        bn1(width),
        bn2(width) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    auto h = relu(bn1.forward(conv1.forward(x), mode));
    h = bn2.forward(conv2.forward(h), mode);
    return relu(add(x, h));
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    conv1.collect(prefix + ".conv1", out);
    bn1.collect(prefix + ".bn1", out);
    conv2.collect(prefix + ".conv2", out);
    bn2.collect(prefix + ".bn2", out);
  }
};

template <typename T>
class Backbone {
 public:
  Backbone() = default;

  Backbone(BackboneConfig config, InitSpec init) : config_(std::move(config)) {
    config_.validate();
    Rng rng(init.seed);
    build(init.scheme, rng);
  }

  /// Builds from a shared generator (the caller owns the init sequence).
  Backbone(BackboneConfig config, InitScheme scheme, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    build(scheme, rng);
  }

  const BackboneConfig& config() const { return config_; }
  std::size_t feature_dim() const { return config_.d_bbf; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    switch (config_.kind) {
      case BackboneKind::mlp: {
        auto h = x.rank() == 2 ? x : flatten(x);
        for (const auto& l : linears_) h = relu(l.forward(h));
        return h;
      }
      case BackboneKind::mini_conv: {
        check_image(x);
        auto h = x;
        for (const auto& c : convs_) {
          h = relu(c.forward(h));
          if (h.dim(2) >= 2 && h.dim(3) >= 2) h = max_pool2d(h, 2);
        }
        return global_avg_pool(h);
      }
      case BackboneKind::resnet_tiny: {
        check_image(x);
        auto h = relu(stem_bn_.forward(stem_.forward(x), mode));
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
          if (transition_index_[i] >= 0) {
            auto& t = transitions_[static_cast<std::size_t>(transition_index_[i])];
            h = relu(t.second.forward(t.first.forward(h), mode));
          }
          h = blocks_[i].forward(h, mode);
        }
        return global_avg_pool(h);
      }
    }
    throw ConfigError("backbone: unknown kind");
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t i = 0; i < linears_.size(); ++i)
      linears_[i].collect(prefix + ".fc" + std::to_string(i), out);
    for (std::size_t i = 0; i < convs_.size(); ++i)
      convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
    if (config_.kind == BackboneKind::resnet_tiny) {
      stem_.collect(prefix + ".stem", out);
      stem_bn_.collect(prefix + ".stem_bn", out);
      for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (transition_index_[i] >= 0) {
          const auto& t = transitions_[static_cast<std::size_t>(transition_index_[i])];
          t.first.collect(prefix + ".down" + std::to_string(i), out);
          t.second.collect(prefix + ".down" + std::to_string(i) + "_bn", out);
        }
        blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
      }
    }
  }

  std::vector<ResidualBlock<T>>& blocks() { return blocks_; }

 private:
  void check_image(const Tensor<T>& x) const {
    const auto& s = config_.input_shape;
    if (x.rank() != 4 || x.dim(1) != s[0] || x.dim(2) != s[1] || x.dim(3) != s[2]) {
      throw ShapeError("backbone", "expected [N x " + std::to_string(s[0]) + "x" +
                                       std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                                       "], got " + shape_str(x.shape()));
    }
  }

  void build(InitScheme scheme, Rng& rng) {
    switch (config_.kind) {
      case BackboneKind::mlp: {
        std::size_t in = numel(config_.input_shape);
        for (auto w : config_.stage_widths) {
          linears_.emplace_back(in, w, scheme, rng);
          in = w;
        }
        linears_.emplace_back(in, config_.d_bbf, scheme, rng);
        break;
      }
      case BackboneKind::mini_conv: {
        std::size_t in = config_.input_shape[0];
        for (auto w : config_.stage_widths) {
          convs_.emplace_back(in, w, 3, Conv2dOptions{1, 1}, scheme, rng);
          in = w;
        }
        break;
      }
      case BackboneKind::resnet_tiny: {
        const auto& widths = config_.stage_widths;
        stem_ = Conv2d<T>(config_.input_shape[0], widths[0], 3, {1, 1}, scheme, rng);
        stem_bn_ = BatchNorm2d<T>(widths[0]);
        std::size_t width = widths[0];
        for (auto w : widths) {
          if (w != width) {
            transition_index_.push_back(static_cast<int>(transitions_.size()));
            transitions_.emplace_back(Conv2d<T>(width, w, 3, {2, 1}, scheme, rng),
                                      BatchNorm2d<T>(w));
            width = w;
          } else {
            transition_index_.push_back(-1);
          }
          blocks_.emplace_back(w, scheme, rng);
        }
        break;
      }
    }
  }

  BackboneConfig config_;
  std::vector<Linear<T>> linears_;
  std::vector<Conv2d<T>> convs_;
  Conv2d<T> stem_;
  BatchNorm2d<T> stem_bn_;
  std::vector<std::pair<Conv2d<T>, BatchNorm2d<T>>> transitions_;
  std::vector<int> transition_index_;
  std::vector<ResidualBlock<T>> blocks_;
};

}  // namespace ojkd
