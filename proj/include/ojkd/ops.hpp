#pragma once

// Differentiable primitives. Each op checks its shapes, computes the forward
// value and records a backward rule via record().

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ojkd/tensor.hpp"

namespace ojkd {

namespace detail {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(op, "shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return record<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      accumulate(n, k, [&](std::vector<T>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      });
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return record<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    accumulate(n, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
    accumulate(n, 1, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    });
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return record<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    accumulate(n, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    });
    accumulate(n, 1, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    });
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return record<T>("scale", a.shape(), std::move(out), {a}, [s](Node<T>& n) {
    accumulate(n, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
    });
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
  return record<T>("relu", a.shape(), std::move(out), {a}, [](Node<T>& n) {
    const auto& x = n.inputs[0]->value;
    accumulate(n, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > T(0)) g[i] += n.grad[i];
      }
    });
  });
}

/// Identity on the forward pass; passes an all-zero gradient to its input.
template <typename T>
Tensor<T> gradient_gate(const Tensor<T>& x) {
  return record<T>("gradient_gate", x.shape(), x.values(), {x}, [](Node<T>& n) {
    // Touch the buffer so the input reports a (zero) gradient.
    accumulate(n, 0, [](std::vector<T>&) {});
  });
}

// ---------------------------------------------------------------------------
// Reductions and shape

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s(0);
  for (auto v : a.data()) s += v;
  return record<T>("sum", {1}, {s}, {a}, [](Node<T>& n) {
    accumulate(n, 0, [&](std::vector<T>& g) {
      for (auto& v : g) v += n.grad[0];
    });
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape", "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return record<T>("reshape", std::move(shape), a.values(), {a}, [](Node<T>& n) {
    accumulate(n, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
  });
}

/// Collapses all but the leading dimension.
template <typename T>
Tensor<T> flatten(const Tensor<T>& a) {
  if (a.rank() == 0) throw ShapeError("flatten", "rank-0 tensor");
  return reshape(a, {a.dim(0), a.size() / a.dim(0)});
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul", "inner dimensions differ " + shape_str(a.shape()) + " vs " +
                                   shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      const T* brow = bv.data() + p * n;
      T* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return record<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& node) {
    const auto& av = node.inputs[0]->value;
    const auto& bv = node.inputs[1]->value;
    const auto& go = node.grad;
    accumulate(node, 0, [&](std::vector<T>& ga) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T s(0);
          for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
    });
    accumulate(node, 1, [&](std::vector<T>& gb) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * go[i * n + j];
        }
    });
  });
}

/// Adds a length-D vector to every row of an N x D matrix.
template <typename T>
Tensor<T> add_rowwise(const Tensor<T>& x, const Tensor<T>& b) {
  detail::require_rank("add_rowwise", x, 2);
  if (b.size() != x.dim(1)) {
    throw ShapeError("add_rowwise", "bias " + shape_str(b.shape()) + " does not broadcast over " +
                                        shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + b[c];
  return record<T>("add_rowwise", x.shape(), std::move(out), {x, b}, [rows, cols](Node<T>& n) {
    accumulate(n, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
    accumulate(n, 1, [&](std::vector<T>& g) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += n.grad[r * cols + c];
    });
  });
}

// ---------------------------------------------------------------------------
// Convolution and pooling (NCHW)

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// 2-D cross-correlation with explicit zero padding. `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 Conv2dOptions opt = {}) {
  detail::require_rank("conv2d", x, 4);
  detail::require_rank("conv2d", w, 4);
  if (opt.stride == 0) throw ShapeError("conv2d", "stride must be >= 1");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  if (w.dim(1) != C) {
    throw ShapeError("conv2d", "input channels " + std::to_string(C) + " vs kernel " +
                                   shape_str(w.shape()));
  }
  const std::size_t p = opt.padding, s = opt.stride;
  if (H + 2 * p < KH || W + 2 * p < KW) {
    throw ShapeError("conv2d", "kernel " + shape_str(w.shape()) + " larger than padded input " +
                                   shape_str(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != O) {
    throw ShapeError("conv2d", "bias " + shape_str(bias.shape()) + " vs " + std::to_string(O) +
                                   " output channels");
  }
  const std::size_t OH = (H + 2 * p - KH) / s + 1;
  const std::size_t OW = (W + 2 * p - KW) / s + 1;
  const auto xv = x.data();
  const auto wv = w.data();
  std::vector<T> out(N * O * OH * OW, T(0));
  // Visits every (output, input, kernel) triple inside the padded window.
  auto visit = [=](auto&& fn) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t oh = 0; oh < OH; ++oh)
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const std::size_t oi = ((n * O + o) * OH + oh) * OW + ow;
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t kh = 0; kh < KH; ++kh) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * s + kh) - static_cast<std::ptrdiff_t>(p);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kw = 0; kw < KW; ++kw) {
                  const auto iw = static_cast<std::ptrdiff_t>(ow * s + kw) - static_cast<std::ptrdiff_t>(p);
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                  const std::size_t xi = ((n * C + c) * H + static_cast<std::size_t>(ih)) * W +
                                         static_cast<std::size_t>(iw);
                  const std::size_t wi = ((o * C + c) * KH + kh) * KW + kw;
                  fn(oi, xi, wi);
                }
              }
          }
  };
  visit([&](std::size_t oi, std::size_t xi, std::size_t wi) { out[oi] += xv[xi] * wv[wi]; });
  if (has_bias) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t q = 0; q < OH * OW; ++q) out[(n * O + o) * OH * OW + q] += bias[o];
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return record<T>("conv2d", {N, O, OH, OW}, std::move(out), std::move(inputs),
                   [visit, has_bias, N, O, OH, OW](Node<T>& node) {
                     const auto& xv = node.inputs[0]->value;
                     const auto& wv = node.inputs[1]->value;
                     const auto& go = node.grad;
                     accumulate(node, 0, [&](std::vector<T>& gx) {
                       visit([&](std::size_t oi, std::size_t xi, std::size_t wi) {
                         gx[xi] += go[oi] * wv[wi];
                       });
                     });
                     accumulate(node, 1, [&](std::vector<T>& gw) {
                       visit([&](std::size_t oi, std::size_t xi, std::size_t wi) {
                         gw[wi] += go[oi] * xv[xi];
                       });
                     });
                     if (has_bias) {
                       accumulate(node, 2, [&](std::vector<T>& gb) {
                         for (std::size_t n = 0; n < N; ++n)
                           for (std::size_t o = 0; o < O; ++o)
                             for (std::size_t q = 0; q < OH * OW; ++q)
                               gb[o] += go[(n * O + o) * OH * OW + q];
                       });
                     }
                   });
}

/// Max pooling without padding. Ties resolve to the first element in
/// row-major window order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride = 0) {
  detail::require_rank("max_pool2d", x, 4);
  if (stride == 0) stride = kernel;
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (kernel == 0 || H < kernel || W < kernel) {
    throw ShapeError("max_pool2d", "kernel " + std::to_string(kernel) + " does not fit " +
                                       shape_str(x.shape()));
  }
  const std::size_t OH = (H - kernel) / stride + 1, OW = (W - kernel) / stride + 1;
  std::vector<T> out(N * C * OH * OW);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        std::size_t best = nc * H * W + (oh * stride) * W + ow * stride;
        for (std::size_t kh = 0; kh < kernel; ++kh)
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const std::size_t xi = nc * H * W + (oh * stride + kh) * W + ow * stride + kw;
            if (x[xi] > x[best]) best = xi;
          }
        const std::size_t oi = (nc * OH + oh) * OW + ow;
        out[oi] = x[best];
        argmax[oi] = best;
      }
  return record<T>("max_pool2d", {N, C, OH, OW}, std::move(out), {x},
                   [argmax = std::move(argmax)](Node<T>& n) {
                     accumulate(n, 0, [&](std::vector<T>& g) {
                       for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += n.grad[i];
                     });
                   });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride = 0) {
  detail::require_rank("avg_pool2d", x, 4);
  if (stride == 0) stride = kernel;
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (kernel == 0 || H < kernel || W < kernel) {
    throw ShapeError("avg_pool2d", "kernel " + std::to_string(kernel) + " does not fit " +
                                       shape_str(x.shape()));
  }
  const std::size_t OH = (H - kernel) / stride + 1, OW = (W - kernel) / stride + 1;
  const T inv = T(1) / static_cast<T>(kernel * kernel);
  std::vector<T> out(N * C * OH * OW, T(0));
  auto visit = [=](auto&& fn) {
    for (std::size_t nc = 0; nc < N * C; ++nc)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow)
          for (std::size_t kh = 0; kh < kernel; ++kh)
            for (std::size_t kw = 0; kw < kernel; ++kw)
              fn((nc * OH + oh) * OW + ow, nc * H * W + (oh * stride + kh) * W + ow * stride + kw);
  };
  visit([&](std::size_t oi, std::size_t xi) { out[oi] += x[xi] * inv; });
  return record<T>("avg_pool2d", {N, C, OH, OW}, std::move(out), {x}, [visit, inv](Node<T>& n) {
    accumulate(n, 0, [&](std::vector<T>& g) {
      visit([&](std::size_t oi, std::size_t xi) { g[xi] += n.grad[oi] * inv; });
    });
  });
}

/// [N, C, H, W] -> [N, C] spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_rank("global_avg_pool", x, 4);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const T inv = T(1) / static_cast<T>(HW);
  std::vector<T> out(N * C, T(0));
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    T s(0);
    for (std::size_t q = 0; q < HW; ++q) s += x[nc * HW + q];
    out[nc] = s * inv;
  }
  return record<T>("global_avg_pool", {N, C}, std::move(out), {x}, [HW, inv](Node<T>& n) {
    accumulate(n, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i / HW] * inv;
    });
  });
}

// ---------------------------------------------------------------------------
// Normalization

/// Row-wise normalization of an N x D matrix followed by gamma/beta affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  detail::require_rank("layer_norm", x, 2);
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (gamma.size() != d || beta.size() != d) {
    throw ShapeError("layer_norm", "affine parameters " + shape_str(gamma.shape()) + "/" +
                                       shape_str(beta.shape()) + " vs feature dim " +
                                       std::to_string(d));
  }
  std::vector<T> xhat(x.size()), inv_std(rows), out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    T mu(0);
    for (std::size_t c = 0; c < d; ++c) mu += x[r * d + c];
    mu /= static_cast<T>(d);
    T var(0);
    for (std::size_t c = 0; c < d; ++c) {
      const T z = x[r * d + c] - mu;
      var += z * z;
    }
    var /= static_cast<T>(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t i = r * d + c;
      xhat[i] = (x[i] - mu) * inv_std[r];
      out[i] = xhat[i] * gamma[c] + beta[c];
    }
  }
  return record<T>("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](Node<T>& n) {
                     const auto& gm = n.inputs[1]->value;
                     const auto& go = n.grad;
                     accumulate(n, 0, [&](std::vector<T>& gx) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         T s1(0), s2(0);
                         for (std::size_t c = 0; c < d; ++c) {
                           const T dxh = go[r * d + c] * gm[c];
                           s1 += dxh;
                           s2 += dxh * xhat[r * d + c];
                         }
                         const T dd = static_cast<T>(d);
                         for (std::size_t c = 0; c < d; ++c) {
                           const std::size_t i = r * d + c;
                           const T dxh = go[i] * gm[c];
                           gx[i] += inv_std[r] / dd * (dd * dxh - s1 - xhat[i] * s2);
                         }
                       }
                     });
                     accumulate(n, 1, [&](std::vector<T>& gg) {
                       for (std::size_t i = 0; i < go.size(); ++i) gg[i % d] += go[i] * xhat[i];
                     });
                     accumulate(n, 2, [&](std::vector<T>& gb) {
                       for (std::size_t i = 0; i < go.size(); ++i) gb[i % d] += go[i];
                     });
                   });
}

/// Per-channel statistics of a batch-norm forward in training mode.
template <typename T>
struct BatchStats {
  std::vector<T> mean;
  std::vector<T> var;  // biased
  std::size_t count = 0;
};

/// Batch normalization over (N, H, W) for each channel using the batch's own
/// statistics. The statistics are written to `stats` when non-null.
template <typename T>
Tensor<T> batch_norm2d_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             T eps = T(1e-5), BatchStats<T>* stats = nullptr) {
  detail::require_rank("batch_norm2d", x, 4);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.size() != C || beta.size() != C) {
    throw ShapeError("batch_norm2d", "affine parameters " + shape_str(gamma.shape()) + " vs " +
                                         std::to_string(C) + " channels");
  }
  const std::size_t m = N * HW;
  auto at = [=](std::size_t n, std::size_t c, std::size_t q) { return (n * C + c) * HW + q; };
  std::vector<T> mu(C, T(0)), var(C, T(0)), inv_std(C), xhat(x.size()), out(x.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t q = 0; q < HW; ++q) mu[c] += x[at(n, c, q)];
    mu[c] /= static_cast<T>(m);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t q = 0; q < HW; ++q) {
        const T z = x[at(n, c, q)] - mu[c];
        var[c] += z * z;
      }
    var[c] /= static_cast<T>(m);
    inv_std[c] = T(1) / std::sqrt(var[c] + eps);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t q = 0; q < HW; ++q) {
        const std::size_t i = at(n, c, q);
        xhat[i] = (x[i] - mu[c]) * inv_std[c];
        out[i] = xhat[i] * gamma[c] + beta[c];
      }
  }
  if (stats) *stats = BatchStats<T>{mu, var, m};
  return record<T>(
      "batch_norm2d", x.shape(), std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), at, N, C, HW, m](Node<T>& node) {
        const auto& gm = node.inputs[1]->value;
        const auto& go = node.grad;
        std::vector<T> s1(C, T(0)), s2(C, T(0));
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t q = 0; q < HW; ++q) {
              const std::size_t i = at(n, c, q);
              s1[c] += go[i];
              s2[c] += go[i] * xhat[i];
            }
        accumulate(node, 0, [&](std::vector<T>& gx) {
          const T mm = static_cast<T>(m);
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t n = 0; n < N; ++n)
              for (std::size_t q = 0; q < HW; ++q) {
                const std::size_t i = at(n, c, q);
                gx[i] += gm[c] * inv_std[c] / mm * (mm * go[i] - s1[c] - xhat[i] * s2[c]);
              }
        });
        accumulate(node, 1, [&](std::vector<T>& gg) {
          for (std::size_t c = 0; c < C; ++c) gg[c] += s2[c];
        });
        accumulate(node, 2, [&](std::vector<T>& gb) {
          for (std::size_t c = 0; c < C; ++c) gb[c] += s1[c];
        });
      });
}

/// Batch normalization with fixed (running) statistics.
template <typename T>
Tensor<T> batch_norm2d_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            std::span<const T> running_mean, std::span<const T> running_var,
                            T eps = T(1e-5)) {
  detail::require_rank("batch_norm2d", x, 4);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C ||
      running_var.size() != C) {
    throw ShapeError("batch_norm2d", "per-channel parameters do not match " +
                                         std::to_string(C) + " channels");
  }
  std::vector<T> inv_std(C), xhat(x.size()), out(x.size());
  for (std::size_t c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(running_var[c] + eps);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t q = 0; q < HW; ++q) {
        const std::size_t i = (n * C + c) * HW + q;
        xhat[i] = (x[i] - running_mean[c]) * inv_std[c];
        out[i] = xhat[i] * gamma[c] + beta[c];
      }
  return record<T>("batch_norm2d", x.shape(), std::move(out), {x, gamma, beta},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std), C, HW](Node<T>& node) {
                     const auto& gm = node.inputs[1]->value;
                     const auto& go = node.grad;
                     auto channel = [&](std::size_t i) { return (i / HW) % C; };
                     accumulate(node, 0, [&](std::vector<T>& gx) {
                       for (std::size_t i = 0; i < go.size(); ++i)
                         gx[i] += go[i] * gm[channel(i)] * inv_std[channel(i)];
                     });
                     accumulate(node, 1, [&](std::vector<T>& gg) {
                       for (std::size_t i = 0; i < go.size(); ++i) gg[channel(i)] += go[i] * xhat[i];
                     });
                     accumulate(node, 2, [&](std::vector<T>& gb) {
                       for (std::size_t i = 0; i < go.size(); ++i) gb[channel(i)] += go[i];
                     });
                   });
}

// ---------------------------------------------------------------------------
// Losses

class LabelError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Mean over the batch of -log softmax(logits)[label], computed with the row
/// maximum subtracted.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  detail::require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  if (labels.size() != N) {
    throw ShapeError("softmax_cross_entropy", std::to_string(labels.size()) + " labels for " +
                                                  shape_str(logits.shape()) + " logits");
  }
  std::vector<T> probs(N * C);
  T total(0);
  for (std::size_t r = 0; r < N; ++r) {
    const auto y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      throw LabelError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(C) + ")");
    }
    T mx = logits[r * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits[r * C + c]);
    T z(0);
    for (std::size_t c = 0; c < C; ++c) {
      probs[r * C + c] = std::exp(logits[r * C + c] - mx);
      z += probs[r * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) probs[r * C + c] /= z;
    total += std::log(z) + mx - logits[r * C + static_cast<std::size_t>(y)];
  }
  std::vector<std::int32_t> ys(labels.begin(), labels.end());
  return record<T>("softmax_cross_entropy", {1}, {total / static_cast<T>(N)}, {logits},
                   [probs = std::move(probs), ys = std::move(ys), N, C](Node<T>& n) {
                     const T s = n.grad[0] / static_cast<T>(N);
                     accumulate(n, 0, [&](std::vector<T>& g) {
                       for (std::size_t r = 0; r < N; ++r)
                         for (std::size_t c = 0; c < C; ++c) {
                           const T onehot = static_cast<std::size_t>(ys[r]) == c ? T(1) : T(0);
                           g[r * C + c] += s * (probs[r * C + c] - onehot);
                         }
                     });
                   });
}

/// Row-wise softmax of an N x C matrix (values only, computed in double).
template <typename T>
std::vector<double> softmax_rows(const Tensor<T>& logits) {
  detail::require_rank("softmax", logits, 2);
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  std::vector<double> p(N * C);
  for (std::size_t r = 0; r < N; ++r) {
    double mx = static_cast<double>(logits[r * C]);
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(logits[r * C + c]));
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      p[r * C + c] = std::exp(static_cast<double>(logits[r * C + c]) - mx);
      z += p[r * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) p[r * C + c] /= z;
  }
  return p;
}

}  // namespace ojkd
