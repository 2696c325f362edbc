#include "l4sllm/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "l4sllm/simd/kernels.hpp"

namespace l4sllm::tensor {

namespace {

using detail::Node;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw TensorError(op + ": incompatible shapes " + shape_to_string(a) + " and " + shape_to_string(b));
}

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.begin(), suffix.end(), full.end() - static_cast<std::ptrdiff_t>(suffix.size()));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

std::size_t last_dim(const Tensor& x, const std::string& op) {
  if (x.rank() == 0) throw TensorError(op + ": rank-0 tensor");
  return x.shape().back();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape())) shape_error("add", a.shape(), b.shape());
  const auto& kt = simd::active();
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / std::max<std::size_t>(inner, 1);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t o = 0; o < outer; ++o) kt.add(b.data().data(), out.data() + o * inner, inner);
  return Tensor::make_result("add", a.shape(), std::move(out), {a, b}, [outer, inner](Node& self) {
    const auto& kt = simd::active();
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) kt.add(self.grad.data(), pa.ensure_grad().data(), self.grad.size());
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) kt.add(self.grad.data() + o * inner, gb.data(), inner);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& kt = simd::active();
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) kt.add(self.grad.data(), pa.ensure_grad().data(), self.grad.size());
    if (pb.requires_grad) kt.axpy(-1.0, self.grad.data(), pb.ensure_grad().data(), self.grad.size());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  simd::active().scale(factor, a.data().data(), out.data(), out.size());
  return Tensor::make_result("scale", a.shape(), std::move(out), {a}, [factor](Node& self) {
    Node& pa = parent(self, 0);
    simd::active().axpy(factor, self.grad.data(), pa.ensure_grad().data(), self.grad.size());
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v)));
  }
  return Tensor::make_result("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px.value[i];
      const double u = c * (v + k * v * v * v);
      const double t = std::tanh(u);
      const double du = c * (1.0 + 3.0 * k * v * v);
      g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  return Tensor::make_result("tanh", x.shape(), std::move(out), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
  });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || x.rank() == 0 || x.shape().back() != w.dim(0)) shape_error("matmul", x.shape(), w.shape());
  const std::size_t in = w.dim(0);
  const std::size_t out_dim = w.dim(1);
  const std::size_t rows = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = out_dim;
  const auto& kt = simd::active();
  std::vector<double> out(rows * out_dim, 0.0);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = out.data() + r * out_dim;
    for (std::size_t p = 0; p < in; ++p) {
      const double xv = xd[r * in + p];
      if (xv != 0.0) kt.axpy(xv, wd + p * out_dim, orow, out_dim);
    }
  }
  return Tensor::make_result("matmul", std::move(shape), std::move(out), {x, w}, [rows, in, out_dim](Node& self) {
    const auto& kt = simd::active();
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    const double* go = self.grad.data();
    if (px.requires_grad) {
      double* gx = px.ensure_grad().data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t p = 0; p < in; ++p) gx[r * in + p] += kt.dot(go + r * out_dim, pw.value.data() + p * out_dim, out_dim);
      }
    }
    if (pw.requires_grad) {
      double* gw = pw.ensure_grad().data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t p = 0; p < in; ++p) {
          const double xv = px.value[r * in + p];
          if (xv != 0.0) kt.axpy(xv, go + r * out_dim, gw + p * out_dim, out_dim);
        }
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (b.rank() != 1 || w.rank() != 2 || b.dim(0) != w.dim(1)) shape_error("linear", w.shape(), b.shape());
  return add(matmul(x, w), b);
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias, Padding padding) {
  if (x.rank() != 3 || x.dim(1) != 1) throw TensorError("conv1d: input must be [batch,1,len], got " + shape_to_string(x.shape()));
  if (kernels.rank() != 3 || kernels.dim(1) != 1) shape_error("conv1d", x.shape(), kernels.shape());
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(0)) shape_error("conv1d", kernels.shape(), bias.shape());
  const std::size_t batch = x.dim(0);
  const std::size_t len = x.dim(2);
  const std::size_t channels = kernels.dim(0);
  const std::size_t k = kernels.dim(2);
  const std::ptrdiff_t left = padding == Padding::Causal ? static_cast<std::ptrdiff_t>(k) - 1
                                                         : (static_cast<std::ptrdiff_t>(k) - 1) / 2;
  const auto slen = static_cast<std::ptrdiff_t>(len);
  std::vector<double> out(batch * channels * len);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.data().data() + b * len;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* kr = kernels.data().data() + c * k;
      double* orow = out.data() + (b * channels + c) * len;
      for (std::ptrdiff_t t = 0; t < slen; ++t) {
        double acc = bias.data()[c];
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - left;
          if (src >= 0 && src < slen) acc += kr[j] * xr[src];
        }
        orow[t] = acc;
      }
    }
  }
  return Tensor::make_result(
      "conv1d", {batch, channels, len}, std::move(out), {x, kernels, bias},
      [batch, len, channels, k, left, slen](Node& self) {
        Node& px = parent(self, 0);
        Node& pk = parent(self, 1);
        Node& pb = parent(self, 2);
        double* gx = px.requires_grad ? px.ensure_grad().data() : nullptr;
        double* gk = pk.requires_grad ? pk.ensure_grad().data() : nullptr;
        double* gb = pb.requires_grad ? pb.ensure_grad().data() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const double* go = self.grad.data() + (b * channels + c) * len;
            for (std::ptrdiff_t t = 0; t < slen; ++t) {
              const double g = go[t];
              if (gb) gb[c] += g;
              for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - left;
                if (src < 0 || src >= slen) continue;
                if (gx) gx[b * len + src] += g * pk.value[c * k + j];
                if (gk) gk[c * k + j] += g * px.value[b * len + src];
              }
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = last_dim(x, "layer_norm");
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) shape_error("layer_norm", x.shape(), gamma.shape());
  if (!(eps > 0.0)) throw TensorError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (xr[i] - mu) * is;
      out[r * d + i] = gamma.data()[i] * xhat[r * d + i] + beta.data()[i];
    }
  }
  return Tensor::make_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& px = parent(self, 0);
        Node& pg = parent(self, 1);
        Node& pb = parent(self, 2);
        double* gx = px.requires_grad ? px.ensure_grad().data() : nullptr;
        double* gg = pg.requires_grad ? pg.ensure_grad().data() : nullptr;
        double* gb = pb.requires_grad ? pb.ensure_grad().data() : nullptr;
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gy = self.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          double mean_dxhat = 0.0;
          double mean_dxhat_xhat = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            if (gg) gg[i] += gy[i] * xh[i];
            if (gb) gb[i] += gy[i];
            dxhat[i] = gy[i] * pg.value[i];
            mean_dxhat += dxhat[i];
            mean_dxhat_xhat += dxhat[i] * xh[i];
          }
          if (!gx) continue;
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          for (std::size_t i = 0; i < d; ++i) {
            gx[r * d + i] += inv_std[r] * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
          }
        }
      });
}

Tensor softmax(const Tensor& x) {
  const std::size_t d = last_dim(x, "softmax");
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    const double m = *std::max_element(xr, xr + d);
    double z = 0.0;
    for (std::size_t i = 0; i < d; ++i) z += (out[r * d + i] = std::exp(xr[i] - m));
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] /= z;
  }
  return Tensor::make_result("softmax", x.shape(), std::move(out), {x}, [rows, d](Node& self) {
    Node& px = parent(self, 0);
    auto& g = px.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* p = self.value.data() + r * d;
      const double* gy = self.grad.data() + r * d;
      const double s = simd::active().dot(p, gy, d);
      for (std::size_t i = 0; i < d; ++i) g[r * d + i] += p[i] * (gy[i] - s);
    }
  });
}

namespace {

Tensor cross_entropy_impl(const std::string& op, const Tensor& logits, std::span<const int> targets,
                          std::vector<double> weights) {
  if (logits.rank() != 2) throw TensorError(op + ": logits must be [n,C], got " + shape_to_string(logits.shape()));
  const std::size_t n = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (targets.size() != n || weights.size() != n) {
    throw TensorError(op + ": " + std::to_string(targets.size()) + " targets for " + std::to_string(n) + " rows");
  }
  std::vector<double> probs(n * classes);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (weights[r] == 0.0) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= classes) {
      throw TensorError(op + ": target " + std::to_string(targets[r]) + " out of range [0," + std::to_string(classes) + ")");
    }
    const double* lr = logits.data().data() + r * classes;
    const double m = *std::max_element(lr, lr + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += (probs[r * classes + c] = std::exp(lr[c] - m));
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= z;
    const double log_p = lr[targets[r]] - m - std::log(z);
    loss -= weights[r] * log_p;
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  return Tensor::make_result(
      op, {1}, {loss}, {logits},
      [n, classes, probs = std::move(probs), tgt = std::move(tgt), weights = std::move(weights)](Node& self) {
        Node& pl = parent(self, 0);
        auto& g = pl.ensure_grad();
        const double up = self.grad[0];
        for (std::size_t r = 0; r < n; ++r) {
          if (weights[r] == 0.0) continue;
          const double w = up * weights[r];
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = static_cast<int>(c) == tgt[r] ? 1.0 : 0.0;
            g[r * classes + c] += w * (probs[r * classes + c] - onehot);
          }
        }
      });
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) == 0) {
    throw TensorError("cross_entropy: logits must be non-empty [n,C], got " + shape_to_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0);
  return cross_entropy_impl("cross_entropy", logits, targets, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const double> weights) {
  return cross_entropy_impl("weighted_cross_entropy", logits, targets,
                            std::vector<double>(weights.begin(), weights.end()));
}

namespace {

struct AttnDims {
  std::size_t batches;
  std::size_t n;
  std::size_t dk;
  std::size_t per_group;
};

AttnDims check_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask) {
  if (q.rank() < 2) throw TensorError("attention: Q must be [..., n, d_k], got " + shape_to_string(q.shape()));
  if (q.shape() != k.shape()) shape_error("attention", q.shape(), k.shape());
  if (q.shape() != v.shape()) shape_error("attention", q.shape(), v.shape());
  AttnDims dims{};
  dims.dk = q.shape().back();
  dims.n = q.shape()[q.rank() - 2];
  if (dims.dk == 0) throw TensorError("attention: d_k must be positive");
  dims.batches = q.numel() / (dims.n * dims.dk);
  dims.per_group = dims.batches;
  if (!mask.key_valid.empty()) {
    if (mask.groups == 0 || dims.batches % mask.groups != 0 || mask.key_valid.size() != mask.groups * dims.n) {
      throw TensorError("attention: key mask of " + std::to_string(mask.key_valid.size()) + " entries in " +
                        std::to_string(mask.groups) + " groups does not fit " + shape_to_string(q.shape()));
    }
    dims.per_group = dims.batches / mask.groups;
  }
  return dims;
}

// Fills probs [batches, n, n]; masked entries are exactly zero.
void attention_probs(const Tensor& q, const Tensor& k, const AttentionMask& mask, const AttnDims& dims,
                     std::vector<double>& probs) {
  const auto& kt = simd::active();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dims.dk));
  const std::size_t n = dims.n;
  probs.assign(dims.batches * n * n, 0.0);
  std::vector<double> logits(n);
  for (std::size_t g = 0; g < dims.batches; ++g) {
    const double* qg = q.data().data() + g * n * dims.dk;
    const double* kg = k.data().data() + g * n * dims.dk;
    const double* valid = mask.key_valid.empty() ? nullptr : mask.key_valid.data() + (g / dims.per_group) * n;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t limit = mask.causal ? i + 1 : n;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < limit; ++j) {
        if (valid && valid[j] == 0.0) continue;
        logits[j] = kt.dot(qg + i * dims.dk, kg + j * dims.dk, dims.dk) * inv_sqrt;
        m = std::max(m, logits[j]);
      }
      if (m == -std::numeric_limits<double>::infinity()) continue;
      double* prow = probs.data() + (g * n + i) * n;
      double z = 0.0;
      for (std::size_t j = 0; j < limit; ++j) {
        if (valid && valid[j] == 0.0) continue;
        z += (prow[j] = std::exp(logits[j] - m));
      }
      for (std::size_t j = 0; j < limit; ++j) prow[j] /= z;
    }
  }
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, const AttentionMask& mask) {
  const AttnDims dims = check_attention(q, k, k, mask);
  std::vector<double> probs;
  attention_probs(q, k, mask, dims, probs);
  Shape shape(q.shape().begin(), q.shape().end() - 1);
  shape.push_back(dims.n);
  return Tensor(std::move(shape), std::move(probs));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask) {
  const AttnDims dims = check_attention(q, k, v, mask);
  std::vector<double> probs;
  attention_probs(q, k, mask, dims, probs);
  const auto& kt = simd::active();
  const std::size_t n = dims.n;
  const std::size_t dk = dims.dk;
  std::vector<double> out(q.numel(), 0.0);
  for (std::size_t g = 0; g < dims.batches; ++g) {
    const double* vg = v.data().data() + g * n * dk;
    for (std::size_t i = 0; i < n; ++i) {
      const double* prow = probs.data() + (g * n + i) * n;
      double* orow = out.data() + (g * n + i) * dk;
      const std::size_t limit = mask.causal ? i + 1 : n;
      for (std::size_t j = 0; j < limit; ++j) {
        if (prow[j] != 0.0) kt.axpy(prow[j], vg + j * dk, orow, dk);
      }
    }
  }
  const bool causal = mask.causal;
  return Tensor::make_result(
      "attention", q.shape(), std::move(out), {q, k, v},
      [dims, causal, probs = std::move(probs)](Node& self) {
        const auto& kt = simd::active();
        Node& pq = parent(self, 0);
        Node& pk = parent(self, 1);
        Node& pv = parent(self, 2);
        const std::size_t n = dims.n;
        const std::size_t dk = dims.dk;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
        double* gq = pq.requires_grad ? pq.ensure_grad().data() : nullptr;
        double* gk = pk.requires_grad ? pk.ensure_grad().data() : nullptr;
        double* gv = pv.requires_grad ? pv.ensure_grad().data() : nullptr;
        std::vector<double> dp(n);
        for (std::size_t g = 0; g < dims.batches; ++g) {
          const std::size_t base = g * n * dk;
          for (std::size_t i = 0; i < n; ++i) {
            const double* prow = probs.data() + (g * n + i) * n;
            const double* go = self.grad.data() + base + i * dk;
            const std::size_t limit = causal ? i + 1 : n;
            double s = 0.0;
            for (std::size_t j = 0; j < limit; ++j) {
              if (prow[j] == 0.0) {
                dp[j] = 0.0;
                continue;
              }
              dp[j] = kt.dot(go, pv.value.data() + base + j * dk, dk);
              s += dp[j] * prow[j];
              if (gv) kt.axpy(prow[j], go, gv + base + j * dk, dk);
            }
            for (std::size_t j = 0; j < limit; ++j) {
              if (prow[j] == 0.0) continue;
              const double ds = prow[j] * (dp[j] - s) * inv_sqrt;
              if (gq) kt.axpy(ds, pk.value.data() + base + j * dk, gq + base + i * dk, dk);
              if (gk) kt.axpy(ds, pq.value.data() + base + i * dk, gk + base + j * dk, dk);
            }
          }
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    simd::active().add(self.grad.data(), parent(self, 0).ensure_grad().data(), self.grad.size());
  });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw TensorError("transpose_last2: rank < 2");
  const std::size_t a = x.shape()[x.rank() - 2];
  const std::size_t b = x.shape().back();
  const std::size_t outer = x.numel() / (a * b);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 2], shape.back());
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < b; ++j) out[o * a * b + j * a + i] = x.data()[o * a * b + i * b + j];
    }
  }
  return Tensor::make_result("transpose_last2", std::move(shape), std::move(out), {x}, [outer, a, b](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = 0; j < b; ++j) g[o * a * b + i * b + j] += self.grad[o * a * b + j * a + i];
      }
    }
  });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw TensorError("split_heads: cannot split " + shape_to_string(x.shape()) + " into " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = x.dim(0);
  const std::size_t n = x.dim(1);
  const std::size_t dh = x.dim(2) / heads;
  std::vector<double> out(x.numel());
  auto src_index = [=](std::size_t b, std::size_t h, std::size_t t, std::size_t e) {
    return (b * n + t) * heads * dh + h * dh + e;
  };
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t e = 0; e < dh; ++e) out[o++] = x.data()[src_index(b, h, t, e)];
  return Tensor::make_result("split_heads", {batch, heads, n, dh}, std::move(out), {x}, [=](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    std::size_t o = 0;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t e = 0; e < dh; ++e) g[src_index(b, h, t, e)] += self.grad[o++];
  });
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 4) throw TensorError("merge_heads: expected [B,h,n,dh], got " + shape_to_string(x.shape()));
  const std::size_t batch = x.dim(0);
  const std::size_t heads = x.dim(1);
  const std::size_t n = x.dim(2);
  const std::size_t dh = x.dim(3);
  std::vector<double> out(x.numel());
  auto dst_index = [=](std::size_t b, std::size_t h, std::size_t t, std::size_t e) {
    return (b * n + t) * heads * dh + h * dh + e;
  };
  std::size_t i = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t e = 0; e < dh; ++e) out[dst_index(b, h, t, e)] = x.data()[i++];
  return Tensor::make_result("merge_heads", {batch, n, heads * dh}, std::move(out), {x}, [=](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    std::size_t i = 0;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t e = 0; e < dh; ++e) g[i++] += self.grad[dst_index(b, h, t, e)];
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat_last: no inputs");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape l(p.shape().begin(), p.shape().end() - 1);
    if (l != lead) shape_error("concat_last", parts[0].shape(), p.shape());
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(parts[k].data().data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return Tensor::make_result("concat_last", std::move(shape), std::move(out), parts, [rows, total, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = parent(self, k);
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          simd::active().add(self.grad.data() + r * total + offset, g.data() + r * widths[k], widths[k]);
        }
      }
      offset += widths[k];
    }
  });
}

Tensor interleave(const std::vector<Tensor>& tokens) {
  if (tokens.empty()) throw TensorError("interleave: no inputs");
  const Shape& s = tokens[0].shape();
  if (s.size() != 3) throw TensorError("interleave: expected [B,w,d], got " + shape_to_string(s));
  for (const Tensor& t : tokens) {
    if (t.shape() != s) shape_error("interleave", s, t.shape());
  }
  const std::size_t batch = s[0];
  const std::size_t steps = s[1];
  const std::size_t d = s[2];
  const std::size_t count = tokens.size();
  std::vector<double> out(batch * steps * count * d);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < steps; ++t) {
        std::copy_n(tokens[k].data().data() + (b * steps + t) * d, d, out.data() + ((b * steps + t) * count + k) * d);
      }
    }
  }
  return Tensor::make_result("interleave", {batch, steps * count, d}, std::move(out), tokens,
                             [batch, steps, d, count](Node& self) {
                               for (std::size_t k = 0; k < count; ++k) {
                                 Node& p = parent(self, k);
                                 if (!p.requires_grad) continue;
                                 auto& g = p.ensure_grad();
                                 for (std::size_t b = 0; b < batch; ++b) {
                                   for (std::size_t t = 0; t < steps; ++t) {
                                     simd::active().add(self.grad.data() + ((b * steps + t) * count + k) * d,
                                                        g.data() + (b * steps + t) * d, d);
                                   }
                                 }
                               }
                             });
}

Tensor select_positions(const Tensor& x, std::span<const std::size_t> positions) {
  if (x.rank() != 3) throw TensorError("select_positions: expected [B,N,d], got " + shape_to_string(x.shape()));
  const std::size_t batch = x.dim(0);
  const std::size_t n = x.dim(1);
  const std::size_t d = x.dim(2);
  for (std::size_t p : positions) {
    if (p >= n) throw TensorError("select_positions: position " + std::to_string(p) + " >= " + std::to_string(n));
  }
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  const std::size_t count = pos.size();
  std::vector<double> out(batch * count * d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < count; ++i) {
      std::copy_n(x.data().data() + (b * n + pos[i]) * d, d, out.data() + (b * count + i) * d);
    }
  }
  return Tensor::make_result("select_positions", {batch, count, d}, std::move(out), {x},
                             [batch, n, d, pos = std::move(pos)](Node& self) {
                               auto& g = parent(self, 0).ensure_grad();
                               const std::size_t count = pos.size();
                               for (std::size_t b = 0; b < batch; ++b) {
                                 for (std::size_t i = 0; i < count; ++i) {
                                   simd::active().add(self.grad.data() + (b * count + i) * d,
                                                      g.data() + (b * n + pos[i]) * d, d);
                                 }
                               }
                             });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> indices, Shape index_shape) {
  if (table.rank() != 2) throw TensorError("embedding: table must be [V,d], got " + shape_to_string(table.shape()));
  if (shape_numel(index_shape) != indices.size()) {
    throw TensorError("embedding: " + std::to_string(indices.size()) + " indices for shape " + shape_to_string(index_shape));
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= vocab) throw TensorError("embedding: index " + std::to_string(idx[i]) + " >= " + std::to_string(vocab));
    std::copy_n(table.data().data() + idx[i] * d, d, out.data() + i * d);
  }
  Shape shape = std::move(index_shape);
  shape.push_back(d);
  return Tensor::make_result("embedding", std::move(shape), std::move(out), {table}, [d, idx = std::move(idx)](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) simd::active().add(self.grad.data() + i * d, g.data() + idx[i] * d, d);
  });
}

Tensor scale_rows(const Tensor& x, std::span<const double> row_scale) {
  const std::size_t d = last_dim(x, "scale_rows");
  const std::size_t rows = x.numel() / d;
  if (row_scale.size() != rows) {
    throw TensorError("scale_rows: " + std::to_string(row_scale.size()) + " scales for " + std::to_string(rows) + " rows");
  }
  std::vector<double> rs(row_scale.begin(), row_scale.end());
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) simd::active().scale(rs[r], x.data().data() + r * d, out.data() + r * d, d);
  return Tensor::make_result("scale_rows", x.shape(), std::move(out), {x}, [d, rs = std::move(rs)](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t r = 0; r < rs.size(); ++r) simd::active().axpy(rs[r], self.grad.data() + r * d, g.data() + r * d, d);
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_result("sum", {1}, {s}, {x}, [](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw TensorError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_squares(const Tensor& x) {
  const double s = simd::active().dot(x.data().data(), x.data().data(), x.numel());
  return Tensor::make_result("sum_squares", {1}, {s}, {x}, [](Node& self) {
    Node& px = parent(self, 0);
    simd::active().axpy(2.0 * self.grad[0], px.value.data(), px.ensure_grad().data(), px.value.size());
  });
}

}  // namespace l4sllm::tensor
