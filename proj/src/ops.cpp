#include "bijou/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bijou/errors.hpp"

namespace bijou::ops {

namespace {

using detail::TensorImpl;

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(x.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

void require_finite(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

// Shorthands for the backward closures.
inline bool wants(const Tensor& t) { return t.requires_grad(); }
inline TensorImpl& impl(const Tensor& t) { return *t.impl(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return Tensor::make({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const TensorImpl& o) {
    const double* G = o.grad.data();
    if (wants(a)) {
      auto& ga = impl(a).grad_buffer();
      const auto B = b.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (wants(b)) {
      auto& gb = impl(b).grad_buffer();
      const auto A = a.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_bt");
  require_rank(b, 2, "matmul_bt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_bt: inner dimensions disagree for " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * n);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      out[i * n + j] = s;
    }
  return Tensor::make({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const TensorImpl& o) {
    const double* G = o.grad.data();
    if (wants(a)) {
      auto& ga = impl(a).grad_buffer();
      const auto B = b.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * B[j * k + p];
        }
    }
    if (wants(b)) {
      auto& gb = impl(b).grad_buffer();
      const auto A = a.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += g * A[i * k + p];
        }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  const auto X = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = X[i * c + j];
  return Tensor::make({c, r}, std::move(out), {x}, [x, r, c](const TensorImpl& o) {
    auto& gx = impl(x).grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += o.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    // `a` and `b` may alias (x + x); accumulate each operand separately.
    if (wants(a)) {
      auto& g = impl(a).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (wants(b)) {
      auto& g = impl(b).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    if (wants(a)) {
      auto& g = impl(a).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (wants(b)) {
      auto& g = impl(b).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    const auto A = a.data();
    const auto B = b.data();
    if (wants(a)) {
      auto& g = impl(a).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * B[i];
    }
    if (wants(b)) {
      auto& g = impl(b).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * A[i];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= c;
  return Tensor::make(x.shape(), std::move(out), {x}, [x, c](const TensorImpl& o) {
    auto& g = impl(x).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * o.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t d = bias.dim(0);
  if (x.shape().back() != d) {
    throw DimensionError("add_bias: trailing axis of " + shape_str(x.shape()) +
                         " does not match bias " + shape_str(bias.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto Bv = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += Bv[i % d];
  return Tensor::make(x.shape(), std::move(out), {x, bias}, [x, bias, d](const TensorImpl& o) {
    if (wants(x)) {
      auto& g = impl(x).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (wants(bias)) {
      auto& g = impl(bias).grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % d] += o.grad[i];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  auto y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make({1}, {s}, {x}, [x](const TensorImpl& o) {
    auto& g = impl(x).grad_buffer();
    for (double& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis out of range for " + shape_str(s));
  require_finite(x.data(), "softmax");
  const std::size_t n = s[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

  const auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = X[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, X[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(X[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  return Tensor::make(s, std::move(out), {x}, [x, n, outer, inner](const TensorImpl& o) {
    auto& g = impl(x).grad_buffer();
    const auto& Y = o.data;
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = a * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += o.grad[base + j * inner] * Y[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t k = base + j * inner;
          g[k] += Y[k] * (o.grad[k] - dot);
        }
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.shape().back();
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
  for (const Tensor* p : {&gain, &bias}) {
    if (p->defined() && (p->rank() != 1 || p->dim(0) != d)) {
      throw DimensionError("layer_norm: affine parameter " + shape_str(p->shape()) +
                           " does not match trailing axis of " + shape_str(x.shape()));
    }
  }
  const std::size_t rows = x.numel() / d;
  const auto X = x.data();
  std::vector<double> xhat(X.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) xhat[r * d + j] = (xr[j] - mu) * inv_std[r];
  }
  std::vector<double> out(xhat);
  if (gain.defined() || bias.defined()) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::size_t j = i % d;
      out[i] = out[i] * (gain.defined() ? gain.data()[j] : 1.0) +
               (bias.defined() ? bias.data()[j] : 0.0);
    }
  }
  std::vector<Tensor> inputs{x};
  if (gain.defined()) inputs.push_back(gain);
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make(
      x.shape(), std::move(out), std::move(inputs),
      [x, gain, bias, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const TensorImpl& o) {
        const double* G = o.grad.data();
        if (gain.defined() && wants(gain)) {
          auto& gg = impl(gain).grad_buffer();
          for (std::size_t i = 0; i < o.grad.size(); ++i) gg[i % d] += G[i] * xhat[i];
        }
        if (bias.defined() && wants(bias)) {
          auto& gb = impl(bias).grad_buffer();
          for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i % d] += G[i];
        }
        if (!wants(x)) return;
        auto& gx = impl(x).grad_buffer();
        std::vector<double> dxhat(d);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = G[r * d + j] * (gain.defined() ? gain.data()[j] : 1.0);
            s1 += dxhat[j];
            s2 += dxhat[j] * xhat[r * d + j];
          }
          for (std::size_t j = 0; j < d; ++j) {
            gx[r * d + j] += inv_std[r] * (dxhat[j] - inv_d * s1 - xhat[r * d + j] * inv_d * s2);
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  const auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    out[i] = 0.5 * X[i] * (1.0 + std::erf(X[i] * std::numbers::sqrt2 / 2.0));
  }
  return Tensor::make(x.shape(), std::move(out), {x}, [x](const TensorImpl& o) {
    const auto X = x.data();
    auto& g = impl(x).grad_buffer();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < X.size(); ++i) {
      const double v = X[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += o.grad[i] * (cdf + v * pdf);
    }
  });
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                 const Conv1dOptions& opt) {
  if (opt.stride == 0) throw ConfigError("conv1d: stride must be positive");
  const std::size_t padded = length + 2 * opt.padding;
  if (padded < kernel) return 0;
  return (padded - kernel) / opt.stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const Conv1dOptions& opt) {
  require_rank(x, 2, "conv1d");
  require_rank(weight, 3, "conv1d");
  const std::size_t c_in = x.dim(0), T = x.dim(1);
  const std::size_t c_out = weight.dim(0), cpg = weight.dim(1), k = weight.dim(2);
  const std::size_t g = opt.groups;
  if (g == 0 || c_in % g != 0 || c_out % g != 0) {
    throw ConfigError("conv1d: channels (in " + std::to_string(c_in) + ", out " +
                      std::to_string(c_out) + ") not divisible by groups " + std::to_string(g));
  }
  if (cpg != c_in / g) {
    throw DimensionError("conv1d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(x.shape()) + " and groups " + std::to_string(g));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(c_out) + " output channels");
  }
  const std::size_t T_out = conv1d_output_length(T, k, opt);
  if (T_out == 0) {
    throw DimensionError("conv1d: input length " + std::to_string(T) + " shorter than kernel " +
                         std::to_string(k));
  }
  const std::size_t opg = c_out / g;
  const std::size_t stride = opt.stride;
  const auto pad = static_cast<std::ptrdiff_t>(opt.padding);
  const auto X = x.data();
  const auto W = weight.data();
  std::vector<double> out(c_out * T_out, 0.0);
  for (std::size_t oc = 0; oc < c_out; ++oc) {
    const std::size_t grp = oc / opg;
    double* orow = out.data() + oc * T_out;
    if (bias.defined()) std::fill(orow, orow + T_out, bias.data()[oc]);
    for (std::size_t ic = 0; ic < cpg; ++ic) {
      const double* xrow = X.data() + (grp * cpg + ic) * T;
      const double* w = W.data() + (oc * cpg + ic) * k;
      for (std::size_t t = 0; t < T_out; ++t) {
        const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * stride) - pad;
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(T)) s += w[j] * xrow[pos];
        }
        orow[t] += s;
      }
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make(
      {c_out, T_out}, std::move(out), std::move(inputs),
      [x, weight, bias, c_out, cpg, k, T, T_out, opg, stride, pad](const TensorImpl& o) {
        const auto X = x.data();
        const auto W = weight.data();
        const double* G = o.grad.data();
        const bool gx_on = wants(x), gw_on = wants(weight);
        std::vector<double>* gx = gx_on ? &impl(x).grad_buffer() : nullptr;
        std::vector<double>* gw = gw_on ? &impl(weight).grad_buffer() : nullptr;
        for (std::size_t oc = 0; oc < c_out; ++oc) {
          const std::size_t grp = oc / opg;
          for (std::size_t ic = 0; ic < cpg; ++ic) {
            const std::size_t xr = (grp * cpg + ic) * T;
            const std::size_t wr = (oc * cpg + ic) * k;
            for (std::size_t t = 0; t < T_out; ++t) {
              const double go = G[oc * T_out + t];
              if (go == 0.0) continue;
              const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * stride) - pad;
              for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
                if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(T)) continue;
                if (gx) (*gx)[xr + pos] += go * W[wr + j];
                if (gw) (*gw)[wr + j] += go * X[xr + pos];
              }
            }
          }
        }
        if (bias.defined() && wants(bias)) {
          auto& gb = impl(bias).grad_buffer();
          for (std::size_t oc = 0; oc < c_out; ++oc)
            for (std::size_t t = 0; t < T_out; ++t) gb[oc] += G[oc * T_out + t];
        }
      });
}

Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "index_rows");
  const std::size_t R = x.dim(0), C = x.dim(1);
  if (rows.empty()) throw DimensionError("index_rows: empty index list");
  std::vector<double> out(rows.size() * C);
  const auto X = x.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= R) {
      throw DimensionError("index_rows: row " + std::to_string(rows[i]) + " out of range for " +
                           shape_str(x.shape()));
    }
    std::copy_n(X.data() + rows[i] * C, C, out.data() + i * C);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return Tensor::make({rows.size(), C}, std::move(out), {x},
                      [x, C, idx = std::move(idx)](const TensorImpl& o) {
                        auto& g = impl(x).grad_buffer();
                        for (std::size_t i = 0; i < idx.size(); ++i)
                          for (std::size_t c = 0; c < C; ++c) g[idx[i] * C + c] += o.grad[i * C + c];
                      });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t C = parts.front().dim(1);
  std::size_t R = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != C) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    R += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(R * C);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor::make({R, C}, std::move(out), parts, [parts](const TensorImpl& o) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (wants(p)) {
        auto& g = impl(p).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[off + i];
      }
      off += p.numel();
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t R = x.dim(0), C = x.dim(1);
  if (count == 0 || start + count > C) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " + shape_str(x.shape()));
  }
  std::vector<double> out(R * count);
  const auto X = x.data();
  for (std::size_t r = 0; r < R; ++r) std::copy_n(X.data() + r * C + start, count, out.data() + r * count);
  return Tensor::make({R, count}, std::move(out), {x}, [x, R, C, start, count](const TensorImpl& o) {
    auto& g = impl(x).grad_buffer();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < count; ++c) g[r * C + start + c] += o.grad[r * count + c];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t R = parts.front().dim(0);
  std::size_t C = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != R) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    C += p.dim(1);
  }
  std::vector<double> out(R * C);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(1);
    const auto P = p.data();
    for (std::size_t r = 0; r < R; ++r) std::copy_n(P.data() + r * pc, pc, out.data() + r * C + off);
    off += pc;
  }
  return Tensor::make({R, C}, std::move(out), parts, [parts, R, C](const TensorImpl& o) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p.dim(1);
      if (wants(p)) {
        auto& g = impl(p).grad_buffer();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < pc; ++c) g[r * pc + c] += o.grad[r * C + off + c];
      }
      off += pc;
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t N = logits.dim(0), V = logits.dim(1);
  if (targets.size() != N) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  require_finite(logits.data(), "cross_entropy");
  const auto L = logits.data();
  std::vector<double> probs(N * V);
  double loss = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    if (targets[i] >= V) throw InputError("cross_entropy: target id out of range");
    const double* row = L.data() + i * V;
    const double mx = *std::max_element(row, row + V);
    double z = 0.0;
    for (std::size_t j = 0; j < V; ++j) {
      probs[i * V + j] = std::exp(row[j] - mx);
      z += probs[i * V + j];
    }
    for (std::size_t j = 0; j < V; ++j) probs[i * V + j] /= z;
    loss -= row[targets[i]] - mx - std::log(z);
  }
  loss /= static_cast<double>(N);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return Tensor::make({1}, {loss}, {logits},
                      [logits, N, V, probs = std::move(probs), tgt = std::move(tgt)](const TensorImpl& o) {
                        auto& g = impl(logits).grad_buffer();
                        const double s = o.grad[0] / static_cast<double>(N);
                        for (std::size_t i = 0; i < N; ++i)
                          for (std::size_t j = 0; j < V; ++j)
                            g[i * V + j] += s * (probs[i * V + j] - (j == tgt[i] ? 1.0 : 0.0));
                      });
}

}  // namespace bijou::ops
