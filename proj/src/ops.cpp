#include "mmp/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mmp/errors.hpp"

namespace mmp::ops {

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

// c[P,R] += a[P,Q] * b[Q,R]
void gemm_nn(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
             std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    double* ci = c + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a[i * q + k];
      if (aik == 0.0) continue;
      const double* bk = b + k * r;
      for (std::size_t j = 0; j < r; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c[P,R] += a[P,Q] * b[R,Q]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
             std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const double* ai = a + i * q;
    for (std::size_t j = 0; j < r; ++j) {
      const double* bj = b + j * q;
      // Four independent partial sums let the compiler vectorize.
      double acc[4] = {0.0, 0.0, 0.0, 0.0};
      std::size_t k = 0;
      for (; k + 4 <= q; k += 4) {
        acc[0] += ai[k] * bj[k];
        acc[1] += ai[k + 1] * bj[k + 1];
        acc[2] += ai[k + 2] * bj[k + 2];
        acc[3] += ai[k + 3] * bj[k + 3];
      }
      for (; k < q; ++k) acc[0] += ai[k] * bj[k];
      c[i * r + j] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
    }
  }
}

// c[Q,R] += a[P,Q]^T * b[P,R]
void gemm_tn(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
             std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const double* bi = b + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a[i * q + k];
      if (aik == 0.0) continue;
      double* ck = c + k * r;
      for (std::size_t j = 0; j < r; ++j) ck[j] += aik * bi[j];
    }
  }
}

template <typename F>
Tensor unary(const Tensor& x, const char* op, F value_and_slope) {
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  std::vector<double> slope(n);
  auto xs = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    auto [v, s] = value_and_slope(xs[i]);
    out[i] = v;
    slope[i] = s;
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x}, op,
      [slope = std::move(slope)](std::span<const double> g, std::span<Tensor> in) {
        if (!in[0].requires_grad()) return;
        auto dx = in[0].grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * slope[i];
      });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  if (b.rows() != q) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  std::vector<double> out(p * r, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), p, q, r);
  return Tensor::make_result(
      {p, r}, std::move(out), {a, b}, "matmul",
      [p, q, r](std::span<const double> g, std::span<Tensor> in) {
        if (in[0].requires_grad()) {
          gemm_nt(g.data(), in[1].data().data(), in[0].grad_buffer().data(), p, r, q);
        }
        if (in[1].requires_grad()) {
          gemm_tn(in[0].data().data(), g.data(), in[1].grad_buffer().data(), p, q, r);
        }
      });
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_transposed");
  require_matrix(b, "matmul_transposed");
  const std::size_t p = a.rows(), q = a.cols(), r = b.rows();
  if (b.cols() != q) {
    throw DimensionError("matmul_transposed: inner dimensions disagree " +
                         shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  std::vector<double> out(p * r, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), p, q, r);
  return Tensor::make_result(
      {p, r}, std::move(out), {a, b}, "matmul_transposed",
      [p, q, r](std::span<const double> g, std::span<Tensor> in) {
        // dA[P,Q] = G[P,R] B[R,Q]; dB[R,Q] = G^T A
        if (in[0].requires_grad()) {
          gemm_nn(g.data(), in[1].data().data(), in[0].grad_buffer().data(), p, r, q);
        }
        if (in[1].requires_grad()) {
          gemm_tn(g.data(), in[0].data().data(), in[1].grad_buffer().data(), p, r, q);
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return Tensor::make_result({n, m}, std::move(out), {a}, "transpose",
                             [m, n](std::span<const double> g, std::span<Tensor> in) {
                               if (!in[0].requires_grad()) return;
                               auto dx = in[0].grad_buffer();
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   dx[i * n + j] += g[j * m + i];
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "add",
                             [](std::span<const double> g, std::span<Tensor> in) {
                               for (Tensor& t : in) {
                                 if (!t.requires_grad()) continue;
                                 auto d = t.grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "sub",
                             [](std::span<const double> g, std::span<Tensor> in) {
                               if (in[0].requires_grad()) {
                                 auto d = in[0].grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                               }
                               if (in[1].requires_grad()) {
                                 auto d = in[1].grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "mul",
                             [](std::span<const double> g, std::span<Tensor> in) {
                               auto xa = in[0].data();
                               auto xb = in[1].data();
                               if (in[0].requires_grad()) {
                                 auto d = in[0].grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * xb[i];
                               }
                               if (in[1].requires_grad()) {
                                 auto d = in[1].grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * xa[i];
                               }
                             });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, "scale",
                             [factor](std::span<const double> g, std::span<Tensor> in) {
                               if (!in[0].requires_grad()) return;
                               auto d = in[0].grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
                             });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t n = x.rows(), d = x.cols();
  if (bias.rank() != 1 || bias.dim(0) != d) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(x.values());
  auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += b[j];
  return Tensor::make_result(x.shape(), std::move(out), {x, bias}, "add_bias",
                             [n, d](std::span<const double> g, std::span<Tensor> in) {
                               if (in[0].requires_grad()) {
                                 auto dx = in[0].grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                               }
                               if (in[1].requires_grad()) {
                                 auto db = in[1].grad_buffer();
                                 for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
                               }
                             });
}

Tensor gelu(const Tensor& x) {
  return unary(x, "gelu", [](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * v * v) * 0.5 * std::numbers::inv_sqrtpi *
                       std::numbers::sqrt2;
    return std::pair{v * cdf, cdf + v * pdf};
  });
}

Tensor relu(const Tensor& x) {
  return unary(x, "relu", [](double v) {
    return v > 0.0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0};
  });
}

Tensor exp(const Tensor& x) {
  return unary(x, "exp", [](double v) {
    double e = std::exp(v);
    return std::pair{e, e};
  });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log of a non-positive value");
  }
  return unary(x, "log", [](double v) { return std::pair{std::log(v), 1.0 / v}; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result({}, {acc}, {x}, "sum",
                             [](std::span<const double> g, std::span<Tensor> in) {
                               if (!in[0].requires_grad()) return;
                               for (double& d : in[0].grad_buffer()) d += g[0];
                             });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax: temperature must be positive, got " +
                         std::to_string(temperature));
  }
  if (logits.rank() == 0) throw DimensionError("softmax: scalar input");
  const std::size_t n = logits.shape().back();
  const std::size_t outer = logits.numel() / n;
  std::vector<double> out(logits.numel());
  auto x = logits.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const double* xi = x.data() + o * n;
    double* yi = out.data() + o * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] = std::exp((xi[j] - mx) / temperature);
      z += yi[j];
    }
    for (std::size_t j = 0; j < n; ++j) yi[j] /= z;
  }
  std::vector<double> y = out;
  return Tensor::make_result(
      logits.shape(), std::move(out), {logits}, "softmax",
      [y = std::move(y), n, outer, temperature](std::span<const double> g,
                                                std::span<Tensor> in) {
        if (!in[0].requires_grad()) return;
        auto dx = in[0].grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* yi = y.data() + o * n;
          const double* gi = g.data() + o * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += gi[j] * yi[j];
          for (std::size_t j = 0; j < n; ++j)
            dx[o * n + j] += yi[j] * (gi[j] - dot) / temperature;
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: affine parameters must be [" + std::to_string(d) +
                         "], got " + shape_string(gamma.shape()) + " and " +
                         shape_string(beta.shape()));
  }
  const std::size_t outer = x.numel() / d;
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(outer);
  std::vector<double> out(x.numel());
  auto xs = x.data();
  auto gs = gamma.data();
  auto bs = beta.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const double* xi = xs.data() + o * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xi[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[o] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xi[j] - mu) * is;
      xhat[o * d + j] = h;
      out[o * d + j] = h * gs[j] + bs[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta}, "layer_norm",
      [xhat = std::move(xhat), inv_std = std::move(inv_std), d, outer](
          std::span<const double> g, std::span<Tensor> in) {
        auto gs = in[1].data();
        if (in[0].requires_grad()) {
          auto dx = in[0].grad_buffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t o = 0; o < outer; ++o) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[o * d + j] * gs[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[o * d + j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[o * d + j] * gs[j];
              dx[o * d + j] += inv_std[o] * (dh - mean_dh - xhat[o * d + j] * mean_dh_h);
            }
          }
        }
        if (in[1].requires_grad()) {
          auto dg = in[1].grad_buffer();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < d; ++j) dg[j] += g[o * d + j] * xhat[o * d + j];
        }
        if (in[2].requires_grad()) {
          auto db = in[2].grad_buffer();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < d; ++j) db[j] += g[o * d + j];
        }
      });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return Tensor::make_result(x.shape(), std::move(out), {x}, "dropout",
                             [mask = std::move(mask)](std::span<const double> g,
                                                      std::span<Tensor> in) {
                               if (!in[0].requires_grad()) return;
                               auto dx = in[0].grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
                             });
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids) {
  require_matrix(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols();
  if (ids.empty()) throw UsageError("embedding: empty id list");
  std::vector<double> out(ids.size() * d);
  auto t = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw UsageError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(v) + " rows");
    }
    std::copy_n(t.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  return Tensor::make_result({ids.size(), d}, std::move(out), {table}, "embedding",
                             [idx = std::move(idx), d](std::span<const double> g,
                                                       std::span<Tensor> in) {
                               if (!in[0].requires_grad()) return;
                               auto dt = in[0].grad_buffer();
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 double* row = dt.data() + static_cast<std::size_t>(idx[i]) * d;
                                 for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
                               }
                             });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_rows");
  require_matrix(b, "concat_rows");
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: widths differ " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t na = a.numel();
  std::vector<double> out(a.values());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Tensor::make_result({a.rows() + b.rows(), a.cols()}, std::move(out), {a, b},
                             "concat_rows",
                             [na](std::span<const double> g, std::span<Tensor> in) {
                               if (in[0].requires_grad()) {
                                 auto d = in[0].grad_buffer();
                                 for (std::size_t i = 0; i < na; ++i) d[i] += g[i];
                               }
                               if (in[1].requires_grad()) {
                                 auto d = in[1].grad_buffer();
                                 for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[na + i];
                               }
                             });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != n) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    auto x = p.data();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(x.data() + i * w, w, out.data() + i * total + offset);
    offset += w;
  }
  return Tensor::make_result({n, total}, std::move(out), parts, "concat_cols",
                             [n, total, widths](std::span<const double> g, std::span<Tensor> in) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < in.size(); ++k) {
                                 const std::size_t w = widths[k];
                                 if (in[k].requires_grad()) {
                                   auto d = in[k].grad_buffer();
                                   for (std::size_t i = 0; i < n; ++i)
                                     for (std::size_t j = 0; j < w; ++j)
                                       d[i * w + j] += g[i * total + off + j];
                                 }
                                 off += w;
                               }
                             });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  if (count == 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         shape_string(x.shape()));
  }
  const std::size_t d = x.cols();
  auto xs = x.data();
  std::vector<double> out(xs.begin() + begin * d, xs.begin() + (begin + count) * d);
  return Tensor::make_result({count, d}, std::move(out), {x}, "slice_rows",
                             [begin, d](std::span<const double> g, std::span<Tensor> in) {
                               if (!in[0].requires_grad()) return;
                               auto dx = in[0].grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) dx[begin * d + i] += g[i];
                             });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t n = x.rows(), d = x.cols();
  if (count == 0 || begin + count > d) {
    throw DimensionError("slice_cols: columns outside " + shape_string(x.shape()));
  }
  std::vector<double> out(n * count);
  auto xs = x.data();
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(xs.data() + i * d + begin, count, out.data() + i * count);
  return Tensor::make_result({n, count}, std::move(out), {x}, "slice_cols",
                             [n, d, begin, count](std::span<const double> g,
                                                  std::span<Tensor> in) {
                               if (!in[0].requires_grad()) return;
                               auto dx = in[0].grad_buffer();
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t j = 0; j < count; ++j)
                                   dx[i * d + begin + j] += g[i * count + j];
                             });
}

Tensor row(const Tensor& x, std::size_t r) {
  require_matrix(x, "row");
  return slice_rows(x, r, 1).reshape({x.cols()});
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw UsageError("stack_rows: no inputs");
  const std::size_t d = rows[0].numel();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.numel() != d) {
      throw DimensionError("stack_rows: expected vectors of length " + std::to_string(d) +
                           ", got " + shape_string(r.shape()));
    }
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  return Tensor::make_result({rows.size(), d}, std::move(out), rows, "stack_rows",
                             [d](std::span<const double> g, std::span<Tensor> in) {
                               for (std::size_t k = 0; k < in.size(); ++k) {
                                 if (!in[k].requires_grad()) continue;
                                 auto dr = in[k].grad_buffer();
                                 for (std::size_t j = 0; j < d; ++j) dr[j] += g[k * d + j];
                               }
                             });
}

Tensor l2_normalize_rows(const Tensor& x, const char* what) {
  require_matrix(x, "l2_normalize_rows");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> norms(n);
  std::vector<double> out(x.values());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += out[i * d + j] * out[i * d + j];
    const double norm = std::sqrt(s);
    if (!(norm > 0.0)) {
      throw NumericError(std::string("zero-norm ") + what + " " + std::to_string(i));
    }
    norms[i] = norm;
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= norm;
  }
  std::vector<double> unit = out;
  return Tensor::make_result(
      x.shape(), std::move(out), {x}, "l2_normalize_rows",
      [unit = std::move(unit), norms = std::move(norms), n, d](std::span<const double> g,
                                                               std::span<Tensor> in) {
        if (!in[0].requires_grad()) return;
        auto dx = in[0].grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < d; ++j) dot += g[i * d + j] * unit[i * d + j];
          for (std::size_t j = 0; j < d; ++j)
            dx[i * d + j] += (g[i * d + j] - unit[i * d + j] * dot) / norms[i];
        }
      });
}

}  // namespace mmp::ops
