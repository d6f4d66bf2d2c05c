#include "rilm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rilm/error.hpp"
#include "rilm/kernels.hpp"

namespace rilm::ops {

namespace {

std::size_t cols_of(const Tensor& x) { return x.rank() == 0 ? 1 : x.shape().back(); }
std::size_t rows_of(const Tensor& x) {
  const std::size_t c = cols_of(x);
  return c == 0 ? 0 : x.numel() / c;
}

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2)
    throw Error(std::string("shape: ") + op + " expects a matrix, got " +
                shape_str(x.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error(std::string("shape: ") + op + " operands " + shape_str(a.shape()) +
                " and " + shape_str(b.shape()) + " differ");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [a, b](std::span<const double>, std::span<const double> g) {
                               a.accumulate_grad(g);
                               b.accumulate_grad(g);
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [a, b](std::span<const double>, std::span<const double> g) {
                               a.accumulate_grad(g);
                               if (b.requires_grad()) {
                                 std::vector<double> ng(g.begin(), g.end());
                                 for (auto& v : ng) v = -v;
                                 b.accumulate_grad(ng);
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](std::span<const double>, std::span<const double> g) {
        const std::size_t n = g.size();
        if (a.requires_grad()) {
          std::vector<double> ga(n);
          auto y = b.data();
          for (std::size_t i = 0; i < n; ++i) ga[i] = g[i] * y[i];
          a.accumulate_grad(ga);
        }
        if (b.requires_grad()) {
          std::vector<double> gb(n);
          auto x = a.data();
          for (std::size_t i = 0; i < n; ++i) gb[i] = g[i] * x[i];
          b.accumulate_grad(gb);
        }
      });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [a, factor](std::span<const double>, std::span<const double> g) {
                               std::vector<double> ga(g.size());
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * factor;
                               a.accumulate_grad(ga);
                             });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n)
    throw Error("shape: bias " + shape_str(bias.shape()) + " does not match " +
                shape_str(x.shape()));
  std::vector<double> out(x.numel());
  auto xv = x.data(), bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  return Tensor::make_result(x.shape(), std::move(out), {x, bias},
                             [x, bias, m, n](std::span<const double>,
                                             std::span<const double> g) {
                               x.accumulate_grad(g);
                               if (bias.requires_grad()) {
                                 std::vector<double> gb(n, 0.0);
                                 for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                                 bias.accumulate_grad(gb);
                               }
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw Error("shape: matmul " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_result(
      {m, n}, std::move(out), {a, b},
      [a, b, m, k, n](std::span<const double>, std::span<const double> g) {
        if (a.requires_grad()) {
          std::vector<double> ga(m * k, 0.0);
          kernels::gemm_nt(g.data(), b.data().data(), ga.data(), m, n, k);
          a.accumulate_grad(ga);
        }
        if (b.requires_grad()) {
          std::vector<double> gb(k * n, 0.0);
          kernels::gemm_tn(a.data().data(), g.data(), gb.data(), m, k, n);
          b.accumulate_grad(gb);
        }
      });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw Error("shape: matmul_nt " + shape_str(a.shape()) + " · " +
                shape_str(b.shape()) + "^T");
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_result(
      {m, n}, std::move(out), {a, b},
      [a, b, m, k, n](std::span<const double>, std::span<const double> g) {
        if (a.requires_grad()) {
          // dA = G·B
          std::vector<double> ga(m * k, 0.0);
          kernels::gemm_nn(g.data(), b.data().data(), ga.data(), m, n, k);
          a.accumulate_grad(ga);
        }
        if (b.requires_grad()) {
          // dB = G^T·A
          std::vector<double> gb(n * k, 0.0);
          kernels::gemm_tn(g.data(), a.data().data(), gb.data(), m, n, k);
          b.accumulate_grad(gb);
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return Tensor::make_result({n, m}, std::move(out), {a},
                             [a, m, n](std::span<const double>, std::span<const double> g) {
                               std::vector<double> ga(m * n);
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   ga[i * n + j] = g[j * m + i];
                               a.accumulate_grad(ga);
                             });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("shape: concat_cols of nothing");
  const std::size_t m = parts[0].dim(0);
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.dim(0) != m)
      throw Error("shape: concat_cols row mismatch " + shape_str(p.shape()));
    offsets.push_back(n);
    n += p.dim(1);
  }
  std::vector<double> out(m * n);
  for (std::size_t q = 0; q < parts.size(); ++q) {
    auto x = parts[q].data();
    const std::size_t w = parts[q].dim(1);
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(x.begin() + i * w, w, out.begin() + i * n + offsets[q]);
  }
  return Tensor::make_result(
      {m, n}, std::move(out), parts,
      [parts, offsets, m, n](std::span<const double>, std::span<const double> g) {
        for (std::size_t q = 0; q < parts.size(); ++q) {
          if (!parts[q].requires_grad()) continue;
          const std::size_t w = parts[q].dim(1);
          std::vector<double> gp(m * w);
          for (std::size_t i = 0; i < m; ++i)
            std::copy_n(g.begin() + i * n + offsets[q], w, gp.begin() + i * w);
          parts[q].accumulate_grad(gp);
        }
      });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("shape: concat_rows of nothing");
  const std::size_t n = parts[0].dim(1);
  std::size_t m = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.dim(1) != n)
      throw Error("shape: concat_rows column mismatch " + shape_str(p.shape()));
    m += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return Tensor::make_result({m, n}, std::move(out), parts,
                             [parts](std::span<const double>, std::span<const double> g) {
                               std::size_t off = 0;
                               for (const auto& p : parts) {
                                 p.accumulate_grad(g.subspan(off, p.numel()));
                                 off += p.numel();
                               }
                             });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin > end || end > n)
    throw Error("shape: slice_cols [" + std::to_string(begin) + "," +
                std::to_string(end) + ") of " + shape_str(x.shape()));
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.begin() + i * n + begin, w, out.begin() + i * w);
  return Tensor::make_result({m, w}, std::move(out), {x},
                             [x, m, n, w, begin](std::span<const double>,
                                                 std::span<const double> g) {
                               std::vector<double> gx(m * n, 0.0);
                               for (std::size_t i = 0; i < m; ++i)
                                 std::copy_n(g.begin() + i * w, w, gx.begin() + i * n + begin);
                               x.accumulate_grad(gx);
                             });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin > end || end > m)
    throw Error("shape: slice_rows [" + std::to_string(begin) + "," +
                std::to_string(end) + ") of " + shape_str(x.shape()));
  auto xv = x.data();
  std::vector<double> out(xv.begin() + begin * n, xv.begin() + end * n);
  return Tensor::make_result({end - begin, n}, std::move(out), {x},
                             [x, m, n, begin](std::span<const double>,
                                              std::span<const double> g) {
                               std::vector<double> gx(m * n, 0.0);
                               std::copy(g.begin(), g.end(), gx.begin() + begin * n);
                               x.accumulate_grad(gx);
                             });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "embedding");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
      throw Error("shape: embedding id " + std::to_string(ids[i]) +
                  " outside vocabulary of " + std::to_string(v));
    std::copy_n(tv.begin() + ids[i] * d, d, out.begin() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return Tensor::make_result({ids.size(), d}, std::move(out), {table},
                             [table, idv, v, d](std::span<const double>,
                                                std::span<const double> g) {
                               std::vector<double> gt(v * d, 0.0);
                               for (std::size_t i = 0; i < idv.size(); ++i)
                                 for (std::size_t j = 0; j < d; ++j)
                                   gt[idv[i] * d + j] += g[i * d + j];
                               table.accumulate_grad(gt);
                             });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [x](std::span<const double>, std::span<const double> g) {
                               auto xv = x.data();
                               std::vector<double> gx(g.size());
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 gx[i] = xv[i] > 0.0 ? g[i] : 0.0;
                               x.accumulate_grad(gx);
                             });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  if (gamma.numel() != n || beta.numel() != n)
    throw Error("shape: layer_norm parameters do not match " + shape_str(x.shape()));
  std::vector<double> out(x.numel()), xhat(x.numel()), inv_std(m);
  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[i * n + j] = h;
      out[i * n + j] = h * gv[j] + bv[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, m, n](std::span<const double>,
                                            std::span<const double> g) {
        auto gv = gamma.data();
        if (x.requires_grad()) {
          std::vector<double> gx(m * n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_gg = 0.0, mean_ggx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double gg = g[i * n + j] * gv[j];
              mean_gg += gg;
              mean_ggx += gg * xhat[i * n + j];
            }
            mean_gg /= static_cast<double>(n);
            mean_ggx /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const double gg = g[i * n + j] * gv[j];
              gx[i * n + j] = inv_std[i] * (gg - mean_gg - xhat[i * n + j] * mean_ggx);
            }
          }
          x.accumulate_grad(gx);
        }
        if (gamma.requires_grad() || beta.requires_grad()) {
          std::vector<double> ggam(n, 0.0), gbet(n, 0.0);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              ggam[j] += g[i * n + j] * xhat[i * n + j];
              gbet[j] += g[i * n + j];
            }
          gamma.accumulate_grad(ggam);
          beta.accumulate_grad(gbet);
        }
      });
}

void softmax_row(std::span<const double> in, std::span<double> out) {
  const double mx = *std::max_element(in.begin(), in.end());
  double s = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - mx);
    s += out[j];
  }
  for (std::size_t j = 0; j < in.size(); ++j) out[j] /= s;
}

double logsumexp_row(std::span<const double> in) {
  const double mx = *std::max_element(in.begin(), in.end());
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (double v : in) s += std::exp(v - mx);
  return mx + std::log(s);
}

void log_softmax_row(std::span<const double> in, std::span<double> out) {
  const double lse = logsumexp_row(in);
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = in[j] - lse;
}

Tensor softmax(const Tensor& x) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    softmax_row(xv.subspan(i * n, n), std::span<double>(out).subspan(i * n, n));
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [x, m, n](std::span<const double> y, std::span<const double> g) {
                               std::vector<double> gx(m * n);
                               for (std::size_t i = 0; i < m; ++i) {
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < n; ++j)
                                   dot += g[i * n + j] * y[i * n + j];
                                 for (std::size_t j = 0; j < n; ++j)
                                   gx[i * n + j] = y[i * n + j] * (g[i * n + j] - dot);
                               }
                               x.accumulate_grad(gx);
                             });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    log_softmax_row(xv.subspan(i * n, n), std::span<double>(out).subspan(i * n, n));
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [x, m, n](std::span<const double> y, std::span<const double> g) {
                               std::vector<double> gx(m * n);
                               for (std::size_t i = 0; i < m; ++i) {
                                 double gs = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j];
                                 for (std::size_t j = 0; j < n; ++j)
                                   gx[i * n + j] = g[i * n + j] - std::exp(y[i * n + j]) * gs;
                               }
                               x.accumulate_grad(gx);
                             });
}

Tensor logsumexp(const Tensor& x) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  std::vector<double> out(m);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) out[i] = logsumexp_row(xv.subspan(i * n, n));
  return Tensor::make_result({m}, std::move(out), {x},
                             [x, m, n](std::span<const double> y, std::span<const double> g) {
                               auto xv = x.data();
                               std::vector<double> gx(m * n);
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   gx[i * n + j] = g[i] * std::exp(xv[i * n + j] - y[i]);
                               x.accumulate_grad(gx);
                             });
}

Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != x.numel())
    throw Error("shape: mask of size " + std::to_string(mask.size()) +
                " does not cover " + shape_str(x.shape()));
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  std::vector<std::uint8_t> mk(mask.begin(), mask.end());
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [x, mk](std::span<const double>, std::span<const double> g) {
                               std::vector<double> gx(g.begin(), g.end());
                               for (std::size_t i = 0; i < gx.size(); ++i)
                                 if (mk[i]) gx[i] = 0.0;
                               x.accumulate_grad(gx);
                             });
}

std::vector<std::uint8_t> causal_mask(std::size_t n) {
  std::vector<std::uint8_t> m(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = 1;
  return m;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t n = x.numel();
  return Tensor::make_result({}, {s}, {x},
                             [x, n](std::span<const double>, std::span<const double> g) {
                               std::vector<double> gx(n, g[0]);
                               x.accumulate_grad(gx);
                             });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw Error("shape: mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor pick(const Tensor& x, std::span<const int> idx) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  if (idx.size() != m)
    throw Error("shape: pick needs one index per row of " + shape_str(x.shape()));
  std::vector<double> out(m);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n)
      throw Error("shape: pick index " + std::to_string(idx[i]) + " out of range");
    out[i] = xv[i * n + idx[i]];
  }
  std::vector<int> iv(idx.begin(), idx.end());
  return Tensor::make_result({m}, std::move(out), {x},
                             [x, iv, m, n](std::span<const double>, std::span<const double> g) {
                               std::vector<double> gx(m * n, 0.0);
                               for (std::size_t i = 0; i < m; ++i) gx[i * n + iv[i]] = g[i];
                               x.accumulate_grad(gx);
                             });
}

}  // namespace rilm::ops
