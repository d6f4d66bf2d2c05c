#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rilm/tensor.hpp"

// Differentiable operations. Matrices are rank-2 row-major; row-wise ops
// (softmax, log_softmax, logsumexp, layer_norm) act on the last axis and
// treat any leading axes as rows.
namespace rilm::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[m,n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]·[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]·[n,k]^T
Tensor transpose(const Tensor& a);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

// Rows of table[V,d] selected by ids -> [ids.size(), d].
Tensor embedding(const Tensor& table, std::span<const int> ids);

Tensor relu(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
// Row-wise log-sum-exp -> [rows].
Tensor logsumexp(const Tensor& x);

// Entries where mask != 0 are replaced by value and get no gradient.
Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask, double value);
// mask[i*n+j] = 1 for j > i.
std::vector<std::uint8_t> causal_mask(std::size_t n);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// out[i] = x[i, idx[i]] -> [rows].
Tensor pick(const Tensor& x, std::span<const int> idx);

// Plain (non-differentiable) row kernels shared by ops and inference code.
void softmax_row(std::span<const double> in, std::span<double> out);
void log_softmax_row(std::span<const double> in, std::span<double> out);
double logsumexp_row(std::span<const double> in);

}  // namespace rilm::ops
