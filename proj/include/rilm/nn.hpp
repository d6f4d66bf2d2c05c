#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rilm/ops.hpp"
#include "rilm/tensor.hpp"

namespace rilm::nn {

using Rng = std::mt19937_64;
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

Tensor uniform_param(Shape shape, double bound, Rng& rng);
Tensor normal_param(Shape shape, double stddev, Rng& rng);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct Embedding {
  Tensor table;  // [V, d]

  Embedding() = default;
  Embedding(std::size_t vocab, std::size_t dim, Rng& rng);
  Tensor forward(std::span<const int> ids) const { return ops::embedding(table, ids); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Tensor forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct FeedForward {
  Linear up, down;

  FeedForward() = default;
  FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng);
  Tensor forward(const Tensor& x) const { return down.forward(ops::relu(up.forward(x))); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// Projected keys and values of the positions seen so far, for incremental
// decoding.
struct KvCache {
  Tensor keys;    // [t, d_model], undefined before the first step
  Tensor values;  // [t, d_model]
  std::size_t length() const { return keys.defined() ? keys.dim(0) : 0; }
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t n_heads, Rng& rng);

  // query [Lq, d], memory [Lk, d]. With causal set, query and memory are the
  // same sequence and position t attends to positions <= t only.
  Tensor forward(const Tensor& query, const Tensor& memory, bool causal) const;

  // Scaled dot-product attention over already-projected q/k/v, all heads.
  // mask (optional, Lq*Lk) marks disallowed pairs.
  Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v,
                const std::vector<std::uint8_t>* mask) const;

  // Self-attention for one new position; appends its key/value to the cache.
  Tensor step(const Tensor& query_row, KvCache& cache) const;
  // Cross-attention for one position against a precomputed memory projection.
  Tensor step_memory(const Tensor& query_row, const KvCache& memory) const;
  KvCache project_memory(const Tensor& memory) const;

  void collect(const std::string& prefix, NamedTensors& out) const;

  std::size_t d_model() const { return d_model_; }
  std::size_t n_heads() const { return n_heads_; }

  Linear wq, wk, wv, wo;

 private:
  std::size_t d_model_ = 0;
  std::size_t n_heads_ = 1;
};

// Pre-norm Transformer layer without cross-attention (LM / encoder layer).
struct SelfAttentionLayer {
  LayerNorm norm_attn, norm_ff;
  MultiHeadAttention attn;
  FeedForward ff;

  SelfAttentionLayer() = default;
  SelfAttentionLayer(std::size_t d_model, std::size_t n_heads, std::size_t d_ff, Rng& rng);
  Tensor forward(const Tensor& x, bool causal) const;
  Tensor step(const Tensor& x_row, KvCache& cache) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// Pre-norm decoder layer: causal self-attention, cross-attention, feed-forward.
struct CrossAttentionLayer {
  LayerNorm norm_self, norm_cross, norm_ff;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;

  CrossAttentionLayer() = default;
  CrossAttentionLayer(std::size_t d_model, std::size_t n_heads, std::size_t d_ff, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& memory) const;
  Tensor step(const Tensor& x_row, KvCache& cache, const KvCache& memory) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// Sinusoidal position table rows [offset, offset+len) of width d.
Tensor positional_encoding(std::size_t len, std::size_t d, std::size_t offset = 0);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t warmup_steps = 0;  // linear warmup to lr
  double grad_clip = 0.0;        // global L2 norm clip, 0 = off
};

struct AdamState {
  AdamOptions options;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;  // parallel to the parameter list
};

AdamState make_adam_state(const NamedTensors& params, AdamOptions options);

// One Adam update with bias correction over every parameter that requires
// gradients; parameters with requires_grad() == false are left untouched.
// Throws if a trainable parameter has no gradient.
void adam_step(const NamedTensors& params, AdamState& state);

void zero_grads(const NamedTensors& params);

// Max over coordinates of |analytic - numeric| / max(1, |numeric|), using
// central differences with step h. f must be scalar-valued.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h = 1e-5);

}  // namespace rilm::nn
