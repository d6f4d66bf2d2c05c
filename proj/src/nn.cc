#include "rilm/nn.hpp"

#include <cmath>
#include <limits>

#include "rilm/error.hpp"

namespace rilm::nn {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(uniform_param({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      bias(Tensor::zeros({out}, true)) {}

Tensor Linear::forward(const Tensor& x) const {
  return ops::add_bias(ops::matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Embedding::Embedding(std::size_t vocab, std::size_t dim, Rng& rng)
    : table(normal_param({vocab, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng)) {}

void Embedding::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".weight", table);
}

LayerNorm::LayerNorm(std::size_t dim)
    : gamma(Tensor::full({dim}, 1.0, true)), beta(Tensor::zeros({dim}, true)) {}

void LayerNorm::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

FeedForward::FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng)
    : up(d_model, d_ff, rng), down(d_ff, d_model, rng) {}

void FeedForward::collect(const std::string& prefix, NamedTensors& out) const {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t n_heads, Rng& rng)
    : wq(d_model, d_model, rng),
      wk(d_model, d_model, rng),
      wv(d_model, d_model, rng),
      wo(d_model, d_model, rng),
      d_model_(d_model),
      n_heads_(n_heads) {
  if (n_heads == 0 || d_model % n_heads != 0)
    throw Error("config: d_model " + std::to_string(d_model) +
                " is not divisible by n_heads " + std::to_string(n_heads));
}

Tensor MultiHeadAttention::attend(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const std::vector<std::uint8_t>* mask) const {
  const std::size_t dk = d_model_ / n_heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  if (k.dim(0) != v.dim(0))
    throw Error("shape: attention keys/values length mismatch");
  if (mask && mask->size() != q.dim(0) * k.dim(0))
    throw Error("shape: attention mask does not match " + std::to_string(q.dim(0)) + "x" +
                std::to_string(k.dim(0)));
  std::vector<Tensor> heads;
  heads.reserve(n_heads_);
  for (std::size_t h = 0; h < n_heads_; ++h) {
    const std::size_t b = h * dk, e = b + dk;
    Tensor scores = ops::scale(
        ops::matmul_nt(ops::slice_cols(q, b, e), ops::slice_cols(k, b, e)), inv_sqrt);
    if (mask)
      scores = ops::masked_fill(scores, *mask, -std::numeric_limits<double>::infinity());
    heads.push_back(ops::matmul(ops::softmax(scores), ops::slice_cols(v, b, e)));
  }
  return n_heads_ == 1 ? heads[0] : ops::concat_cols(heads);
}

Tensor MultiHeadAttention::forward(const Tensor& query, const Tensor& memory,
                                   bool causal) const {
  if (query.dim(1) != d_model_ || memory.dim(1) != d_model_)
    throw Error("shape: attention input width does not match d_model " +
                std::to_string(d_model_));
  if (causal && query.dim(0) != memory.dim(0))
    throw Error("shape: causal mask needs equal query/key lengths, got " +
                std::to_string(query.dim(0)) + " and " + std::to_string(memory.dim(0)));
  const Tensor q = wq.forward(query);
  const Tensor k = wk.forward(memory);
  const Tensor v = wv.forward(memory);
  if (causal) {
    const auto mask = ops::causal_mask(query.dim(0));
    return wo.forward(attend(q, k, v, &mask));
  }
  return wo.forward(attend(q, k, v, nullptr));
}

Tensor MultiHeadAttention::step(const Tensor& query_row, KvCache& cache) const {
  const Tensor q = wq.forward(query_row);
  const Tensor k = wk.forward(query_row);
  const Tensor v = wv.forward(query_row);
  if (cache.keys.defined()) {
    cache.keys = ops::concat_rows({cache.keys, k});
    cache.values = ops::concat_rows({cache.values, v});
  } else {
    cache.keys = k;
    cache.values = v;
  }
  return wo.forward(attend(q, cache.keys, cache.values, nullptr));
}

KvCache MultiHeadAttention::project_memory(const Tensor& memory) const {
  return KvCache{wk.forward(memory), wv.forward(memory)};
}

Tensor MultiHeadAttention::step_memory(const Tensor& query_row, const KvCache& memory) const {
  return wo.forward(attend(wq.forward(query_row), memory.keys, memory.values, nullptr));
}

void MultiHeadAttention::collect(const std::string& prefix, NamedTensors& out) const {
  wq.collect(prefix + ".q", out);
  wk.collect(prefix + ".k", out);
  wv.collect(prefix + ".v", out);
  wo.collect(prefix + ".o", out);
}

SelfAttentionLayer::SelfAttentionLayer(std::size_t d_model, std::size_t n_heads,
                                       std::size_t d_ff, Rng& rng)
    : norm_attn(d_model), norm_ff(d_model), attn(d_model, n_heads, rng), ff(d_model, d_ff, rng) {}

Tensor SelfAttentionLayer::forward(const Tensor& x, bool causal) const {
  const Tensor h = norm_attn.forward(x);
  const Tensor y = ops::add(x, attn.forward(h, h, causal));
  return ops::add(y, ff.forward(norm_ff.forward(y)));
}

Tensor SelfAttentionLayer::step(const Tensor& x_row, KvCache& cache) const {
  const Tensor y = ops::add(x_row, attn.step(norm_attn.forward(x_row), cache));
  return ops::add(y, ff.forward(norm_ff.forward(y)));
}

void SelfAttentionLayer::collect(const std::string& prefix, NamedTensors& out) const {
  norm_attn.collect(prefix + ".norm_attn", out);
  attn.collect(prefix + ".attn", out);
  norm_ff.collect(prefix + ".norm_ff", out);
  ff.collect(prefix + ".ff", out);
}

CrossAttentionLayer::CrossAttentionLayer(std::size_t d_model, std::size_t n_heads,
                                         std::size_t d_ff, Rng& rng)
    : norm_self(d_model),
      norm_cross(d_model),
      norm_ff(d_model),
      self_attn(d_model, n_heads, rng),
      cross_attn(d_model, n_heads, rng),
      ff(d_model, d_ff, rng) {}

Tensor CrossAttentionLayer::forward(const Tensor& x, const Tensor& memory) const {
  const Tensor h = norm_self.forward(x);
  Tensor y = ops::add(x, self_attn.forward(h, h, true));
  y = ops::add(y, cross_attn.forward(norm_cross.forward(y), memory, false));
  return ops::add(y, ff.forward(norm_ff.forward(y)));
}

Tensor CrossAttentionLayer::step(const Tensor& x_row, KvCache& cache,
                                 const KvCache& memory) const {
  Tensor y = ops::add(x_row, self_attn.step(norm_self.forward(x_row), cache));
  y = ops::add(y, cross_attn.step_memory(norm_cross.forward(y), memory));
  return ops::add(y, ff.forward(norm_ff.forward(y)));
}

void CrossAttentionLayer::collect(const std::string& prefix, NamedTensors& out) const {
  norm_self.collect(prefix + ".norm_self", out);
  self_attn.collect(prefix + ".self_attn", out);
  norm_cross.collect(prefix + ".norm_cross", out);
  cross_attn.collect(prefix + ".cross_attn", out);
  norm_ff.collect(prefix + ".norm_ff", out);
  ff.collect(prefix + ".ff", out);
}

Tensor positional_encoding(std::size_t len, std::size_t d, std::size_t offset) {
  std::vector<double> pe(len * d);
  for (std::size_t p = 0; p < len; ++p) {
    const double pos = static_cast<double>(p + offset);
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      pe[p * d + i] = std::sin(pos * freq);
      if (i + 1 < d) pe[p * d + i + 1] = std::cos(pos * freq);
    }
  }
  return Tensor::from({len, d}, std::move(pe));
}

AdamState make_adam_state(const NamedTensors& params, AdamOptions options) {
  AdamState s;
  s.options = options;
  for (const auto& [name, p] : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(const NamedTensors& params, AdamState& state) {
  if (state.m.size() != params.size())
    throw Error("optimizer: state tracks " + std::to_string(state.m.size()) +
                " parameters, got " + std::to_string(params.size()));
  const auto& o = state.options;
  for (const auto& [name, p] : params)
    if (p.requires_grad() && !p.has_grad())
      throw Error("optimizer: parameter '" + name + "' has no gradient");

  double clip_scale = 1.0;
  if (o.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& [name, p] : params)
      if (p.requires_grad())
        for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > o.grad_clip) clip_scale = o.grad_clip / norm;
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  double lr = o.lr;
  if (o.warmup_steps > 0 && state.step < o.warmup_steps)
    lr *= t / static_cast<double>(o.warmup_steps);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].second;
    if (!p.requires_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * clip_scale;
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * gj;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

void zero_grads(const NamedTensors& params) {
  for (const auto& [name, p] : params) {
    Tensor t = p;
    t.zero_grad();
  }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
  x.set_requires_grad(true);
  x.zero_grad();
  f(x).backward();
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());
  x.zero_grad();

  NoGradGuard guard;
  auto xv = x.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double orig = xv[i];
    xv[i] = orig + h;
    const double fp = f(x).item();
    xv[i] = orig - h;
    const double fm = f(x).item();
    xv[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace rilm::nn
