#include "rilm/ctc.hpp"

#include <cmath>
#include <limits>

#include "rilm/error.hpp"
#include "rilm/ops.hpp"

namespace rilm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Extended label: blank, l1, blank, l2, ..., blank.
std::vector<int> extend(std::span<const int> label, int blank) {
  std::vector<int> ext(2 * label.size() + 1, blank);
  for (std::size_t i = 0; i < label.size(); ++i) ext[2 * i + 1] = label[i];
  return ext;
}

// alpha[t*S+s] includes the emission at frame t.
std::vector<double> forward_table(std::span<const double> lp, std::size_t T, std::size_t V,
                                  const std::vector<int>& ext, int blank) {
  const std::size_t S = ext.size();
  std::vector<double> alpha(T * S, kNegInf);
  alpha[0] = lp[ext[0]];
  if (S > 1) alpha[1] = lp[ext[1]];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2])
        a = log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == kNegInf ? kNegInf : a + lp[t * V + ext[s]];
    }
  }
  return alpha;
}

}  // namespace

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

std::size_t ctc_min_frames(std::span<const int> label) {
  std::size_t n = label.size();
  for (std::size_t i = 1; i < label.size(); ++i)
    if (label[i] == label[i - 1]) ++n;
  return n;
}

double ctc_log_likelihood(std::span<const double> log_probs, std::size_t frames,
                          std::size_t vocab, std::span<const int> label, int blank) {
  if (frames == 0) return label.empty() ? 0.0 : kNegInf;
  if (frames < ctc_min_frames(label)) return kNegInf;
  const auto ext = extend(label, blank);
  const auto alpha = forward_table(log_probs, frames, vocab, ext, blank);
  const std::size_t S = ext.size();
  double ll = alpha[(frames - 1) * S + S - 1];
  if (S > 1) ll = log_add(ll, alpha[(frames - 1) * S + S - 2]);
  return ll;
}

Tensor ctc_loss(const Tensor& logits, std::span<const int> label, int blank) {
  if (logits.rank() != 2) throw Error("shape: ctc_loss expects [T,V] logits");
  const std::size_t T = logits.dim(0), V = logits.dim(1);
  for (int id : label)
    if (id < 0 || static_cast<std::size_t>(id) >= V || id == blank)
      throw Error("ctc: label id " + std::to_string(id) + " is blank or out of range");
  if (T < ctc_min_frames(label))
    throw Error("ctc: infeasible alignment, " + std::to_string(T) + " frames for a label needing " +
                std::to_string(ctc_min_frames(label)));

  std::vector<double> lp(T * V);
  for (std::size_t t = 0; t < T; ++t)
    ops::log_softmax_row(logits.data().subspan(t * V, V), std::span<double>(lp).subspan(t * V, V));

  const auto ext = extend(label, blank);
  const std::size_t S = ext.size();
  const auto alpha = forward_table(lp, T, V, ext, blank);
  double ll = alpha[(T - 1) * S + S - 1];
  if (S > 1) ll = log_add(ll, alpha[(T - 1) * S + S - 2]);

  return Tensor::make_result(
      {}, {-ll}, {logits},
      [logits, lp, alpha, ext, ll, T, V, S, blank](std::span<const double>,
                                                   std::span<const double> g) {
        // beta[t*S+s]: log-prob of finishing from state s at frame t,
        // excluding frame t's emission.
        std::vector<double> beta(T * S, kNegInf);
        beta[(T - 1) * S + S - 1] = 0.0;
        if (S > 1) beta[(T - 1) * S + S - 2] = 0.0;
        for (std::size_t t = T - 1; t-- > 0;) {
          for (std::size_t s = 0; s < S; ++s) {
            double b = beta[(t + 1) * S + s] + lp[(t + 1) * V + ext[s]];
            if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1] + lp[(t + 1) * V + ext[s + 1]]);
            if (s + 2 < S && ext[s + 2] != blank && ext[s + 2] != ext[s])
              b = log_add(b, beta[(t + 1) * S + s + 2] + lp[(t + 1) * V + ext[s + 2]]);
            beta[t * S + s] = b;
          }
        }
        std::vector<double> grad(T * V);
        std::vector<double> occ(V);
        for (std::size_t t = 0; t < T; ++t) {
          std::fill(occ.begin(), occ.end(), kNegInf);
          for (std::size_t s = 0; s < S; ++s)
            occ[ext[s]] = log_add(occ[ext[s]], alpha[t * S + s] + beta[t * S + s]);
          for (std::size_t k = 0; k < V; ++k)
            grad[t * V + k] = g[0] * (std::exp(lp[t * V + k]) - std::exp(occ[k] - ll));
        }
        logits.accumulate_grad(grad);
      });
}

}  // namespace rilm
