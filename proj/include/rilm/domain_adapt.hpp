#pragma once

#include <span>
#include <string>
#include <vector>

#include "rilm/tokenizer.hpp"

// Prior correction for CTC posteriors. All per-token arrays here are indexed
// by non-blank position: entry i describes vocabulary id i + 1 (blank is id
// 0 and never counted).
namespace rilm::adapt {

struct TokenCounts {
  std::vector<long> counts;  // C_i per non-blank token
  long total = 0;            // C
  std::size_t zeros = 0;     // n_0

  std::size_t size() const { return counts.size(); }
  static TokenCounts from_counts(std::vector<long> counts);
};

enum class Domain { kSource, kTarget };

struct SmoothedPrior {
  std::vector<double> probs;  // strictly positive, sums to 1
  Domain domain = Domain::kSource;
};

struct PriorRatio {
  std::vector<double> weights;  // p_target / p_source per non-blank token
};

// Counts tokenized utterances. With count_eos, each utterance adds one <eos>.
TokenCounts count_tokens(const std::vector<std::vector<int>>& corpus, int vocab_size,
                         bool count_eos);

// Smoothing with indicator I = [n_0 != 0]:
//   seen:   C_i / C - I / ((V - n_0) C)
//   unseen: I / (n_0 C)
// Throws when C = 0, and when the formula leaves a seen token at zero
// probability (a single seen token with C_i = 1 and n_0 > 0).
SmoothedPrior smooth(const TokenCounts& counts, Domain domain = Domain::kSource);

PriorRatio prior_ratio(const SmoothedPrior& target, const SmoothedPrior& source);

PriorRatio unit_ratio(std::size_t non_blank);

// Blank weight k for one logit frame (length V, blank at 0): the
// exp(l)-weighted mean of the non-blank ratios. Keeps the blank posterior
// equal to the plain softmax one.
double blank_weight(std::span<const double> logits, const PriorRatio& ratio);

// Reweighted softmax: phi_j ∝ exp(l_j) u_j with u_blank = k, u_j = w_j.
std::vector<double> r_softmax(std::span<const double> logits, const PriorRatio& ratio);
// log phi, evaluated as log_softmax(l + log u).
std::vector<double> r_log_softmax(std::span<const double> logits, const PriorRatio& ratio);

// Frame-parallel log R-softmax over a [frames, V] logit matrix. A null ratio
// gives the plain log-softmax through the same code path.
std::vector<double> log_posteriors(std::span<const double> logits, std::size_t frames,
                                   std::size_t vocab, const PriorRatio* ratio);

namespace serial {
std::vector<double> log_posteriors(std::span<const double> logits, std::size_t frames,
                                   std::size_t vocab, const PriorRatio* ratio);
}

// Frequency table: one "token<TAB>count" line per non-blank token.
void save_counts(const TokenCounts& counts, const Vocab& vocab, const std::string& path);
TokenCounts load_counts(const Vocab& vocab, const std::string& path);
void save_prior(const SmoothedPrior& prior, const Vocab& vocab, const std::string& path);

}  // namespace rilm::adapt
