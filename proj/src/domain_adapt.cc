#include "rilm/domain_adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rilm/error.hpp"
#include "rilm/ops.hpp"

namespace rilm::adapt {

TokenCounts TokenCounts::from_counts(std::vector<long> counts) {
  TokenCounts c;
  for (long v : counts) {
    if (v < 0) throw Error("adapt: negative token count");
    c.total += v;
    if (v == 0) ++c.zeros;
  }
  c.counts = std::move(counts);
  return c;
}

TokenCounts count_tokens(const std::vector<std::vector<int>>& corpus, int vocab_size,
                         bool count_eos) {
  if (corpus.empty()) throw Error("adapt: empty corpus");
  std::vector<long> counts(static_cast<std::size_t>(vocab_size - 1), 0);
  for (const auto& utt : corpus) {
    for (int id : utt) {
      if (id <= 0 || id >= vocab_size)
        throw Error("adapt: token id " + std::to_string(id) + " is blank or outside the vocabulary");
      ++counts[static_cast<std::size_t>(id - 1)];
    }
    if (count_eos) ++counts[Vocab::kEos - 1];
  }
  return TokenCounts::from_counts(std::move(counts));
}

SmoothedPrior smooth(const TokenCounts& counts, Domain domain) {
  if (counts.total <= 0) throw Error("adapt: cannot smooth counts with total C = 0");
  const double C = static_cast<double>(counts.total);
  const double V = static_cast<double>(counts.size());
  const double n0 = static_cast<double>(counts.zeros);
  const double indicator = counts.zeros != 0 ? 1.0 : 0.0;
  SmoothedPrior p;
  p.domain = domain;
  p.probs.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double ci = static_cast<double>(counts.counts[i]);
    p.probs[i] = ci > 0 ? ci / C - indicator / ((V - n0) * C) : indicator / (n0 * C);
    if (!(p.probs[i] > 0.0))
      throw Error("adapt: smoothing leaves token index " + std::to_string(i + 1) +
                  " with zero probability (single seen token with count 1)");
  }
  return p;
}

PriorRatio prior_ratio(const SmoothedPrior& target, const SmoothedPrior& source) {
  if (target.probs.size() != source.probs.size())
    throw Error("adapt: target prior covers " + std::to_string(target.probs.size()) +
                " tokens, source prior " + std::to_string(source.probs.size()));
  PriorRatio r;
  r.weights.resize(target.probs.size());
  for (std::size_t i = 0; i < r.weights.size(); ++i)
    r.weights[i] = target.probs[i] / source.probs[i];
  return r;
}

PriorRatio unit_ratio(std::size_t non_blank) { return PriorRatio{std::vector<double>(non_blank, 1.0)}; }

namespace {

void check_frame(std::size_t vocab, const PriorRatio& ratio) {
  if (vocab < 2 || ratio.weights.size() != vocab - 1)
    throw Error("adapt: ratio covers " + std::to_string(ratio.weights.size()) +
                " tokens but the frame has " + std::to_string(vocab) + " entries");
}

// log u for one frame: log k at blank, log w_j elsewhere. log k is the
// difference of two log-sum-exps over the non-blank entries.
void log_weights(std::span<const double> l, const std::vector<double>& log_w,
                 std::span<double> out) {
  const std::size_t V = l.size();
  std::vector<double> shifted(V - 1);
  for (std::size_t j = 1; j < V; ++j) shifted[j - 1] = l[j] + log_w[j - 1];
  out[0] = ops::logsumexp_row(shifted) - ops::logsumexp_row(l.subspan(1));
  for (std::size_t j = 1; j < V; ++j) out[j] = log_w[j - 1];
}

std::vector<double> logs_of(const PriorRatio& r) {
  std::vector<double> lw(r.weights.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = std::log(r.weights[i]);
  return lw;
}

void frame_log_posterior(std::span<const double> l, const std::vector<double>* log_w,
                         std::span<double> out) {
  if (!log_w) {
    ops::log_softmax_row(l, out);
    return;
  }
  std::vector<double> u(l.size()), z(l.size());
  log_weights(l, *log_w, u);
  for (std::size_t j = 0; j < l.size(); ++j) z[j] = l[j] + u[j];
  ops::log_softmax_row(z, out);
}

}  // namespace

double blank_weight(std::span<const double> logits, const PriorRatio& ratio) {
  check_frame(logits.size(), ratio);
  std::vector<double> u(logits.size());
  log_weights(logits, logs_of(ratio), u);
  return std::exp(u[0]);
}

std::vector<double> r_log_softmax(std::span<const double> logits, const PriorRatio& ratio) {
  check_frame(logits.size(), ratio);
  const auto lw = logs_of(ratio);
  std::vector<double> out(logits.size());
  frame_log_posterior(logits, &lw, out);
  return out;
}

std::vector<double> r_softmax(std::span<const double> logits, const PriorRatio& ratio) {
  auto out = r_log_softmax(logits, ratio);
  for (auto& v : out) v = std::exp(v);
  return out;
}

std::vector<double> log_posteriors(std::span<const double> logits, std::size_t frames,
                                   std::size_t vocab, const PriorRatio* ratio) {
  if (logits.size() != frames * vocab) throw Error("shape: logit matrix size mismatch");
  if (ratio) check_frame(vocab, *ratio);
  const std::vector<double> lw = ratio ? logs_of(*ratio) : std::vector<double>{};
  const std::vector<double>* lwp = ratio ? &lw : nullptr;
  std::vector<double> out(frames * vocab);
  const long n = static_cast<long>(frames);
#pragma omp parallel for schedule(static) if (frames * vocab > 4096)
  for (long t = 0; t < n; ++t)
    frame_log_posterior(logits.subspan(t * vocab, vocab), lwp,
                        std::span<double>(out).subspan(t * vocab, vocab));
  return out;
}

namespace serial {
std::vector<double> log_posteriors(std::span<const double> logits, std::size_t frames,
                                   std::size_t vocab, const PriorRatio* ratio) {
  if (logits.size() != frames * vocab) throw Error("shape: logit matrix size mismatch");
  if (ratio) check_frame(vocab, *ratio);
  const std::vector<double> lw = ratio ? logs_of(*ratio) : std::vector<double>{};
  std::vector<double> out(frames * vocab);
  for (std::size_t t = 0; t < frames; ++t)
    frame_log_posterior(logits.subspan(t * vocab, vocab), ratio ? &lw : nullptr,
                        std::span<double>(out).subspan(t * vocab, vocab));
  return out;
}
}  // namespace serial

void save_counts(const TokenCounts& counts, const Vocab& vocab, const std::string& path) {
  if (counts.size() + 1 != static_cast<std::size_t>(vocab.size()))
    throw Error("adapt: counts do not cover the vocabulary");
  std::ofstream out(path);
  if (!out) throw Error("io: cannot write '" + path + "'");
  for (std::size_t i = 0; i < counts.size(); ++i)
    out << vocab.token(static_cast<int>(i + 1)) << '\t' << counts.counts[i] << '\n';
}

TokenCounts load_counts(const Vocab& vocab, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io: cannot open '" + path + "'");
  std::vector<long> counts(static_cast<std::size_t>(vocab.size() - 1), 0);
  std::vector<bool> seen(counts.size(), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos)
      throw Error("adapt: " + path + ":" + std::to_string(lineno) + ": expected token<TAB>count");
    const std::string tok = line.substr(0, tab);
    if (!vocab.contains(tok) || vocab.id(tok) == Vocab::kBlank)
      throw Error("vocab: frequency table token '" + tok + "' is not a non-blank vocabulary entry");
    long c = 0;
    try {
      c = std::stol(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw Error("adapt: " + path + ":" + std::to_string(lineno) + ": bad count");
    }
    const auto idx = static_cast<std::size_t>(vocab.id(tok) - 1);
    if (seen[idx]) throw Error("adapt: duplicate frequency entry for '" + tok + "'");
    seen[idx] = true;
    counts[idx] = c;
  }
  return TokenCounts::from_counts(std::move(counts));
}

void save_prior(const SmoothedPrior& prior, const Vocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("io: cannot write '" + path + "'");
  out << std::setprecision(17);
  for (std::size_t i = 0; i < prior.probs.size(); ++i)
    out << vocab.token(static_cast<int>(i + 1)) << '\t' << prior.probs[i] << '\n';
}

}  // namespace rilm::adapt
