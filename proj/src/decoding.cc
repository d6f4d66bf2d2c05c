#include "rilm/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "rilm/ctc.hpp"
#include "rilm/error.hpp"
#include "rilm/ops.hpp"

namespace rilm::decode {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> row_log_softmax(const Tensor& logits_row) {
  std::vector<double> out(logits_row.numel());
  ops::log_softmax_row(logits_row.data(), out);
  return out;
}

}  // namespace

FusionMode parse_fusion(const std::string& s) {
  if (s == "none") return FusionMode::kNone;
  if (s == "shallow") return FusionMode::kShallow;
  if (s == "density_ratio") return FusionMode::kDensityRatio;
  throw Error("config: unknown fusion mode '" + s + "' (none|shallow|density_ratio)");
}

std::string fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::kNone: return "none";
    case FusionMode::kShallow: return "shallow";
    case FusionMode::kDensityRatio: return "density_ratio";
  }
  return "none";
}

double combine_score(const Hypothesis& h, const DecodeConfig& c) {
  double fused = h.att;
  if (c.fusion == FusionMode::kShallow) {
    fused = h.att + c.shallow_weight * h.lm_target;
  } else if (c.fusion == FusionMode::kDensityRatio) {
    fused = h.att + (c.dr_target_weight * h.lm_target - c.dr_source_weight * h.lm_source);
  }
  double score;
  if (c.ctc_weight == 0.0) score = fused;
  else if (c.ctc_weight == 1.0) score = h.ctc;
  else score = (1.0 - c.ctc_weight) * fused + c.ctc_weight * h.ctc;
  if (c.length_bonus != 0.0) {
    std::size_t n = h.tokens.size();
    if (n > 0 && h.tokens.back() == Vocab::kEos) --n;
    score += c.length_bonus * static_cast<double>(n);
  }
  return score;
}

std::vector<int> ctc_greedy_decode(std::span<const double> log_probs, std::size_t frames,
                                   std::size_t vocab) {
  std::vector<int> out;
  int prev = -1;
  for (std::size_t t = 0; t < frames; ++t) {
    const auto row = log_probs.subspan(t * vocab, vocab);
    const int best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best != prev && best != Vocab::kBlank) out.push_back(best);
    prev = best;
  }
  return out;
}

std::vector<ScoredSequence> ctc_prefix_beam_search(std::span<const double> log_probs,
                                                   std::size_t frames, std::size_t vocab,
                                                   std::size_t beam) {
  if (beam < 1) throw Error("config: beam must be >= 1");
  struct Mass {
    double blank = kNegInf, nonblank = kNegInf;
    double total() const { return log_add(blank, nonblank); }
  };
  std::vector<std::pair<std::vector<int>, Mass>> beams{{{}, Mass{0.0, kNegInf}}};
  for (std::size_t t = 0; t < frames; ++t) {
    const auto lp = log_probs.subspan(t * vocab, vocab);
    std::map<std::vector<int>, Mass> next;
    for (const auto& [prefix, m] : beams) {
      const double total = m.total();
      auto& same = next[prefix];
      same.blank = log_add(same.blank, total + lp[Vocab::kBlank]);
      for (std::size_t c = 0; c < vocab; ++c) {
        if (static_cast<int>(c) == Vocab::kBlank) continue;
        std::vector<int> ext = prefix;
        ext.push_back(static_cast<int>(c));
        auto& grown = next[ext];
        if (!prefix.empty() && prefix.back() == static_cast<int>(c)) {
          auto& stay = next[prefix];
          stay.nonblank = log_add(stay.nonblank, m.nonblank + lp[c]);
          grown.nonblank = log_add(grown.nonblank, m.blank + lp[c]);
        } else {
          grown.nonblank = log_add(grown.nonblank, total + lp[c]);
        }
      }
    }
    beams.assign(next.begin(), next.end());
    std::stable_sort(beams.begin(), beams.end(), [](const auto& a, const auto& b) {
      return a.second.total() > b.second.total();
    });
    if (beams.size() > beam) beams.resize(beam);
  }
  std::vector<ScoredSequence> out;
  for (const auto& [prefix, m] : beams) out.push_back({prefix, m.total()});
  return out;
}

namespace {

struct DecoderState : SequenceScorer::State {
  RilmDecoder::State decoder;
};

struct LmState : SequenceScorer::State {
  TransformerLM::State lm;
};

}  // namespace

DecoderScorer::DecoderScorer(const AsrModel& model, const Tensor& encoded)
    : model_(model), memory_(model.decoder().project_memory(encoded)) {}

std::shared_ptr<const SequenceScorer::State> DecoderScorer::initial() const {
  NoGradGuard guard;
  auto s = std::make_shared<DecoderState>();
  s->next_log_probs = row_log_softmax(model_.decoder().step(s->decoder, memory_, Vocab::kSos).logits);
  return s;
}

std::shared_ptr<const SequenceScorer::State> DecoderScorer::advance(const State& state,
                                                                    int token) const {
  NoGradGuard guard;
  auto s = std::make_shared<DecoderState>(static_cast<const DecoderState&>(state));
  s->next_log_probs = row_log_softmax(model_.decoder().step(s->decoder, memory_, token).logits);
  return s;
}

std::shared_ptr<const SequenceScorer::State> LmScorer::initial() const {
  NoGradGuard guard;
  auto s = std::make_shared<LmState>();
  s->next_log_probs = row_log_softmax(lm_.step(s->lm, Vocab::kSos));
  return s;
}

std::shared_ptr<const SequenceScorer::State> LmScorer::advance(const State& state, int token) const {
  NoGradGuard guard;
  auto s = std::make_shared<LmState>(static_cast<const LmState&>(state));
  s->next_log_probs = row_log_softmax(lm_.step(s->lm, token));
  return s;
}

CtcPrefixScorer::CtcPrefixScorer(std::vector<double> log_probs, std::size_t frames,
                                 std::size_t vocab, int eos)
    : lp_(std::move(log_probs)), frames_(frames), vocab_(vocab), eos_(eos) {
  if (lp_.size() != frames * vocab) throw Error("shape: CTC posterior matrix size mismatch");
  if (frames == 0) throw Error("shape: CTC posteriors need at least one frame");
}

CtcPrefixScorer::State CtcPrefixScorer::initial() const {
  State s;
  s.r_nonblank.assign(frames_, kNegInf);
  s.r_blank.resize(frames_);
  double acc = 0.0;
  for (std::size_t t = 0; t < frames_; ++t) {
    acc += lp_[t * vocab_ + Vocab::kBlank];
    s.r_blank[t] = acc;
  }
  return s;
}

CtcPrefixScorer::State CtcPrefixScorer::extend(const State& g, int c) const {
  State h;
  h.last = c;
  const std::size_t T = frames_;
  if (c == eos_) {
    h.prefix = log_add(g.r_nonblank[T - 1], g.r_blank[T - 1]);
    return h;
  }
  h.r_nonblank.assign(T, kNegInf);
  h.r_blank.assign(T, kNegInf);
  if (g.last == -1) h.r_nonblank[0] = lp_[c];
  double psi = h.r_nonblank[0];
  for (std::size_t t = 1; t < T; ++t) {
    const double phi = c == g.last ? g.r_blank[t - 1] : log_add(g.r_blank[t - 1], g.r_nonblank[t - 1]);
    const double emit = lp_[t * vocab_ + c];
    h.r_nonblank[t] = log_add(h.r_nonblank[t - 1], phi) + emit;
    h.r_blank[t] = log_add(h.r_blank[t - 1], h.r_nonblank[t - 1]) + lp_[t * vocab_ + Vocab::kBlank];
    psi = log_add(psi, phi + emit);
  }
  h.prefix = psi;
  return h;
}

std::vector<Hypothesis> beam_search(const Scorers& sc, std::size_t vocab, std::size_t max_len,
                                    const DecodeConfig& config) {
  if (config.beam < 1) throw Error("config: beam must be >= 1");
  if (config.ctc_weight < 0.0 || config.ctc_weight > 1.0)
    throw Error("config: ctc_weight must lie in [0,1]");
  const bool use_att = config.ctc_weight < 1.0;
  const bool use_ctc = config.ctc_weight > 0.0;
  const bool use_lm_t = use_att && config.fusion != FusionMode::kNone;
  const bool use_lm_s = use_att && config.fusion == FusionMode::kDensityRatio;
  if (use_att && !sc.attention) throw Error("decode: attention scorer required");
  if (use_ctc && !sc.ctc) throw Error("decode: CTC scorer required for ctc_weight > 0");
  if (use_lm_t && !sc.lm_target)
    throw Error("decode: fusion mode " + fusion_name(config.fusion) + " needs a target LM");
  if (use_lm_s && !sc.lm_source)
    throw Error("decode: fusion mode density_ratio needs a source LM");

  using StatePtr = std::shared_ptr<const SequenceScorer::State>;
  struct Node {
    Hypothesis hyp;
    StatePtr att, lm_t, lm_s;
    std::shared_ptr<const CtcPrefixScorer::State> ctc;
  };
  struct Candidate {
    std::size_t parent;
    Hypothesis hyp;
    std::shared_ptr<const CtcPrefixScorer::State> ctc;
  };
  auto better = [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  };

  Node root;
  if (use_att) root.att = sc.attention->initial();
  if (use_lm_t) root.lm_t = sc.lm_target->initial();
  if (use_lm_s) root.lm_s = sc.lm_source->initial();
  if (use_ctc) root.ctc = std::make_shared<CtcPrefixScorer::State>(sc.ctc->initial());
  std::vector<Node> running{root};
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step <= max_len && !running.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t n = 0; n < running.size(); ++n) {
      const Node& node = running[n];
      for (std::size_t ci = 0; ci < vocab; ++ci) {
        const int c = static_cast<int>(ci);
        if (c == Vocab::kBlank || c == Vocab::kSos) continue;
        if (step == max_len && c != Vocab::kEos) continue;
        Candidate cand{n, node.hyp, nullptr};
        cand.hyp.tokens.push_back(c);
        if (use_att) cand.hyp.att += node.att->next_log_probs[ci];
        if (use_lm_t) cand.hyp.lm_target += node.lm_t->next_log_probs[ci];
        if (use_lm_s) cand.hyp.lm_source += node.lm_s->next_log_probs[ci];
        if (use_ctc) {
          cand.ctc = std::make_shared<CtcPrefixScorer::State>(sc.ctc->extend(*node.ctc, c));
          cand.hyp.ctc = cand.ctc->prefix;
        }
        cand.hyp.score = combine_score(cand.hyp, config);
        cands.push_back(std::move(cand));
      }
    }
    const std::size_t keep = std::min(config.beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [&](const Candidate& a, const Candidate& b) { return better(a.hyp, b.hyp); });
    std::vector<Node> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Candidate& cand = cands[i];
      if (cand.hyp.score == kNegInf) continue;
      const int c = cand.hyp.tokens.back();
      if (c == Vocab::kEos) {
        finished.push_back(std::move(cand.hyp));
        continue;
      }
      const Node& parent = running[cand.parent];
      Node node;
      node.hyp = std::move(cand.hyp);
      if (use_att) node.att = sc.attention->advance(*parent.att, c);
      if (use_lm_t) node.lm_t = sc.lm_target->advance(*parent.lm_t, c);
      if (use_lm_s) node.lm_s = sc.lm_source->advance(*parent.lm_s, c);
      node.ctc = cand.ctc;
      next.push_back(std::move(node));
    }
    running = std::move(next);
  }
  std::sort(finished.begin(), finished.end(), better);
  return finished;
}

std::vector<Hypothesis> attention_beam_search(const AsrModel& model, const Tensor& encoded,
                                              const DecodeConfig& config, const ExternalLms& lms) {
  NoGradGuard guard;
  DecodeConfig att_only = config;
  att_only.ctc_weight = 0.0;
  DecoderScorer dec(model, encoded);
  std::unique_ptr<LmScorer> lt, ls;
  if (lms.target) lt = std::make_unique<LmScorer>(*lms.target);
  if (lms.source) ls = std::make_unique<LmScorer>(*lms.source);
  const std::size_t max_len = config.max_len ? config.max_len : encoded.dim(0);
  auto hyps = beam_search(Scorers{&dec, lt.get(), ls.get(), nullptr},
                          static_cast<std::size_t>(model.vocab().size()), max_len, att_only);
  if (hyps.size() > config.nbest) hyps.resize(config.nbest);
  return hyps;
}

std::vector<double> ctc_log_posteriors(const AsrModel& model, const Tensor& encoded,
                                       const adapt::PriorRatio* ratio) {
  NoGradGuard guard;
  const Tensor logits = model.ctc_logits(encoded);
  return adapt::log_posteriors(logits.data(), logits.dim(0), logits.dim(1), ratio);
}

std::vector<Hypothesis> hybrid_joint_decode(const AsrModel& model, const Tensor& features,
                                            const DecodeConfig& config, const ExternalLms& lms,
                                            const adapt::PriorRatio* ratio) {
  NoGradGuard guard;
  const Tensor enc = model.encode(features);
  const std::size_t V = static_cast<std::size_t>(model.vocab().size());
  const std::size_t max_len = config.max_len ? config.max_len : enc.dim(0);
  std::unique_ptr<DecoderScorer> dec;
  if (config.ctc_weight < 1.0) dec = std::make_unique<DecoderScorer>(model, enc);
  std::unique_ptr<CtcPrefixScorer> ctc;
  if (config.ctc_weight > 0.0)
    ctc = std::make_unique<CtcPrefixScorer>(ctc_log_posteriors(model, enc, ratio), enc.dim(0), V);
  std::unique_ptr<LmScorer> lt, ls;
  if (lms.target) lt = std::make_unique<LmScorer>(*lms.target);
  if (lms.source) ls = std::make_unique<LmScorer>(*lms.source);
  auto hyps = beam_search(Scorers{dec.get(), lt.get(), ls.get(), ctc.get()}, V, max_len, config);
  if (hyps.size() > config.nbest) hyps.resize(config.nbest);
  return hyps;
}

std::string hypothesis_text(const Hypothesis& h, const Vocab& vocab) {
  return decode_tokens(h.tokens, vocab);
}

}  // namespace rilm::decode
