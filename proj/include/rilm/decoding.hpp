#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rilm/asr_model.hpp"
#include "rilm/domain_adapt.hpp"
#include "rilm/text_lm.hpp"

namespace rilm::decode {

enum class FusionMode { kNone, kShallow, kDensityRatio };

FusionMode parse_fusion(const std::string& s);
std::string fusion_name(FusionMode m);

struct DecodeConfig {
  std::size_t beam = 20;
  double ctc_weight = 0.3;  // weight of the CTC prefix score in joint decoding
  FusionMode fusion = FusionMode::kNone;
  double shallow_weight = 0.1;    // target LM weight, shallow fusion
  double dr_target_weight = 0.2;  // target LM weight, density ratio
  double dr_source_weight = 0.1;  // source LM weight, density ratio
  std::size_t max_len = 0;        // 0: number of encoder frames
  double length_bonus = 0.0;      // added per emitted token
  std::size_t nbest = 1;
};

// A finished (or partial) hypothesis. tokens never contain <sos>; finished
// hypotheses end with <eos>. score is recomputed from the components by
// combine_score().
struct Hypothesis {
  std::vector<int> tokens;
  double att = 0.0;        // summed decoder log-probs
  double lm_target = 0.0;  // summed target LM log-probs
  double lm_source = 0.0;  // summed source LM log-probs
  double ctc = 0.0;        // CTC prefix log-probability
  double score = 0.0;
};

//   fused = att + [shallow: w_sf*lm_t] + [density ratio: w_t*lm_t - w_s*lm_s]
//   score = (1 - ctc_weight)*fused + ctc_weight*ctc + length_bonus*|tokens|
// The branch with weight 0 is skipped entirely.
double combine_score(const Hypothesis& h, const DecodeConfig& config);

struct ScoredSequence {
  std::vector<int> tokens;
  double log_prob = 0.0;
};

// Per-frame argmax (lowest id on ties), collapse repeats, drop blanks.
std::vector<int> ctc_greedy_decode(std::span<const double> log_probs, std::size_t frames,
                                   std::size_t vocab);

// Prefix beam search tracking blank- and non-blank-ending mass per prefix.
// Returns up to `beam` prefixes sorted by log-probability.
std::vector<ScoredSequence> ctc_prefix_beam_search(std::span<const double> log_probs,
                                                   std::size_t frames, std::size_t vocab,
                                                   std::size_t beam);

// Incremental next-token scorer over a left-to-right token sequence.
class SequenceScorer {
 public:
  struct State {
    virtual ~State() = default;
    std::vector<double> next_log_probs;  // after the tokens consumed so far
  };
  virtual ~SequenceScorer() = default;
  virtual std::shared_ptr<const State> initial() const = 0;  // <sos> consumed
  virtual std::shared_ptr<const State> advance(const State& state, int token) const = 0;
};

class DecoderScorer : public SequenceScorer {
 public:
  DecoderScorer(const AsrModel& model, const Tensor& encoded);
  std::shared_ptr<const State> initial() const override;
  std::shared_ptr<const State> advance(const State& state, int token) const override;

 private:
  const AsrModel& model_;
  std::vector<nn::KvCache> memory_;
};

class LmScorer : public SequenceScorer {
 public:
  explicit LmScorer(const TransformerLM& lm) : lm_(lm) {}
  std::shared_ptr<const State> initial() const override;
  std::shared_ptr<const State> advance(const State& state, int token) const override;

 private:
  const TransformerLM& lm_;
};

// CTC prefix probabilities for joint decoding, over per-frame log-probs.
class CtcPrefixScorer {
 public:
  struct State {
    std::vector<double> r_nonblank, r_blank;  // per frame, log domain
    int last = -1;
    double prefix = 0.0;  // log p(prefix... | x)
  };
  CtcPrefixScorer(std::vector<double> log_probs, std::size_t frames, std::size_t vocab,
                  int eos = Vocab::kEos);
  State initial() const;
  // Prefix score of state's sequence extended by token; for <eos>, the
  // full-sequence log-probability.
  State extend(const State& state, int token) const;
  std::size_t frames() const { return frames_; }

 private:
  std::vector<double> lp_;
  std::size_t frames_, vocab_;
  int eos_;
};

struct Scorers {
  const SequenceScorer* attention = nullptr;  // required unless ctc_weight == 1
  const SequenceScorer* lm_target = nullptr;
  const SequenceScorer* lm_source = nullptr;
  const CtcPrefixScorer* ctc = nullptr;       // required when ctc_weight > 0
};

// Beam search over <eos>-terminated sequences of at most max_len tokens
// (plus <eos>). Blank and <sos> are never proposed. Ties are broken by
// lexicographic token ids.
std::vector<Hypothesis> beam_search(const Scorers& scorers, std::size_t vocab, std::size_t max_len,
                                    const DecodeConfig& config);

struct ExternalLms {
  const TransformerLM* target = nullptr;
  const TransformerLM* source = nullptr;
};

// Attention-only search over the decoder (plus fusion terms).
std::vector<Hypothesis> attention_beam_search(const AsrModel& model, const Tensor& encoded,
                                              const DecodeConfig& config, const ExternalLms& lms);

// Per-frame CTC log-posteriors [T'*V], optionally through R-softmax.
std::vector<double> ctc_log_posteriors(const AsrModel& model, const Tensor& encoded,
                                       const adapt::PriorRatio* ratio);

// Hybrid CTC/attention search. R-softmax (when ratio is given) transforms
// the CTC posteriors before any CTC scoring.
std::vector<Hypothesis> hybrid_joint_decode(const AsrModel& model, const Tensor& features,
                                            const DecodeConfig& config, const ExternalLms& lms,
                                            const adapt::PriorRatio* ratio);

// Strips <eos> and detokenizes.
std::string hypothesis_text(const Hypothesis& h, const Vocab& vocab);

}  // namespace rilm::decode
