#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rilm/checkpoint.hpp"
#include "rilm/nn.hpp"
#include "rilm/tokenizer.hpp"

namespace rilm {

struct LmConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 0;
  std::size_t max_len = 256;

  nlohmann::ordered_json to_json() const;
  static LmConfig from_json(const nlohmann::ordered_json& j);
  bool operator==(const LmConfig&) const = default;
};

// Returns the name of the first field that differs, or "" when equal.
std::string first_config_difference(const LmConfig& a, const LmConfig& b);

// Causal Transformer LM: token embedding, sinusoidal positions, n_layers
// self-attention layers, final norm and an untied projection to the
// vocabulary. The same structure serves as the RILM decoder's internal LM.
class TransformerLM {
 public:
  TransformerLM() = default;
  TransformerLM(const LmConfig& config, const Vocab& vocab, std::uint64_t seed);

  const LmConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }

  // ids starts with <sos>; returns logits [ids.size(), V]. Position t only
  // sees ids[0..t].
  Tensor forward(std::span<const int> ids) const;

  struct State {
    std::vector<nn::KvCache> layers;
    std::size_t position = 0;
  };
  // Feeds one token and returns the logits row [1, V] for the next token.
  Tensor step(State& state, int token) const;

  nn::NamedTensors parameters(const std::string& prefix = "") const;

  nlohmann::ordered_json config_json() const;
  Checkpoint to_checkpoint() const;
  static TransformerLM from_checkpoint(const Checkpoint& ckpt);

 private:
  Tensor embed(std::span<const int> ids, std::size_t offset) const;

  LmConfig config_;
  Vocab vocab_;
  nn::Embedding embedding_;
  std::vector<nn::SelfAttentionLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Linear head_;
};

struct LmTrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  nn::AdamOptions adam{.lr = 2e-3, .warmup_steps = 50, .grad_clip = 5.0};
};

struct LmTrainResult {
  TransformerLM model;
  std::vector<double> epoch_loss;  // mean NLL per predicted token
};

// Teacher forcing on <sos>+tokens -> tokens+<eos>. Each corpus entry is a
// token id sequence without specials.
LmTrainResult lm_train(const std::vector<std::vector<int>>& corpus, const LmConfig& config,
                       const Vocab& vocab, const LmTrainOptions& options);
// Continues training from the given parameters; the vocabulary of the corpus
// must be the model's.
LmTrainResult lm_finetune(const TransformerLM& model, const std::vector<std::vector<int>>& corpus,
                          const Vocab& corpus_vocab, const LmTrainOptions& options);

// Summed NLL of tokens+<eos> for one utterance.
Tensor lm_sequence_nll(const TransformerLM& model, std::span<const int> tokens);

double perplexity(const TransformerLM& model, const std::vector<std::vector<int>>& corpus);

// log p(next | <sos> history) for every next token.
std::vector<double> lm_next_log_probs(const TransformerLM& model, std::span<const int> history);
double lm_score_prefix(const TransformerLM& model, std::span<const int> history, int next);

}  // namespace rilm
