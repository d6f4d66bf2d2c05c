#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rilm/checkpoint.hpp"
#include "rilm/nn.hpp"
#include "rilm/text_lm.hpp"
#include "rilm/tokenizer.hpp"

namespace rilm {

struct EncoderConfig {
  std::size_t input_dim = 16;
  std::size_t stack = 1;  // frames concatenated per encoder step
  std::size_t n_layers = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
};

enum class BridgeInput { kProb, kLogit };

struct DecoderConfig {
  std::size_t n_cross_layers = 2;  // M: layers with cross-attention
  double beta = 0.3;               // highway weight on the internal LM logits
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  BridgeInput bridge_input = BridgeInput::kProb;
  LmConfig ilm;  // internal LM; its n_layers is N
};

struct AsrConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  double ctc_weight = 0.3;  // weight of the CTC term in the training loss

  nlohmann::ordered_json to_json() const;
  static AsrConfig from_json(const nlohmann::ordered_json& j);
};

// Name prefix of every internal-LM tensor inside an ASR checkpoint.
inline constexpr const char* kIlmPrefix = "decoder.ilm.";

// Frame stacking plus a plain Transformer encoder. With zero layers the
// output is the stacked-input projection alone.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, nn::Rng& rng);
  // features [T, input_dim] -> [ceil(T/stack), d_model]
  Tensor forward(const Tensor& features) const;
  std::size_t output_length(std::size_t frames) const;
  void collect(const std::string& prefix, nn::NamedTensors& out) const;

 private:
  EncoderConfig config_;
  nn::Linear input_;
  std::vector<nn::SelfAttentionLayer> layers_;
  nn::LayerNorm final_norm_;
};

struct DecoderOutput {
  Tensor logits;    // logits_A + beta * logits_L
  Tensor logits_a;  // cross-attention branch
  Tensor logits_l;  // internal LM branch
};

// Decoder whose first N layers form a standalone Transformer LM (no
// cross-attention). The LM's next-token distribution is projected by the
// bridge layer into the M cross-attention layers, and the internal LM logits
// reach the output through the highway term.
class RilmDecoder {
 public:
  RilmDecoder() = default;
  RilmDecoder(const DecoderConfig& config, const Vocab& vocab, nn::Rng& rng, std::uint64_t ilm_seed);

  // ids starts with <sos>; memory [T', d_model].
  DecoderOutput forward(std::span<const int> ids, const Tensor& memory) const;

  struct State {
    TransformerLM::State ilm;
    std::vector<nn::KvCache> layers;
    std::size_t position = 0;
  };
  std::vector<nn::KvCache> project_memory(const Tensor& memory) const;
  // One incremental step; rows are [1, V].
  DecoderOutput step(State& state, const std::vector<nn::KvCache>& memory, int token) const;

  const TransformerLM& ilm() const { return ilm_; }
  TransformerLM& ilm() { return ilm_; }
  const DecoderConfig& config() const { return config_; }
  void collect(const std::string& prefix, nn::NamedTensors& out) const;

 private:
  Tensor combine(const Tensor& x_bridge_in, const Tensor& logits_l) const;

  DecoderConfig config_;
  TransformerLM ilm_;
  nn::Linear bridge_;
  std::vector<nn::CrossAttentionLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Linear output_;
};

// Hybrid CTC/attention model. Copies share parameters; use clone() for an
// independent model.
class AsrModel {
 public:
  AsrModel() = default;
  AsrModel(const AsrConfig& config, const Vocab& vocab, std::uint64_t seed);

  const AsrConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  const Encoder& encoder() const { return encoder_; }
  const RilmDecoder& decoder() const { return decoder_; }

  Tensor encode(const Tensor& features) const { return encoder_.forward(features); }
  Tensor ctc_logits(const Tensor& encoded) const { return ctc_head_.forward(encoded); }

  // Loads LM weights into the internal-LM slot (configs and vocab must agree).
  void load_internal_lm(const TransformerLM& lm);
  // Marks internal-LM parameters as non-trainable (or trainable again).
  void freeze_internal_lm(bool frozen);

  nn::NamedTensors parameters() const;
  nn::NamedTensors internal_lm_parameters() const;

  Checkpoint to_checkpoint() const;
  static AsrModel from_checkpoint(const Checkpoint& ckpt);
  AsrModel clone() const { return from_checkpoint(to_checkpoint()); }

 private:
  AsrConfig config_;
  Vocab vocab_;
  Encoder encoder_;
  nn::Linear ctc_head_;
  RilmDecoder decoder_;
};

struct HybridLoss {
  Tensor total;  // ctc_weight * ctc + (1 - ctc_weight) * ce
  Tensor ctc;    // summed over the utterance
  Tensor ce;     // decoder cross-entropy summed over label + <eos>
};

// Throws a "ctc:" error naming utt_id when the label cannot be aligned.
HybridLoss hybrid_loss(const AsrModel& model, const Tensor& features, std::span<const int> label,
                       double ctc_weight, const std::string& utt_id = "");

struct AsrExample {
  std::string id;
  Tensor features;  // [T, input_dim]
  std::vector<int> label;
};

struct AsrTrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  bool freeze_internal_lm = true;
  std::size_t average_last = 10;  // epochs whose parameters are averaged
  nn::AdamOptions adam{.lr = 1e-3, .warmup_steps = 100, .grad_clip = 5.0};
  // Called after every epoch with the current (not averaged) model.
  std::function<void(std::size_t epoch, double loss, const AsrModel& model)> on_epoch;
};

struct AsrTrainResult {
  AsrModel model;                  // average of the last epochs
  std::vector<double> epoch_loss;  // mean hybrid loss per utterance
};

AsrTrainResult asr_train(const AsrModel& init, const std::vector<AsrExample>& corpus,
                         const AsrTrainOptions& options);

// Overwrites the internal-LM tensors of an ASR checkpoint with an LM
// checkpoint's tensors. Configs and vocabularies must agree exactly.
Checkpoint replace_internal_lm(const Checkpoint& asr, const Checkpoint& lm);

}  // namespace rilm
