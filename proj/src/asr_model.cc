#include "rilm/asr_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rilm/ctc.hpp"
#include "rilm/error.hpp"

namespace rilm {

nlohmann::ordered_json AsrConfig::to_json() const {
  nlohmann::ordered_json j;
  j["encoder"] = {{"input_dim", encoder.input_dim}, {"stack", encoder.stack},
                  {"n_layers", encoder.n_layers},   {"d_model", encoder.d_model},
                  {"n_heads", encoder.n_heads},     {"d_ff", encoder.d_ff}};
  j["decoder"] = {{"n_cross_layers", decoder.n_cross_layers},
                  {"beta", decoder.beta},
                  {"d_model", decoder.d_model},
                  {"n_heads", decoder.n_heads},
                  {"d_ff", decoder.d_ff},
                  {"bridge_input", decoder.bridge_input == BridgeInput::kProb ? "prob" : "logit"},
                  {"ilm", decoder.ilm.to_json()}};
  j["ctc_weight"] = ctc_weight;
  return j;
}

AsrConfig AsrConfig::from_json(const nlohmann::ordered_json& j) {
  AsrConfig c;
  try {
    const auto& e = j.at("encoder");
    c.encoder.input_dim = e.at("input_dim").get<std::size_t>();
    c.encoder.stack = e.at("stack").get<std::size_t>();
    c.encoder.n_layers = e.at("n_layers").get<std::size_t>();
    c.encoder.d_model = e.at("d_model").get<std::size_t>();
    c.encoder.n_heads = e.at("n_heads").get<std::size_t>();
    c.encoder.d_ff = e.at("d_ff").get<std::size_t>();
    const auto& d = j.at("decoder");
    c.decoder.n_cross_layers = d.at("n_cross_layers").get<std::size_t>();
    c.decoder.beta = d.at("beta").get<double>();
    c.decoder.d_model = d.at("d_model").get<std::size_t>();
    c.decoder.n_heads = d.at("n_heads").get<std::size_t>();
    c.decoder.d_ff = d.at("d_ff").get<std::size_t>();
    const auto bridge = d.at("bridge_input").get<std::string>();
    if (bridge != "prob" && bridge != "logit")
      throw Error("config: bridge_input must be prob or logit, got " + bridge);
    c.decoder.bridge_input = bridge == "prob" ? BridgeInput::kProb : BridgeInput::kLogit;
    c.decoder.ilm = LmConfig::from_json(d.at("ilm"));
    c.ctc_weight = j.at("ctc_weight").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: malformed ASR config: ") + e.what());
  }
  return c;
}

Encoder::Encoder(const EncoderConfig& config, nn::Rng& rng)
    : config_(config),
      input_(config.input_dim * config.stack, config.d_model, rng),
      final_norm_(config.d_model) {
  if (config.stack == 0) throw Error("config: encoder stack factor must be >= 1");
  for (std::size_t i = 0; i < config.n_layers; ++i)
    layers_.emplace_back(config.d_model, config.n_heads, config.d_ff, rng);
}

std::size_t Encoder::output_length(std::size_t frames) const {
  return (frames + config_.stack - 1) / config_.stack;
}

Tensor Encoder::forward(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(0) == 0)
    throw Error("shape: encoder expects a non-empty [T, dim] feature matrix");
  if (features.dim(1) != config_.input_dim)
    throw Error("shape: feature dim " + std::to_string(features.dim(1)) +
                " does not match encoder input_dim " + std::to_string(config_.input_dim));
  const std::size_t T = features.dim(0), F = config_.input_dim, s = config_.stack;
  const std::size_t out_len = output_length(T);
  Tensor stacked = features;
  if (s > 1) {
    std::vector<double> buf(out_len * s * F, 0.0);
    auto src = features.data();
    std::copy(src.begin(), src.end(), buf.begin());  // row-major, zero-padded tail
    stacked = Tensor::from({out_len, s * F}, std::move(buf));
  }
  Tensor x = input_.forward(stacked);
  if (layers_.empty()) return x;
  x = ops::add(x, nn::positional_encoding(out_len, config_.d_model));
  for (const auto& layer : layers_) x = layer.forward(x, false);
  return final_norm_.forward(x);
}

void Encoder::collect(const std::string& prefix, nn::NamedTensors& out) const {
  input_.collect(prefix + ".input", out);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(prefix + ".layers." + std::to_string(i), out);
  if (!layers_.empty()) final_norm_.collect(prefix + ".final_norm", out);
}

RilmDecoder::RilmDecoder(const DecoderConfig& config, const Vocab& vocab, nn::Rng& rng,
                         std::uint64_t ilm_seed)
    : config_(config), ilm_(config.ilm, vocab, ilm_seed) {
  config_.ilm = ilm_.config();
  if (config_.n_cross_layers == 0) throw Error("config: decoder needs M >= 1 cross-attention layers");
  if (config_.beta < 0.0) throw Error("config: decoder beta must be >= 0");
  const std::size_t V = static_cast<std::size_t>(vocab.size());
  bridge_ = nn::Linear(V, config_.d_model, rng);
  for (std::size_t i = 0; i < config_.n_cross_layers; ++i)
    layers_.emplace_back(config_.d_model, config_.n_heads, config_.d_ff, rng);
  final_norm_ = nn::LayerNorm(config_.d_model);
  output_ = nn::Linear(config_.d_model, V, rng);
}

Tensor RilmDecoder::combine(const Tensor& logits_a, const Tensor& logits_l) const {
  return ops::add(logits_a, ops::scale(logits_l, config_.beta));
}

DecoderOutput RilmDecoder::forward(std::span<const int> ids, const Tensor& memory) const {
  if (memory.rank() != 2 || memory.dim(1) != config_.d_model)
    throw Error("shape: encoder states " + shape_str(memory.shape()) +
                " do not match decoder d_model " + std::to_string(config_.d_model));
  DecoderOutput out;
  out.logits_l = ilm_.forward(ids);
  const Tensor dist = config_.bridge_input == BridgeInput::kProb ? ops::softmax(out.logits_l)
                                                                   : out.logits_l;
  Tensor x = ops::add(bridge_.forward(dist), nn::positional_encoding(ids.size(), config_.d_model));
  for (const auto& layer : layers_) x = layer.forward(x, memory);
  out.logits_a = output_.forward(final_norm_.forward(x));
  out.logits = combine(out.logits_a, out.logits_l);
  return out;
}

std::vector<nn::KvCache> RilmDecoder::project_memory(const Tensor& memory) const {
  if (memory.rank() != 2 || memory.dim(1) != config_.d_model)
    throw Error("shape: encoder states " + shape_str(memory.shape()) +
                " do not match decoder d_model " + std::to_string(config_.d_model));
  std::vector<nn::KvCache> mem;
  for (const auto& layer : layers_) mem.push_back(layer.cross_attn.project_memory(memory));
  return mem;
}

DecoderOutput RilmDecoder::step(State& state, const std::vector<nn::KvCache>& memory,
                                int token) const {
  if (state.layers.empty()) state.layers.resize(layers_.size());
  DecoderOutput out;
  out.logits_l = ilm_.step(state.ilm, token);
  const Tensor dist = config_.bridge_input == BridgeInput::kProb ? ops::softmax(out.logits_l)
                                                                   : out.logits_l;
  Tensor x = ops::add(bridge_.forward(dist),
                      nn::positional_encoding(1, config_.d_model, state.position));
  for (std::size_t i = 0; i < layers_.size(); ++i)
    x = layers_[i].step(x, state.layers[i], memory[i]);
  ++state.position;
  out.logits_a = output_.forward(final_norm_.forward(x));
  out.logits = combine(out.logits_a, out.logits_l);
  return out;
}

void RilmDecoder::collect(const std::string& prefix, nn::NamedTensors& out) const {
  auto ilm = ilm_.parameters(prefix + ".ilm.");
  out.insert(out.end(), ilm.begin(), ilm.end());
  bridge_.collect(prefix + ".bridge", out);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(prefix + ".layers." + std::to_string(i), out);
  final_norm_.collect(prefix + ".final_norm", out);
  output_.collect(prefix + ".output", out);
}

AsrModel::AsrModel(const AsrConfig& config, const Vocab& vocab, std::uint64_t seed)
    : config_(config), vocab_(vocab) {
  if (config.encoder.d_model != config.decoder.d_model)
    throw Error("config: encoder d_model " + std::to_string(config.encoder.d_model) +
                " must equal decoder d_model " + std::to_string(config.decoder.d_model));
  if (config.ctc_weight < 0.0 || config.ctc_weight > 1.0)
    throw Error("config: ctc_weight must lie in [0,1]");
  nn::Rng rng(seed);
  encoder_ = Encoder(config.encoder, rng);
  ctc_head_ = nn::Linear(config.encoder.d_model, static_cast<std::size_t>(vocab.size()), rng);
  decoder_ = RilmDecoder(config.decoder, vocab, rng, seed * 7919ULL + 17ULL);
  config_.decoder.ilm = decoder_.ilm().config();
}

nn::NamedTensors AsrModel::parameters() const {
  nn::NamedTensors out;
  encoder_.collect("encoder", out);
  ctc_head_.collect("ctc.head", out);
  decoder_.collect("decoder", out);
  return out;
}

nn::NamedTensors AsrModel::internal_lm_parameters() const {
  return decoder_.ilm().parameters(kIlmPrefix);
}

void AsrModel::freeze_internal_lm(bool frozen) {
  for (auto& [name, t] : internal_lm_parameters()) {
    Tensor p = t;
    p.set_requires_grad(!frozen);
    p.zero_grad();
  }
}

void AsrModel::load_internal_lm(const TransformerLM& lm) {
  Checkpoint mine = to_checkpoint();
  const Checkpoint swapped = replace_internal_lm(mine, lm.to_checkpoint());
  restore(swapped, parameters());
}

Checkpoint AsrModel::to_checkpoint() const {
  auto cfg = config_.to_json();
  cfg["vocab"] = vocab_.tokens();
  return snapshot("asr", std::move(cfg), parameters());
}

AsrModel AsrModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_kind != "asr")
    throw Error("checkpoint: expected model_kind asr, found " + ckpt.model_kind);
  const auto cfg = AsrConfig::from_json(ckpt.config);
  const auto vocab = Vocab::from_tokens(ckpt.config.at("vocab").get<std::vector<std::string>>());
  AsrModel m(cfg, vocab, 0);
  restore(ckpt, m.parameters());
  return m;
}

HybridLoss hybrid_loss(const AsrModel& model, const Tensor& features, std::span<const int> label,
                       double ctc_weight, const std::string& utt_id) {
  const Tensor enc = model.encode(features);
  if (enc.dim(0) < ctc_min_frames(label))
    throw Error("ctc: utterance '" + utt_id + "' is infeasible: " + std::to_string(enc.dim(0)) +
                " encoder frames for a label needing " + std::to_string(ctc_min_frames(label)));
  HybridLoss loss;
  loss.ctc = ctc_loss(model.ctc_logits(enc), label, Vocab::kBlank);
  std::vector<int> input{Vocab::kSos};
  input.insert(input.end(), label.begin(), label.end());
  std::vector<int> target(label.begin(), label.end());
  target.push_back(Vocab::kEos);
  const auto dec = model.decoder().forward(input, enc);
  loss.ce = ops::scale(ops::sum(ops::pick(ops::log_softmax(dec.logits), target)), -1.0);
  loss.total = ops::add(ops::scale(loss.ctc, ctc_weight), ops::scale(loss.ce, 1.0 - ctc_weight));
  return loss;
}

AsrTrainResult asr_train(const AsrModel& init, const std::vector<AsrExample>& corpus,
                         const AsrTrainOptions& options) {
  if (corpus.empty()) throw Error("asr: empty training corpus");
  AsrTrainResult result{init.clone(), {}};
  AsrModel& model = result.model;
  model.freeze_internal_lm(options.freeze_internal_lm);
  const auto params = model.parameters();
  auto state = nn::make_adam_state(params, options.adam);
  const double lambda = model.config().ctc_weight;

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Checkpoint> tail;
  const std::size_t first_avg =
      options.epochs > options.average_last ? options.epochs - options.average_last : 0;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    nn::Rng rng(options.seed * 1000003ULL + epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
      const std::size_t e = std::min(order.size(), b + options.batch_size);
      Tensor batch;
      for (std::size_t i = b; i < e; ++i) {
        const auto& ex = corpus[order[i]];
        Tensor l = hybrid_loss(model, ex.features, ex.label, lambda, ex.id).total;
        batch = batch.defined() ? ops::add(batch, l) : l;
      }
      total += batch.item();
      batch = ops::scale(batch, 1.0 / static_cast<double>(e - b));
      nn::zero_grads(params);
      batch.backward();
      nn::adam_step(params, state);
    }
    result.epoch_loss.push_back(total / static_cast<double>(corpus.size()));
    if (options.on_epoch) options.on_epoch(epoch + 1, result.epoch_loss.back(), model);
    if (epoch >= first_avg) tail.push_back(model.to_checkpoint());
  }
  nn::zero_grads(params);
  if (!tail.empty()) restore(average_checkpoints(tail), params);
  model.freeze_internal_lm(false);
  return result;
}

Checkpoint replace_internal_lm(const Checkpoint& asr, const Checkpoint& lm) {
  if (asr.model_kind != "asr") throw Error("swap: first checkpoint is not an ASR model");
  if (lm.model_kind != "lm") throw Error("swap: second checkpoint is not an LM");
  const auto asr_cfg = AsrConfig::from_json(asr.config);
  const auto lm_cfg = LmConfig::from_json(lm.config);
  const std::string diff = first_config_difference(asr_cfg.decoder.ilm, lm_cfg);
  if (!diff.empty())
    throw Error("swap: LM config field '" + diff + "' differs from the decoder's internal LM");
  const auto va = asr.config.at("vocab").get<std::vector<std::string>>();
  const auto vb = lm.config.at("vocab").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < std::max(va.size(), vb.size()); ++i) {
    const std::string a = i < va.size() ? va[i] : "<none>";
    const std::string b = i < vb.size() ? vb[i] : "<none>";
    if (a != b)
      throw Error("swap: vocabulary differs at id " + std::to_string(i) + ": '" + a + "' vs '" +
                  b + "'");
  }
  Checkpoint out = asr;
  std::size_t ilm_count = 0;
  for (const auto& t : out.tensors)
    if (t.name.rfind(kIlmPrefix, 0) == 0) ++ilm_count;
  if (ilm_count != lm.tensors.size())
    throw Error("swap: decoder has " + std::to_string(ilm_count) + " internal-LM tensors, LM has " +
                std::to_string(lm.tensors.size()));
  for (const auto& src : lm.tensors) {
    NamedArray* dst = out.find(kIlmPrefix + src.name);
    if (!dst) throw Error("swap: decoder has no tensor '" + std::string(kIlmPrefix) + src.name + "'");
    if (dst->shape != src.shape)
      throw Error("swap: tensor '" + src.name + "' shape " + shape_str(src.shape) +
                  " does not match decoder " + shape_str(dst->shape));
    dst->values = src.values;
  }
  return out;
}

}  // namespace rilm
