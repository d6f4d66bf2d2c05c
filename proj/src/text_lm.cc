#include "rilm/text_lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rilm/error.hpp"

namespace rilm {

nlohmann::ordered_json LmConfig::to_json() const {
  return {{"n_layers", n_layers}, {"d_model", d_model},       {"n_heads", n_heads},
          {"d_ff", d_ff},         {"vocab_size", vocab_size}, {"max_len", max_len}};
}

LmConfig LmConfig::from_json(const nlohmann::ordered_json& j) {
  LmConfig c;
  try {
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: malformed LM config: ") + e.what());
  }
  return c;
}

std::string first_config_difference(const LmConfig& a, const LmConfig& b) {
  if (a.n_layers != b.n_layers) return "n_layers";
  if (a.d_model != b.d_model) return "d_model";
  if (a.n_heads != b.n_heads) return "n_heads";
  if (a.d_ff != b.d_ff) return "d_ff";
  if (a.vocab_size != b.vocab_size) return "vocab_size";
  if (a.max_len != b.max_len) return "max_len";
  return "";
}

TransformerLM::TransformerLM(const LmConfig& config, const Vocab& vocab, std::uint64_t seed)
    : config_(config), vocab_(vocab) {
  if (config_.vocab_size == 0) config_.vocab_size = static_cast<std::size_t>(vocab.size());
  if (config_.vocab_size != static_cast<std::size_t>(vocab.size()))
    throw Error("config: LM vocab_size " + std::to_string(config_.vocab_size) +
                " does not match vocabulary of " + std::to_string(vocab.size()));
  if (config_.n_layers == 0) throw Error("config: LM needs at least one layer");
  nn::Rng rng(seed);
  embedding_ = nn::Embedding(config_.vocab_size, config_.d_model, rng);
  for (std::size_t i = 0; i < config_.n_layers; ++i)
    layers_.emplace_back(config_.d_model, config_.n_heads, config_.d_ff, rng);
  final_norm_ = nn::LayerNorm(config_.d_model);
  head_ = nn::Linear(config_.d_model, config_.vocab_size, rng);
}

Tensor TransformerLM::embed(std::span<const int> ids, std::size_t offset) const {
  const double s = std::sqrt(static_cast<double>(config_.d_model));
  return ops::add(ops::scale(embedding_.forward(ids), s),
                  nn::positional_encoding(ids.size(), config_.d_model, offset));
}

Tensor TransformerLM::forward(std::span<const int> ids) const {
  if (ids.empty()) throw Error("lm: empty input");
  if (ids.size() > config_.max_len)
    throw Error("lm: input of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                std::to_string(config_.max_len));
  Tensor x = embed(ids, 0);
  for (const auto& layer : layers_) x = layer.forward(x, true);
  return head_.forward(final_norm_.forward(x));
}

Tensor TransformerLM::step(State& state, int token) const {
  if (state.position >= config_.max_len)
    throw Error("lm: incremental input exceeds max_len " + std::to_string(config_.max_len));
  if (state.layers.empty()) state.layers.resize(layers_.size());
  const int ids[1] = {token};
  Tensor x = embed(ids, state.position);
  for (std::size_t i = 0; i < layers_.size(); ++i) x = layers_[i].step(x, state.layers[i]);
  ++state.position;
  return head_.forward(final_norm_.forward(x));
}

nn::NamedTensors TransformerLM::parameters(const std::string& prefix) const {
  nn::NamedTensors out;
  embedding_.collect(prefix + "embed", out);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(prefix + "layers." + std::to_string(i), out);
  final_norm_.collect(prefix + "final_norm", out);
  head_.collect(prefix + "head", out);
  return out;
}

nlohmann::ordered_json TransformerLM::config_json() const {
  auto j = config_.to_json();
  j["vocab"] = vocab_.tokens();
  return j;
}

Checkpoint TransformerLM::to_checkpoint() const {
  return snapshot("lm", config_json(), parameters());
}

TransformerLM TransformerLM::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_kind != "lm")
    throw Error("checkpoint: expected model_kind lm, found " + ckpt.model_kind);
  const auto cfg = LmConfig::from_json(ckpt.config);
  const auto vocab = Vocab::from_tokens(ckpt.config.at("vocab").get<std::vector<std::string>>());
  TransformerLM lm(cfg, vocab, 0);
  restore(ckpt, lm.parameters());
  return lm;
}

Tensor lm_sequence_nll(const TransformerLM& model, std::span<const int> tokens) {
  std::vector<int> input{Vocab::kSos};
  input.insert(input.end(), tokens.begin(), tokens.end());
  std::vector<int> target(tokens.begin(), tokens.end());
  target.push_back(Vocab::kEos);
  const Tensor logp = ops::log_softmax(model.forward(input));
  return ops::scale(ops::sum(ops::pick(logp, target)), -1.0);
}

namespace {

void fit(TransformerLM& model, const std::vector<std::vector<int>>& corpus,
         const LmTrainOptions& options, std::vector<double>& epoch_loss) {
  const auto params = model.parameters();
  auto state = nn::make_adam_state(params, options.adam);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    nn::Rng rng(options.seed * 1000003ULL + epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double total_nll = 0.0;
    std::size_t total_tokens = 0;
    for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
      const std::size_t e = std::min(order.size(), b + options.batch_size);
      std::vector<Tensor> losses;
      std::size_t tokens = 0;
      for (std::size_t i = b; i < e; ++i) {
        const auto& utt = corpus[order[i]];
        losses.push_back(lm_sequence_nll(model, utt));
        tokens += utt.size() + 1;
      }
      Tensor batch = losses[0];
      for (std::size_t i = 1; i < losses.size(); ++i) batch = ops::add(batch, losses[i]);
      total_nll += batch.item();
      total_tokens += tokens;
      batch = ops::scale(batch, 1.0 / static_cast<double>(tokens));
      nn::zero_grads(params);
      batch.backward();
      nn::adam_step(params, state);
    }
    epoch_loss.push_back(total_nll / static_cast<double>(std::max<std::size_t>(1, total_tokens)));
  }
  nn::zero_grads(params);
}

void check_corpus(const std::vector<std::vector<int>>& corpus, const LmConfig& config) {
  if (corpus.empty()) throw Error("lm: empty corpus");
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].size() + 1 > config.max_len)
      throw Error("lm: utterance " + std::to_string(i) + " exceeds max_len " +
                  std::to_string(config.max_len));
}

}  // namespace

LmTrainResult lm_train(const std::vector<std::vector<int>>& corpus, const LmConfig& config,
                       const Vocab& vocab, const LmTrainOptions& options) {
  LmTrainResult r{TransformerLM(config, vocab, options.seed), {}};
  check_corpus(corpus, r.model.config());
  fit(r.model, corpus, options, r.epoch_loss);
  return r;
}

LmTrainResult lm_finetune(const TransformerLM& model, const std::vector<std::vector<int>>& corpus,
                          const Vocab& corpus_vocab, const LmTrainOptions& options) {
  if (!(corpus_vocab == model.vocab())) {
    const auto& a = model.vocab().tokens();
    const auto& b = corpus_vocab.tokens();
    std::size_t i = 0;
    while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
    throw Error("vocab: fine-tuning vocabulary differs from the model's at id " +
                std::to_string(i));
  }
  check_corpus(corpus, model.config());
  LmTrainResult r{TransformerLM::from_checkpoint(model.to_checkpoint()), {}};
  fit(r.model, corpus, options, r.epoch_loss);
  return r;
}

double perplexity(const TransformerLM& model, const std::vector<std::vector<int>>& corpus) {
  if (corpus.empty()) throw Error("lm: empty corpus");
  NoGradGuard guard;
  double nll = 0.0;
  std::size_t n = 0;
  for (const auto& utt : corpus) {
    nll += lm_sequence_nll(model, utt).item();
    n += utt.size() + 1;
  }
  return std::exp(nll / static_cast<double>(n));
}

std::vector<double> lm_next_log_probs(const TransformerLM& model, std::span<const int> history) {
  NoGradGuard guard;
  std::vector<int> input{Vocab::kSos};
  input.insert(input.end(), history.begin(), history.end());
  const Tensor logits = model.forward(input);
  const std::size_t v = logits.dim(1);
  std::vector<double> out(v);
  ops::log_softmax_row(logits.data().subspan((input.size() - 1) * v, v), out);
  return out;
}

double lm_score_prefix(const TransformerLM& model, std::span<const int> history, int next) {
  const auto lp = lm_next_log_probs(model, history);
  if (next < 0 || static_cast<std::size_t>(next) >= lp.size())
    throw Error("vocab: id " + std::to_string(next) + " out of range");
  return lp[next];
}

}  // namespace rilm
