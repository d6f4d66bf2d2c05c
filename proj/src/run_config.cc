#include "rilm/run_config.hpp"

#include <charconv>
#include <sstream>

#include "rilm/corpus.hpp"
#include "rilm/error.hpp"

namespace rilm {

namespace {

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"seed", "1"},
      {"data.letters", "abcdefghijklmnopqrstuvwxyz"},
      {"data.feature_dim", "16"},
      {"data.min_words", "2"},
      {"data.max_words", "4"},
      {"data.min_frames", "1"},
      {"data.max_frames", "3"},
      {"data.noise", "0.3"},
      {"data.prototype_scale", "0.45"},
      {"data.space_prob", "0.22"},
      {"data.concentration", "0.3"},
      {"data.source_domain", "101"},
      {"data.target_domain", "202"},
      {"data.train_utts", "2000"},
      {"data.dev_utts", "200"},
      {"data.target_text_utts", "2000"},
      {"bpe.vocab_size", "31"},
      {"lm.n_layers", "2"},
      {"lm.d_model", "64"},
      {"lm.n_heads", "4"},
      {"lm.d_ff", "128"},
      {"lm.max_len", "256"},
      {"lm.epochs", "10"},
      {"lm.finetune_epochs", "5"},
      {"lm.batch", "16"},
      {"lm.lr", "0.002"},
      {"lm.warmup", "50"},
      {"lm.grad_clip", "5"},
      {"encoder.n_layers", "2"},
      {"encoder.stack", "1"},
      {"encoder.d_model", "64"},
      {"encoder.n_heads", "4"},
      {"encoder.d_ff", "128"},
      {"decoder.n_cross_layers", "2"},
      {"decoder.beta", "0.3"},
      {"decoder.d_model", "64"},
      {"decoder.n_heads", "4"},
      {"decoder.d_ff", "128"},
      {"decoder.bridge_input", "prob"},
      {"asr.ctc_weight", "0.3"},
      {"asr.epochs", "6"},
      {"asr.batch", "16"},
      {"asr.lr", "0.003"},
      {"asr.warmup", "100"},
      {"asr.grad_clip", "5"},
      {"asr.average_last", "3"},
      {"asr.freeze_ilm", "true"},
      {"counts.count_eos", "false"},
      {"decode.method", "hybrid"},
      {"decode.beam", "20"},
      {"decode.ctc_weight", "0.3"},
      {"decode.fusion", "none"},
      {"decode.shallow_weight", "0.1"},
      {"decode.dr_target_weight", "0.2"},
      {"decode.dr_source_weight", "0.1"},
      {"decode.max_len", "0"},
      {"decode.length_bonus", "0"},
      {"decode.nbest", "1"},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [k, v] : defaults()) values_[k] = v;
}

void RunConfig::load_file(const std::string& path) {
  std::string text;
  for (const auto& line : corpus::read_lines(path)) text += line + "\n";
  parse(text, path);
}

void RunConfig::parse(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config: " + origin + ":" + std::to_string(n) + ": expected key=value");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " (" + origin + ":" + std::to_string(n) + ")");
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("config: unknown key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("config: unknown key '" + key + "'");
  return it->second;
}

long RunConfig::integer(const std::string& key) const {
  const auto& s = str(key);
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error("config: " + key + "='" + s + "' is not an integer");
  return v;
}

std::size_t RunConfig::size(const std::string& key) const {
  const long v = integer(key);
  if (v < 0) throw Error("config: " + key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

double RunConfig::real(const std::string& key) const {
  const auto& s = str(key);
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error("config: " + key + "='" + s + "' is not a number");
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  const auto& s = str(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error("config: " + key + "='" + s + "' is not a boolean");
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

LmConfig RunConfig::lm_config(std::size_t vocab_size) const {
  LmConfig c;
  c.n_layers = size("lm.n_layers");
  c.d_model = size("lm.d_model");
  c.n_heads = size("lm.n_heads");
  c.d_ff = size("lm.d_ff");
  c.max_len = size("lm.max_len");
  c.vocab_size = vocab_size;
  return c;
}

AsrConfig RunConfig::asr_config(std::size_t vocab_size) const {
  AsrConfig c;
  c.encoder.input_dim = size("data.feature_dim");
  c.encoder.stack = size("encoder.stack");
  c.encoder.n_layers = size("encoder.n_layers");
  c.encoder.d_model = size("encoder.d_model");
  c.encoder.n_heads = size("encoder.n_heads");
  c.encoder.d_ff = size("encoder.d_ff");
  c.decoder.n_cross_layers = size("decoder.n_cross_layers");
  c.decoder.beta = real("decoder.beta");
  c.decoder.d_model = size("decoder.d_model");
  c.decoder.n_heads = size("decoder.n_heads");
  c.decoder.d_ff = size("decoder.d_ff");
  const auto& bridge = str("decoder.bridge_input");
  if (bridge == "prob") c.decoder.bridge_input = BridgeInput::kProb;
  else if (bridge == "logit") c.decoder.bridge_input = BridgeInput::kLogit;
  else throw Error("config: decoder.bridge_input must be prob or logit");
  c.decoder.ilm = lm_config(vocab_size);
  c.ctc_weight = real("asr.ctc_weight");
  if (c.ctc_weight < 0.0 || c.ctc_weight > 1.0) throw Error("config: asr.ctc_weight must lie in [0,1]");
  return c;
}

LmTrainOptions RunConfig::lm_train_options(bool finetune) const {
  LmTrainOptions o;
  o.epochs = size(finetune ? "lm.finetune_epochs" : "lm.epochs");
  o.batch_size = size("lm.batch");
  o.seed = static_cast<std::uint64_t>(integer("seed"));
  o.adam.lr = real("lm.lr");
  o.adam.warmup_steps = size("lm.warmup");
  o.adam.grad_clip = real("lm.grad_clip");
  return o;
}

AsrTrainOptions RunConfig::asr_train_options() const {
  AsrTrainOptions o;
  o.epochs = size("asr.epochs");
  o.batch_size = size("asr.batch");
  o.seed = static_cast<std::uint64_t>(integer("seed"));
  o.freeze_internal_lm = flag("asr.freeze_ilm");
  o.average_last = size("asr.average_last");
  o.adam.lr = real("asr.lr");
  o.adam.warmup_steps = size("asr.warmup");
  o.adam.grad_clip = real("asr.grad_clip");
  return o;
}

decode::DecodeConfig RunConfig::decode_config() const {
  decode::DecodeConfig c;
  c.beam = size("decode.beam");
  if (c.beam < 1) throw Error("config: decode.beam must be >= 1");
  c.ctc_weight = real("decode.ctc_weight");
  if (c.ctc_weight < 0.0 || c.ctc_weight > 1.0)
    throw Error("config: decode.ctc_weight must lie in [0,1]");
  c.fusion = decode::parse_fusion(str("decode.fusion"));
  c.shallow_weight = real("decode.shallow_weight");
  c.dr_target_weight = real("decode.dr_target_weight");
  c.dr_source_weight = real("decode.dr_source_weight");
  c.max_len = size("decode.max_len");
  c.length_bonus = real("decode.length_bonus");
  c.nbest = size("decode.nbest");
  if (c.nbest < 1) throw Error("config: decode.nbest must be >= 1");
  return c;
}

corpus::SyntheticDomainSpec RunConfig::domain_spec(bool target) const {
  corpus::SyntheticDomainSpec s;
  s.letters = str("data.letters");
  s.feature_dim = size("data.feature_dim");
  s.min_words = size("data.min_words");
  s.max_words = size("data.max_words");
  s.min_frames = size("data.min_frames");
  s.max_frames = size("data.max_frames");
  s.noise = real("data.noise");
  s.prototype_scale = real("data.prototype_scale");
  s.prototype_seed = static_cast<std::uint64_t>(integer("seed"));
  corpus::DomainShape shape{real("data.space_prob"), real("data.concentration")};
  const auto domain = static_cast<std::uint64_t>(
      integer(target ? "data.target_domain" : "data.source_domain"));
  corpus::fill_domain_bigram(s, domain * 1000003ULL + s.prototype_seed, shape);
  s.validate();
  return s;
}

}  // namespace rilm
