#pragma once

#include <map>
#include <string>
#include <vector>

#include "rilm/asr_model.hpp"
#include "rilm/corpus.hpp"
#include "rilm/decoding.hpp"
#include "rilm/text_lm.hpp"

namespace rilm {

// Flat key=value settings with dotted keys. Every key has a default; unknown
// keys are rejected.
class RunConfig {
 public:
  RunConfig();

  // Lines are `key = value`; `#` starts a comment.
  void load_file(const std::string& path);
  void parse(const std::string& text, const std::string& origin = "<string>");
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::string& str(const std::string& key) const;
  long integer(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;

  // Effective configuration, one key=value per line in key order.
  std::string dump() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  LmConfig lm_config(std::size_t vocab_size) const;
  AsrConfig asr_config(std::size_t vocab_size) const;
  LmTrainOptions lm_train_options(bool finetune) const;
  AsrTrainOptions asr_train_options() const;
  decode::DecodeConfig decode_config() const;
  corpus::SyntheticDomainSpec domain_spec(bool target) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace rilm
