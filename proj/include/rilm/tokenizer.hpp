#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rilm {

// Token inventory shared by every model. Ids are dense 0..size()-1 with the
// CTC blank fixed at 0 followed by the three non-verbal symbols. Formulas
// written with a 1-based blank index map to blank id 0 here.
class Vocab {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecial = 4;

  Vocab() = default;
  // Builds specials followed by the given text tokens.
  explicit Vocab(const std::vector<std::string>& text_tokens);
  static Vocab from_tokens(std::vector<std::string> all_tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  bool is_special(int id) const { return id >= 0 && id < kNumSpecial; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

inline constexpr std::string_view kEndOfWord = "</w>";

// Word-internal byte-pair encoding. Each whitespace-delimited word is split
// into characters plus an end-of-word marker and merges apply inside words.
class BpeModel {
 public:
  struct Merge {
    std::string left, right, merged;
  };

  BpeModel() = default;
  BpeModel(std::vector<std::string> base_symbols, std::vector<Merge> merges);

  const std::vector<std::string>& base_symbols() const { return base_; }
  const std::vector<Merge>& merges() const { return merges_; }

  // specials + base symbols + merged symbols in merge order.
  Vocab vocab() const;

  std::vector<std::string> segment_word(std::string_view word) const;
  std::vector<int> encode(std::string_view text, const Vocab& vocab) const;

  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);

 private:
  std::vector<std::string> base_;
  std::vector<Merge> merges_;
};

// Greedy BPE training: each round merges the most frequent adjacent pair,
// ties broken by the lexicographically smallest (left, right). Stops when the
// vocabulary (specials included) reaches target_vocab_size or no pair occurs
// at least twice.
BpeModel bpe_train(const std::vector<std::string>& corpus, int target_vocab_size);

// Specials are dropped; end-of-word markers become spaces.
std::string decode_tokens(const std::vector<int>& ids, const Vocab& vocab);

std::vector<std::string> split_utf8(std::string_view s);
std::vector<std::string> split_words(std::string_view s);

}  // namespace rilm
