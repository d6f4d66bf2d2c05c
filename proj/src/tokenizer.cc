#include "rilm/tokenizer.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "rilm/error.hpp"

namespace rilm {

Vocab::Vocab(const std::vector<std::string>& text_tokens) {
  std::vector<std::string> all = {"<blank>", "<sos>", "<eos>", "<unk>"};
  all.insert(all.end(), text_tokens.begin(), text_tokens.end());
  *this = from_tokens(std::move(all));
}

Vocab Vocab::from_tokens(std::vector<std::string> all_tokens) {
  if (all_tokens.size() < kNumSpecial)
    throw Error("vocab: needs at least the " + std::to_string(kNumSpecial) + " special symbols");
  Vocab v;
  v.tokens_ = std::move(all_tokens);
  for (int i = 0; i < v.size(); ++i)
    if (!v.index_.emplace(v.tokens_[i], i).second)
      throw Error("vocab: duplicate token '" + v.tokens_[i] + "'");
  return v;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw Error("vocab: id " + std::to_string(id) + " out of range [0," +
                std::to_string(size()) + ")");
  return tokens_[id];
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("io: cannot write '" + path + "'");
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io: cannot open '" + path + "'");
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(in, line)) toks.push_back(line);
  return from_tokens(std::move(toks));
}

std::vector<std::string> split_utf8(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    len = std::min(len, s.size() - i);
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

BpeModel::BpeModel(std::vector<std::string> base_symbols, std::vector<Merge> merges)
    : base_(std::move(base_symbols)), merges_(std::move(merges)) {}

Vocab BpeModel::vocab() const {
  std::vector<std::string> toks = base_;
  std::set<std::string> seen(base_.begin(), base_.end());
  for (const auto& m : merges_)
    if (seen.insert(m.merged).second) toks.push_back(m.merged);
  return Vocab(toks);
}

namespace {

void apply_merge(std::vector<std::string>& syms, const BpeModel::Merge& m) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size();) {
    if (i + 1 < syms.size() && syms[i] == m.left && syms[i + 1] == m.right) {
      out.push_back(m.merged);
      i += 2;
    } else {
      out.push_back(std::move(syms[i]));
      ++i;
    }
  }
  syms = std::move(out);
}

std::vector<std::string> word_symbols(std::string_view word) {
  auto syms = split_utf8(word);
  syms.emplace_back(kEndOfWord);
  return syms;
}

}  // namespace

std::vector<std::string> BpeModel::segment_word(std::string_view word) const {
  auto syms = word_symbols(word);
  for (const auto& m : merges_) apply_merge(syms, m);
  return syms;
}

std::vector<int> BpeModel::encode(std::string_view text, const Vocab& vocab) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text))
    for (const auto& s : segment_word(w)) ids.push_back(vocab.id(s));
  return ids;
}

void BpeModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("io: cannot write '" + path + "'");
  out << "bpe v1 " << base_.size() << ' ' << merges_.size() << '\n';
  for (const auto& b : base_) out << b << '\n';
  for (const auto& m : merges_) out << m.left << '\t' << m.right << '\t' << m.merged << '\n';
}

BpeModel BpeModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("bpe: empty model file '" + path + "'");
  std::istringstream hs(line);
  std::string magic, version;
  std::size_t n_base = 0, n_merges = 0;
  if (!(hs >> magic >> version >> n_base >> n_merges) || magic != "bpe" || version != "v1")
    throw Error("bpe: bad header in '" + path + "'");
  std::vector<std::string> base;
  for (std::size_t i = 0; i < n_base; ++i) {
    if (!std::getline(in, line)) throw Error("bpe: truncated base symbols in '" + path + "'");
    base.push_back(line);
  }
  std::vector<Merge> merges;
  for (std::size_t i = 0; i < n_merges; ++i) {
    if (!std::getline(in, line)) throw Error("bpe: truncated merges in '" + path + "'");
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw Error("bpe: malformed merge line " + std::to_string(i + 1));
    merges.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
  }
  return BpeModel(std::move(base), std::move(merges));
}

BpeModel bpe_train(const std::vector<std::string>& corpus, int target_vocab_size) {
  std::map<std::string, long> word_freq;
  for (const auto& line : corpus)
    for (const auto& w : split_words(line)) ++word_freq[w];
  if (word_freq.empty()) throw Error("bpe: empty corpus");

  std::set<std::string> base_set;
  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [w, f] : word_freq) {
    auto syms = word_symbols(w);
    base_set.insert(syms.begin(), syms.end());
    words.emplace_back(std::move(syms), f);
  }
  std::vector<std::string> base(base_set.begin(), base_set.end());
  const int min_size = Vocab::kNumSpecial + static_cast<int>(base.size());
  if (target_vocab_size < min_size)
    throw Error("bpe: target vocab size " + std::to_string(target_vocab_size) +
                " is below base alphabet plus specials (" + std::to_string(min_size) + ")");

  std::set<std::string> known(base.begin(), base.end());
  std::vector<BpeModel::Merge> merges;
  while (Vocab::kNumSpecial + static_cast<int>(known.size()) < target_vocab_size) {
    std::map<std::pair<std::string, std::string>, long> pairs;
    for (const auto& [syms, f] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) pairs[{syms[i], syms[i + 1]}] += f;
    // std::map iterates pairs in lexicographic order, so the first maximum wins ties.
    const std::pair<std::string, std::string>* best = nullptr;
    long best_count = 0;
    for (const auto& [p, c] : pairs)
      if (c > best_count) {
        best = &p;
        best_count = c;
      }
    if (!best || best_count < 2) break;
    BpeModel::Merge m{best->first, best->second, best->first + best->second};
    // Two different merges can spell the same symbol ("ab"+"</w>" and
    // "a"+"b</w>"); the vocabulary lists it once.
    known.insert(m.merged);
    for (auto& [syms, f] : words) apply_merge(syms, m);
    merges.push_back(std::move(m));
  }
  return BpeModel(std::move(base), std::move(merges));
}

std::string decode_tokens(const std::vector<int>& ids, const Vocab& vocab) {
  std::string text;
  for (int id : ids) {
    const std::string& t = vocab.token(id);
    if (vocab.is_special(id)) continue;
    text += t;
  }
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, kEndOfWord.size(), kEndOfWord) == 0) {
      out.push_back(' ');
      i += kEndOfWord.size();
    } else {
      out.push_back(text[i++]);
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace rilm
