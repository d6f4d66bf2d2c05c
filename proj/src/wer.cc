#include "rilm/wer.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "rilm/corpus.hpp"
#include "rilm/error.hpp"
#include "rilm/tokenizer.hpp"

namespace rilm::eval {

double WerReport::wer() const {
  if (ref_tokens == 0) throw Error("score: empty reference");
  return 100.0 * static_cast<double>(errors()) / static_cast<double>(ref_tokens);
}

WerReport& WerReport::operator+=(const WerReport& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_tokens += o.ref_tokens;
  utterances += o.utterances;
  return *this;
}

std::string WerReport::to_string() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "WER %.2f%% [S=%ld D=%ld I=%ld N=%ld utts=%ld]", wer(),
                substitutions, deletions, insertions, ref_tokens, utterances);
  return buf;
}

WerReport wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw Error("score: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<long> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> long& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), at(i, j - 1) + 1,
                           at(i - 1, j) + 1});
  WerReport r;
  r.ref_tokens = static_cast<long>(n);
  r.utterances = 1;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const long diag = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      if (at(i, j) == at(i - 1, j - 1) + diag) {
        r.substitutions += diag;
        --i, --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++r.insertions;
      --j;
    } else {
      ++r.deletions;
      --i;
    }
  }
  return r;
}

WerReport wer_text(const std::string& ref, const std::string& hyp) {
  return wer(split_words(ref), split_words(hyp));
}

std::map<std::string, std::string> read_hypotheses(const std::string& path) {
  std::map<std::string, std::string> out;
  std::size_t n = 0;
  for (const auto& line : corpus::read_lines(path)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    std::string text;
    if (cols.size() == 2) {
      text = cols[1];
    } else if (cols.size() == 4) {
      if (cols[1] != "1") continue;
      text = cols[3];
    } else {
      throw Error("io: " + path + ":" + std::to_string(n) +
                  ": expected 2 (manifest) or 4 (n-best) tab-separated columns");
    }
    if (!out.emplace(cols[0], text).second)
      throw Error("io: duplicate hypothesis for '" + cols[0] + "' in " + path);
  }
  return out;
}

WerReport score_maps(const std::map<std::string, std::string>& ref,
                     const std::map<std::string, std::string>& hyp) {
  std::vector<std::string> missing, extra;
  for (const auto& [id, _] : ref)
    if (!hyp.count(id)) missing.push_back(id);
  for (const auto& [id, _] : hyp)
    if (!ref.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    std::ostringstream os;
    os << "score: utterance ids differ;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      os << ' ' << what << ':';
      for (std::size_t i = 0; i < ids.size() && i < 10; ++i) os << ' ' << ids[i];
      if (ids.size() > 10) os << " (+" << ids.size() - 10 << " more)";
    };
    list("missing", missing);
    list("extra", extra);
    throw Error(os.str());
  }
  WerReport total;
  for (const auto& [id, text] : ref) total += wer_text(text, hyp.at(id));
  return total;
}

WerReport score_corpus(const std::string& ref_path, const std::string& hyp_path) {
  std::map<std::string, std::string> ref;
  for (auto& [id, t] : corpus::read_manifest(ref_path)) ref[id] = t;
  return score_maps(ref, read_hypotheses(hyp_path));
}

}  // namespace rilm::eval
