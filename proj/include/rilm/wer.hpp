#pragma once

#include <map>
#include <string>
#include <vector>

namespace rilm::eval {

struct WerReport {
  long substitutions = 0, deletions = 0, insertions = 0;
  long ref_tokens = 0;
  long utterances = 0;

  long errors() const { return substitutions + deletions + insertions; }
  double wer() const;  // percent; may exceed 100
  WerReport& operator+=(const WerReport& o);
  std::string to_string() const;
};

// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
// prefers substitution, then insertion, then deletion.
WerReport wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);
WerReport wer_text(const std::string& ref, const std::string& hyp);

// Hypothesis files are either utt_id<TAB>transcript manifests or n-best
// files (utt_id<TAB>rank<TAB>score<TAB>transcript, rank-1 rows used).
std::map<std::string, std::string> read_hypotheses(const std::string& path);

// Pooled report; ids must match exactly.
WerReport score_maps(const std::map<std::string, std::string>& ref,
                     const std::map<std::string, std::string>& hyp);
WerReport score_corpus(const std::string& ref_path, const std::string& hyp_path);

}  // namespace rilm::eval
