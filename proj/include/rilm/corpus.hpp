#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rilm/tensor.hpp"

namespace rilm::corpus {

// Symbol 0 is the word separator (space); symbols 1.. are the letters.
struct SyntheticDomainSpec {
  std::string letters = "abcdefghijklmnopqrstuvwxyz";
  std::vector<std::vector<double>> transitions;  // [S][S], rows sum to 1
  std::vector<double> initial;                   // first-letter distribution
  std::size_t min_words = 2, max_words = 4;
  std::size_t feature_dim = 16;
  std::size_t min_frames = 1, max_frames = 3;  // frames per symbol
  double noise = 0.3;
  double prototype_scale = 1.0;
  std::uint64_t prototype_seed = 1;  // shared by every domain

  std::size_t num_symbols() const { return letters.size() + 1; }
  char symbol(std::size_t s) const { return s == 0 ? ' ' : letters[s - 1]; }
  void validate() const;
};

struct DomainShape {
  double space_prob = 0.22;    // probability of ending a word after a letter
  double concentration = 0.3;  // Dirichlet parameter of the letter rows
};

// Random bigram for one domain. Letters never repeat and words are never
// empty, so every transcript is CTC-alignable at one frame per symbol.
void fill_domain_bigram(SyntheticDomainSpec& spec, std::uint64_t domain_seed,
                        const DomainShape& shape);

// [S, feature_dim] prototype rows drawn from the spec's prototype seed.
std::vector<double> prototypes(const SyntheticDomainSpec& spec);

struct UttRecord {
  std::string id;
  std::size_t frames = 0, dim = 0;
  std::vector<double> features;  // row-major, float32-representable
  std::string transcript;

  Tensor feature_tensor() const;
};

// Utterance i uses a generator seeded from (seed, i).
std::vector<UttRecord> gen_domain_corpus(const SyntheticDomainSpec& spec, std::size_t n_utts,
                                         std::uint64_t seed, const std::string& id_prefix);
std::vector<std::string> gen_domain_text(const SyntheticDomainSpec& spec, std::size_t n_utts,
                                         std::uint64_t seed);

void write_features(const std::string& path, const std::vector<UttRecord>& utts);
// Records come back with empty transcripts.
std::vector<UttRecord> read_features(const std::string& path);

void write_manifest(const std::string& path, const std::vector<UttRecord>& utts);
// utt_id<TAB>transcript lines, in file order.
std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path);

// Attaches transcripts from a manifest; every feature id must be present.
void attach_transcripts(std::vector<UttRecord>& utts, const std::string& manifest_path);

void write_lines(const std::string& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const std::string& path);

}  // namespace rilm::corpus
