#include "rilm/corpus.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "rilm/error.hpp"

namespace rilm::corpus {

namespace {

constexpr char kFeatMagic[8] = {'R', 'I', 'L', 'M', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatVersion = 1;

std::mt19937_64 utt_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::size_t sample(const std::vector<double>& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = i;
    if (r < acc) return i;
  }
  return last;
}

std::vector<double> dirichlet(std::size_t n, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(alpha, 1.0);
  std::vector<double> out(n);
  double sum = 0.0;
  for (auto& x : out) sum += (x = g(rng) + 1e-3);
  for (auto& x : out) x /= sum;
  return out;
}

// Symbol sequence of one utterance, ending with the word separator.
std::vector<std::size_t> sample_symbols(const SyntheticDomainSpec& spec, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> nw(spec.min_words, spec.max_words);
  const std::size_t words = nw(rng);
  std::vector<std::size_t> out{sample(spec.initial, rng)};
  std::size_t done = 0;
  while (true) {
    const std::size_t s = sample(spec.transitions[out.back()], rng);
    out.push_back(s);
    if (s == 0 && ++done == words) break;
  }
  return out;
}

std::string symbols_text(const SyntheticDomainSpec& spec, const std::vector<std::size_t>& syms) {
  std::string text;
  for (std::size_t i = 0; i + 1 < syms.size(); ++i) text.push_back(spec.symbol(syms[i]));
  return text;
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw Error("io: feature file '" + path + "' is truncated");
  return v;
}

}  // namespace

void SyntheticDomainSpec::validate() const {
  const std::size_t S = num_symbols();
  if (letters.empty()) throw Error("config: synthetic spec needs at least one letter");
  if (transitions.size() != S) throw Error("config: transition matrix must have one row per symbol");
  auto check_row = [&](const std::vector<double>& row, const std::string& what) {
    if (row.size() != S) throw Error("config: " + what + " has wrong length");
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw Error("config: " + what + " has a negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("config: " + what + " does not sum to 1");
  };
  for (std::size_t s = 0; s < S; ++s) check_row(transitions[s], "transition row " + std::to_string(s));
  check_row(initial, "initial distribution");
  if (initial[0] != 0.0) throw Error("config: utterances cannot start with a word separator");
  if (transitions[0][0] != 0.0) throw Error("config: empty words are not allowed");
  if (min_words < 1 || max_words < min_words) throw Error("config: bad word-count range");
  if (min_frames < 1 || max_frames < min_frames) throw Error("config: bad frames-per-symbol range");
  if (feature_dim < 1) throw Error("config: feature_dim must be positive");
  if (noise < 0.0) throw Error("config: noise must be non-negative");
}

void fill_domain_bigram(SyntheticDomainSpec& spec, std::uint64_t domain_seed,
                        const DomainShape& shape) {
  if (!(shape.space_prob > 0.0 && shape.space_prob < 1.0))
    throw Error("config: space_prob must lie in (0,1)");
  if (!(shape.concentration > 0.0)) throw Error("config: concentration must be positive");
  const std::size_t S = spec.num_symbols();
  const std::size_t L = S - 1;
  std::mt19937_64 rng(domain_seed);
  spec.transitions.assign(S, std::vector<double>(S, 0.0));
  auto letters_row = [&](std::size_t exclude, double mass) {
    std::vector<double> row(S, 0.0);
    const auto d = dirichlet(exclude ? L - 1 : L, shape.concentration, rng);
    std::size_t k = 0;
    for (std::size_t s = 1; s < S; ++s)
      if (s != exclude) row[s] = mass * d[k++];
    return row;
  };
  spec.transitions[0] = letters_row(0, 1.0);
  for (std::size_t s = 1; s < S; ++s) {
    if (L == 1) {
      spec.transitions[s][0] = 1.0;
      continue;
    }
    spec.transitions[s] = letters_row(s, 1.0 - shape.space_prob);
    spec.transitions[s][0] = shape.space_prob;
  }
  spec.initial = spec.transitions[0];
}

std::vector<double> prototypes(const SyntheticDomainSpec& spec) {
  std::mt19937_64 rng(spec.prototype_seed);
  std::normal_distribution<double> n(0.0, spec.prototype_scale);
  std::vector<double> out(spec.num_symbols() * spec.feature_dim);
  for (auto& x : out) x = n(rng);
  return out;
}

Tensor UttRecord::feature_tensor() const { return Tensor::from({frames, dim}, features); }

std::vector<UttRecord> gen_domain_corpus(const SyntheticDomainSpec& spec, std::size_t n_utts,
                                         std::uint64_t seed, const std::string& id_prefix) {
  spec.validate();
  const auto protos = prototypes(spec);
  const std::size_t D = spec.feature_dim;
  std::vector<UttRecord> out(n_utts);
  for (std::size_t i = 0; i < n_utts; ++i) {
    auto rng = utt_rng(seed, i);
    const auto syms = sample_symbols(spec, rng);
    std::uniform_int_distribution<std::size_t> dur(spec.min_frames, spec.max_frames);
    std::normal_distribution<double> noise(0.0, 1.0);
    UttRecord& u = out[i];
    char id[32];
    std::snprintf(id, sizeof id, "-%05zu", i);
    u.id = id_prefix + id;
    u.dim = D;
    u.transcript = symbols_text(spec, syms);
    for (std::size_t s : syms) {
      const std::size_t d = dur(rng);
      for (std::size_t f = 0; f < d; ++f) {
        for (std::size_t j = 0; j < D; ++j) {
          const double x = protos[s * D + j] + spec.noise * noise(rng);
          u.features.push_back(static_cast<double>(static_cast<float>(x)));
        }
        ++u.frames;
      }
    }
  }
  return out;
}

std::vector<std::string> gen_domain_text(const SyntheticDomainSpec& spec, std::size_t n_utts,
                                         std::uint64_t seed) {
  spec.validate();
  std::vector<std::string> out;
  out.reserve(n_utts);
  for (std::size_t i = 0; i < n_utts; ++i) {
    auto rng = utt_rng(seed, i);
    out.push_back(symbols_text(spec, sample_symbols(spec, rng)));
  }
  return out;
}

void write_features(const std::string& path, const std::vector<UttRecord>& utts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("io: cannot write '" + path + "'");
  os.write(kFeatMagic, sizeof kFeatMagic);
  put<std::uint32_t>(os, kFeatVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(utts.size()));
  for (const auto& u : utts) {
    if (u.features.size() != u.frames * u.dim) throw Error("shape: feature matrix of '" + u.id + "' is inconsistent");
    put<std::uint32_t>(os, static_cast<std::uint32_t>(u.id.size()));
    os.write(u.id.data(), static_cast<std::streamsize>(u.id.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(u.frames));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(u.dim));
    for (double x : u.features) put<float>(os, static_cast<float>(x));
  }
  if (!os) throw Error("io: failed writing '" + path + "'");
}

std::vector<UttRecord> read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("io: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kFeatMagic, sizeof magic) != 0)
    throw Error("io: '" + path + "' is not a feature file (bad magic)");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kFeatVersion)
    throw Error("io: '" + path + "' has unsupported feature version " + std::to_string(version));
  const auto n = get<std::uint32_t>(is, path);
  std::vector<UttRecord> out(n);
  for (auto& u : out) {
    const auto len = get<std::uint32_t>(is, path);
    u.id.resize(len);
    if (!is.read(u.id.data(), len)) throw Error("io: feature file '" + path + "' is truncated");
    u.frames = get<std::uint32_t>(is, path);
    u.dim = get<std::uint32_t>(is, path);
    if (u.frames == 0) throw Error("io: utterance '" + u.id + "' has no frames");
    u.features.resize(u.frames * u.dim);
    for (auto& x : u.features) x = get<float>(is, path);
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw Error("io: trailing bytes after the last utterance in '" + path + "'");
  return out;
}

void write_manifest(const std::string& path, const std::vector<UttRecord>& utts) {
  std::vector<std::string> lines;
  for (const auto& u : utts) lines.push_back(u.id + "\t" + u.transcript);
  write_lines(path, lines);
}

std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, int> seen;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error("io: " + path + ":" + std::to_string(n) + ": expected utt_id<TAB>transcript");
    std::string id = line.substr(0, tab);
    if (seen[id]++) throw Error("io: duplicate utterance id '" + id + "' in " + path);
    out.emplace_back(std::move(id), line.substr(tab + 1));
  }
  return out;
}

void attach_transcripts(std::vector<UttRecord>& utts, const std::string& manifest_path) {
  std::map<std::string, std::string> text;
  for (auto& [id, t] : read_manifest(manifest_path)) text[id] = t;
  for (auto& u : utts) {
    auto it = text.find(u.id);
    if (it == text.end())
      throw Error("io: utterance '" + u.id + "' has no transcript in " + manifest_path);
    u.transcript = it->second;
  }
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("io: cannot write '" + path + "'");
  for (const auto& l : lines) os << l << '\n';
  if (!os) throw Error("io: failed writing '" + path + "'");
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("io: cannot open '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

}  // namespace rilm::corpus
