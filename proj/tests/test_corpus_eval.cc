#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rilm/corpus.hpp"
#include "rilm/error.hpp"
#include "rilm/tokenizer.hpp"
#include "rilm/wer.hpp"
#include "test_util.hpp"

using namespace rilm;
using namespace rilm::corpus;

namespace {

SyntheticDomainSpec domain(std::uint64_t seed, double noise = 0.3) {
  SyntheticDomainSpec s;
  s.noise = noise;
  fill_domain_bigram(s, seed, DomainShape{});
  return s;
}

std::size_t nearest(const std::vector<double>& protos, std::size_t S, std::size_t dim,
                    const double* frame) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t s = 0; s < S; ++s) {
    double d = 0.0;
    for (std::size_t k = 0; k < dim; ++k) d += (frame[k] - protos[s * dim + k]) * (frame[k] - protos[s * dim + k]);
    if (d < best_d) best_d = d, best = s;
  }
  return best;
}

eval::WerReport wer_of(const std::string& ref, const std::string& hyp) { return eval::wer_text(ref, hyp); }

}  // namespace

TEST_CASE("domain bigram is a valid chain") {
  const auto s = domain(7);
  s.validate();
  const std::size_t S = s.num_symbols();
  for (std::size_t a = 0; a < S; ++a) {
    double sum = 0.0;
    for (double p : s.transitions[a]) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    if (a > 0) {
      CHECK(s.transitions[a][a] == 0.0);
      CHECK(std::abs(s.transitions[a][0] - 0.22) < 1e-12);
    }
  }
  CHECK(s.transitions[0][0] == 0.0);
  CHECK(s.initial == s.transitions[0]);
  auto bad = s;
  bad.transitions[3][4] += 0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("noiseless frames decode back to the transcript") {
  const auto s = domain(11, 0.0);
  const auto protos = prototypes(s);
  const auto utts = gen_domain_corpus(s, 50, 3, "u");
  for (const auto& u : utts) {
    std::string symbols;
    std::size_t prev = SIZE_MAX;
    for (std::size_t t = 0; t < u.frames; ++t) {
      const std::size_t k = nearest(protos, s.num_symbols(), u.dim, &u.features[t * u.dim]);
      if (k != prev) symbols += s.symbol(k);
      prev = k;
    }
    CHECK(symbols == u.transcript + " ");
  }
}

TEST_CASE("features are float32 values with the configured noise") {
  const auto s = domain(11, 0.5);
  const auto protos = prototypes(s);
  const auto utts = gen_domain_corpus(s, 200, 5, "u");
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& u : utts) {
    CHECK(u.frames >= 1);
    for (double v : u.features) CHECK(static_cast<double>(static_cast<float>(v)) == v);
    for (std::size_t t = 0; t < u.frames; ++t) {
      const std::size_t k = nearest(protos, s.num_symbols(), u.dim, &u.features[t * u.dim]);
      for (std::size_t d = 0; d < u.dim; ++d) {
        const double e = u.features[t * u.dim + d] - protos[k * u.dim + d];
        sq += e * e;
        ++n;
      }
    }
  }
  CHECK(std::sqrt(sq / static_cast<double>(n)) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("generation is deterministic and per-utterance seeded") {
  const auto s = domain(3);
  const auto a = gen_domain_corpus(s, 20, 9, "x");
  const auto b = gen_domain_corpus(s, 30, 9, "x");
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].transcript == b[i].transcript);
    CHECK(testutil::bit_equal(a[i].features, b[i].features));
  }
  CHECK(a[0].id == "x-00000");
  const auto c = gen_domain_corpus(s, 20, 10, "x");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i].transcript == c[i].transcript;
  CHECK(same < 5);
  CHECK(gen_domain_text(s, 20, 9) == gen_domain_text(s, 20, 9));
}

TEST_CASE("domains share prototypes and differ in statistics") {
  auto s1 = domain(101), s2 = domain(202);
  CHECK(testutil::bit_equal(prototypes(s1), prototypes(s2)));
  CHECK(s1.transitions != s2.transitions);
  s2.prototype_seed = 2;
  CHECK_FALSE(testutil::bit_equal(prototypes(s1), prototypes(s2)));
}

TEST_CASE("symbol frequencies follow the stationary distribution") {
  const auto s = domain(5);
  const std::size_t S = s.num_symbols();
  // power iteration on the row-stochastic transition matrix
  std::vector<double> pi(S, 1.0 / static_cast<double>(S));
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> next(S, 0.0);
    for (std::size_t a = 0; a < S; ++a)
      for (std::size_t b = 0; b < S; ++b) next[b] += pi[a] * s.transitions[a][b];
    pi = next;
  }
  std::vector<double> freq(S, 0.0);
  double total = 0.0;
  for (const auto& line : gen_domain_text(s, 10000, 1)) {
    for (char ch : line + " ") {
      const std::size_t k = ch == ' ' ? 0 : s.letters.find(ch) + 1;
      freq[k] += 1.0;
      total += 1.0;
    }
  }
  double tv = 0.0;
  for (std::size_t k = 0; k < S; ++k) tv += std::abs(freq[k] / total - pi[k]);
  CHECK(tv / 2.0 < 0.01);
}

TEST_CASE("word counts stay in range") {
  auto s = domain(5);
  s.min_words = 2;
  s.max_words = 3;
  std::size_t seen2 = 0, seen3 = 0;
  for (const auto& line : gen_domain_text(s, 500, 2)) {
    const auto words = split_words(line);
    CHECK(words.size() >= 2);
    CHECK(words.size() <= 3);
    seen2 += words.size() == 2;
    seen3 += words.size() == 3;
  }
  CHECK(seen2 > 150);
  CHECK(seen3 > 150);
}

TEST_CASE("feature file round trip and errors") {
  const std::filesystem::path dir = testutil::temp_dir("feats");
  const auto s = domain(8);
  const auto utts = gen_domain_corpus(s, 12, 4, "rt");
  const auto path = (dir / "a.feats").string();
  write_features(path, utts);
  const auto back = read_features(path);
  REQUIRE(back.size() == utts.size());
  for (std::size_t i = 0; i < utts.size(); ++i) {
    CHECK(back[i].id == utts[i].id);
    CHECK(back[i].frames == utts[i].frames);
    CHECK(back[i].dim == utts[i].dim);
    CHECK(testutil::bit_equal(back[i].features, utts[i].features));
    CHECK(back[i].transcript.empty());
  }
  write_manifest((dir / "a.txt").string(), utts);
  auto with_text = back;
  attach_transcripts(with_text, (dir / "a.txt").string());
  for (std::size_t i = 0; i < utts.size(); ++i) CHECK(with_text[i].transcript == utts[i].transcript);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::copy_file(path, dir / "short.feats");
  std::filesystem::resize_file(dir / "short.feats", size - 3);
  CHECK_THROWS_AS(read_features((dir / "short.feats").string()), Error);
  {
    std::filesystem::copy_file(path, dir / "long2.feats");
    std::ofstream os(dir / "long2.feats", std::ios::binary | std::ios::app);
    os << 'x';
  }
  CHECK_THROWS_AS(read_features((dir / "long2.feats").string()), Error);
  testutil::write_text(dir / "bad.feats", "NOTFEATSxxxxxxxx");
  CHECK_THROWS_AS(read_features((dir / "bad.feats").string()), Error);
  CHECK_THROWS_AS(read_features((dir / "missing.feats").string()), Error);

  testutil::write_text(dir / "dup.txt", "a\tx\na\ty\n");
  CHECK_THROWS_AS(read_manifest((dir / "dup.txt").string()), Error);
  testutil::write_text(dir / "partial.txt", utts[0].id + "\tx\n");
  auto partial = back;
  CHECK_THROWS_AS(attach_transcripts(partial, (dir / "partial.txt").string()), Error);
}

TEST_CASE("hand WER cases") {
  auto r = wer_of("the cat sat", "the bat sat");
  CHECK(r.substitutions == 1);
  CHECK(r.wer() == doctest::Approx(100.0 / 3.0));
  r = wer_of("a b c", "a c");
  CHECK(r.deletions == 1);
  CHECK(r.errors() == 1);
  CHECK(r.wer() == doctest::Approx(100.0 / 3.0));
  r = wer_of("a", "b c");
  CHECK(r.substitutions == 1);
  CHECK(r.insertions == 1);
  CHECK(r.wer() == doctest::Approx(200.0));
  r = wer_of("a b", "c d e f");
  CHECK(r.errors() == 4);
  CHECK(r.wer() == doctest::Approx(200.0));
  r = wer_of("a b c", "");
  CHECK(r.deletions == 3);
  r = wer_of("a", "a b");
  CHECK(r.insertions == 1);
  CHECK(wer_of("x y z", "x y z").errors() == 0);
  CHECK_THROWS_AS(wer_of("", "a").wer(), Error);
  CHECK(r.to_string() == "WER 100.00% [S=0 D=0 I=1 N=1 utts=1]");
}

TEST_CASE("pooled WER is errors over reference words") {
  std::map<std::string, std::string> ref{{"u1", "a b c d"}, {"u2", "e f g h"}, {"u3", "i j k l m n o p"}};
  std::map<std::string, std::string> hyp{{"u1", "a b c d"}, {"u2", "e x g"}, {"u3", "i j k l m n o p q"}};
  const auto r = eval::score_maps(ref, hyp);
  CHECK(r.errors() == 3);
  CHECK(r.ref_tokens == 16);
  CHECK(r.utterances == 3);
  CHECK(r.wer() == doctest::Approx(18.75));
  // per-utterance means would give a different number
  CHECK(r.wer() != doctest::Approx((0.0 + 50.0 + 12.5) / 3.0));

  CHECK(eval::score_maps({{"u1", "a b"}, {"u2", "c d"}}, {{"u1", "a x"}, {"u2", "c d"}}).wer() ==
        doctest::Approx(25.0));
  std::map<std::string, std::string> one{{"u1", "a b c d"}};
  std::map<std::string, std::string> wrong{{"u1", "a b"}, {"u9", "z"}};
  CHECK(eval::score_maps(one, {{"u1", "a x c"}}).wer() == doctest::Approx(50.0));
  try {
    eval::score_maps(one, wrong);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("u9") != std::string::npos);
  }
}

TEST_CASE("WER invariants") {
  std::mt19937_64 rng(21);
  const std::vector<std::string> words{"a", "b", "c", "d", "e"};
  std::uniform_int_distribution<std::size_t> len(1, 7), pick(0, 4);
  auto sentence = [&] {
    std::vector<std::string> s(len(rng));
    for (auto& w : s) w = words[pick(rng)];
    return s;
  };
  for (int trial = 0; trial < 300; ++trial) {
    const auto ref = sentence(), hyp = sentence();
    const auto r = eval::wer(ref, hyp);
    // relabeling words by a bijection leaves the alignment cost unchanged
    auto relabel = [](std::vector<std::string> v) {
      for (auto& w : v) w = "w" + w + w;
      return v;
    };
    CHECK(eval::wer(relabel(ref), relabel(hyp)).errors() == r.errors());
    // swapping roles swaps insertions and deletions
    const auto back = eval::wer(hyp, ref);
    CHECK(back.errors() == r.errors());
    CHECK(static_cast<long>(hyp.size()) - static_cast<long>(ref.size()) == r.insertions - r.deletions);
    CHECK(r.errors() >= std::abs(static_cast<long>(hyp.size()) - static_cast<long>(ref.size())));
    CHECK(r.errors() <= static_cast<long>(std::max(ref.size(), hyp.size())));
  }
}

TEST_CASE("pooled WER ignores utterance order") {
  const std::map<std::string, std::string> ref{{"b", "x y"}, {"a", "p q r"}, {"c", "m"}};
  const std::map<std::string, std::string> hyp{{"c", "n o"}, {"a", "p r"}, {"b", "x y"}};
  const auto r = eval::score_maps(ref, hyp);
  CHECK(r.errors() == 3);
  CHECK(r.ref_tokens == 6);
}

TEST_CASE("hypothesis files") {
  const std::filesystem::path dir = testutil::temp_dir("hyp");
  testutil::write_text(dir / "ref.txt", "u1\tthe cat\nu2\ta dog barks\nu3\tok\n");
  testutil::write_text(dir / "hyp.txt", "u1\tthe cat\nu2\ta dog\nu3\t\n");
  testutil::write_text(dir / "hyp.nbest",
                       "u1\t1\t-1.000000\tthe cat\nu1\t2\t-2.000000\tthe hat\n"
                       "u2\t1\t-0.500000\ta dog\nu3\t1\t-3.000000\t\n");
  const auto a = eval::score_corpus((dir / "ref.txt").string(), (dir / "hyp.txt").string());
  const auto b = eval::score_corpus((dir / "ref.txt").string(), (dir / "hyp.nbest").string());
  CHECK(a.errors() == 2);
  CHECK(a.ref_tokens == 6);
  CHECK(a.to_string() == b.to_string());
  testutil::write_text(dir / "miss.txt", "u1\tthe cat\n");
  CHECK_THROWS_AS(eval::score_corpus((dir / "ref.txt").string(), (dir / "miss.txt").string()), Error);
}
