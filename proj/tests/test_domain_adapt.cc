#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "rilm/domain_adapt.hpp"
#include "rilm/error.hpp"
#include "test_util.hpp"

using namespace rilm;
using namespace rilm::adapt;

namespace {

bool smoothing_defect(const std::vector<long>& c) {
  long seen = 0, ones = 0;
  for (long x : c) {
    seen += x > 0;
    ones += x == 1;
  }
  return seen == 1 && ones == 1 && static_cast<std::size_t>(seen) < c.size();
}

}  // namespace

TEST_CASE("counting") {
  const Vocab v = testutil::char_vocab("ab");
  const int a = v.id("a"), b = v.id("b");
  const auto c = count_tokens({{a, b, a}}, v.size(), true);
  CHECK(c.counts[a - 1] == 2);
  CHECK(c.counts[b - 1] == 1);
  CHECK(c.counts[Vocab::kEos - 1] == 1);
  CHECK(c.total == 4);
  CHECK(c.size() == static_cast<std::size_t>(v.size() - 1));

  const auto empty = count_tokens({{}, {}}, v.size(), true);
  CHECK(empty.total == 2);
  CHECK(empty.counts[Vocab::kEos - 1] == 2);
  CHECK(count_tokens({{a}}, v.size(), false).counts[Vocab::kEos - 1] == 0);

  const auto x = count_tokens({{a, b}, {b, b, a}, {a}}, v.size(), true);
  const auto y = count_tokens({{a}, {a, b}, {b, b, a}}, v.size(), true);
  CHECK(x.counts == y.counts);
  CHECK_THROWS_AS(count_tokens({}, v.size(), false), Error);
  CHECK_THROWS_AS(count_tokens({{0}}, v.size(), false), Error);
}

TEST_CASE("smoothing hand case") {
  const auto p = smooth(TokenCounts::from_counts({3, 1, 0, 0}));
  CHECK(p.probs == std::vector<double>{0.625, 0.125, 0.125, 0.125});
}

TEST_CASE("no zeros means no smoothing") {
  const auto p = smooth(TokenCounts::from_counts({2, 5, 1}));
  CHECK(p.probs[0] == 2.0 / 8.0);
  CHECK(p.probs[1] == 5.0 / 8.0);
  CHECK(p.probs[2] == 1.0 / 8.0);
  CHECK_THROWS_AS(smooth(TokenCounts::from_counts({0, 0})), Error);
}

TEST_CASE("smoothing sums to one on every small count vector") {
  std::size_t valid = 0, defective = 0;
  for (std::size_t V = 1; V <= 4; ++V)
    oracle::for_each_sequence(V, 0, 7, [&](const std::vector<int>& raw) {
      std::vector<long> c(raw.begin(), raw.end());
      const long C = std::accumulate(c.begin(), c.end(), 0L);
      if (C < 1 || C > 6) return;
      if (smoothing_defect(c)) {
        CHECK_THROWS_AS(smooth(TokenCounts::from_counts(c)), Error);
        ++defective;
        return;
      }
      const auto p = smooth(TokenCounts::from_counts(c));
      CHECK(std::abs(std::accumulate(p.probs.begin(), p.probs.end(), 0.0) - 1.0) < 1e-12);
      CHECK(*std::min_element(p.probs.begin(), p.probs.end()) > 0.0);
      ++valid;
    });
  CHECK(defective == 9);  // one count of 1 beside 1..3 zeros, in every position
  CHECK(valid > 300);
}

TEST_CASE("smoothing on random count vectors") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(2, 60);
  std::uniform_int_distribution<long> count(0, 40);
  std::bernoulli_distribution zero(0.3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<long> c(size(rng));
    for (auto& x : c) x = zero(rng) ? 0 : count(rng) + 2;
    c[0] = 5;
    const auto p = smooth(TokenCounts::from_counts(c));
    CHECK(std::abs(std::accumulate(p.probs.begin(), p.probs.end(), 0.0) - 1.0) < 1e-12);
    CHECK(*std::min_element(p.probs.begin(), p.probs.end()) > 0.0);
  }
}

TEST_CASE("prior ratio") {
  SmoothedPrior t{{0.8, 0.2}, Domain::kTarget}, s{{0.5, 0.5}, Domain::kSource};
  const auto r = prior_ratio(t, s);
  CHECK(r.weights[0] == doctest::Approx(1.6).epsilon(1e-15));
  CHECK(r.weights[1] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(prior_ratio(s, s).weights == std::vector<double>{1.0, 1.0});
  CHECK_THROWS_AS(prior_ratio(t, SmoothedPrior{{1.0}, Domain::kSource}), Error);
}

TEST_CASE("blank weight") {
  const std::vector<double> l{1.0, 2.0, 0.5};
  const PriorRatio r{{1.6, 0.4}};
  const double k = (1.6 * std::exp(2.0) + 0.4 * std::exp(0.5)) / (std::exp(2.0) + std::exp(0.5));
  CHECK(blank_weight(l, r) == doctest::Approx(k).epsilon(1e-14));
  CHECK(blank_weight(l, unit_ratio(2)) == 1.0);
  const auto phi = r_softmax(l, r);
  CHECK(std::abs(phi[0] - oracle::softmax(l)[0]) < 1e-12);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> li(6), w(5);
    for (auto& x : li) x = n(rng);
    for (auto& x : w) x = u(rng);
    const double ki = blank_weight(li, PriorRatio{w});
    CHECK(ki >= *std::min_element(w.begin(), w.end()) * (1 - 1e-12));
    CHECK(ki <= *std::max_element(w.begin(), w.end()) * (1 + 1e-12));
  }
  CHECK_THROWS_AS(blank_weight(l, PriorRatio{{1.0}}), Error);
}

TEST_CASE("r-softmax against the reweighting oracle") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> vs(2, 30);
  std::normal_distribution<double> n(0.0, 4.0);
  std::uniform_real_distribution<double> lw(-4.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t V = vs(rng);
    std::vector<double> l(V), w(V - 1);
    for (auto& x : l) x = n(rng);
    for (auto& x : w) x = std::exp(lw(rng));
    const auto phi = r_softmax(l, PriorRatio{w});
    CHECK(testutil::max_abs_diff(phi, oracle::bayes_reweight(l, w)) < 1e-12);
    CHECK(std::abs(phi[0] - oracle::softmax(l)[0]) < 1e-12);
    CHECK(std::abs(std::accumulate(phi.begin(), phi.end(), 0.0) - 1.0) < 1e-12);
    auto shifted = l;
    for (auto& x : shifted) x += 123.25;
    CHECK(testutil::max_abs_diff(r_softmax(shifted, PriorRatio{w}), phi) < 1e-12);
    CHECK(testutil::max_abs_diff(r_softmax(l, unit_ratio(V - 1)), oracle::softmax(l)) < 1e-15);
  }
}

TEST_CASE("frame-parallel posteriors equal the serial reference") {
  std::mt19937_64 rng(4);
  const std::size_t T = 500, V = 20;
  const auto logits = testutil::to_vec(testutil::random_tensor({T, V}, rng, 3.0).data());
  PriorRatio r;
  std::uniform_real_distribution<double> u(0.2, 5.0);
  for (std::size_t i = 0; i + 1 < V; ++i) r.weights.push_back(u(rng));
  CHECK(testutil::bit_equal(log_posteriors(logits, T, V, &r), serial::log_posteriors(logits, T, V, &r)));
  CHECK(testutil::bit_equal(log_posteriors(logits, T, V, nullptr), serial::log_posteriors(logits, T, V, nullptr)));
  const auto unit = unit_ratio(V - 1);
  CHECK(testutil::bit_equal(log_posteriors(logits, T, V, &unit), log_posteriors(logits, T, V, nullptr)));
  for (std::size_t t = 0; t < 3; ++t) {
    const auto row = r_log_softmax(std::span<const double>(logits).subspan(t * V, V), r);
    CHECK(testutil::bit_equal(row, std::span<const double>(log_posteriors(logits, T, V, &r)).subspan(t * V, V)));
  }
}

TEST_CASE("frequency files") {
  const Vocab v = testutil::char_vocab("ab");
  const std::string dir = testutil::temp_dir("freqs");
  const auto c = count_tokens({{v.id("a"), v.id("b"), v.id("a")}}, v.size(), true);
  save_counts(c, v, dir + "/c.tsv");
  const auto back = load_counts(v, dir + "/c.tsv");
  CHECK(back.counts == c.counts);
  CHECK(back.total == c.total);
  save_prior(smooth(c), v, dir + "/p.tsv");
  testutil::write_text(dir + "/bad.tsv", "zz\t3\n");
  CHECK_THROWS_AS(load_counts(v, dir + "/bad.tsv"), Error);
  testutil::write_text(dir + "/neg.tsv", "a\t-3\n");
  CHECK_THROWS_AS(load_counts(v, dir + "/neg.tsv"), Error);
}
