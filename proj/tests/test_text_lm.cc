#include <cmath>

#include "doctest.h"
#include "rilm/error.hpp"
#include "rilm/ops.hpp"
#include "rilm/text_lm.hpp"
#include "test_util.hpp"

using namespace rilm;

namespace {

LmConfig tiny_config(std::size_t V) {
  LmConfig c;
  c.n_layers = 2;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.vocab_size = V;
  c.max_len = 64;
  return c;
}

std::vector<std::vector<int>> alternating(const Vocab& v, std::size_t n, std::size_t len) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> u;
    for (std::size_t t = 0; t < len; ++t) u.push_back(v.id(t % 2 ? "b" : "a"));
    out.push_back(u);
  }
  return out;
}

void zero_head(const TransformerLM& lm) {
  for (auto& [name, t] : lm.parameters())
    if (name.rfind("head.", 0) == 0)
      for (auto& x : const_cast<Tensor&>(t).mutable_data()) x = 0.0;
}

}  // namespace

TEST_CASE("logits are causal") {
  const Vocab v = testutil::char_vocab("abcde");
  const TransformerLM lm(tiny_config(v.size()), v, 1);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> tok(Vocab::kNumSpecial, v.size() - 1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t L = 2 + trial % 9;
    std::vector<int> ids{Vocab::kSos};
    for (std::size_t i = 1; i < L; ++i) ids.push_back(tok(rng));
    const std::size_t t = static_cast<std::size_t>(trial) % (L - 1);
    auto changed = ids;
    changed[t + 1] = changed[t + 1] == Vocab::kNumSpecial ? v.size() - 1 : Vocab::kNumSpecial;
    const Tensor a = lm.forward(ids), b = lm.forward(changed);
    const std::size_t V = static_cast<std::size_t>(v.size());
    CHECK(testutil::bit_equal(a.data().subspan(0, (t + 1) * V), b.data().subspan(0, (t + 1) * V)));
  }
}

TEST_CASE("incremental steps equal the full forward pass") {
  const Vocab v = testutil::char_vocab("abcde");
  const TransformerLM lm(tiny_config(v.size()), v, 3);
  const std::vector<int> ids{Vocab::kSos, 5, 7, 6, 8, 5};
  const Tensor full = lm.forward(ids);
  TransformerLM::State st;
  const std::size_t V = static_cast<std::size_t>(v.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const Tensor row = lm.step(st, ids[t]);
    CHECK(testutil::bit_equal(row.data(), full.data().subspan(t * V, V)));
  }
}

TEST_CASE("overlong input is rejected") {
  const Vocab v = testutil::char_vocab("ab");
  auto cfg = tiny_config(v.size());
  cfg.max_len = 4;
  const TransformerLM lm(cfg, v, 1);
  CHECK_THROWS_AS(lm.forward(std::vector<int>{1, 5, 5, 5, 5}), Error);
  CHECK_THROWS_AS(lm_train({{5, 6, 5, 6, 5}}, cfg, v, {}), Error);
}

TEST_CASE("zero head gives a uniform model") {
  const Vocab v = testutil::char_vocab("abc");
  const TransformerLM lm(tiny_config(v.size()), v, 4);
  zero_head(lm);
  const std::vector<std::vector<int>> corpus = {{5, 6}, {7}, {5, 5, 6, 7}};
  CHECK(perplexity(lm, corpus) == doctest::Approx(v.size()).epsilon(1e-12));
}

TEST_CASE("scores are normalized and match a hand-rolled NLL loop") {
  const Vocab v = testutil::char_vocab("abc");
  const TransformerLM lm(tiny_config(v.size()), v, 5);
  const std::vector<int> hist{5, 6};
  double total = 0.0;
  for (int next = 0; next < v.size(); ++next) total += std::exp(lm_score_prefix(lm, hist, next));
  CHECK(std::abs(total - 1.0) < 1e-12);

  const std::vector<std::vector<int>> corpus = {{5, 6, 7}, {7, 7}, {6}};
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& u : corpus) {
    std::vector<int> in{Vocab::kSos};
    in.insert(in.end(), u.begin(), u.end());
    std::vector<int> target(u.begin(), u.end());
    target.push_back(Vocab::kEos);
    const Tensor logits = lm.forward(in);
    const std::size_t V = static_cast<std::size_t>(v.size());
    for (std::size_t t = 0; t < target.size(); ++t) {
      const auto row = logits.data().subspan(t * V, V);
      double mx = row[0];
      for (double x : row) mx = std::max(mx, x);
      double z = 0.0;
      for (double x : row) z += std::exp(x - mx);
      nll -= row[static_cast<std::size_t>(target[t])] - mx - std::log(z);
      ++count;
    }
  }
  const double oracle = std::exp(nll / static_cast<double>(count));
  CHECK(std::abs(perplexity(lm, corpus) - oracle) / oracle < 1e-10);
  CHECK_THROWS_AS(perplexity(lm, {}), Error);
}

TEST_CASE("training on a deterministic corpus") {
  const Vocab v = testutil::char_vocab("ab");
  LmTrainOptions opt;
  opt.epochs = 12;
  opt.batch_size = 8;
  opt.adam.lr = 3e-3;
  opt.adam.warmup_steps = 10;
  const auto result = lm_train(alternating(v, 64, 8), tiny_config(v.size()), v, opt);
  CHECK(result.epoch_loss.back() < result.epoch_loss.front());
  CHECK(result.epoch_loss.back() < 0.2);
  const std::vector<int> hist{v.id("a"), v.id("b"), v.id("a")};
  CHECK(std::exp(lm_score_prefix(result.model, hist, v.id("b"))) > 0.9);
  CHECK_THROWS_AS(lm_train({}, tiny_config(v.size()), v, opt), Error);
}

TEST_CASE("lr = 0 and seed determinism") {
  const Vocab v = testutil::char_vocab("ab");
  const auto corpus = alternating(v, 10, 6);
  LmTrainOptions opt;
  opt.epochs = 1;
  opt.adam.lr = 0.0;
  const TransformerLM init(tiny_config(v.size()), v, opt.seed);
  const auto frozen = lm_train(corpus, tiny_config(v.size()), v, opt);
  CHECK(serialize_checkpoint(frozen.model.to_checkpoint()) == serialize_checkpoint(init.to_checkpoint()));

  opt.adam.lr = 1e-3;
  opt.epochs = 2;
  const auto a = lm_train(corpus, tiny_config(v.size()), v, opt);
  const auto b = lm_train(corpus, tiny_config(v.size()), v, opt);
  CHECK(serialize_checkpoint(a.model.to_checkpoint()) == serialize_checkpoint(b.model.to_checkpoint()));
  CHECK(serialize_checkpoint(a.model.to_checkpoint()) != serialize_checkpoint(init.to_checkpoint()));
}

TEST_CASE("fine-tuning") {
  const Vocab v = testutil::char_vocab("ab");
  LmTrainOptions opt;
  opt.epochs = 4;
  opt.adam.lr = 3e-3;
  const auto source = lm_train(alternating(v, 40, 8), tiny_config(v.size()), v, opt).model;

  SUBCASE("zero epochs copies the model") {
    LmTrainOptions none = opt;
    none.epochs = 0;
    const auto same = lm_finetune(source, {{5}}, v, none).model;
    CHECK(serialize_checkpoint(same.to_checkpoint()) == serialize_checkpoint(source.to_checkpoint()));
  }
  SUBCASE("target text lowers target perplexity and keeps the config") {
    std::vector<std::vector<int>> target;
    for (int i = 0; i < 40; ++i) target.push_back({v.id("a"), v.id("a"), v.id("b"), v.id("b"), v.id("a"), v.id("a")});
    const auto tuned = lm_finetune(source, target, v, opt).model;
    CHECK(perplexity(tuned, target) < perplexity(source, target));
    CHECK(tuned.config() == source.config());
    const auto params_a = source.parameters(), params_b = tuned.parameters();
    REQUIRE(params_a.size() == params_b.size());
    for (std::size_t i = 0; i < params_a.size(); ++i) {
      CHECK(params_a[i].first == params_b[i].first);
      CHECK(params_a[i].second.shape() == params_b[i].second.shape());
    }
  }
  SUBCASE("vocab mismatch") {
    const Vocab other = testutil::char_vocab("ba");
    CHECK_THROWS_AS(lm_finetune(source, {{5}}, other, opt), Error);
  }
}

TEST_CASE("checkpoint round trip") {
  const Vocab v = testutil::char_vocab("xyz");
  const TransformerLM lm(tiny_config(v.size()), v, 9);
  const auto back = TransformerLM::from_checkpoint(parse_checkpoint(serialize_checkpoint(lm.to_checkpoint())));
  CHECK(back.vocab() == v);
  const std::vector<int> ids{1, 5, 6};
  CHECK(testutil::bit_equal(back.forward(ids).data(), lm.forward(ids).data()));
}
