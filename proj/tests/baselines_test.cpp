#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "txt/baselines.hpp"
#include "txt/itemcf.hpp"

using namespace txt;
using D = double;

namespace {

GruConfig tiny_gru(bool use_context) {
  GruConfig cfg;
  cfg.d_embed = 6;
  cfg.seq_len = 5;
  cfg.item_vocab = 12;
  cfg.use_context = use_context;
  if (use_context) cfg.ctx_fields = {{"alpha", 5}, {"beta", 4}};
  return cfg;
}

OrderExample make_example(std::vector<std::int32_t> ids, std::size_t n_real, ContextVector ctx,
                          std::int32_t label) {
  OrderExample ex;
  ex.input_ids = std::move(ids);
  ex.mask.assign(ex.input_ids.size(), 0);
  for (std::size_t i = 0; i < n_real; ++i) ex.mask[i] = 1;
  ex.ctx = std::move(ctx);
  ex.label = label;
  return ex;
}

}  // namespace

TEST_CASE("single-step GRU equals the head of one update from zero state") {
  GruModel<D> model(tiny_gru(false), 3);
  auto ex = make_example({7, kPadId, kPadId, kPadId, kPadId}, 1, {}, 2);
  auto got = model.logits(ex);
  auto want = test::gru_oracle_logits(model, ex);
  CHECK(test::max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("zero weights give uniform probabilities") {
  GruModel<D> model(tiny_gru(false), 5);
  for (auto& [name, tensor] : model.params().items())
    std::fill(tensor.data.begin(), tensor.data.end(), D(0));
  auto ex = make_example({2, 3, kPadId, kPadId, kPadId}, 2, {}, 4);
  auto probs = softmax_values<D>(model.logits(ex));
  for (double p : probs) CHECK(p == doctest::Approx(1.0 / 12).epsilon(1e-12));
}

TEST_CASE("GRU forward matches the per-step oracle") {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    GruModel<D> model(tiny_gru(false), seed);
    CounterRng rng(seed, "case");
    std::size_t n_real = 1 + rng.next_below(5);
    std::vector<std::int32_t> ids(5, kPadId);
    for (std::size_t i = 0; i < n_real; ++i)
      ids[i] = static_cast<std::int32_t>(2 + rng.next_below(10));
    auto ex = make_example(ids, n_real, {}, 3);
    CHECK(test::max_abs_diff(model.logits(ex), test::gru_oracle_logits(model, ex)) < 1e-10);
  }
}

TEST_CASE("latent-cross GRU: unit context sum reduces to the plain GRU") {
  GruConfig cfg = tiny_gru(true);
  GruModel<D> lc(cfg, 23);
  // Two context fields whose rows are all one-half: the sum is all ones.
  for (const auto& f : cfg.ctx_fields) {
    auto& table = lc.params().at("ctx_emb." + f.name);
    std::fill(table.data.begin(), table.data.end(), D(0.5));
  }
  GruConfig plain_cfg = tiny_gru(false);
  GruModel<D> plain(plain_cfg, 23);
  for (auto& [name, tensor] : plain.params().items())
    tensor.data = lc.params().at(name).data;

  auto ex = make_example({4, 6, 2, kPadId, kPadId}, 3, {1, 2}, 5);
  auto ex_plain = ex;
  ex_plain.ctx.clear();
  CHECK(test::max_abs_diff(lc.logits(ex), plain.logits(ex_plain)) < 1e-12);
}

TEST_CASE("latent-cross GRU: zero context sum zeroes the pre-head activation") {
  GruConfig cfg = tiny_gru(true);
  GruModel<D> lc(cfg, 29);
  for (const auto& f : cfg.ctx_fields) {
    auto& table = lc.params().at("ctx_emb." + f.name);
    std::fill(table.data.begin(), table.data.end(), D(0));
  }
  auto ex = make_example({4, 6, kPadId, kPadId, kPadId}, 2, {1, 2}, 5);
  auto logits = lc.logits(ex);
  const auto& bias = lc.params().at("head.b").data;
  CHECK(test::max_abs_diff(logits, bias) < 1e-12);
}

TEST_CASE("latent-cross GRU matches the oracle") {
  for (std::uint64_t seed = 31; seed < 37; ++seed) {
    GruModel<D> model(tiny_gru(true), seed);
    auto ex = make_example({3, 8, 5, kPadId, kPadId}, 3,
                           {static_cast<std::int32_t>(seed % 5),
                            static_cast<std::int32_t>(seed % 4)},
                           6);
    CHECK(test::max_abs_diff(model.logits(ex), test::gru_oracle_logits(model, ex)) < 1e-10);
  }
}

TEST_CASE("GRU is order sensitive") {
  GruModel<D> model(tiny_gru(false), 41);
  auto a = make_example({2, 3, 4, kPadId, kPadId}, 3, {}, 5);
  auto b = make_example({4, 3, 2, kPadId, kPadId}, 3, {}, 5);
  CHECK(test::max_abs_diff(model.logits(a), model.logits(b)) > 1e-9);
}

TEST_CASE("GRU gradients pass finite differences") {
  GruConfig cfg = tiny_gru(true);
  cfg.d_embed = 4;
  cfg.item_vocab = 6;
  GruModel<D> model(cfg, 43);
  std::vector<OrderExample> batch = {
      make_example({2, 3, kPadId, kPadId, kPadId}, 2, {1, 2}, 4),
      make_example({5, 4, 3, 2, 2}, 5, {3, 0}, 2),
  };
  auto build = [&](Tape<D>& t) {
    auto b = model.bind(t);
    return model.batch_loss(t, b, batch);
  };
  Tape<D> t;
  t.backward(build(t));
  auto grads = t.grads_by_name();
  auto loss = [&]() {
    Tape<D> t2;
    return t2.value(build(t2))[0];
  };
  auto report = test::finite_difference_check(model.params(), grads, loss);
  INFO(report.worst_param, "[", report.worst_index, "]");
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("co-occurrence fit on a toy corpus") {
  // Items ids: 2, 3, 4 real. Orders: {2,3}, {2,3,4}, {3,4}.
  std::vector<std::vector<std::int32_t>> orders = {{2, 3}, {2, 3, 4}, {3, 4}};
  std::vector<ContextVector> ctxs = {{0}, {1}, {1}};
  auto model = CooccurrenceModel::fit(orders, ctxs, 5, {2});

  // Hand-counted: c(2,2)=2, c(3,3)=3, c(4,4)=2, c(2,3)=2, c(2,4)=1, c(3,4)=2.
  CHECK(model.cooc_count(2, 2) == 2);
  CHECK(model.cooc_count(3, 3) == 3);
  CHECK(model.cooc_count(4, 4) == 2);
  CHECK(model.cooc_count(2, 3) == 2);
  CHECK(model.cooc_count(2, 4) == 1);
  CHECK(model.cooc_count(3, 4) == 2);

  CHECK(model.sim(2, 3) == doctest::Approx(2.0 / std::sqrt(6.0)));
  CHECK(model.sim(2, 2) == doctest::Approx(1.0));
  CHECK(model.sim(3, 3) == doctest::Approx(1.0));

  // Symmetry.
  for (std::int32_t a = 2; a < 5; ++a)
    for (std::int32_t b = 2; b < 5; ++b) CHECK(model.sim(a, b) == model.sim(b, a));
}

TEST_CASE("items never co-occurring have zero similarity") {
  std::vector<std::vector<std::int32_t>> orders = {{2}, {3}};
  std::vector<ContextVector> ctxs = {{0}, {0}};
  auto model = CooccurrenceModel::fit(orders, ctxs, 4, {1});
  CHECK(model.sim(2, 3) == 0.0);
}

TEST_CASE("single pair corpus has unit similarity") {
  std::vector<std::vector<std::int32_t>> orders = {{2, 3}};
  std::vector<ContextVector> ctxs = {{0}};
  auto model = CooccurrenceModel::fit(orders, ctxs, 4, {1});
  CHECK(model.sim(2, 3) == doctest::Approx(1.0));
}

TEST_CASE("empty corpus is a contract error") {
  CHECK_THROWS_AS(CooccurrenceModel::fit({}, {}, 4, {1}), ContractError);
}

TEST_CASE("recommendation scoring: context skew, uniform multiplier, brute force") {
  // Bucket 0 favors item 2 strongly; bucket 1 is uniform-ish.
  std::vector<std::vector<std::int32_t>> orders = {{2, 3}, {2}, {2}, {3, 4}, {2, 4}};
  std::vector<ContextVector> ctxs = {{0}, {0}, {0}, {1}, {1}};
  auto model = CooccurrenceModel::fit(orders, ctxs, 5, {2});

  // Empty basket ranks purely by context popularity.
  auto top = model.recommend({}, {0}, 3);
  CHECK(top[0] == 2);  // item 2 appears 3 times in bucket 0

  // Brute-force check of the scoring formula on every item.
  std::vector<std::int32_t> basket = {3};
  auto s = model.scores(basket, {1});
  for (std::int32_t i = 2; i < 5; ++i) {
    double simsum = model.sim(i, 3);
    double mult = (model.ctx_count(0, 1, i) + 1.0) /
                  (model.ctx_count(0, 1, 2) + model.ctx_count(0, 1, 3) +
                   model.ctx_count(0, 1, 4) + 5.0);
    CHECK(s[static_cast<std::size_t>(i)] == doctest::Approx(simsum * mult));
  }

  // Unknown items contribute zero: UNK in the basket changes nothing.
  auto with_unk = model.scores({3, kUnkId}, {1});
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(with_unk[i] == s[i]);

  CHECK_THROWS_AS(model.recommend({}, {0}, 0), ContractError);
}

TEST_CASE("tie-break prefers the smaller item id") {
  std::vector<std::vector<std::int32_t>> orders = {{2, 3, 4}};
  std::vector<ContextVector> ctxs = {{0}};
  auto model = CooccurrenceModel::fit(orders, ctxs, 5, {1});
  // All items tie perfectly; ranking must be id order.
  auto top = model.recommend({2}, {0}, 3);
  CHECK(top == std::vector<std::int32_t>{2, 3, 4});
}
