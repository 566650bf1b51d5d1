#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "test_util.hpp"
#include "txt/layers.hpp"

using namespace txt;
using D = double;

namespace {

// Attention parameter pack backed by a store, bound fresh per tape.
struct AttnFixture {
  ParamStore<D> store;
  std::int64_t d;

  AttnFixture(std::int64_t dim, std::uint64_t seed) : d(dim) {
    CounterRng rng(seed, "attn-fixture");
    for (const char* name : {"wq", "wk", "wv", "wo"})
      store.add(name, Tensor<D>({d, d}, test::random_vector<D>(rng, static_cast<std::size_t>(d * d)), true));
  }

  AttnVars bind(Tape<D>& t) const {
    return AttnVars{t.leaf("wq", store.at("wq")), t.leaf("wk", store.at("wk")),
                    t.leaf("wv", store.at("wv")), t.leaf("wo", store.at("wo"))};
  }
};

}  // namespace

TEST_CASE("add_positional") {
  Tape<D> t;
  Var x = t.constant({2, 2}, {1, 2, 3, 4});
  Var zeros = t.constant({5, 2}, std::vector<D>(10, 0));
  CHECK(t.value(add_positional(t, x, zeros)) == std::vector<D>{1, 2, 3, 4});

  Var pos = t.constant({5, 2}, {10, 20, 30, 40, 0, 0, 0, 0, 0, 0});
  Var one = t.constant({1, 2}, {1, 1});
  CHECK(t.value(add_positional(t, one, pos)) == std::vector<D>{11, 21});

  Var toolong = t.constant({6, 2}, std::vector<D>(12, 0));
  CHECK_THROWS_AS(add_positional(t, toolong, pos), SequenceError);
}

TEST_CASE("attention with a single position is the projected value row") {
  AttnFixture fx(4, 21);
  Tape<D> t;
  AttnVars p = fx.bind(t);
  CounterRng rng(22, "x");
  auto xd = test::random_vector<D>(rng, 4);
  Var x = t.constant({1, 4}, xd);
  Var out = multi_head_self_attention(t, x, p, 2, 1, nullptr);
  // softmax over one element is 1, so the output is (x V) W_O.
  Var direct = t.matmul(t.matmul(x, p.wv), p.wo);
  CHECK(test::max_abs_diff(t.value(out), t.value(direct)) < 1e-12);
}

TEST_CASE("identical key rows give uniform attention and identical outputs") {
  AttnFixture fx(4, 23);
  Tape<D> t;
  AttnVars p = fx.bind(t);
  std::vector<D> row = {0.3, -1.2, 0.5, 2.0};
  std::vector<D> xd;
  for (int i = 0; i < 3; ++i) xd.insert(xd.end(), row.begin(), row.end());
  Var x = t.constant({3, 4}, xd);
  std::vector<Var> weights;
  Var out = multi_head_self_attention(t, x, p, 2, 3, nullptr, &weights);
  for (Var w : weights)
    for (double v : t.value(w)) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
  const auto& o = t.value(out);
  for (int i = 1; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(o[static_cast<std::size_t>(i * 4 + j)] ==
            doctest::Approx(o[static_cast<std::size_t>(j)]).epsilon(1e-12));
}

TEST_CASE("masked key positions get vanishing attention weight") {
  AttnFixture fx(4, 25);
  CounterRng rng(26, "x");
  Tape<D> t;
  AttnVars p = fx.bind(t);
  Var x = t.constant({3, 4}, test::random_vector<D>(rng, 12));
  Mask mask{1, 1, 0};
  std::vector<Var> weights;
  multi_head_self_attention(t, x, p, 2, 3, &mask, &weights);
  for (Var w : weights) {
    const auto& a = t.value(w);
    for (int q = 0; q < 3; ++q) CHECK(a[static_cast<std::size_t>(q * 3 + 2)] < 1e-8);
  }
}

TEST_CASE("multi-head attention matches the naive per-head oracle") {
  CounterRng rng(27, "cases");
  for (int rep = 0; rep < 20; ++rep) {
    AttnFixture fx(8, 100 + static_cast<std::uint64_t>(rep));
    auto xd = test::random_vector<D>(rng, 4 * 8);
    Mask mask{1, 1, 1, 0};
    bool use_mask = rep % 2 == 0;
    Tape<D> t;
    AttnVars p = fx.bind(t);
    Var x = t.constant({4, 8}, xd);
    Var out = multi_head_self_attention(t, x, p, 2, 4, use_mask ? &mask : nullptr);
    auto oracle = test::naive_multi_head(xd, fx.store.at("wq").data, fx.store.at("wk").data,
                                         fx.store.at("wv").data, fx.store.at("wo").data, 4, 8, 2,
                                         use_mask ? &mask : nullptr);
    CHECK(test::max_abs_diff(t.value(out), oracle) < 1e-10);
  }
}

TEST_CASE("attention mask length mismatch is a contract error") {
  AttnFixture fx(4, 29);
  Tape<D> t;
  AttnVars p = fx.bind(t);
  Var x = t.constant({3, 4}, std::vector<D>(12, 0.5));
  Mask bad{1, 1};
  CHECK_THROWS_AS(multi_head_self_attention(t, x, p, 2, 3, &bad), ContractError);
}

TEST_CASE("feed forward basics and per-position oracle") {
  Tape<D> t;
  FfnVars zero{t.constant({2, 8}, std::vector<D>(16, 0)), t.constant({8}, std::vector<D>(8, 0)),
               t.constant({8, 2}, std::vector<D>(16, 0)), t.constant({2}, std::vector<D>(2, 0))};
  Var x = t.constant({3, 2}, {1, 2, 3, 4, 5, 6});
  auto out = t.value(feed_forward(t, x, zero, D(0.01)));
  for (double v : out) CHECK(v == 0.0);

  CounterRng rng(31, "ffn");
  auto w1 = test::random_vector<D>(rng, 2 * 8);
  auto b1 = test::random_vector<D>(rng, 8);
  auto w2 = test::random_vector<D>(rng, 8 * 2);
  auto b2 = test::random_vector<D>(rng, 2);
  FfnVars p{t.constant({2, 8}, w1), t.constant({8}, b1), t.constant({8, 2}, w2),
            t.constant({2}, b2)};
  // Two identical input rows produce identical output rows.
  Var x2 = t.constant({2, 2}, {0.7, -0.3, 0.7, -0.3});
  auto o2 = t.value(feed_forward(t, x2, p, D(0.01)));
  CHECK(o2[0] == o2[2]);
  CHECK(o2[1] == o2[3]);

  auto xd = test::random_vector<D>(rng, 3 * 2);
  Var x3 = t.constant({3, 2}, xd);
  auto got = t.value(feed_forward(t, x3, p, D(0.01)));
  auto want = test::naive_feed_forward(xd, w1, b1, w2, b2, 3, 2, 8, 0.01);
  CHECK(test::max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("layer norm closed forms") {
  Tape<D> t;
  LnVars unit{t.constant({2}, {1, 1}), t.constant({2}, {0, 0})};
  // Constant row: zero variance is handled by epsilon, output is zero.
  auto flat = t.value(layer_norm(t, t.constant({1, 2}, {1, 1}), unit));
  CHECK(flat[0] == 0.0);
  CHECK(flat[1] == 0.0);

  double a = 0.75;
  auto pm = t.value(layer_norm(t, t.constant({1, 2}, {-a, a}), unit));
  double expected = a / std::sqrt(a * a + kLayerNormEps);
  CHECK(pm[0] == doctest::Approx(-expected).epsilon(1e-12));
  CHECK(pm[1] == doctest::Approx(expected).epsilon(1e-12));

  LnVars biasonly{t.constant({2}, {0, 0}), t.constant({2}, {3, -4})};
  auto b = t.value(layer_norm(t, t.constant({2, 2}, {1, 9, 2, 5}), biasonly));
  CHECK(b == std::vector<D>{3, -4, 3, -4});

  CounterRng rng(33, "ln");
  auto xd = test::random_vector<D>(rng, 3 * 4);
  auto gd = test::random_vector<D>(rng, 4);
  auto bd = test::random_vector<D>(rng, 4);
  LnVars p{t.constant({4}, gd), t.constant({4}, bd)};
  auto got = t.value(layer_norm(t, t.constant({3, 4}, xd), p));
  auto want = test::naive_layer_norm(xd, gd, bd, 3, 4, kLayerNormEps);
  CHECK(test::max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("mean-max pooling formula and properties") {
  Tape<D> t;
  // Single real row pools to concat(v, v).
  Var x1 = t.constant({2, 2}, {4, -1, 99, 99});
  CHECK(t.value(mean_max_pool(t, x1, Mask{1, 0})) == std::vector<D>{4, -1, 4, -1});

  Var x2 = t.constant({2, 2}, {1, 5, 3, 1});
  CHECK(t.value(mean_max_pool(t, x2, Mask{1, 1})) == std::vector<D>{2, 3, 3, 5});

  // Appending a padded row never changes the output.
  Var x3 = t.constant({3, 2}, {1, 5, 3, 1, 77, -77});
  CHECK(t.value(mean_max_pool(t, x3, Mask{1, 1, 0})) == std::vector<D>{2, 3, 3, 5});

  // Permutation invariance over real rows, against the formula oracle.
  CounterRng rng(35, "pool");
  for (int rep = 0; rep < 30; ++rep) {
    auto xd = test::random_vector<D>(rng, 4 * 3);
    Mask mask{1, 1, 1, 1};
    auto want = test::naive_mean_max_pool(xd, mask, 4, 3);
    auto got = t.value(mean_max_pool(t, t.constant({4, 3}, xd), mask));
    CHECK(test::max_abs_diff(got, want) < 1e-12);

    std::vector<int> perm{0, 1, 2, 3};
    rng.shuffle(perm);
    std::vector<D> shuffled(xd.size());
    for (int i = 0; i < 4; ++i)
      std::copy_n(xd.begin() + perm[static_cast<std::size_t>(i)] * 3, 3,
                  shuffled.begin() + i * 3);
    auto got2 = t.value(mean_max_pool(t, t.constant({4, 3}, shuffled), mask));
    CHECK(test::max_abs_diff(got, got2) < 1e-12);
  }
}

TEST_CASE("encoder block gradients pass finite differences") {
  CounterRng rng(37, "block");
  ParamStore<D> params;
  const std::int64_t d = 4, dff = 8;
  auto addm = [&](const std::string& n, std::int64_t r, std::int64_t c) {
    params.add(n, Tensor<D>({r, c}, test::random_vector<D>(rng, static_cast<std::size_t>(r * c), -0.5, 0.5), true));
  };
  addm("wq", d, d);
  addm("wk", d, d);
  addm("wv", d, d);
  addm("wo", d, d);
  params.add("g1", Tensor<D>({d}, test::random_vector<D>(rng, 4, 0.8, 1.2), true));
  params.add("b1", Tensor<D>({d}, test::random_vector<D>(rng, 4, -0.1, 0.1), true));
  addm("w1", d, dff);
  params.add("fb1", Tensor<D>({dff}, test::random_vector<D>(rng, 8, -0.1, 0.1), true));
  addm("w2", dff, d);
  params.add("fb2", Tensor<D>({d}, test::random_vector<D>(rng, 4, -0.1, 0.1), true));
  params.add("g2", Tensor<D>({d}, test::random_vector<D>(rng, 4, 0.8, 1.2), true));
  params.add("b2", Tensor<D>({d}, test::random_vector<D>(rng, 4, -0.1, 0.1), true));

  auto xd = test::random_vector<D>(rng, 3 * 4);
  Mask mask{1, 1, 0};

  auto build = [&](Tape<D>& t) {
    BlockVars blk;
    blk.attn = {t.leaf("wq", params.at("wq")), t.leaf("wk", params.at("wk")),
                t.leaf("wv", params.at("wv")), t.leaf("wo", params.at("wo"))};
    blk.ln1 = {t.leaf("g1", params.at("g1")), t.leaf("b1", params.at("b1"))};
    blk.ffn = {t.leaf("w1", params.at("w1")), t.leaf("fb1", params.at("fb1")),
               t.leaf("w2", params.at("w2")), t.leaf("fb2", params.at("fb2"))};
    blk.ln2 = {t.leaf("g2", params.at("g2")), t.leaf("b2", params.at("b2"))};
    Var x = t.constant({3, 4}, xd);
    Var h = encoder_block(t, x, blk, 2, 3, D(0.01), &mask);
    Var pooled = mean_max_pool(t, h, mask);
    return t.sum_all(t.mul(pooled, pooled));
  };

  Tape<D> t;
  t.backward(build(t));
  auto grads = t.grads_by_name();
  auto loss = [&]() {
    Tape<D> t2;
    return t2.value(build(t2))[0];
  };
  auto report = test::finite_difference_check(params, grads, loss);
  INFO(report.worst_param, "[", report.worst_index, "]");
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("batched attention equals per-example attention") {
  AttnFixture fx(4, 41);
  CounterRng rng(42, "batch");
  auto x0 = test::random_vector<D>(rng, 3 * 4);
  auto x1 = test::random_vector<D>(rng, 3 * 4);
  Mask m0{1, 1, 0}, m1{1, 0, 0};

  Tape<D> t;
  AttnVars p = fx.bind(t);
  std::vector<D> stacked = x0;
  stacked.insert(stacked.end(), x1.begin(), x1.end());
  Mask both{1, 1, 0, 1, 0, 0};
  Var batch_out = multi_head_self_attention(t, t.constant({6, 4}, stacked), p, 2, 3, &both);

  Var a0 = multi_head_self_attention(t, t.constant({3, 4}, x0), p, 2, 3, &m0);
  Var a1 = multi_head_self_attention(t, t.constant({3, 4}, x1), p, 2, 3, &m1);
  const auto& got = t.value(batch_out);
  CHECK(test::max_abs_diff(std::span<const D>(got).subspan(0, 12), t.value(a0)) < 1e-12);
  CHECK(test::max_abs_diff(std::span<const D>(got).subspan(12, 12), t.value(a1)) < 1e-12);
}
