#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "test_util.hpp"
#include "txt/metrics.hpp"

using namespace txt;

namespace {

// Independent full-sort oracle: stable sort ids by (score desc, id asc),
// then membership of the label in the first k.
bool oracle_top_k(const std::vector<double>& row, std::int32_t label, std::int32_t k,
                  const std::vector<std::int32_t>& exclude) {
  std::vector<std::int32_t> ids;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const auto id = static_cast<std::int32_t>(i);
    if (std::find(exclude.begin(), exclude.end(), id) == exclude.end()) ids.push_back(id);
  }
  std::stable_sort(ids.begin(), ids.end(), [&](std::int32_t a, std::int32_t b) {
    if (row[static_cast<std::size_t>(a)] != row[static_cast<std::size_t>(b)])
      return row[static_cast<std::size_t>(a)] > row[static_cast<std::size_t>(b)];
    return a < b;
  });
  const auto end = ids.begin() + std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(ids.size()));
  return std::find(ids.begin(), end, label) != end;
}

}  // namespace

TEST_CASE("label at argmax is a hit for every k") {
  std::vector<std::vector<double>> rows = {{0.1, 0.9, 0.2}, {5, 1, 2}};
  std::vector<std::int32_t> labels = {1, 0};
  for (int k = 1; k <= 3; ++k) CHECK(top_k_accuracy(rows, labels, k) == 1.0);
}

TEST_CASE("uniform logits break ties by smaller id") {
  // Four candidates, all tied: ranking is 0, 1, 2, 3. Label 3 misses top-3.
  std::vector<std::vector<double>> rows = {{1.0, 1.0, 1.0, 1.0}};
  CHECK(top_k_accuracy(rows, {3}, 3) == 0.0);
  CHECK(top_k_accuracy(rows, {2}, 3) == 1.0);
  CHECK(top_k_accuracy(rows, {3}, 4) == 1.0);
}

TEST_CASE("excluded ids never rank and never hit") {
  std::vector<std::vector<double>> rows = {{9.0, 8.0, 1.0, 2.0}};
  // PAD and UNK hold the two highest scores but are excluded.
  CHECK(top_k_accuracy<double>(rows, {3}, 1, reserved_ids()) == 1.0);
  CHECK(top_k_accuracy<double>(rows, {2}, 1, reserved_ids()) == 0.0);
  // An excluded label can never be a hit.
  CHECK(top_k_accuracy<double>(rows, {0}, 4, reserved_ids()) == 0.0);
}

TEST_CASE("matches the full-sort oracle on random rows") {
  CounterRng rng(5, "rows");
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t v = 8;
    std::vector<double> row(v);
    for (auto& x : row) x = static_cast<double>(rng.next_below(5));  // force ties
    auto label = static_cast<std::int32_t>(rng.next_below(v));
    for (std::int32_t k = 1; k <= 4; ++k) {
      std::vector<std::vector<double>> rows = {row};
      bool with_exclude = rep % 2 == 0;
      std::vector<std::int32_t> exclude =
          with_exclude ? std::vector<std::int32_t>{kPadId, kUnkId} : std::vector<std::int32_t>{};
      double got = top_k_accuracy(rows, {label}, k, exclude);
      CHECK(got == (oracle_top_k(row, label, k, exclude) ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("accuracy is monotone in k and hits 1.0 at k = V") {
  CounterRng rng(7, "mono");
  std::vector<std::vector<double>> rows;
  std::vector<std::int32_t> labels;
  for (int i = 0; i < 40; ++i) {
    rows.push_back(test::random_vector<double>(rng, 10));
    labels.push_back(static_cast<std::int32_t>(rng.next_below(10)));
  }
  double prev = 0;
  for (std::int32_t k = 1; k <= 10; ++k) {
    double acc = top_k_accuracy(rows, labels, k);
    CHECK(acc >= prev);
    prev = acc;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("rank-preserving transforms leave accuracy unchanged") {
  CounterRng rng(9, "xform");
  std::vector<std::vector<double>> rows, shifted;
  std::vector<std::int32_t> labels;
  for (int i = 0; i < 30; ++i) {
    auto row = test::random_vector<double>(rng, 12);
    auto moved = row;
    const double c = rng.next_uniform(-50, 50);
    for (auto& x : moved) x = 2.0 * x + c;  // strictly increasing map
    rows.push_back(row);
    shifted.push_back(moved);
    labels.push_back(static_cast<std::int32_t>(rng.next_below(12)));
  }
  for (std::int32_t k : {1, 3, 5})
    CHECK(top_k_accuracy(rows, labels, k) == top_k_accuracy(shifted, labels, k));
}

TEST_CASE("empty input is a contract error") {
  std::vector<std::vector<double>> empty;
  CHECK_THROWS_AS(top_k_accuracy(empty, {}, 1), ContractError);
}

TEST_CASE("evaluate aggregates per-example hits") {
  std::vector<OrderExample> examples;
  for (int i = 0; i < 4; ++i) {
    OrderExample ex;
    ex.input_ids = {2, 0, 0};
    ex.mask = {1, 0, 0};
    ex.label = 2 + i % 2;  // labels 2, 3, 2, 3
    examples.push_back(ex);
  }
  auto scorer = [](const OrderExample&) {
    return std::vector<double>{0, 0, 3.0, 2.0, 1.0};  // ranks: 2, 3, 4
  };
  auto report = evaluate(scorer, examples, {1, 3}, reserved_ids(), "toy");
  CHECK(report.n_examples == 4);
  CHECK(report.top1() == 0.5);   // label 2 hits, label 3 misses at k=1
  CHECK(report.at_k(3) == 1.0);
  CHECK(report.top1() <= report.at_k(3));

  auto text = report.to_text();
  CHECK(text.find("model=toy k=1 accuracy=0.5 n=4") != std::string::npos);
  CHECK_THROWS_AS(report.at_k(2), ContractError);
}

TEST_CASE("single correct example reports ones") {
  std::vector<OrderExample> one(1);
  one[0].input_ids = {2};
  one[0].mask = {1};
  one[0].label = 4;
  auto scorer = [](const OrderExample&) { return std::vector<double>{0, 0, 0, 0, 9}; };
  auto report = evaluate(scorer, one, {1, 3}, reserved_ids(), "unit");
  CHECK(report.top1() == 1.0);
  CHECK(report.at_k(3) == 1.0);
  CHECK(report.n_examples == 1);
}
