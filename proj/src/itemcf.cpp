#include "txt/itemcf.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "txt/errors.hpp"

namespace txt {

CooccurrenceModel::CooccurrenceModel(std::int32_t n_items, std::vector<std::int32_t> field_cards)
    : n_items_(n_items), field_cards_(std::move(field_cards)) {
  if (n_items_ < 3) throw ContractError("item space too small for co-occurrence model");
  cooc_.assign(static_cast<std::size_t>(n_items_) * static_cast<std::size_t>(n_items_), 0.0);
  for (auto card : field_cards_) {
    if (card < 1) throw ContractError("context field cardinality must be positive");
    ctx_counts_.emplace_back(static_cast<std::size_t>(card) * static_cast<std::size_t>(n_items_),
                             0.0);
    ctx_totals_.emplace_back(static_cast<std::size_t>(card), 0.0);
  }
}

CooccurrenceModel CooccurrenceModel::fit(const std::vector<std::vector<std::int32_t>>& orders,
                                         const std::vector<ContextVector>& ctxs,
                                         std::int32_t n_items,
                                         std::vector<std::int32_t> field_cards) {
  if (orders.empty()) throw ContractError("cannot fit co-occurrence model on empty corpus");
  if (orders.size() != ctxs.size())
    throw ContractError("orders and contexts differ in length");
  CooccurrenceModel model(n_items, std::move(field_cards));
  const std::size_t n = static_cast<std::size_t>(n_items);
  for (std::size_t o = 0; o < orders.size(); ++o) {
    std::set<std::int32_t> distinct;
    for (auto id : orders[o]) {
      if (id < 0 || id >= n_items)
        throw VocabError("item id " + std::to_string(id) + " out of range in corpus");
      if (id != kPadId && id != kUnkId) distinct.insert(id);
    }
    for (auto a : distinct) {
      model.cooc_[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(a)] += 1.0;
      for (auto b : distinct)
        if (b > a) {
          model.cooc_[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)] += 1.0;
          model.cooc_[static_cast<std::size_t>(b) * n + static_cast<std::size_t>(a)] += 1.0;
        }
    }
    const auto& ctx = ctxs[o];
    if (ctx.size() != model.field_cards_.size())
      throw ContractError("context width does not match field configuration");
    for (std::size_t f = 0; f < ctx.size(); ++f) {
      const auto bucket = ctx[f];
      if (bucket < 0 || bucket >= model.field_cards_[f])
        throw VocabError("context bucket out of range in corpus");
      for (auto id : distinct)
        model.ctx_counts_[f][static_cast<std::size_t>(bucket) * n +
                             static_cast<std::size_t>(id)] += 1.0;
    }
  }
  model.rebuild_totals();
  return model;
}

void CooccurrenceModel::rebuild_totals() {
  const std::size_t n = static_cast<std::size_t>(n_items_);
  for (std::size_t f = 0; f < ctx_counts_.size(); ++f) {
    ctx_totals_[f].assign(static_cast<std::size_t>(field_cards_[f]), 0.0);
    for (std::int32_t bucket = 0; bucket < field_cards_[f]; ++bucket) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        total += ctx_counts_[f][static_cast<std::size_t>(bucket) * n + i];
      ctx_totals_[f][static_cast<std::size_t>(bucket)] = total;
    }
  }
}

double CooccurrenceModel::cooc_count(std::int32_t a, std::int32_t b) const {
  return cooc_[static_cast<std::size_t>(a) * static_cast<std::size_t>(n_items_) +
               static_cast<std::size_t>(b)];
}

double CooccurrenceModel::ctx_count(std::size_t field, std::int32_t bucket,
                                    std::int32_t item) const {
  return ctx_counts_[field][static_cast<std::size_t>(bucket) * static_cast<std::size_t>(n_items_) +
                            static_cast<std::size_t>(item)];
}

double CooccurrenceModel::sim(std::int32_t a, std::int32_t b) const {
  const double da = cooc_count(a, a), db = cooc_count(b, b);
  if (da == 0.0 || db == 0.0) return 0.0;
  return cooc_count(a, b) / std::sqrt(da * db);
}

double CooccurrenceModel::context_multiplier(std::int32_t item, const ContextVector& ctx) const {
  if (ctx.size() != field_cards_.size())
    throw ContractError("context width does not match field configuration");
  double mult = 1.0;
  for (std::size_t f = 0; f < ctx.size(); ++f) {
    const auto bucket = ctx[f];
    if (bucket < 0 || bucket >= field_cards_[f])
      throw VocabError("context bucket out of range");
    mult *= (ctx_count(f, bucket, item) + 1.0) /
            (ctx_totals_[f][static_cast<std::size_t>(bucket)] + static_cast<double>(n_items_));
  }
  return mult;
}

std::vector<double> CooccurrenceModel::scores(const std::vector<std::int32_t>& basket,
                                              const ContextVector& ctx) const {
  std::vector<std::int32_t> real;
  for (auto id : basket)
    if (id > kUnkId && id < n_items_) real.push_back(id);
  std::vector<double> out(static_cast<std::size_t>(n_items_), 0.0);
  for (std::int32_t i = 0; i < n_items_; ++i) {
    double base = 1.0;
    if (!real.empty()) {
      base = 0.0;
      for (auto b : real) base += sim(i, b);
    }
    out[static_cast<std::size_t>(i)] = base * context_multiplier(i, ctx);
  }
  return out;
}

std::vector<std::int32_t> CooccurrenceModel::recommend(const std::vector<std::int32_t>& basket,
                                                       const ContextVector& ctx,
                                                       std::int32_t k) const {
  if (k < 1) throw ContractError("k must be at least 1");
  auto s = scores(basket, ctx);
  std::vector<std::int32_t> ids;
  for (std::int32_t i = kUnkId + 1; i < n_items_; ++i) ids.push_back(i);
  std::stable_sort(ids.begin(), ids.end(), [&](std::int32_t a, std::int32_t b) {
    if (s[static_cast<std::size_t>(a)] != s[static_cast<std::size_t>(b)])
      return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)];
    return a < b;
  });
  if (static_cast<std::size_t>(k) < ids.size()) ids.resize(static_cast<std::size_t>(k));
  return ids;
}

void CooccurrenceModel::set_state(std::vector<double> cooc,
                                  std::vector<std::vector<double>> ctx_counts) {
  const std::size_t n = static_cast<std::size_t>(n_items_);
  if (cooc.size() != n * n) throw ContractError("co-occurrence matrix size mismatch");
  if (ctx_counts.size() != field_cards_.size())
    throw ContractError("context table count mismatch");
  for (std::size_t f = 0; f < ctx_counts.size(); ++f)
    if (ctx_counts[f].size() != static_cast<std::size_t>(field_cards_[f]) * n)
      throw ContractError("context table size mismatch");
  cooc_ = std::move(cooc);
  ctx_counts_ = std::move(ctx_counts);
  rebuild_totals();
}

}  // namespace txt
