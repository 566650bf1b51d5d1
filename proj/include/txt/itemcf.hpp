#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "txt/example.hpp"

// Contextual item-based collaborative filtering: within-order co-occurrence
// counts with cosine normalization, multiplied by an add-1-smoothed
// per-context-bucket item popularity.

namespace txt {

class CooccurrenceModel {
 public:
  CooccurrenceModel() = default;
  CooccurrenceModel(std::int32_t n_items, std::vector<std::int32_t> field_cards);

  // orders: item ids per order (full orders, label item included); ctxs: the
  // matching context ids. Duplicate items within an order count once.
  static CooccurrenceModel fit(const std::vector<std::vector<std::int32_t>>& orders,
                               const std::vector<ContextVector>& ctxs, std::int32_t n_items,
                               std::vector<std::int32_t> field_cards);

  std::int32_t n_items() const { return n_items_; }
  const std::vector<std::int32_t>& field_cards() const { return field_cards_; }

  double cooc_count(std::int32_t a, std::int32_t b) const;
  double ctx_count(std::size_t field, std::int32_t bucket, std::int32_t item) const;

  // Cosine-normalized similarity; 0 when either item never occurs.
  double sim(std::int32_t a, std::int32_t b) const;

  // Smoothed popularity multiplier for one item under the given context.
  double context_multiplier(std::int32_t item, const ContextVector& ctx) const;

  // score(i) = sum of sim(i, b) over real basket ids, times the context
  // multiplier; an empty basket ranks by the multiplier alone. PAD/UNK in
  // the basket contribute nothing.
  std::vector<double> scores(const std::vector<std::int32_t>& basket,
                             const ContextVector& ctx) const;

  // Top-k real items by score, ties broken by the smaller id.
  std::vector<std::int32_t> recommend(const std::vector<std::int32_t>& basket,
                                      const ContextVector& ctx, std::int32_t k) const;

  // Raw state access for persistence.
  const std::vector<double>& cooc_matrix() const { return cooc_; }
  const std::vector<std::vector<double>>& ctx_tables() const { return ctx_counts_; }
  void set_state(std::vector<double> cooc, std::vector<std::vector<double>> ctx_counts);

 private:
  std::int32_t n_items_ = 0;
  std::vector<std::int32_t> field_cards_;
  std::vector<double> cooc_;                    // n x n; diagonal = order frequency
  std::vector<std::vector<double>> ctx_counts_; // per field: cardinality x n
  std::vector<std::vector<double>> ctx_totals_; // per field: cardinality

  void rebuild_totals();
};

}  // namespace txt
