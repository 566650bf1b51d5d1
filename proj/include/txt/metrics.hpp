#pragma once

#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "txt/errors.hpp"
#include "txt/example.hpp"

// Offline evaluation: Top-k accuracy with deterministic smaller-id
// tie-breaking, aggregated into a serializable report.

namespace txt {

struct EvalReport {
  std::string model_id;
  std::int64_t n_examples = 0;
  std::vector<std::pair<std::int32_t, double>> per_k;  // (k, accuracy), k ascending

  double at_k(std::int32_t k) const {
    for (const auto& [kk, acc] : per_k)
      if (kk == k) return acc;
    throw ContractError("no accuracy recorded for k=" + std::to_string(k));
  }
  double top1() const { return at_k(1); }
  double top3() const { return at_k(3); }

  std::string to_text() const {
    std::ostringstream os;
    for (const auto& [k, acc] : per_k)
      os << "model=" << model_id << " k=" << k << " accuracy=" << acc
         << " n=" << n_examples << "\n";
    return os.str();
  }
};

// True when the label ranks within the top k of its row. A row's ranking
// orders by score descending, then by smaller id; excluded ids never rank.
template <class R>
bool label_in_top_k(std::span<const R> row, std::int32_t label, std::int32_t k,
                    std::span<const std::int32_t> exclude = {}) {
  if (label < 0 || static_cast<std::size_t>(label) >= row.size())
    throw VocabError("label " + std::to_string(label) + " outside score row");
  for (auto e : exclude)
    if (e == label) return false;
  const R label_score = row[static_cast<std::size_t>(label)];
  std::int32_t ahead = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    const auto id = static_cast<std::int32_t>(j);
    if (id == label) continue;
    bool excluded = false;
    for (auto e : exclude) excluded = excluded || (e == id);
    if (excluded) continue;
    if (row[j] > label_score || (row[j] == label_score && id < label)) ++ahead;
  }
  return ahead < k;
}

template <class R>
double top_k_accuracy(const std::vector<std::vector<R>>& rows,
                      const std::vector<std::int32_t>& labels, std::int32_t k,
                      std::span<const std::int32_t> exclude = {}) {
  if (rows.empty()) throw ContractError("top-k accuracy over zero rows");
  if (rows.size() != labels.size())
    throw ContractError("rows and labels differ in length");
  if (k < 1) throw ContractError("k must be at least 1");
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (label_in_top_k<R>(rows[i], labels[i], k, exclude)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

// Scores every example through `scorer` (example -> score vector) and
// aggregates accuracy at each requested k. PAD and UNK are never
// legitimate recommendations; pass them in `exclude`.
template <class Scorer>
EvalReport evaluate(Scorer&& scorer, const std::vector<OrderExample>& examples,
                    std::vector<std::int32_t> ks, std::span<const std::int32_t> exclude,
                    std::string model_id) {
  if (examples.empty()) throw ContractError("evaluation set is empty");
  EvalReport report;
  report.model_id = std::move(model_id);
  report.n_examples = static_cast<std::int64_t>(examples.size());
  std::sort(ks.begin(), ks.end());
  std::vector<std::int64_t> hits(ks.size(), 0);
  for (const auto& ex : examples) {
    auto row = scorer(ex);
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (label_in_top_k(std::span<const typename decltype(row)::value_type>(row), ex.label,
                         ks[i], exclude))
        hits[i]++;
  }
  for (std::size_t i = 0; i < ks.size(); ++i)
    report.per_k.emplace_back(ks[i],
                              static_cast<double>(hits[i]) / static_cast<double>(examples.size()));
  return report;
}

inline const std::vector<std::int32_t>& reserved_ids() {
  static const std::vector<std::int32_t> ids = {kPadId, kUnkId};
  return ids;
}

}  // namespace txt
