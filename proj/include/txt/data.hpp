#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "txt/example.hpp"
#include "txt/rng.hpp"

// Transaction ingestion, vocabularies, example construction, batching and
// the synthetic-corpus generator used by the acceptance suite.
//
// Input format (see docs/FORMATS.md): UTF-8, tab-delimited, header row with
// at least order_id, timestamp, store_id, region, weather, temperature,
// items. The items column is '|'-separated item names in add-to-cart order;
// timestamps are ISO-8601 seconds ("2025-07-01T12:30:00", optional 'Z').

namespace txt {

struct Timestamp {
  std::int64_t epoch = 0;  // seconds since 1970-01-01, naive
  std::int32_t hour = 0;   // 0..23
  std::int32_t weekday = 0;  // 0 = Monday .. 6 = Sunday
};

// Parses the ISO-8601 form above; returns nullopt on malformed input.
std::optional<Timestamp> parse_timestamp(const std::string& s);
std::string format_timestamp(std::int64_t epoch);

struct TransactionRecord {
  std::string order_id;
  std::string raw_timestamp;
  Timestamp time;
  std::string store_id;
  std::string region;
  std::string weather;
  double temperature = 0.0;
  std::vector<std::string> items;  // add-to-cart order, at least one
};

struct ParseIssue {
  std::size_t line = 0;
  std::string reason;
};

struct ParseResult {
  std::vector<TransactionRecord> records;
  std::size_t skipped = 0;
  std::vector<ParseIssue> issues;  // first few skipped lines, for reporting
};

// Malformed rows are skipped and counted; a missing mandatory column is a
// fatal FormatError.
ParseResult parse_transactions(std::istream& in);
ParseResult parse_transactions_file(const std::string& path);

class Vocabulary {
 public:
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary();

  // Tokens with count >= min_count get dense ids from 2, ordered by
  // descending frequency then lexically.
  static Vocabulary build(const std::vector<std::pair<std::string, std::int64_t>>& counts,
                          std::int64_t min_count);

  std::int32_t id_of(const std::string& token) const;  // UNK when absent
  const std::string& token_of(std::int32_t id) const;  // throws VocabError out of range
  std::int64_t count_of(std::int32_t id) const;
  std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }

  void append_text(std::string& out) const;  // id \t token \t count lines
  static Vocabulary from_lines(const std::vector<std::string>& lines);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Fixed context schema, in stacking order.
inline const std::vector<std::string>& context_field_names() {
  static const std::vector<std::string> names = {"hour", "dow", "temp",
                                                 "weather", "store", "region"};
  return names;
}

struct DataConfig {
  std::int32_t seq_len = 5;
  std::int64_t min_count = 1;
  double temp_lo = -10.0;  // bucket range, degrees; values clamp at the ends
  double temp_hi = 40.0;
  std::int32_t temp_buckets = 8;
  bool all_prefixes = false;  // opt-in: one example per prefix, not per order
};

struct Vocabs {
  Vocabulary item;
  std::vector<std::pair<std::string, Vocabulary>> ctx;  // ordered per schema

  const Vocabulary& ctx_field(const std::string& name) const;
};

std::string hour_token(std::int32_t hour);
std::string dow_token(std::int32_t weekday);
std::string temp_token(double temperature, const DataConfig& cfg);

Vocabs build_vocabs(const std::vector<TransactionRecord>& records, const DataConfig& cfg);

// Text form used by the bundle's vocab section and the preprocess output:
// an [item] section followed by one [ctx:<field>] section per context
// field, each holding "id \t token \t count" lines.
std::string vocabs_to_text(const Vocabs& vocabs);
Vocabs vocabs_from_text(const std::string& text);

// Raw context values -> ordered context ids under the schema. Unknown
// categories resolve to UNK.
ContextVector encode_context(const Vocabs& vocabs, const DataConfig& cfg, const Timestamp& time,
                             const std::string& weather, double temperature,
                             const std::string& store_id, const std::string& region);

struct ExampleBuild {
  std::vector<OrderExample> examples;
  std::size_t dropped_single = 0;     // one-item orders: no input prefix
  std::size_t dropped_unk_label = 0;  // label below min_count
};

// One example per order: input = all items but the last (most recent
// seq_len kept), label = last item. With all_prefixes, every prefix of
// length >= 1 yields an example.
ExampleBuild make_examples(const std::vector<TransactionRecord>& records, const Vocabs& vocabs,
                           const DataConfig& cfg);

// Seeded shuffle into fixed-size index batches; the final short batch is
// kept. Identical seeds give identical iteration order.
std::vector<std::vector<std::uint32_t>> make_batches(std::size_t n_examples,
                                                     std::size_t batch_size, std::uint64_t seed,
                                                     std::uint64_t epoch = 0);

std::vector<TransactionRecord> filter_before(const std::vector<TransactionRecord>& records,
                                             std::int64_t cutoff_epoch);
std::vector<TransactionRecord> filter_from(const std::vector<TransactionRecord>& records,
                                           std::int64_t cutoff_epoch);

// ---- synthetic corpus ----

enum class SynthRule { kCopyLast, kLastPlusWeather, kWeatherOnly };

std::string synth_rule_name(SynthRule rule);
SynthRule synth_rule_from(const std::string& name);

// Planted-rule generator spec, parsed from a key=value file.
struct SynthSpec {
  std::int64_t n_orders = 1000;
  std::int32_t n_items = 20;
  std::int32_t basket_min = 1;  // input items before the label
  std::int32_t basket_max = 4;
  std::int32_t weather_categories = 4;
  std::int32_t stores = 5;
  std::int32_t regions = 3;
  SynthRule rule = SynthRule::kLastPlusWeather;
  double noise = 0.0;  // probability the label is replaced uniformly
  std::int64_t start_epoch = 0;  // defaults set by parse
  std::int64_t end_epoch = 0;

  void validate() const;
};

SynthSpec parse_synth_spec(std::istream& in);
SynthSpec parse_synth_spec_file(const std::string& path);

// The label an un-noised rule assigns given the last input item index and
// the weather index; exposed so tests can reason about the plant.
std::int32_t synth_rule_label(SynthRule rule, std::int32_t last_item, std::int32_t weather,
                              std::int32_t n_items);

// Best possible Top-1 accuracy for a predictor that sees the item sequence
// but not the context, under the planted rule with uniform weather.
double synth_context_marginal_optimum(const SynthSpec& spec);

std::vector<TransactionRecord> generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

// Rule and bound documented alongside the generated corpus.
std::string synth_metadata_text(const SynthSpec& spec, std::uint64_t seed);

void write_transactions_file(const std::vector<TransactionRecord>& records,
                             const std::string& path);

}  // namespace txt
