#include "txt/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "txt/errors.hpp"

namespace txt {

namespace {

// Civil-calendar day arithmetic (Howard Hinnant's algorithms).
std::int64_t days_from_civil(std::int64_t y, std::int64_t m, std::int64_t d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const std::int64_t yoe = y - era * 400;
  const std::int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, std::int64_t& m, std::int64_t& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const std::int64_t doe = z - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = yoe + era * 400;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

bool is_leap(std::int64_t y) { return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0); }

std::int64_t days_in_month(std::int64_t y, std::int64_t m) {
  static const std::int64_t lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return lengths[m - 1];
}

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::optional<Timestamp> parse_timestamp(const std::string& s) {
  std::string_view v(s);
  if (v.size() == 20 && v.back() == 'Z') v.remove_suffix(1);
  if (v.size() != 19 || v[4] != '-' || v[7] != '-' || v[10] != 'T' || v[13] != ':' ||
      v[16] != ':')
    return std::nullopt;
  auto field = [&](std::size_t pos, std::size_t len) -> std::int64_t {
    auto sub = v.substr(pos, len);
    if (!all_digits(sub)) return -1;
    std::int64_t out = 0;
    std::from_chars(sub.data(), sub.data() + sub.size(), out);
    return out;
  };
  const std::int64_t year = field(0, 4), month = field(5, 2), day = field(8, 2);
  const std::int64_t hour = field(11, 2), minute = field(14, 2), second = field(17, 2);
  if (year < 0 || month < 1 || month > 12 || day < 1 || hour < 0 || hour > 23 || minute < 0 ||
      minute > 59 || second < 0 || second > 59)
    return std::nullopt;
  if (day > days_in_month(year, month)) return std::nullopt;
  const std::int64_t days = days_from_civil(year, month, day);
  Timestamp t;
  t.epoch = days * 86400 + hour * 3600 + minute * 60 + second;
  t.hour = static_cast<std::int32_t>(hour);
  t.weekday = static_cast<std::int32_t>((((days % 7) + 7) + 3) % 7);
  return t;
}

std::string format_timestamp(std::int64_t epoch) {
  std::int64_t days = epoch / 86400;
  std::int64_t rem = epoch % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  std::int64_t y, m, d;
  civil_from_days(days, y, m, d);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04lld-%02lld-%02lldT%02lld:%02lld:%02lld",
                static_cast<long long>(y), static_cast<long long>(m), static_cast<long long>(d),
                static_cast<long long>(rem / 3600), static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

namespace {

const std::vector<std::string>& required_columns() {
  static const std::vector<std::string> cols = {"order_id", "timestamp", "store_id",
                                                "region",   "weather",   "temperature",
                                                "items"};
  return cols;
}

}  // namespace

ParseResult parse_transactions(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty transaction stream: no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, '\t');
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& name : required_columns())
    if (!col.count(name)) throw FormatError("missing mandatory column: " + name);

  ParseResult result;
  std::size_t lineno = 1;
  auto skip = [&](std::size_t n, const std::string& why) {
    result.skipped++;
    if (result.issues.size() < 10) result.issues.push_back({n, why});
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != header.size()) {
      skip(lineno, "expected " + std::to_string(header.size()) + " columns, got " +
                       std::to_string(fields.size()));
      continue;
    }
    TransactionRecord rec;
    rec.order_id = fields[col["order_id"]];
    rec.raw_timestamp = fields[col["timestamp"]];
    auto ts = parse_timestamp(rec.raw_timestamp);
    if (!ts) {
      skip(lineno, "unparsable timestamp '" + rec.raw_timestamp + "'");
      continue;
    }
    rec.time = *ts;
    rec.store_id = fields[col["store_id"]];
    rec.region = fields[col["region"]];
    rec.weather = fields[col["weather"]];
    const std::string& temp = fields[col["temperature"]];
    char* end = nullptr;
    rec.temperature = std::strtod(temp.c_str(), &end);
    if (temp.empty() || end != temp.c_str() + temp.size() || !std::isfinite(rec.temperature)) {
      skip(lineno, "bad temperature '" + temp + "'");
      continue;
    }
    rec.items = split(fields[col["items"]], '|');
    bool ok = !rec.items.empty();
    for (const auto& item : rec.items) ok = ok && !item.empty();
    if (!ok) {
      skip(lineno, "empty item in items list");
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

ParseResult parse_transactions_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open transactions file: " + path);
  return parse_transactions(in);
}

// ---- Vocabulary ----

Vocabulary::Vocabulary() {
  tokens_ = {kPadToken, kUnkToken};
  counts_ = {0, 0};
  index_[kPadToken] = kPadId;
  index_[kUnkToken] = kUnkId;
}

Vocabulary Vocabulary::build(const std::vector<std::pair<std::string, std::int64_t>>& counts,
                             std::int64_t min_count) {
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (const auto& [token, count] : counts) {
    if (count < min_count) continue;
    if (token.find('\t') != std::string::npos || token.find('\n') != std::string::npos)
      throw FormatError("token contains tab or newline: '" + token + "'");
    kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [token, count] : kept) {
    v.index_[token] = static_cast<std::int32_t>(v.tokens_.size());
    v.tokens_.push_back(token);
    v.counts_.push_back(count);
  }
  return v;
}

std::int32_t Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(std::int32_t id) const {
  if (id < 0 || id >= size())
    throw VocabError("id " + std::to_string(id) + " out of vocabulary of size " +
                     std::to_string(size()));
  return tokens_[static_cast<std::size_t>(id)];
}

std::int64_t Vocabulary::count_of(std::int32_t id) const {
  if (id < 0 || id >= size())
    throw VocabError("id " + std::to_string(id) + " out of vocabulary of size " +
                     std::to_string(size()));
  return counts_[static_cast<std::size_t>(id)];
}

void Vocabulary::append_text(std::string& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += std::to_string(i);
    out += '\t';
    out += tokens_[i];
    out += '\t';
    out += std::to_string(counts_[i]);
    out += '\n';
  }
}

Vocabulary Vocabulary::from_lines(const std::vector<std::string>& lines) {
  Vocabulary v;
  for (const auto& line : lines) {
    auto fields = split(line, '\t');
    if (fields.size() != 3) throw FormatError("bad vocabulary line: '" + line + "'");
    const std::int32_t id = static_cast<std::int32_t>(std::stol(fields[0]));
    if (id == kPadId || id == kUnkId) {
      if (fields[1] != v.tokens_[static_cast<std::size_t>(id)])
        throw FormatError("reserved vocabulary id " + fields[0] + " renamed to " + fields[1]);
      continue;
    }
    if (id != v.size()) throw FormatError("non-dense vocabulary id " + fields[0]);
    v.index_[fields[1]] = id;
    v.tokens_.push_back(fields[1]);
    v.counts_.push_back(std::stoll(fields[2]));
  }
  return v;
}

// ---- context bucketing ----

std::string hour_token(std::int32_t hour) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "h%02d", hour);
  return buf;
}

std::string dow_token(std::int32_t weekday) {
  static const char* names[] = {"mon", "tue", "wed", "thu", "fri", "sat", "sun"};
  if (weekday < 0 || weekday > 6)
    throw ContractError("weekday " + std::to_string(weekday) + " out of range");
  return names[weekday];
}

std::string temp_token(double temperature, const DataConfig& cfg) {
  if (cfg.temp_buckets < 1 || !(cfg.temp_hi > cfg.temp_lo))
    throw ContractError("bad temperature bucket config");
  const double width = (cfg.temp_hi - cfg.temp_lo) / cfg.temp_buckets;
  std::int32_t bucket = static_cast<std::int32_t>(std::floor((temperature - cfg.temp_lo) / width));
  bucket = std::clamp(bucket, 0, cfg.temp_buckets - 1);
  return "t" + std::to_string(bucket);
}

const Vocabulary& Vocabs::ctx_field(const std::string& name) const {
  for (const auto& [n, v] : ctx)
    if (n == name) return v;
  throw ContractError("unknown context field: " + name);
}

Vocabs build_vocabs(const std::vector<TransactionRecord>& records, const DataConfig& cfg) {
  if (records.empty()) throw ContractError("cannot build vocabularies from zero records");
  std::map<std::string, std::int64_t> item_counts;
  std::map<std::string, std::map<std::string, std::int64_t>> ctx_counts;
  for (const auto& rec : records) {
    for (const auto& item : rec.items) item_counts[item]++;
    ctx_counts["hour"][hour_token(rec.time.hour)]++;
    ctx_counts["dow"][dow_token(rec.time.weekday)]++;
    ctx_counts["temp"][temp_token(rec.temperature, cfg)]++;
    ctx_counts["weather"][rec.weather]++;
    ctx_counts["store"][rec.store_id]++;
    ctx_counts["region"][rec.region]++;
  }
  auto as_vector = [](const std::map<std::string, std::int64_t>& m) {
    return std::vector<std::pair<std::string, std::int64_t>>(m.begin(), m.end());
  };
  Vocabs out;
  out.item = Vocabulary::build(as_vector(item_counts), cfg.min_count);
  for (const auto& name : context_field_names())
    out.ctx.emplace_back(name, Vocabulary::build(as_vector(ctx_counts[name]), cfg.min_count));
  return out;
}

std::string vocabs_to_text(const Vocabs& vocabs) {
  std::string out = "[item]\n";
  vocabs.item.append_text(out);
  for (const auto& [name, vocab] : vocabs.ctx) {
    out += "[ctx:" + name + "]\n";
    vocab.append_text(out);
  }
  return out;
}

Vocabs vocabs_from_text(const std::string& text) {
  Vocabs out;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::vector<std::string> lines;
  bool item_seen = false;
  auto flush = [&]() {
    if (section.empty()) return;
    if (section == "item") {
      out.item = Vocabulary::from_lines(lines);
      item_seen = true;
    } else {
      out.ctx.emplace_back(section.substr(4), Vocabulary::from_lines(lines));
    }
    lines.clear();
  };
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      flush();
      section = line.substr(1, line.size() - 2);
      if (section != "item" && section.rfind("ctx:", 0) != 0)
        throw FormatError("unknown vocabulary section: " + line);
    } else {
      if (section.empty()) throw FormatError("vocabulary line outside any section");
      lines.push_back(line);
    }
  }
  flush();
  if (!item_seen) throw FormatError("vocabularies lack an [item] section");
  return out;
}

ContextVector encode_context(const Vocabs& vocabs, const DataConfig& cfg, const Timestamp& time,
                             const std::string& weather, double temperature,
                             const std::string& store_id, const std::string& region) {
  ContextVector ctx;
  ctx.reserve(vocabs.ctx.size());
  ctx.push_back(vocabs.ctx_field("hour").id_of(hour_token(time.hour)));
  ctx.push_back(vocabs.ctx_field("dow").id_of(dow_token(time.weekday)));
  ctx.push_back(vocabs.ctx_field("temp").id_of(temp_token(temperature, cfg)));
  ctx.push_back(vocabs.ctx_field("weather").id_of(weather));
  ctx.push_back(vocabs.ctx_field("store").id_of(store_id));
  ctx.push_back(vocabs.ctx_field("region").id_of(region));
  return ctx;
}

ExampleBuild make_examples(const std::vector<TransactionRecord>& records, const Vocabs& vocabs,
                           const DataConfig& cfg) {
  ExampleBuild out;
  for (const auto& rec : records) {
    if (rec.items.size() < 2) {
      out.dropped_single++;
      continue;
    }
    std::vector<std::int32_t> ids;
    ids.reserve(rec.items.size());
    for (const auto& item : rec.items) ids.push_back(vocabs.item.id_of(item));
    const ContextVector ctx = encode_context(vocabs, cfg, rec.time, rec.weather,
                                             rec.temperature, rec.store_id, rec.region);
    const std::size_t n = ids.size();
    const std::size_t first_label = cfg.all_prefixes ? 1 : n - 1;
    for (std::size_t label_pos = first_label; label_pos < n; ++label_pos) {
      const std::int32_t label = ids[label_pos];
      if (label == kUnkId || label == kPadId) {
        out.dropped_unk_label++;
        continue;
      }
      OrderExample ex;
      const std::size_t prefix_len = label_pos;
      const std::size_t keep = std::min<std::size_t>(prefix_len, static_cast<std::size_t>(cfg.seq_len));
      const std::size_t start = prefix_len - keep;  // most recent seq_len items
      ex.input_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(start),
                          ids.begin() + static_cast<std::ptrdiff_t>(label_pos));
      ex.input_ids.resize(static_cast<std::size_t>(cfg.seq_len), kPadId);
      ex.mask.assign(static_cast<std::size_t>(cfg.seq_len), 0);
      for (std::size_t i = 0; i < keep; ++i) ex.mask[i] = 1;
      ex.ctx = ctx;
      ex.label = label;
      validate_example(ex);
      out.examples.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<std::vector<std::uint32_t>> make_batches(std::size_t n_examples,
                                                     std::size_t batch_size, std::uint64_t seed,
                                                     std::uint64_t epoch) {
  if (batch_size < 1) throw ContractError("batch size must be at least 1");
  std::vector<std::uint32_t> order(n_examples);
  for (std::size_t i = 0; i < n_examples; ++i) order[i] = static_cast<std::uint32_t>(i);
  CounterRng rng(seed, "batch.epoch" + std::to_string(epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::uint32_t>> batches;
  for (std::size_t start = 0; start < n_examples; start += batch_size) {
    const std::size_t end = std::min(n_examples, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<TransactionRecord> filter_before(const std::vector<TransactionRecord>& records,
                                             std::int64_t cutoff_epoch) {
  std::vector<TransactionRecord> out;
  for (const auto& r : records)
    if (r.time.epoch < cutoff_epoch) out.push_back(r);
  return out;
}

std::vector<TransactionRecord> filter_from(const std::vector<TransactionRecord>& records,
                                           std::int64_t cutoff_epoch) {
  std::vector<TransactionRecord> out;
  for (const auto& r : records)
    if (r.time.epoch >= cutoff_epoch) out.push_back(r);
  return out;
}

// ---- synthetic corpus ----

std::string synth_rule_name(SynthRule rule) {
  switch (rule) {
    case SynthRule::kCopyLast:
      return "copy_last";
    case SynthRule::kLastPlusWeather:
      return "last_plus_weather";
    case SynthRule::kWeatherOnly:
      return "weather_only";
  }
  throw ContractError("unknown rule");
}

SynthRule synth_rule_from(const std::string& name) {
  if (name == "copy_last") return SynthRule::kCopyLast;
  if (name == "last_plus_weather") return SynthRule::kLastPlusWeather;
  if (name == "weather_only") return SynthRule::kWeatherOnly;
  throw FormatError("unknown synthetic rule: " + name);
}

void SynthSpec::validate() const {
  if (n_orders < 1 || n_items < 3 || basket_min < 1 || basket_max < basket_min ||
      weather_categories < 1 || stores < 1 || regions < 1)
    throw ContractError("inconsistent synthetic spec");
  if (noise < 0.0 || noise >= 1.0) throw ContractError("noise must be in [0, 1)");
  if (weather_categories > n_items)
    throw ContractError("weather categories exceed item count; rule labels would collide");
  if (end_epoch <= start_epoch) throw ContractError("synthetic time range is empty");
}

SynthSpec parse_synth_spec(std::istream& in) {
  SynthSpec spec;
  spec.start_epoch = parse_timestamp("2025-01-01T00:00:00")->epoch;
  spec.end_epoch = parse_timestamp("2025-12-31T23:59:59")->epoch;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("synth spec line " + std::to_string(lineno) + " is not key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    auto as_int = [&]() { return std::stoll(value); };
    if (key == "orders")
      spec.n_orders = as_int();
    else if (key == "items")
      spec.n_items = static_cast<std::int32_t>(as_int());
    else if (key == "basket_min")
      spec.basket_min = static_cast<std::int32_t>(as_int());
    else if (key == "basket_max")
      spec.basket_max = static_cast<std::int32_t>(as_int());
    else if (key == "weather_categories")
      spec.weather_categories = static_cast<std::int32_t>(as_int());
    else if (key == "stores")
      spec.stores = static_cast<std::int32_t>(as_int());
    else if (key == "regions")
      spec.regions = static_cast<std::int32_t>(as_int());
    else if (key == "rule")
      spec.rule = synth_rule_from(value);
    else if (key == "noise")
      spec.noise = std::stod(value);
    else if (key == "start" || key == "end") {
      auto ts = parse_timestamp(value);
      if (!ts) throw FormatError("bad timestamp in synth spec: " + value);
      (key == "start" ? spec.start_epoch : spec.end_epoch) = ts->epoch;
    } else {
      throw FormatError("unknown synth spec key: " + key);
    }
  }
  spec.validate();
  return spec;
}

SynthSpec parse_synth_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open synth spec: " + path);
  return parse_synth_spec(in);
}

std::int32_t synth_rule_label(SynthRule rule, std::int32_t last_item, std::int32_t weather,
                              std::int32_t n_items) {
  switch (rule) {
    case SynthRule::kCopyLast:
      return last_item;
    case SynthRule::kLastPlusWeather:
      return (last_item + weather) % n_items;
    case SynthRule::kWeatherOnly:
      return weather % n_items;
  }
  throw ContractError("unknown rule");
}

double synth_context_marginal_optimum(const SynthSpec& spec) {
  const double uniform_share = spec.noise / spec.n_items;
  if (spec.rule == SynthRule::kCopyLast) return (1.0 - spec.noise) + uniform_share;
  // Weather is uniform and independent of the sequence, and for a fixed
  // last item the rule maps distinct weathers to distinct labels, so the
  // best context-blind guess hits one weather slice plus noise.
  return (1.0 - spec.noise) / spec.weather_categories + uniform_share;
}

namespace {

std::string indexed_name(const char* prefix, std::int32_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
  return buf;
}

}  // namespace

std::vector<TransactionRecord> generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  CounterRng rng(seed, "synth");
  std::vector<TransactionRecord> out;
  out.reserve(static_cast<std::size_t>(spec.n_orders));
  for (std::int64_t i = 0; i < spec.n_orders; ++i) {
    TransactionRecord rec;
    rec.order_id = "o" + std::to_string(i);
    const std::int64_t span = spec.end_epoch - spec.start_epoch;
    const std::int64_t epoch = spec.start_epoch + static_cast<std::int64_t>(rng.next_below(
                                                      static_cast<std::uint64_t>(span)));
    rec.raw_timestamp = format_timestamp(epoch);
    rec.time = *parse_timestamp(rec.raw_timestamp);
    rec.store_id = indexed_name("store", static_cast<std::int32_t>(rng.next_below(
                                             static_cast<std::uint64_t>(spec.stores))));
    rec.region = indexed_name("region", static_cast<std::int32_t>(rng.next_below(
                                            static_cast<std::uint64_t>(spec.regions))));
    const std::int32_t weather = static_cast<std::int32_t>(
        rng.next_below(static_cast<std::uint64_t>(spec.weather_categories)));
    rec.weather = indexed_name("weather", weather);
    rec.temperature = rng.next_uniform(-5.0, 35.0);

    const std::int32_t len =
        spec.basket_min + static_cast<std::int32_t>(rng.next_below(
                              static_cast<std::uint64_t>(spec.basket_max - spec.basket_min + 1)));
    std::int32_t last = 0;
    for (std::int32_t j = 0; j < len; ++j) {
      last = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(spec.n_items)));
      rec.items.push_back(indexed_name("item", last));
    }
    std::int32_t label = synth_rule_label(spec.rule, last, weather, spec.n_items);
    if (spec.noise > 0.0 && rng.next_double() < spec.noise)
      label = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(spec.n_items)));
    rec.items.push_back(indexed_name("item", label));
    out.push_back(std::move(rec));
  }
  return out;
}

std::string synth_metadata_text(const SynthSpec& spec, std::uint64_t seed) {
  std::ostringstream os;
  os << "rule=" << synth_rule_name(spec.rule) << "\n";
  os << "noise=" << spec.noise << "\n";
  os << "orders=" << spec.n_orders << "\n";
  os << "items=" << spec.n_items << "\n";
  os << "weather_categories=" << spec.weather_categories << "\n";
  os << "stores=" << spec.stores << "\n";
  os << "regions=" << spec.regions << "\n";
  os << "basket_min=" << spec.basket_min << "\n";
  os << "basket_max=" << spec.basket_max << "\n";
  os << "start=" << format_timestamp(spec.start_epoch) << "\n";
  os << "end=" << format_timestamp(spec.end_epoch) << "\n";
  os << "seed=" << seed << "\n";
  os << "context_marginal_optimum=" << synth_context_marginal_optimum(spec) << "\n";
  return os.str();
}

void write_transactions_file(const std::vector<TransactionRecord>& records,
                             const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write transactions file: " + path);
  out << "order_id\ttimestamp\tstore_id\tregion\tweather\ttemperature\titems\n";
  char temp[32];
  for (const auto& rec : records) {
    std::snprintf(temp, sizeof(temp), "%.2f", rec.temperature);
    out << rec.order_id << '\t' << rec.raw_timestamp << '\t' << rec.store_id << '\t'
        << rec.region << '\t' << rec.weather << '\t' << temp << '\t';
    for (std::size_t i = 0; i < rec.items.size(); ++i) {
      if (i) out << '|';
      out << rec.items[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace txt
