#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "txt/data.hpp"
#include "txt/errors.hpp"

using namespace txt;

namespace {

const char* kHeader = "order_id\ttimestamp\tstore_id\tregion\tweather\ttemperature\titems\n";

std::string row(const std::string& id, const std::string& ts, const std::string& items,
                const std::string& weather = "clear", const std::string& temp = "21.5") {
  return id + "\t" + ts + "\ts1\tr1\t" + weather + "\t" + temp + "\t" + items + "\n";
}

}  // namespace

TEST_CASE("timestamp parsing and weekday") {
  auto t = parse_timestamp("2025-07-04T13:45:30");
  REQUIRE(t.has_value());
  CHECK(t->hour == 13);
  CHECK(t->weekday == 4);  // 2025-07-04 is a Friday
  CHECK(format_timestamp(t->epoch) == "2025-07-04T13:45:30");

  CHECK(parse_timestamp("2025-07-04T13:45:30Z").has_value());
  CHECK(parse_timestamp("1970-01-01T00:00:00")->weekday == 3);  // Thursday
  CHECK_FALSE(parse_timestamp("2025-02-30T00:00:00").has_value());
  CHECK_FALSE(parse_timestamp("2025-07-04 13:45:30").has_value());
  CHECK_FALSE(parse_timestamp("not-a-time").has_value());
}

TEST_CASE("well-formed rows parse; malformed rows are counted and skipped") {
  std::istringstream in(std::string(kHeader) +
                        row("o1", "2025-01-02T09:00:00", "burger|fries") +
                        row("o2", "2025-01-02T10:30:00", "shake"));
  auto result = parse_transactions(in);
  CHECK(result.records.size() == 2);
  CHECK(result.skipped == 0);
  CHECK(result.records[0].items == std::vector<std::string>{"burger", "fries"});

  std::istringstream bad(std::string(kHeader) +
                         row("o1", "garbage", "burger") +
                         row("o2", "2025-01-02T10:30:00", "shake") +
                         row("o3", "2025-01-02T11:00:00", "cola", "rain", "hot") +
                         row("o4", "2025-01-02T12:00:00", "fries|"));
  auto r2 = parse_transactions(bad);
  CHECK(r2.records.size() == 1);
  CHECK(r2.skipped == 3);
  CHECK(r2.issues.size() == 3);
  CHECK(r2.issues[0].line == 2);
}

TEST_CASE("missing mandatory column is fatal") {
  std::istringstream in("order_id\ttimestamp\tstore_id\tregion\tweather\ttemperature\n");
  CHECK_THROWS_AS(parse_transactions(in), FormatError);
}

TEST_CASE("vocabulary build: frequency order, lexical tie-break, min_count") {
  auto v = Vocabulary::build({{"b", 3}, {"a", 3}, {"c", 9}, {"rare", 1}}, 2);
  CHECK(v.id_of("c") == 2);
  CHECK(v.id_of("a") == 3);  // ties go to the lexically smaller token
  CHECK(v.id_of("b") == 4);
  CHECK(v.id_of("rare") == kUnkId);
  CHECK(v.id_of("never-seen") == kUnkId);
  CHECK(v.size() == 5);

  // Round-trip through text.
  std::string text;
  v.append_text(text);
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  auto v2 = Vocabulary::from_lines(lines);
  CHECK(v2.size() == v.size());
  for (std::int32_t id = 2; id < v.size(); ++id) {
    CHECK(v2.token_of(id) == v.token_of(id));
    CHECK(v2.id_of(v2.token_of(id)) == id);
  }
}

TEST_CASE("min_count=1 keeps every distinct token") {
  auto v = Vocabulary::build({{"x", 1}, {"y", 1}}, 1);
  CHECK(v.size() == 4);
  CHECK(v.id_of("x") == 2);
  CHECK(v.id_of("y") == 3);
}

TEST_CASE("example construction follows the last-item rule") {
  std::istringstream in(std::string(kHeader) +
                        row("o1", "2025-03-01T12:00:00", "a|b|c") +
                        row("o2", "2025-03-01T13:00:00", "a") +
                        row("o3", "2025-03-01T14:00:00", "p1|p2|p3|p4|p5|p6|p7"));
  auto parsed = parse_transactions(in);
  DataConfig cfg;
  auto vocabs = build_vocabs(parsed.records, cfg);
  auto built = make_examples(parsed.records, vocabs, cfg);

  CHECK(built.dropped_single == 1);
  REQUIRE(built.examples.size() == 2);

  const auto& ex = built.examples[0];
  CHECK(ex.input_ids[0] == vocabs.item.id_of("a"));
  CHECK(ex.input_ids[1] == vocabs.item.id_of("b"));
  CHECK(ex.input_ids[2] == kPadId);
  CHECK(ex.mask == Mask{1, 1, 0, 0, 0});
  CHECK(ex.label == vocabs.item.id_of("c"));

  // Seven items, seq_len 5: input is items 2..6, label is item 7.
  const auto& seven = built.examples[1];
  for (int i = 0; i < 5; ++i)
    CHECK(seven.input_ids[static_cast<std::size_t>(i)] ==
          vocabs.item.id_of("p" + std::to_string(i + 2)));
  CHECK(seven.label == vocabs.item.id_of("p7"));
}

TEST_CASE("labels below min_count are dropped") {
  std::istringstream in(std::string(kHeader) +
                        row("o1", "2025-03-01T12:00:00", "a|b|zzz") +
                        row("o2", "2025-03-01T13:00:00", "a|b") +
                        row("o3", "2025-03-01T14:00:00", "b|a") +
                        row("o4", "2025-03-01T15:00:00", "a|b"));
  auto parsed = parse_transactions(in);
  DataConfig cfg;
  cfg.min_count = 2;
  auto vocabs = build_vocabs(parsed.records, cfg);
  auto built = make_examples(parsed.records, vocabs, cfg);
  CHECK(built.dropped_unk_label == 1);
  CHECK(built.examples.size() == 3);
  for (const auto& ex : built.examples) validate_example(ex);
}

TEST_CASE("all-prefix augmentation") {
  std::istringstream in(std::string(kHeader) + row("o1", "2025-03-01T12:00:00", "a|b|c"));
  auto parsed = parse_transactions(in);
  DataConfig cfg;
  cfg.all_prefixes = true;
  auto vocabs = build_vocabs(parsed.records, cfg);
  auto built = make_examples(parsed.records, vocabs, cfg);
  CHECK(built.examples.size() == 2);  // (a -> b) and (a, b -> c)
  CHECK(built.examples[0].label == vocabs.item.id_of("b"));
  CHECK(built.examples[1].label == vocabs.item.id_of("c"));
}

TEST_CASE("ingestion is deterministic") {
  const std::string text = std::string(kHeader) +
                           row("o1", "2025-03-01T12:00:00", "a|b|c", "rain", "3.5") +
                           row("o2", "2025-03-02T09:30:00", "c|b", "snow", "-2.0");
  DataConfig cfg;
  std::istringstream in1(text), in2(text);
  auto p1 = parse_transactions(in1), p2 = parse_transactions(in2);
  auto v1 = build_vocabs(p1.records, cfg), v2 = build_vocabs(p2.records, cfg);
  auto b1 = make_examples(p1.records, v1, cfg), b2 = make_examples(p2.records, v2, cfg);
  REQUIRE(b1.examples.size() == b2.examples.size());
  for (std::size_t i = 0; i < b1.examples.size(); ++i) {
    CHECK(b1.examples[i].input_ids == b2.examples[i].input_ids);
    CHECK(b1.examples[i].ctx == b2.examples[i].ctx);
    CHECK(b1.examples[i].label == b2.examples[i].label);
  }
}

TEST_CASE("batching: sizes, determinism, seed sensitivity") {
  auto batches = make_batches(10, 4, 7);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);

  auto again = make_batches(10, 4, 7);
  CHECK(batches == again);

  auto other = make_batches(200, 16, 8);
  auto other2 = make_batches(200, 16, 9);
  CHECK(other != other2);

  // Every index appears exactly once.
  std::vector<int> seen(10, 0);
  for (const auto& b : batches)
    for (auto i : b) seen[i]++;
  for (int c : seen) CHECK(c == 1);

  CHECK_THROWS_AS(make_batches(10, 0, 1), ContractError);
}

TEST_CASE("temperature bucketing clamps at the ends") {
  DataConfig cfg;  // -10..40 in 8 buckets
  CHECK(temp_token(-100.0, cfg) == "t0");
  CHECK(temp_token(100.0, cfg) == "t7");
  CHECK(temp_token(-10.0, cfg) == "t0");
  CHECK(temp_token(39.9, cfg) == "t7");
  CHECK(temp_token(0.0, cfg) == "t1");
}

TEST_CASE("synthetic copy-last plant: label equals last input item") {
  SynthSpec spec;
  spec.n_orders = 500;
  spec.n_items = 12;
  spec.rule = SynthRule::kCopyLast;
  spec.noise = 0.0;
  spec.start_epoch = parse_timestamp("2025-01-01T00:00:00")->epoch;
  spec.end_epoch = parse_timestamp("2025-12-31T23:59:59")->epoch;
  auto records = generate_synthetic(spec, 42);
  REQUIRE(records.size() == 500);
  for (const auto& rec : records) {
    REQUIRE(rec.items.size() >= 2);
    CHECK(rec.items.back() == rec.items[rec.items.size() - 2]);
  }
  CHECK(synth_context_marginal_optimum(spec) == doctest::Approx(1.0));
}

TEST_CASE("synthetic weather-only plant: label is a function of weather") {
  SynthSpec spec;
  spec.n_orders = 400;
  spec.n_items = 10;
  spec.weather_categories = 4;
  spec.rule = SynthRule::kWeatherOnly;
  spec.noise = 0.0;
  spec.start_epoch = 0;
  spec.end_epoch = 86400 * 365;
  auto records = generate_synthetic(spec, 7);
  std::map<std::string, std::string> label_by_weather;
  for (const auto& rec : records) {
    auto [it, fresh] = label_by_weather.emplace(rec.weather, rec.items.back());
    if (!fresh) CHECK(it->second == rec.items.back());
  }
  CHECK(synth_context_marginal_optimum(spec) == doctest::Approx(0.25));
}

TEST_CASE("synthetic mixed rule: noisy labels appear at the configured rate") {
  SynthSpec spec;
  spec.n_orders = 20000;
  spec.n_items = 30;
  spec.weather_categories = 4;
  spec.rule = SynthRule::kLastPlusWeather;
  spec.noise = 0.1;
  spec.start_epoch = 0;
  spec.end_epoch = 86400 * 365;
  auto records = generate_synthetic(spec, 11);
  std::int64_t rule_hits = 0;
  for (const auto& rec : records) {
    const std::int32_t last = std::stoi(rec.items[rec.items.size() - 2].substr(4));
    const std::int32_t weather = std::stoi(rec.weather.substr(7));
    const std::int32_t label = std::stoi(rec.items.back().substr(4));
    if (label == synth_rule_label(spec.rule, last, weather, spec.n_items)) rule_hits++;
  }
  // Noise replaces the label uniformly, so the rule label still appears in
  // noise/n_items of the noisy draws. Binomial tolerance at 5 sigma.
  const double p = (1.0 - spec.noise) + spec.noise / spec.n_items;
  const double expect = p * static_cast<double>(spec.n_orders);
  const double sigma = std::sqrt(static_cast<double>(spec.n_orders) * p * (1 - p));
  CHECK(std::abs(static_cast<double>(rule_hits) - expect) < 5 * sigma);

  CHECK(synth_context_marginal_optimum(spec) ==
        doctest::Approx(0.9 / 4 + 0.1 / 30).epsilon(1e-12));
}

TEST_CASE("synthetic corpus round-trips through the transaction format") {
  SynthSpec spec;
  spec.n_orders = 50;
  spec.n_items = 8;
  spec.start_epoch = 0;
  spec.end_epoch = 86400 * 100;
  auto records = generate_synthetic(spec, 3);
  const std::string path = "synth_roundtrip_test.tsv";
  write_transactions_file(records, path);
  auto parsed = parse_transactions_file(path);
  std::remove(path.c_str());
  REQUIRE(parsed.records.size() == records.size());
  CHECK(parsed.skipped == 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(parsed.records[i].items == records[i].items);
    CHECK(parsed.records[i].weather == records[i].weather);
    CHECK(parsed.records[i].time.epoch == records[i].time.epoch);
  }
}

TEST_CASE("synth spec parsing rejects unknown keys and bad values") {
  std::istringstream ok("orders=100\nitems=10\nrule=copy_last\nnoise=0.05\n");
  auto spec = parse_synth_spec(ok);
  CHECK(spec.n_orders == 100);
  CHECK(spec.rule == SynthRule::kCopyLast);
  CHECK(spec.noise == doctest::Approx(0.05));

  std::istringstream unknown("orders=100\nbogus=1\n");
  CHECK_THROWS_AS(parse_synth_spec(unknown), FormatError);

  std::istringstream inconsistent("orders=100\nitems=4\nweather_categories=9\n");
  CHECK_THROWS_AS(parse_synth_spec(inconsistent), ContractError);
}

TEST_CASE("vocabulary round-trip identity for non-reserved ids") {
  std::istringstream in(std::string(kHeader) +
                        row("o1", "2025-03-01T12:00:00", "a|b|c|a|b") +
                        row("o2", "2025-03-02T12:00:00", "d|e"));
  auto parsed = parse_transactions(in);
  auto vocabs = build_vocabs(parsed.records, DataConfig{});
  for (std::int32_t id = 2; id < vocabs.item.size(); ++id)
    CHECK(vocabs.item.id_of(vocabs.item.token_of(id)) == id);
}
