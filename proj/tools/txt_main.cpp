// Operator entry point for the recommendation pipeline:
//   synth           generate a planted-rule synthetic corpus
//   preprocess      transactions -> example cache + vocabularies
//   train           fit txt / rnn / rnn-latent-cross / itemcf
//   eval            Top-1 / Top-3 accuracy report for a bundle
//   predict         one-shot recommendation against a bundle
//   serve           TCP inference endpoint
//   dump-attention  context attention weights as TSV
//
// Every command with an --out directory writes effective_config.txt with
// the fully resolved option values; passing that file back via --config
// reproduces the run (command-line flags override file values).

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "txt/baselines.hpp"
#include "txt/bundle.hpp"
#include "txt/bundle_models.hpp"
#include "txt/data.hpp"
#include "txt/errors.hpp"
#include "txt/itemcf.hpp"
#include "txt/metrics.hpp"
#include "txt/model.hpp"
#include "txt/serve.hpp"
#include "txt/trainer.hpp"

namespace fs = std::filesystem;
using namespace txt;

namespace {

// ---- shared option structs ----

struct TrainOpts {
  std::string data, out, model = "txt", precision = "standard";
  std::uint64_t seed = 0;
  std::int32_t epochs = 1, batch_size = 512, workers = 1;
  double lr = 0.001, clip = 0.0;
  std::int32_t d_embed = 100, seq_heads = 4, ctx_heads = 2, seq_layers = 1, ctx_layers = 1;
  std::int32_t seq_len = 5, ffn_mult = 4;
  double leaky_slope = 0.01;
  std::int64_t min_count = 1;
  double temp_lo = -10.0, temp_hi = 40.0;
  std::int32_t temp_buckets = 8;
  int all_prefixes = 0;
  std::string cutoff, tag, created;
  std::int32_t log_every = 0;
};

struct EvalOpts {
  std::string bundle, data, out, cutoff;
  std::string ks = "1,3";
};

struct RequestOpts {
  std::string bundle;
  std::string items;  // '|'-separated names
  std::string timestamp, weather, store, region;
  double temperature = std::numeric_limits<double>::quiet_NaN();
  std::int32_t k = 3;
  int exclude_basket = 1;
};

struct ServeOpts {
  std::string bundle, host = "127.0.0.1";
  int port = 7077;
};

struct PreprocessOpts {
  std::string data, out, cutoff;
  std::int32_t seq_len = 5;
  std::int64_t min_count = 1;
  double temp_lo = -10.0, temp_hi = 40.0;
  std::int32_t temp_buckets = 8;
  int all_prefixes = 0;
};

struct SynthOpts {
  std::string spec, out;
  std::uint64_t seed = 0;
};

// ---- small helpers ----

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::uint64_t fnv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::uint64_t fnv_str(std::uint64_t h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::int64_t parse_cutoff(const std::string& cutoff) {
  auto ts = parse_timestamp(cutoff);
  if (!ts) throw FormatError("bad --cutoff timestamp: " + cutoff);
  return ts->epoch;
}

std::vector<std::string> split_items(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find('|', start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void check_precision(const std::string& p) {
  if (p != "standard" && p != "wide")
    throw ContractError("precision must be standard or wide, got '" + p + "'");
}

std::vector<std::int32_t> parse_k_list(const std::string& s) {
  std::vector<std::int32_t> ks;
  std::size_t start = 0;
  while (start < s.size()) {
    auto pos = s.find(',', start);
    if (pos == std::string::npos) pos = s.size();
    ks.push_back(static_cast<std::int32_t>(std::stol(s.substr(start, pos - start))));
    start = pos + 1;
  }
  if (ks.empty()) throw ContractError("--k list is empty");
  return ks;
}

std::vector<CtxFieldSpec> field_specs(const Vocabs& vocabs) {
  std::vector<CtxFieldSpec> out;
  for (const auto& [name, vocab] : vocabs.ctx) out.push_back({name, vocab.size()});
  return out;
}

// Reads the records and applies the time split: train keeps rows strictly
// before the cutoff, eval keeps rows at or after it.
std::vector<TransactionRecord> load_records(const std::string& path, const std::string& cutoff,
                                            bool train_side) {
  auto parsed = parse_transactions_file(path);
  if (parsed.skipped > 0) {
    std::cout << "skipped " << parsed.skipped << " malformed rows\n";
    for (const auto& issue : parsed.issues)
      std::cout << "  line " << issue.line << ": " << issue.reason << "\n";
  }
  if (cutoff.empty()) return std::move(parsed.records);
  const auto epoch = parse_cutoff(cutoff);
  return train_side ? filter_before(parsed.records, epoch)
                    : filter_from(parsed.records, epoch);
}

// ---- train ----

std::string default_tag(const TrainOpts& o) {
  std::uint64_t h = fnv_file(o.data);
  char num[512];
  std::snprintf(num, sizeof(num),
                "|%s|%s|%llu|%d|%d|%.17g|%.17g|%d|%d|%d|%d|%d|%d|%d|%.17g|%lld|%.17g|%.17g|%d|%d",
                o.model.c_str(), o.precision.c_str(), static_cast<unsigned long long>(o.seed),
                o.epochs, o.batch_size, o.lr, o.clip, o.workers, o.d_embed, o.seq_heads,
                o.ctx_heads, o.seq_layers, o.ctx_layers, o.seq_len, o.leaky_slope,
                static_cast<long long>(o.min_count), o.temp_lo, o.temp_hi, o.temp_buckets,
                o.all_prefixes);
  h = fnv_str(h, num);
  h = fnv_str(h, "|" + o.cutoff);
  char tag[32];
  std::snprintf(tag, sizeof(tag), "m%016llx", static_cast<unsigned long long>(h));
  return tag;
}

std::string train_config_echo(const TrainOpts& o) {
  std::string out;
  char buf[128];
  auto add = [&](const char* key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  };
  auto addf = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    add(key, buf);
  };
  add("data", o.data);
  add("out", o.out);
  add("model", o.model);
  add("precision", o.precision);
  add("seed", std::to_string(o.seed));
  add("epochs", std::to_string(o.epochs));
  add("batch-size", std::to_string(o.batch_size));
  add("workers", std::to_string(o.workers));
  addf("lr", o.lr);
  addf("clip", o.clip);
  add("d-embed", std::to_string(o.d_embed));
  add("seq-heads", std::to_string(o.seq_heads));
  add("ctx-heads", std::to_string(o.ctx_heads));
  add("seq-layers", std::to_string(o.seq_layers));
  add("ctx-layers", std::to_string(o.ctx_layers));
  add("seq-len", std::to_string(o.seq_len));
  add("ffn-mult", std::to_string(o.ffn_mult));
  addf("leaky-slope", o.leaky_slope);
  add("min-count", std::to_string(o.min_count));
  addf("temp-lo", o.temp_lo);
  addf("temp-hi", o.temp_hi);
  add("temp-buckets", std::to_string(o.temp_buckets));
  add("all-prefixes", std::to_string(o.all_prefixes));
  add("cutoff", o.cutoff);
  add("tag", o.tag);
  add("created", o.created);
  add("log-every", std::to_string(o.log_every));
  return out;
}

DataConfig data_config_from_opts(const TrainOpts& o) {
  DataConfig d;
  d.seq_len = o.seq_len;
  d.min_count = o.min_count;
  d.temp_lo = o.temp_lo;
  d.temp_hi = o.temp_hi;
  d.temp_buckets = o.temp_buckets;
  d.all_prefixes = o.all_prefixes != 0;
  return d;
}

template <class R>
int run_train(TrainOpts o) {
  auto records = load_records(o.data, o.cutoff, /*train_side=*/true);
  if (records.empty()) throw ContractError("no training records after the time split");
  const DataConfig dcfg = data_config_from_opts(o);
  const auto vocabs = build_vocabs(records, dcfg);
  auto built = make_examples(records, vocabs, dcfg);
  if (built.examples.empty()) throw ContractError("no training examples: 0 batches");
  std::cout << "records=" << records.size() << " examples=" << built.examples.size()
            << " dropped_single=" << built.dropped_single
            << " dropped_unk_label=" << built.dropped_unk_label
            << " item_vocab=" << vocabs.item.size() << "\n";

  if (o.created.empty()) {
    // Data-vintage stamp: the newest transaction the model saw, so equal
    // runs produce byte-identical bundles.
    std::int64_t latest = records[0].time.epoch;
    for (const auto& r : records) latest = std::max(latest, r.time.epoch);
    o.created = format_timestamp(latest);
  } else if (!parse_timestamp(o.created)) {
    throw FormatError("bad --created timestamp: " + o.created);
  }
  if (o.tag.empty()) o.tag = default_tag(o);

  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.seed = o.seed;
  tc.workers = o.workers;
  tc.lr = o.lr;
  tc.clip = o.clip;
  tc.log_every = o.log_every;

  ModelBundle bundle;
  TrainResult result;
  if (o.model == "txt") {
    TxTConfig cfg;
    cfg.d_embed = o.d_embed;
    cfg.seq_heads = o.seq_heads;
    cfg.ctx_heads = o.ctx_heads;
    cfg.seq_layers = o.seq_layers;
    cfg.ctx_layers = o.ctx_layers;
    cfg.seq_len = o.seq_len;
    cfg.ffn_mult = o.ffn_mult;
    cfg.leaky_slope = o.leaky_slope;
    cfg.item_vocab = vocabs.item.size();
    cfg.ctx_fields = field_specs(vocabs);
    TxtModel<R> model(cfg, o.seed);
    result = train(model, built.examples, tc);
    bundle = bundle_from_txt(model, vocabs, dcfg, o.tag, o.created);
  } else if (o.model == "rnn" || o.model == "rnn-latent-cross") {
    GruConfig cfg;
    cfg.d_embed = o.d_embed;
    cfg.seq_len = o.seq_len;
    cfg.item_vocab = vocabs.item.size();
    cfg.ctx_fields = field_specs(vocabs);
    cfg.use_context = o.model == "rnn-latent-cross";
    GruModel<R> model(cfg, o.seed);
    result = train(model, built.examples, tc);
    bundle = bundle_from_gru(model, vocabs, dcfg, o.tag, o.created);
  } else if (o.model == "itemcf") {
    std::vector<std::vector<std::int32_t>> orders;
    std::vector<ContextVector> ctxs;
    for (const auto& rec : records) {
      std::vector<std::int32_t> ids;
      for (const auto& item : rec.items) ids.push_back(vocabs.item.id_of(item));
      orders.push_back(std::move(ids));
      ctxs.push_back(encode_context(vocabs, dcfg, rec.time, rec.weather, rec.temperature,
                                    rec.store_id, rec.region));
    }
    std::vector<std::int32_t> cards;
    for (const auto& [name, vocab] : vocabs.ctx) cards.push_back(vocab.size());
    auto model = CooccurrenceModel::fit(orders, ctxs, vocabs.item.size(), cards);
    bundle = bundle_from_itemcf(model, vocabs, dcfg, field_specs(vocabs), o.tag, o.created);
  } else {
    throw ContractError("unknown model kind: " + o.model +
                        " (expected txt, rnn, rnn-latent-cross or itemcf)");
  }

  ensure_dir(o.out);
  save_bundle(bundle, o.out + "/model.bundle");
  write_file(o.out + "/loss_trace.txt", loss_trace_text(result));
  write_file(o.out + "/vocabs.txt", vocabs_to_text(vocabs));
  write_file(o.out + "/effective_config.txt", train_config_echo(o));
  if (!result.trace.empty())
    std::cout << "steps=" << result.trace.size()
              << " final_loss=" << result.trace.back().second << "\n";
  std::cout << "bundle=" << o.out << "/model.bundle tag=" << o.tag << " created=" << o.created
            << "\n";
  return 0;
}

int cmd_train(TrainOpts o) {
  check_precision(o.precision);
  return o.precision == "wide" ? run_train<double>(std::move(o)) : run_train<float>(std::move(o));
}

// ---- eval ----

int cmd_eval(const EvalOpts& o) {
  auto bundle = load_bundle(o.bundle);
  auto records = load_records(o.data, o.cutoff, /*train_side=*/false);
  if (records.empty()) throw ContractError("no evaluation records after the time split");
  const auto dcfg = data_config_from(bundle);
  auto built = make_examples(records, bundle.vocabs, dcfg);
  if (built.examples.empty()) throw ContractError("evaluation set is empty");
  std::cout << "records=" << records.size() << " examples=" << built.examples.size()
            << " dropped_single=" << built.dropped_single
            << " dropped_unk_label=" << built.dropped_unk_label << "\n";

  BundlePredictor predictor(std::move(bundle));
  auto scorer = [&](const OrderExample& ex) { return predictor.score_example(ex); };
  auto report = evaluate(scorer, built.examples, parse_k_list(o.ks), reserved_ids(),
                         predictor.bundle().kind);
  std::cout << report.to_text();
  if (!o.out.empty()) {
    ensure_dir(o.out);
    write_file(o.out + "/eval_report.txt", report.to_text());
    // Own filename so pointing eval at a training directory cannot clobber
    // the training run's echo.
    std::string echo = "bundle=" + o.bundle + "\ndata=" + o.data + "\nout=" + o.out +
                       "\ncutoff=" + o.cutoff + "\nk=" + o.ks + "\n";
    write_file(o.out + "/eval_config.txt", echo);
  }
  return 0;
}

// ---- predict / serve / dump-attention ----

RecommendRequest request_from_opts(const RequestOpts& o) {
  RecommendRequest req;
  req.items = split_items(o.items);
  req.timestamp = o.timestamp;
  req.weather = o.weather;
  req.store_id = o.store;
  req.region = o.region;
  if (std::isfinite(o.temperature)) {
    req.temperature = o.temperature;
    req.has_temperature = true;
  }
  req.k = o.k;
  req.exclude_basket = o.exclude_basket != 0;
  return req;
}

int cmd_predict(const RequestOpts& o) {
  auto bundle = load_bundle(o.bundle);
  BundlePredictor predictor(std::move(bundle));
  auto resp = predictor.recommend(request_from_opts(o));
  std::cout << response_to_json(resp) << "\n";
  return 0;
}

int cmd_serve(const ServeOpts& o) {
  auto bundle = load_bundle(o.bundle);
  BundlePredictor predictor(std::move(bundle));
  RecServer server(
      [&](const std::string& payload) { return handle_request_json(predictor, payload); });
  server.start(o.host, o.port);
  std::cout << "serving model " << predictor.version() << " on " << o.host << ":"
            << server.port() << "\n";
  while (true) std::this_thread::sleep_for(std::chrono::hours(1));
}

int cmd_dump_attention(const RequestOpts& o, const std::string& out_dir) {
  auto bundle = load_bundle(o.bundle);
  if (bundle.kind != "txt")
    throw ContractError("attention dump needs a txt bundle, got " + bundle.kind);
  auto req = request_from_opts(o);

  // Context ids resolved exactly as in serving.
  const auto dcfg = data_config_from(bundle);
  const auto ts = parse_timestamp(req.timestamp);
  ContextVector ctx;
  ctx.push_back(ts ? bundle.vocabs.ctx_field("hour").id_of(hour_token(ts->hour)) : kUnkId);
  ctx.push_back(ts ? bundle.vocabs.ctx_field("dow").id_of(dow_token(ts->weekday)) : kUnkId);
  ctx.push_back(req.has_temperature
                    ? bundle.vocabs.ctx_field("temp").id_of(temp_token(req.temperature, dcfg))
                    : kUnkId);
  ctx.push_back(req.weather.empty() ? kUnkId
                                    : bundle.vocabs.ctx_field("weather").id_of(req.weather));
  ctx.push_back(req.store_id.empty() ? kUnkId
                                     : bundle.vocabs.ctx_field("store").id_of(req.store_id));
  ctx.push_back(req.region.empty() ? kUnkId
                                   : bundle.vocabs.ctx_field("region").id_of(req.region));

  std::vector<std::vector<std::vector<double>>> weights;
  const std::int32_t ctx_heads = txt_config_from(bundle).ctx_heads;
  if (bundle.precision == "wide") {
    weights = txt_from_bundle<double>(bundle).attention_weights(ctx);
  } else {
    auto w = txt_from_bundle<float>(bundle).attention_weights(ctx);
    for (const auto& mat : w) {
      std::vector<std::vector<double>> dm;
      for (const auto& row : mat) dm.emplace_back(row.begin(), row.end());
      weights.push_back(std::move(dm));
    }
  }

  std::string out = "layer\thead\tquery_field\tkey_field\tweight\n";
  char buf[64];
  for (std::size_t idx = 0; idx < weights.size(); ++idx) {
    const auto layer = static_cast<std::int32_t>(idx) / ctx_heads;
    const auto head = static_cast<std::int32_t>(idx) % ctx_heads;
    for (std::size_t q = 0; q < weights[idx].size(); ++q)
      for (std::size_t kk = 0; kk < weights[idx][q].size(); ++kk) {
        std::snprintf(buf, sizeof(buf), "%.9g", weights[idx][q][kk]);
        out += std::to_string(layer) + "\t" + std::to_string(head) + "\t" +
               bundle.vocabs.ctx[q].first + "\t" + bundle.vocabs.ctx[kk].first + "\t" + buf +
               "\n";
      }
  }
  if (out_dir.empty()) {
    std::cout << out;
  } else {
    ensure_dir(out_dir);
    write_file(out_dir + "/attention_weights.tsv", out);
    std::cout << "wrote " << out_dir << "/attention_weights.tsv\n";
  }
  return 0;
}

// ---- synth / preprocess ----

int cmd_synth(const SynthOpts& o) {
  auto spec = parse_synth_spec_file(o.spec);
  auto records = generate_synthetic(spec, o.seed);
  ensure_dir(o.out);
  write_transactions_file(records, o.out + "/transactions.tsv");
  write_file(o.out + "/synth_meta.txt", synth_metadata_text(spec, o.seed));
  write_file(o.out + "/effective_config.txt",
             "spec=" + o.spec + "\nout=" + o.out + "\nseed=" + std::to_string(o.seed) + "\n");
  std::cout << "wrote " << records.size() << " orders to " << o.out << "/transactions.tsv\n";
  return 0;
}

int cmd_preprocess(const PreprocessOpts& o) {
  auto records = load_records(o.data, o.cutoff, /*train_side=*/true);
  if (records.empty()) throw ContractError("no records to preprocess");
  DataConfig dcfg;
  dcfg.seq_len = o.seq_len;
  dcfg.min_count = o.min_count;
  dcfg.temp_lo = o.temp_lo;
  dcfg.temp_hi = o.temp_hi;
  dcfg.temp_buckets = o.temp_buckets;
  dcfg.all_prefixes = o.all_prefixes != 0;
  auto vocabs = build_vocabs(records, dcfg);
  auto built = make_examples(records, vocabs, dcfg);

  std::string table = "input_ids\tn_real\tctx_ids\tlabel\n";
  for (const auto& ex : built.examples) {
    std::string ids, ctx;
    for (std::size_t i = 0; i < ex.input_ids.size(); ++i) {
      if (i) ids += ',';
      ids += std::to_string(ex.input_ids[i]);
    }
    std::size_t n_real = 0;
    for (auto m : ex.mask) n_real += m ? 1 : 0;
    for (std::size_t i = 0; i < ex.ctx.size(); ++i) {
      if (i) ctx += ',';
      ctx += std::to_string(ex.ctx[i]);
    }
    table += ids + "\t" + std::to_string(n_real) + "\t" + ctx + "\t" +
             std::to_string(ex.label) + "\n";
  }

  ensure_dir(o.out);
  write_file(o.out + "/vocabs.txt", vocabs_to_text(vocabs));
  write_file(o.out + "/examples.tsv", table);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "records=%zu\nexamples=%zu\ndropped_single=%zu\ndropped_unk_label=%zu\n",
                records.size(), built.examples.size(), built.dropped_single,
                built.dropped_unk_label);
  write_file(o.out + "/preprocess_meta.txt", buf);
  std::string echo = "data=" + o.data + "\nout=" + o.out + "\nseq-len=" +
                     std::to_string(o.seq_len) + "\nmin-count=" + std::to_string(o.min_count) +
                     "\ntemp-lo=" + format_double(o.temp_lo) + "\ntemp-hi=" +
                     format_double(o.temp_hi) + "\ntemp-buckets=" +
                     std::to_string(o.temp_buckets) + "\nall-prefixes=" +
                     std::to_string(o.all_prefixes) + "\ncutoff=" + o.cutoff + "\n";
  write_file(o.out + "/effective_config.txt", echo);
  std::cout << buf;
  return 0;
}

// ---- config file merge ----

// key=value lines; '#' starts a comment. Values already given on the
// command line win; unknown keys are rejected.
std::vector<std::string> merge_config_file(const std::vector<std::string>& args, CLI::App& app) {
  std::string config_path;
  std::string sub_name;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (sub_name.empty() && !args[i].empty() && args[i][0] != '-') sub_name = args[i];
    if (args[i] == "--config" && i + 1 < args.size())
      config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  CLI::App* sub = nullptr;
  for (auto* s : app.get_subcommands({}))
    if (s->get_name() == sub_name) sub = s;
  if (!sub) return args;  // let the normal parse report the problem

  std::ifstream in(config_path);
  if (!in) throw IoError("cannot open config file: " + config_path);
  std::vector<std::string> merged = args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(config_path + ":" + std::to_string(lineno) + " is not key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "config")
      throw FormatError("config files cannot nest another config file");
    const std::string flag = "--" + key;
    if (!sub->get_option_no_throw(flag))
      throw FormatError("unknown key '" + key + "' in " + config_path);
    bool given = false;
    for (const auto& a : merged)
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    if (!given) merged.push_back(flag + "=" + value);
  }
  return merged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware next-item recommendation pipeline"};
  app.require_subcommand(1);

  TrainOpts train_opts;
  EvalOpts eval_opts;
  RequestOpts predict_opts, attn_opts;
  ServeOpts serve_opts;
  PreprocessOpts pre_opts;
  SynthOpts synth_opts;
  std::string attn_out;
  std::string config_dummy;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_dummy, "key=value defaults file; flags override");
  };
  auto add_request_flags = [&](CLI::App* sub, RequestOpts& o) {
    sub->add_option("--bundle", o.bundle, "model bundle path")->required();
    sub->add_option("--items", o.items, "basket item names, '|'-separated");
    sub->add_option("--timestamp", o.timestamp, "ISO-8601 order time");
    sub->add_option("--weather", o.weather, "weather description");
    sub->add_option("--temperature", o.temperature, "temperature in degrees");
    sub->add_option("--store", o.store, "store id");
    sub->add_option("--region", o.region, "region code");
    sub->add_option("--k", o.k, "recommendations to return");
    sub->add_option("--exclude-basket", o.exclude_basket, "1 = skip items already in basket");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus from a spec file");
  synth->add_option("--spec", synth_opts.spec, "synthetic spec file")->required();
  synth->add_option("--out", synth_opts.out, "output directory")->required();
  synth->add_option("--seed", synth_opts.seed, "generator seed");
  add_config(synth);

  auto* pre = app.add_subcommand("preprocess", "transactions -> example cache + vocabularies");
  pre->add_option("--data", pre_opts.data, "transactions TSV")->required();
  pre->add_option("--out", pre_opts.out, "output directory")->required();
  pre->add_option("--seq-len", pre_opts.seq_len, "maximum input prefix length");
  pre->add_option("--min-count", pre_opts.min_count, "minimum token frequency");
  pre->add_option("--temp-lo", pre_opts.temp_lo, "temperature bucket range low");
  pre->add_option("--temp-hi", pre_opts.temp_hi, "temperature bucket range high");
  pre->add_option("--temp-buckets", pre_opts.temp_buckets, "temperature bucket count");
  pre->add_option("--all-prefixes", pre_opts.all_prefixes, "1 = one example per prefix");
  pre->add_option("--cutoff", pre_opts.cutoff, "keep rows before this ISO-8601 time");
  add_config(pre);

  auto* train = app.add_subcommand("train", "train a model and save a versioned bundle");
  train->add_option("--data", train_opts.data, "transactions TSV")->required();
  train->add_option("--out", train_opts.out, "output directory")->required();
  train->add_option("--model", train_opts.model, "txt | rnn | rnn-latent-cross | itemcf");
  train->add_option("--precision", train_opts.precision, "standard | wide");
  train->add_option("--seed", train_opts.seed, "run seed");
  train->add_option("--epochs", train_opts.epochs, "training epochs");
  train->add_option("--batch-size", train_opts.batch_size, "examples per step");
  train->add_option("--workers", train_opts.workers, "data-parallel workers per step");
  train->add_option("--lr", train_opts.lr, "Adam learning rate");
  train->add_option("--clip", train_opts.clip, "global-norm gradient clip, 0 = off");
  train->add_option("--d-embed", train_opts.d_embed, "embedding size");
  train->add_option("--seq-heads", train_opts.seq_heads, "sequence encoder heads");
  train->add_option("--ctx-heads", train_opts.ctx_heads, "context encoder heads");
  train->add_option("--seq-layers", train_opts.seq_layers, "sequence encoder layers");
  train->add_option("--ctx-layers", train_opts.ctx_layers, "context encoder layers");
  train->add_option("--seq-len", train_opts.seq_len, "maximum input prefix length");
  train->add_option("--ffn-mult", train_opts.ffn_mult, "feed-forward width multiplier");
  train->add_option("--leaky-slope", train_opts.leaky_slope, "LeakyReLU negative slope");
  train->add_option("--min-count", train_opts.min_count, "minimum token frequency");
  train->add_option("--temp-lo", train_opts.temp_lo, "temperature bucket range low");
  train->add_option("--temp-hi", train_opts.temp_hi, "temperature bucket range high");
  train->add_option("--temp-buckets", train_opts.temp_buckets, "temperature bucket count");
  train->add_option("--all-prefixes", train_opts.all_prefixes, "1 = one example per prefix");
  train->add_option("--cutoff", train_opts.cutoff, "train on rows before this time");
  train->add_option("--tag", train_opts.tag, "version tag (default: content hash)");
  train->add_option("--created", train_opts.created, "bundle stamp (default: data vintage)");
  train->add_option("--log-every", train_opts.log_every, "print loss every N steps");
  add_config(train);

  auto* eval_cmd = app.add_subcommand("eval", "Top-k accuracy report for a bundle");
  eval_cmd->add_option("--bundle", eval_opts.bundle, "model bundle path")->required();
  eval_cmd->add_option("--data", eval_opts.data, "transactions TSV")->required();
  eval_cmd->add_option("--out", eval_opts.out, "output directory");
  eval_cmd->add_option("--cutoff", eval_opts.cutoff, "evaluate rows at/after this time");
  eval_cmd->add_option("--k", eval_opts.ks, "comma-separated k list");
  add_config(eval_cmd);

  auto* predict = app.add_subcommand("predict", "one-shot recommendation from a bundle");
  add_request_flags(predict, predict_opts);
  add_config(predict);

  auto* serve = app.add_subcommand("serve", "length-prefixed JSON endpoint over TCP");
  serve->add_option("--bundle", serve_opts.bundle, "model bundle path")->required();
  serve->add_option("--host", serve_opts.host, "listen address");
  serve->add_option("--port", serve_opts.port, "listen port, 0 = ephemeral");
  add_config(serve);

  auto* attn = app.add_subcommand("dump-attention", "context attention weights as TSV");
  add_request_flags(attn, attn_opts);
  attn->add_option("--out", attn_out, "output directory (default: stdout)");
  add_config(attn);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_config_file(args, app);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: [" << e.category() << "] " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_opts);
    if (pre->parsed()) return cmd_preprocess(pre_opts);
    if (train->parsed()) return cmd_train(train_opts);
    if (eval_cmd->parsed()) return cmd_eval(eval_opts);
    if (predict->parsed()) return cmd_predict(predict_opts);
    if (serve->parsed()) return cmd_serve(serve_opts);
    if (attn->parsed()) return cmd_dump_attention(attn_opts, attn_out);
    std::cerr << "error: [contract] no subcommand selected\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: [" << e.category() << "] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << "\n";
    return 1;
  }
}
