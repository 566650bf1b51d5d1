#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "txt/baselines.hpp"
#include "txt/bundle.hpp"
#include "txt/itemcf.hpp"
#include "txt/model.hpp"

// Conversions between typed models and the persisted bundle form. Bundles
// carry the model hyperparameters under config.* and the data-side
// bucketing settings under data.* so a served model reproduces training
// tokenization exactly.

namespace txt {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string ctx_fields_value(const std::vector<CtxFieldSpec>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i].name + ":" + std::to_string(fields[i].cardinality);
  }
  return out;
}

inline std::vector<CtxFieldSpec> parse_ctx_fields(const std::string& value) {
  std::vector<CtxFieldSpec> out;
  std::size_t start = 0;
  while (start < value.size()) {
    std::size_t comma = value.find(',', start);
    if (comma == std::string::npos) comma = value.size();
    const std::string entry = value.substr(start, comma - start);
    const auto colon = entry.rfind(':');
    if (colon == std::string::npos) throw FormatError("bad context field spec: " + entry);
    out.push_back(
        {entry.substr(0, colon), static_cast<std::int32_t>(std::stol(entry.substr(colon + 1)))});
    start = comma + 1;
  }
  if (out.empty()) throw FormatError("empty context field list");
  return out;
}

inline void append_data_config(std::vector<std::pair<std::string, std::string>>& kv,
                               const DataConfig& d) {
  kv.emplace_back("data.seq_len", std::to_string(d.seq_len));
  kv.emplace_back("data.min_count", std::to_string(d.min_count));
  kv.emplace_back("data.temp_lo", format_double(d.temp_lo));
  kv.emplace_back("data.temp_hi", format_double(d.temp_hi));
  kv.emplace_back("data.temp_buckets", std::to_string(d.temp_buckets));
  kv.emplace_back("data.all_prefixes", d.all_prefixes ? "1" : "0");
}

inline DataConfig data_config_from(const ModelBundle& b) {
  DataConfig d;
  d.seq_len = static_cast<std::int32_t>(std::stol(b.config_at("data.seq_len")));
  d.min_count = std::stoll(b.config_at("data.min_count"));
  d.temp_lo = std::stod(b.config_at("data.temp_lo"));
  d.temp_hi = std::stod(b.config_at("data.temp_hi"));
  d.temp_buckets = static_cast<std::int32_t>(std::stol(b.config_at("data.temp_buckets")));
  d.all_prefixes = b.config_at("data.all_prefixes") == "1";
  return d;
}

// ---- TxT ----

template <class R>
ModelBundle bundle_from_txt(const TxtModel<R>& model, const Vocabs& vocabs,
                            const DataConfig& dcfg, std::string tag, std::string created) {
  const TxTConfig& c = model.config();
  ModelBundle b;
  b.kind = "txt";
  b.tag = std::move(tag);
  b.created = std::move(created);
  b.precision = precision_name<R>();
  b.config.emplace_back("config.d_embed", std::to_string(c.d_embed));
  b.config.emplace_back("config.seq_heads", std::to_string(c.seq_heads));
  b.config.emplace_back("config.ctx_heads", std::to_string(c.ctx_heads));
  b.config.emplace_back("config.seq_layers", std::to_string(c.seq_layers));
  b.config.emplace_back("config.ctx_layers", std::to_string(c.ctx_layers));
  b.config.emplace_back("config.seq_len", std::to_string(c.seq_len));
  b.config.emplace_back("config.leaky_slope", format_double(c.leaky_slope));
  b.config.emplace_back("config.ffn_mult", std::to_string(c.ffn_mult));
  b.config.emplace_back("config.item_vocab", std::to_string(c.item_vocab));
  b.config.emplace_back("config.ctx_fields", ctx_fields_value(c.ctx_fields));
  append_data_config(b.config, dcfg);
  b.vocabs = vocabs;
  for (const auto& [name, tensor] : model.params().items())
    b.params.push_back(pack_array(name, tensor));
  return b;
}

inline TxTConfig txt_config_from(const ModelBundle& b) {
  TxTConfig c;
  c.d_embed = static_cast<std::int32_t>(std::stol(b.config_at("config.d_embed")));
  c.seq_heads = static_cast<std::int32_t>(std::stol(b.config_at("config.seq_heads")));
  c.ctx_heads = static_cast<std::int32_t>(std::stol(b.config_at("config.ctx_heads")));
  c.seq_layers = static_cast<std::int32_t>(std::stol(b.config_at("config.seq_layers")));
  c.ctx_layers = static_cast<std::int32_t>(std::stol(b.config_at("config.ctx_layers")));
  c.seq_len = static_cast<std::int32_t>(std::stol(b.config_at("config.seq_len")));
  c.leaky_slope = std::stod(b.config_at("config.leaky_slope"));
  c.ffn_mult = static_cast<std::int32_t>(std::stol(b.config_at("config.ffn_mult")));
  c.item_vocab = static_cast<std::int32_t>(std::stol(b.config_at("config.item_vocab")));
  c.ctx_fields = parse_ctx_fields(b.config_at("config.ctx_fields"));
  return c;
}

namespace detail {

template <class R>
ParamStore<R> store_from_bundle(const ModelBundle& b, const std::vector<std::string>& names) {
  if (b.params.size() != names.size())
    throw FormatError("bundle holds " + std::to_string(b.params.size()) +
                      " parameters, config expects " + std::to_string(names.size()));
  ParamStore<R> store;
  for (const auto& name : names) store.add(name, unpack_array<R>(b.param(name)));
  return store;
}

}  // namespace detail

template <class R>
TxtModel<R> txt_from_bundle(const ModelBundle& b) {
  if (b.kind != "txt") throw ContractError("bundle kind is " + b.kind + ", expected txt");
  TxTConfig c = txt_config_from(b);
  return TxtModel<R>(c, detail::store_from_bundle<R>(b, c.param_names()));
}

// ---- GRU ----

template <class R>
ModelBundle bundle_from_gru(const GruModel<R>& model, const Vocabs& vocabs,
                            const DataConfig& dcfg, std::string tag, std::string created) {
  const GruConfig& c = model.config();
  ModelBundle b;
  b.kind = c.use_context ? "rnn-latent-cross" : "rnn";
  b.tag = std::move(tag);
  b.created = std::move(created);
  b.precision = precision_name<R>();
  b.config.emplace_back("config.d_embed", std::to_string(c.d_embed));
  b.config.emplace_back("config.seq_len", std::to_string(c.seq_len));
  b.config.emplace_back("config.item_vocab", std::to_string(c.item_vocab));
  b.config.emplace_back("config.ctx_fields", ctx_fields_value(c.ctx_fields));
  append_data_config(b.config, dcfg);
  b.vocabs = vocabs;
  for (const auto& [name, tensor] : model.params().items())
    b.params.push_back(pack_array(name, tensor));
  return b;
}

inline GruConfig gru_config_from(const ModelBundle& b) {
  GruConfig c;
  c.use_context = b.kind == "rnn-latent-cross";
  c.d_embed = static_cast<std::int32_t>(std::stol(b.config_at("config.d_embed")));
  c.seq_len = static_cast<std::int32_t>(std::stol(b.config_at("config.seq_len")));
  c.item_vocab = static_cast<std::int32_t>(std::stol(b.config_at("config.item_vocab")));
  c.ctx_fields = parse_ctx_fields(b.config_at("config.ctx_fields"));
  return c;
}

template <class R>
GruModel<R> gru_from_bundle(const ModelBundle& b) {
  if (b.kind != "rnn" && b.kind != "rnn-latent-cross")
    throw ContractError("bundle kind is " + b.kind + ", expected an rnn variant");
  GruConfig c = gru_config_from(b);
  return GruModel<R>(c, detail::store_from_bundle<R>(b, c.param_names()));
}

// ---- Contextual ItemCF ----

ModelBundle bundle_from_itemcf(const CooccurrenceModel& model, const Vocabs& vocabs,
                               const DataConfig& dcfg,
                               const std::vector<CtxFieldSpec>& fields, std::string tag,
                               std::string created);
CooccurrenceModel itemcf_from_bundle(const ModelBundle& b);

}  // namespace txt
