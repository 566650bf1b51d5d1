#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "txt/example.hpp"
#include "txt/layers.hpp"
#include "txt/tensor.hpp"

// The Transformer Cross Transformer model: a masked Sequence Transformer
// over the padded item prefix, a position-free Context Transformer over the
// context feature embeddings, an element-wise product of the two pooled
// encodings through LeakyReLU, and a linear softmax head over the item
// vocabulary.

namespace txt {

struct CtxFieldSpec {
  std::string name;
  std::int32_t cardinality = 0;  // embedding rows, PAD/UNK included
};

struct TxTConfig {
  std::int32_t d_embed = 100;
  std::int32_t seq_heads = 4;
  std::int32_t ctx_heads = 2;
  std::int32_t seq_layers = 1;
  std::int32_t ctx_layers = 1;
  std::int32_t seq_len = 5;
  double leaky_slope = 0.01;
  std::int32_t ffn_mult = 4;
  std::int32_t item_vocab = 0;
  std::vector<CtxFieldSpec> ctx_fields;
  // Test hook: skip the encoder blocks so pooling and the cross stage can
  // be exercised on raw embeddings.
  bool encoder_bypass = false;

  std::int32_t d_ff() const { return ffn_mult * d_embed; }
  std::int32_t cross_dim() const { return 2 * d_embed; }

  void validate() const {
    if (d_embed < 2 || seq_heads < 1 || ctx_heads < 1 || seq_layers < 1 || ctx_layers < 1 ||
        seq_len < 1 || ffn_mult < 1)
      throw ContractError("non-positive model dimension in config");
    if (d_embed % seq_heads != 0 || d_embed % ctx_heads != 0)
      throw ContractError("d_embed " + std::to_string(d_embed) +
                          " must be divisible by head counts " + std::to_string(seq_heads) +
                          " and " + std::to_string(ctx_heads));
    if (item_vocab < 3) throw ContractError("item vocabulary too small");
    if (ctx_fields.empty()) throw ContractError("at least one context field required");
    for (const auto& f : ctx_fields)
      if (f.name.empty() || f.cardinality < 3)
        throw ContractError("bad context field spec: " + f.name);
  }

  // Every learnable array, in registration order.
  std::vector<std::string> param_names() const;
};

namespace detail {

inline void block_param_names(const std::string& prefix, std::int32_t layers,
                              std::vector<std::string>& out) {
  for (std::int32_t l = 0; l < layers; ++l) {
    const std::string base = prefix + "." + std::to_string(l) + ".";
    for (const char* leaf :
         {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "ln1.gain", "ln1.bias", "ffn.w1",
          "ffn.b1", "ffn.w2", "ffn.b2", "ln2.gain", "ln2.bias"})
      out.push_back(base + leaf);
  }
}

}  // namespace detail

inline std::vector<std::string> TxTConfig::param_names() const {
  std::vector<std::string> names = {"item_emb", "pos_emb"};
  for (const auto& f : ctx_fields) names.push_back("ctx_emb." + f.name);
  detail::block_param_names("seq", seq_layers, names);
  detail::block_param_names("ctx", ctx_layers, names);
  names.push_back("out.w");
  names.push_back("out.b");
  return names;
}

namespace detail {

template <class R>
void add_block_params(ParamStore<R>& store, const std::string& prefix, std::int32_t layers,
                      std::int32_t d, std::int32_t d_ff, std::uint64_t seed) {
  for (std::int32_t l = 0; l < layers; ++l) {
    const std::string base = prefix + "." + std::to_string(l) + ".";
    auto mat = [&](const std::string& leaf, std::int64_t r, std::int64_t c) {
      auto t = Tensor<R>::zeros({r, c});
      CounterRng rng(seed, base + leaf);
      init_xavier(t, rng);
      store.add(base + leaf, std::move(t));
    };
    mat("attn.wq", d, d);
    mat("attn.wk", d, d);
    mat("attn.wv", d, d);
    mat("attn.wo", d, d);
    store.add(base + "ln1.gain", Tensor<R>::full({d}, R(1)));
    store.add(base + "ln1.bias", Tensor<R>::zeros({d}));
    mat("ffn.w1", d, d_ff);
    store.add(base + "ffn.b1", Tensor<R>::zeros({d_ff}));
    mat("ffn.w2", d_ff, d);
    store.add(base + "ffn.b2", Tensor<R>::zeros({d}));
    store.add(base + "ln2.gain", Tensor<R>::full({d}, R(1)));
    store.add(base + "ln2.bias", Tensor<R>::zeros({d}));
  }
}

template <class R>
struct BoundBlock {
  BlockVars vars;
};

template <class R>
std::vector<BlockVars> bind_blocks(Tape<R>& tape, const ParamStore<R>& store,
                                   const std::string& prefix, std::int32_t layers) {
  std::vector<BlockVars> out;
  for (std::int32_t l = 0; l < layers; ++l) {
    const std::string base = prefix + "." + std::to_string(l) + ".";
    BlockVars b;
    b.attn.wq = tape.leaf(base + "attn.wq", store.at(base + "attn.wq"));
    b.attn.wk = tape.leaf(base + "attn.wk", store.at(base + "attn.wk"));
    b.attn.wv = tape.leaf(base + "attn.wv", store.at(base + "attn.wv"));
    b.attn.wo = tape.leaf(base + "attn.wo", store.at(base + "attn.wo"));
    b.ln1.gain = tape.leaf(base + "ln1.gain", store.at(base + "ln1.gain"));
    b.ln1.bias = tape.leaf(base + "ln1.bias", store.at(base + "ln1.bias"));
    b.ffn.w1 = tape.leaf(base + "ffn.w1", store.at(base + "ffn.w1"));
    b.ffn.b1 = tape.leaf(base + "ffn.b1", store.at(base + "ffn.b1"));
    b.ffn.w2 = tape.leaf(base + "ffn.w2", store.at(base + "ffn.w2"));
    b.ffn.b2 = tape.leaf(base + "ffn.b2", store.at(base + "ffn.b2"));
    b.ln2.gain = tape.leaf(base + "ln2.gain", store.at(base + "ln2.gain"));
    b.ln2.bias = tape.leaf(base + "ln2.bias", store.at(base + "ln2.bias"));
    out.push_back(b);
  }
  return out;
}

}  // namespace detail

template <class R>
class TxtModel {
 public:
  using scalar_type = R;

  struct Bound {
    Var item_emb, pos_emb;
    std::vector<Var> ctx_emb;
    std::vector<BlockVars> seq_blocks, ctx_blocks;
    Var out_w, out_b;
  };

  TxtModel(TxTConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    auto norm_table = [&](const std::string& name, std::int64_t rows, std::int64_t cols) {
      auto t = Tensor<R>::zeros({rows, cols});
      CounterRng rng(seed, name);
      init_normal(t, rng, 0.01);
      params_.add(name, std::move(t));
    };
    norm_table("item_emb", cfg_.item_vocab, cfg_.d_embed);
    norm_table("pos_emb", cfg_.seq_len, cfg_.d_embed);
    for (const auto& f : cfg_.ctx_fields)
      norm_table("ctx_emb." + f.name, f.cardinality, cfg_.d_embed);
    detail::add_block_params(params_, "seq", cfg_.seq_layers, cfg_.d_embed, cfg_.d_ff(), seed);
    detail::add_block_params(params_, "ctx", cfg_.ctx_layers, cfg_.d_embed, cfg_.d_ff(), seed);
    auto out_w = Tensor<R>::zeros({cfg_.cross_dim(), cfg_.item_vocab});
    CounterRng rng(seed, "out.w");
    init_xavier(out_w, rng);
    params_.add("out.w", std::move(out_w));
    params_.add("out.b", Tensor<R>::zeros({cfg_.item_vocab}));
  }

  TxtModel(TxTConfig cfg, ParamStore<R> loaded) : cfg_(std::move(cfg)), params_(std::move(loaded)) {
    cfg_.validate();
    for (const auto& name : cfg_.param_names())
      if (!params_.contains(name)) throw ContractError("missing parameter: " + name);
  }

  const TxTConfig& config() const { return cfg_; }
  ParamStore<R>& params() { return params_; }
  const ParamStore<R>& params() const { return params_; }

  Bound bind(Tape<R>& tape) const {
    Bound b;
    b.item_emb = tape.leaf("item_emb", params_.at("item_emb"));
    b.pos_emb = tape.leaf("pos_emb", params_.at("pos_emb"));
    for (const auto& f : cfg_.ctx_fields)
      b.ctx_emb.push_back(tape.leaf("ctx_emb." + f.name, params_.at("ctx_emb." + f.name)));
    b.seq_blocks = detail::bind_blocks(tape, params_, "seq", cfg_.seq_layers);
    b.ctx_blocks = detail::bind_blocks(tape, params_, "ctx", cfg_.ctx_layers);
    b.out_w = tape.leaf("out.w", params_.at("out.w"));
    b.out_b = tape.leaf("out.b", params_.at("out.b"));
    return b;
  }

  // Order-basket vector [1 x 2d] for one example. Accepts any length up to
  // seq_len; ids and mask must agree.
  Var encode_sequence(Tape<R>& tape, const Bound& b, std::span<const std::int32_t> ids,
                      const Mask& mask) const {
    if (ids.size() != mask.size())
      throw ContractError("ids/mask length mismatch in encode_sequence");
    Var x = tape.embedding_rows(b.item_emb, ids);
    x = add_positional(tape, x, b.pos_emb);
    const auto len = static_cast<std::int64_t>(ids.size());
    if (!cfg_.encoder_bypass)
      for (const auto& blk : b.seq_blocks)
        x = encoder_block(tape, x, blk, cfg_.seq_heads, len, static_cast<R>(cfg_.leaky_slope),
                          &mask);
    return mean_max_pool(tape, x, mask);
  }

  // Context vector [1 x 2d]: per-field embeddings stacked, encoded without
  // positional information, pooled over all fields.
  Var encode_context(Tape<R>& tape, const Bound& b, const ContextVector& ctx,
                     std::vector<Var>* weights_out = nullptr) const {
    Var x = stack_context(tape, b, ctx);
    const auto m = static_cast<std::int64_t>(ctx.size());
    if (!cfg_.encoder_bypass)
      for (const auto& blk : b.ctx_blocks)
        x = encoder_block(tape, x, blk, cfg_.ctx_heads, m, static_cast<R>(cfg_.leaky_slope),
                          nullptr, weights_out);
    Mask all_real(ctx.size(), 1);
    return mean_max_pool(tape, x, all_real);
  }

  Var latent_cross_combine(Tape<R>& tape, Var seq_out, Var ctx_out) const {
    if (tape.shape(seq_out) != tape.shape(ctx_out))
      throw ContractError("latent cross operands differ: " + shape_str(tape.shape(seq_out)) +
                          " vs " + shape_str(tape.shape(ctx_out)));
    return tape.leaky_relu(tape.mul(seq_out, ctx_out), static_cast<R>(cfg_.leaky_slope));
  }

  // Logits [1 x V] for one example.
  Var forward(Tape<R>& tape, const Bound& b, std::span<const std::int32_t> ids, const Mask& mask,
              const ContextVector& ctx) const {
    Var seq = encode_sequence(tape, b, ids, mask);
    Var c = encode_context(tape, b, ctx);
    Var crossed = latent_cross_combine(tape, seq, c);
    return tape.add(tape.matmul(crossed, b.out_w), b.out_b);
  }

  // Logits [B x V] for a batch. The heavy projections run over the whole
  // batch; attention and pooling are per example.
  Var batch_logits(Tape<R>& tape, const Bound& b, std::span<const OrderExample> batch) const {
    if (batch.empty()) throw ContractError("empty batch");
    const auto len = static_cast<std::int64_t>(batch[0].input_ids.size());
    const auto m = static_cast<std::int64_t>(cfg_.ctx_fields.size());

    std::vector<std::int32_t> ids;
    std::vector<std::int32_t> pos_ids;
    Mask mask;
    ids.reserve(batch.size() * static_cast<std::size_t>(len));
    mask.reserve(batch.size() * static_cast<std::size_t>(len));
    std::vector<std::int32_t> ctx_ids(batch.size() * static_cast<std::size_t>(m));
    for (std::size_t e = 0; e < batch.size(); ++e) {
      const auto& ex = batch[e];
      if (static_cast<std::int64_t>(ex.input_ids.size()) != len ||
          static_cast<std::int64_t>(ex.ctx.size()) != m)
        throw ContractError("ragged batch: expected length " + std::to_string(len) + " and " +
                            std::to_string(m) + " context fields");
      ids.insert(ids.end(), ex.input_ids.begin(), ex.input_ids.end());
      mask.insert(mask.end(), ex.mask.begin(), ex.mask.end());
      for (std::int64_t j = 0; j < len; ++j) pos_ids.push_back(static_cast<std::int32_t>(j));
      for (std::int64_t f = 0; f < m; ++f)
        ctx_ids[e * static_cast<std::size_t>(m) + static_cast<std::size_t>(f)] = ex.ctx[static_cast<std::size_t>(f)];
    }
    if (len > cfg_.seq_len)
      throw SequenceError("sequence length " + std::to_string(len) + " exceeds maximum " +
                          std::to_string(cfg_.seq_len));

    // Sequence side.
    Var x = tape.embedding_rows(b.item_emb, ids);
    x = tape.add(x, tape.embedding_rows(b.pos_emb, pos_ids));
    if (!cfg_.encoder_bypass)
      for (const auto& blk : b.seq_blocks)
        x = encoder_block(tape, x, blk, cfg_.seq_heads, len, static_cast<R>(cfg_.leaky_slope),
                          &mask);

    // Context side: one embedding lookup per field, columns re-stacked into
    // per-example [m x d] blocks via row gathers from a concat.
    Var cx = stack_context_batch(tape, b, ctx_ids, m);
    if (!cfg_.encoder_bypass)
      for (const auto& blk : b.ctx_blocks)
        cx = encoder_block(tape, cx, blk, cfg_.ctx_heads, m, static_cast<R>(cfg_.leaky_slope),
                           nullptr);

    std::vector<Var> seq_pooled, ctx_pooled;
    seq_pooled.reserve(batch.size());
    ctx_pooled.reserve(batch.size());
    Mask all_real(static_cast<std::size_t>(m), 1);
    for (std::size_t e = 0; e < batch.size(); ++e) {
      Var xe = batch.size() == 1
                   ? x
                   : tape.slice_rows(x, static_cast<std::int64_t>(e) * len,
                                     static_cast<std::int64_t>(e + 1) * len);
      Mask me(batch[e].mask.begin(), batch[e].mask.end());
      seq_pooled.push_back(mean_max_pool(tape, xe, me));
      Var ce = batch.size() == 1
                   ? cx
                   : tape.slice_rows(cx, static_cast<std::int64_t>(e) * m,
                                     static_cast<std::int64_t>(e + 1) * m);
      ctx_pooled.push_back(mean_max_pool(tape, ce, all_real));
    }
    Var seq_mat = batch.size() == 1 ? seq_pooled[0] : tape.concat_rows(seq_pooled);
    Var ctx_mat = batch.size() == 1 ? ctx_pooled[0] : tape.concat_rows(ctx_pooled);
    Var crossed = tape.leaky_relu(tape.mul(seq_mat, ctx_mat), static_cast<R>(cfg_.leaky_slope));
    return tape.add(tape.matmul(crossed, b.out_w), b.out_b);
  }

  Var batch_loss(Tape<R>& tape, const Bound& b, std::span<const OrderExample> batch) const {
    Var logits = batch_logits(tape, b, batch);
    std::vector<std::int32_t> labels;
    labels.reserve(batch.size());
    for (const auto& ex : batch) labels.push_back(ex.label);
    return tape.cross_entropy_mean(logits, labels);
  }

  // Inference logits for one example on a private tape.
  std::vector<R> logits(const OrderExample& ex) const {
    Tape<R> tape;
    Bound b = bind(tape);
    Var out = batch_logits(tape, b, std::span<const OrderExample>(&ex, 1));
    return tape.value(out);
  }

  // Post-softmax context-attention matrices, ordered layer-major then head;
  // each entry is an m x m row-stochastic matrix.
  std::vector<std::vector<std::vector<R>>> attention_weights(const ContextVector& ctx) const {
    Tape<R> tape;
    Bound b = bind(tape);
    std::vector<Var> weights;
    encode_context(tape, b, ctx, &weights);
    std::vector<std::vector<std::vector<R>>> out;
    const auto m = ctx.size();
    for (Var w : weights) {
      std::vector<std::vector<R>> mat;
      const auto& flat = tape.value(w);
      for (std::size_t i = 0; i < m; ++i)
        mat.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * m),
                         flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
      out.push_back(std::move(mat));
    }
    return out;
  }

 private:
  TxTConfig cfg_;
  ParamStore<R> params_;

  Var stack_context(Tape<R>& tape, const Bound& b, const ContextVector& ctx) const {
    if (ctx.size() != cfg_.ctx_fields.size())
      throw ContractError("context has " + std::to_string(ctx.size()) + " ids, config expects " +
                          std::to_string(cfg_.ctx_fields.size()));
    std::vector<Var> rows;
    rows.reserve(ctx.size());
    for (std::size_t f = 0; f < ctx.size(); ++f) {
      const std::int32_t one[1] = {ctx[f]};
      check_ctx_id(f, ctx[f]);
      rows.push_back(tape.embedding_rows(b.ctx_emb[f], one));
    }
    return rows.size() == 1 ? rows[0] : tape.concat_rows(rows);
  }

  // ctx_ids is example-major [B*m]; returns [B*m x d] with per-example
  // blocks of m field rows.
  Var stack_context_batch(Tape<R>& tape, const Bound& b, const std::vector<std::int32_t>& ctx_ids,
                          std::int64_t m) const {
    const std::size_t bsz = ctx_ids.size() / static_cast<std::size_t>(m);
    // Gather per field over the whole batch, then interleave rows back to
    // example-major order through one concat + row gather.
    std::vector<Var> field_rows;
    for (std::int64_t f = 0; f < m; ++f) {
      std::vector<std::int32_t> ids(bsz);
      for (std::size_t e = 0; e < bsz; ++e) {
        ids[e] = ctx_ids[e * static_cast<std::size_t>(m) + static_cast<std::size_t>(f)];
        check_ctx_id(static_cast<std::size_t>(f), ids[e]);
      }
      field_rows.push_back(tape.embedding_rows(b.ctx_emb[static_cast<std::size_t>(f)], ids));
    }
    if (m == 1) return field_rows[0];
    // Interleave back to example-major blocks of m field rows.
    std::vector<Var> blocks;
    blocks.reserve(bsz);
    for (std::size_t e = 0; e < bsz; ++e) {
      std::vector<Var> rows;
      rows.reserve(static_cast<std::size_t>(m));
      for (std::int64_t f = 0; f < m; ++f)
        rows.push_back(tape.slice_rows(field_rows[static_cast<std::size_t>(f)],
                                       static_cast<std::int64_t>(e),
                                       static_cast<std::int64_t>(e) + 1));
      blocks.push_back(tape.concat_rows(rows));
    }
    return bsz == 1 ? blocks[0] : tape.concat_rows(blocks);
  }

  void check_ctx_id(std::size_t field, std::int32_t id) const {
    const auto& spec = cfg_.ctx_fields[field];
    if (id < 0 || id >= spec.cardinality)
      throw VocabError("context id " + std::to_string(id) + " out of range for field " +
                       spec.name);
  }
};

// -log softmax(logits)[label] for a plain logit vector, no tape required.
// Matches the training loss; used by evaluation and tests.
template <class R>
double cross_entropy_value(std::span<const R> logits, std::int32_t label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw VocabError("label " + std::to_string(label) + " out of range");
  double m = static_cast<double>(logits[0]);
  for (R v : logits) m = std::max(m, static_cast<double>(v));
  double sum = 0;
  for (R v : logits) sum += std::exp(static_cast<double>(v) - m);
  return std::log(sum) + m - static_cast<double>(logits[static_cast<std::size_t>(label)]);
}

template <class R>
std::vector<R> softmax_values(std::span<const R> logits) {
  std::vector<R> out(logits.size());
  R m = logits[0];
  for (R v : logits) m = std::max(m, v);
  R sum = R(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

}  // namespace txt
