#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "txt/example.hpp"
#include "txt/model.hpp"
#include "txt/tensor.hpp"

// The two trainable comparison models: a single-layer GRU over the item
// prefix (sequence only), and the same GRU whose final hidden state is
// crossed element-wise with the summed context embeddings before the head.

namespace txt {

struct GruConfig {
  std::int32_t d_embed = 100;  // hidden size matches the embedding size
  std::int32_t seq_len = 5;
  std::int32_t item_vocab = 0;
  std::vector<CtxFieldSpec> ctx_fields;  // used only when use_context
  bool use_context = false;

  void validate() const {
    if (d_embed < 1 || seq_len < 1) throw ContractError("non-positive GRU dimension");
    if (item_vocab < 3) throw ContractError("item vocabulary too small");
    if (use_context && ctx_fields.empty())
      throw ContractError("latent-cross GRU needs at least one context field");
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> names = {"item_emb"};
    if (use_context)
      for (const auto& f : ctx_fields) names.push_back("ctx_emb." + f.name);
    for (const char* g : {"gru.wz", "gru.uz", "gru.bz", "gru.wr", "gru.ur", "gru.br",
                          "gru.wn", "gru.un", "gru.bn"})
      names.push_back(g);
    names.push_back("head.w");
    names.push_back("head.b");
    return names;
  }
};

template <class R>
class GruModel {
 public:
  using scalar_type = R;

  struct Bound {
    Var item_emb;
    std::vector<Var> ctx_emb;
    Var wz, uz, bz, wr, ur, br, wn, un, bn;
    Var head_w, head_b;
  };

  GruModel(GruConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::int64_t d = cfg_.d_embed;
    auto norm_table = [&](const std::string& name, std::int64_t rows) {
      auto t = Tensor<R>::zeros({rows, d});
      CounterRng rng(seed, name);
      init_normal(t, rng, 0.01);
      params_.add(name, std::move(t));
    };
    norm_table("item_emb", cfg_.item_vocab);
    if (cfg_.use_context)
      for (const auto& f : cfg_.ctx_fields) norm_table("ctx_emb." + f.name, f.cardinality);
    for (const char* gate : {"gru.wz", "gru.uz", "gru.wr", "gru.ur", "gru.wn", "gru.un"}) {
      auto t = Tensor<R>::zeros({d, d});
      CounterRng rng(seed, gate);
      init_xavier(t, rng);
      params_.add(gate, std::move(t));
    }
    for (const char* bias : {"gru.bz", "gru.br", "gru.bn"})
      params_.add(bias, Tensor<R>::zeros({d}));
    auto head = Tensor<R>::zeros({d, cfg_.item_vocab});
    CounterRng rng(seed, "head.w");
    init_xavier(head, rng);
    params_.add("head.w", std::move(head));
    params_.add("head.b", Tensor<R>::zeros({cfg_.item_vocab}));
  }

  GruModel(GruConfig cfg, ParamStore<R> loaded)
      : cfg_(std::move(cfg)), params_(std::move(loaded)) {
    cfg_.validate();
    for (const auto& name : cfg_.param_names())
      if (!params_.contains(name)) throw ContractError("missing parameter: " + name);
  }

  const GruConfig& config() const { return cfg_; }
  ParamStore<R>& params() { return params_; }
  const ParamStore<R>& params() const { return params_; }

  Bound bind(Tape<R>& tape) const {
    Bound b;
    b.item_emb = tape.leaf("item_emb", params_.at("item_emb"));
    if (cfg_.use_context)
      for (const auto& f : cfg_.ctx_fields)
        b.ctx_emb.push_back(tape.leaf("ctx_emb." + f.name, params_.at("ctx_emb." + f.name)));
    b.wz = tape.leaf("gru.wz", params_.at("gru.wz"));
    b.uz = tape.leaf("gru.uz", params_.at("gru.uz"));
    b.bz = tape.leaf("gru.bz", params_.at("gru.bz"));
    b.wr = tape.leaf("gru.wr", params_.at("gru.wr"));
    b.ur = tape.leaf("gru.ur", params_.at("gru.ur"));
    b.br = tape.leaf("gru.br", params_.at("gru.br"));
    b.wn = tape.leaf("gru.wn", params_.at("gru.wn"));
    b.un = tape.leaf("gru.un", params_.at("gru.un"));
    b.bn = tape.leaf("gru.bn", params_.at("gru.bn"));
    b.head_w = tape.leaf("head.w", params_.at("head.w"));
    b.head_b = tape.leaf("head.b", params_.at("head.b"));
    return b;
  }

  // GRU recurrence over real positions (padded steps keep the previous
  // hidden state):
  //   z = sigmoid(x Wz + h Uz + bz)
  //   r = sigmoid(x Wr + h Ur + br)
  //   n = tanh(x Wn + (r * h) Un + bn)
  //   h' = (1 - z) * h + z * n
  Var batch_logits(Tape<R>& tape, const Bound& b, std::span<const OrderExample> batch) const {
    if (batch.empty()) throw ContractError("empty batch");
    const auto bsz = static_cast<std::int64_t>(batch.size());
    const auto len = static_cast<std::int64_t>(batch[0].input_ids.size());
    if (len > cfg_.seq_len)
      throw SequenceError("sequence length " + std::to_string(len) + " exceeds maximum " +
                          std::to_string(cfg_.seq_len));
    const std::int64_t d = cfg_.d_embed;

    Var h = tape.constant({bsz, d},
                          std::vector<R>(static_cast<std::size_t>(bsz * d), R(0)));
    for (std::int64_t t = 0; t < len; ++t) {
      std::vector<std::int32_t> step_ids(static_cast<std::size_t>(bsz));
      std::vector<R> step_mask(static_cast<std::size_t>(bsz));
      for (std::int64_t e = 0; e < bsz; ++e) {
        const auto& ex = batch[static_cast<std::size_t>(e)];
        if (static_cast<std::int64_t>(ex.input_ids.size()) != len)
          throw ContractError("ragged batch in GRU forward");
        step_ids[static_cast<std::size_t>(e)] = ex.input_ids[static_cast<std::size_t>(t)];
        step_mask[static_cast<std::size_t>(e)] =
            ex.mask[static_cast<std::size_t>(t)] ? R(1) : R(0);
      }
      Var x = tape.embedding_rows(b.item_emb, step_ids);
      Var z = tape.sigmoid(tape.add(tape.add(tape.matmul(x, b.wz), tape.matmul(h, b.uz)), b.bz));
      Var r = tape.sigmoid(tape.add(tape.add(tape.matmul(x, b.wr), tape.matmul(h, b.ur)), b.br));
      Var n = tape.tanh(
          tape.add(tape.add(tape.matmul(x, b.wn), tape.matmul(tape.mul(r, h), b.un)), b.bn));
      Var keep = tape.mul(tape.affine(z, R(-1), R(1)), h);  // (1 - z) * h
      Var cand = tape.add(keep, tape.mul(z, n));
      Var m = tape.constant({bsz, 1}, step_mask);
      Var inv_m = tape.affine(m, R(-1), R(1));
      h = tape.add(tape.mul(cand, m), tape.mul(h, inv_m));
    }

    if (cfg_.use_context) {
      Var ctx_sum{};
      for (std::size_t f = 0; f < cfg_.ctx_fields.size(); ++f) {
        std::vector<std::int32_t> ids(static_cast<std::size_t>(bsz));
        for (std::int64_t e = 0; e < bsz; ++e) {
          const auto& ex = batch[static_cast<std::size_t>(e)];
          if (ex.ctx.size() != cfg_.ctx_fields.size())
            throw ContractError("context width mismatch in GRU latent cross");
          ids[static_cast<std::size_t>(e)] = ex.ctx[f];
        }
        Var rows = tape.embedding_rows(b.ctx_emb[f], ids);
        ctx_sum = f == 0 ? rows : tape.add(ctx_sum, rows);
      }
      h = tape.mul(h, ctx_sum);
    }
    return tape.add(tape.matmul(h, b.head_w), b.head_b);
  }

  Var batch_loss(Tape<R>& tape, const Bound& b, std::span<const OrderExample> batch) const {
    Var logits = batch_logits(tape, b, batch);
    std::vector<std::int32_t> labels;
    labels.reserve(batch.size());
    for (const auto& ex : batch) labels.push_back(ex.label);
    return tape.cross_entropy_mean(logits, labels);
  }

  std::vector<R> logits(const OrderExample& ex) const {
    Tape<R> tape;
    Bound b = bind(tape);
    return tape.value(batch_logits(tape, b, std::span<const OrderExample>(&ex, 1)));
  }

 private:
  GruConfig cfg_;
  ParamStore<R> params_;
};

}  // namespace txt
