#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "txt/tensor.hpp"

// Building blocks for the encoders: positional embedding, multi-head
// self-attention with key-side padding mask, point-wise feed-forward,
// layer normalization, and mean-max pooling. All functions build tape
// nodes; parameters arrive pre-bound as tape variables.

namespace txt {

struct AttnVars {
  Var wq, wk, wv, wo;  // all [d x d]
};

struct FfnVars {
  Var w1, b1, w2, b2;  // [d x d_ff], [d_ff], [d_ff x d], [d]
};

struct LnVars {
  Var gain, bias;  // [d]
};

struct BlockVars {
  AttnVars attn;
  LnVars ln1;
  FfnVars ffn;
  LnVars ln2;
};

// Score offset for padded keys. Large enough that post-softmax weight at a
// masked position is indistinguishable from zero, small enough to stay
// finite in standard precision.
inline constexpr double kMaskNegative = -1e9;

inline constexpr double kLayerNormEps = 1e-5;

// x[i] += pos_table[i] for the first L rows of the learned position table.
template <class R>
Var add_positional(Tape<R>& tape, Var x, Var pos_table) {
  const auto len = tape.shape(x)[0];
  const auto max_len = tape.shape(pos_table)[0];
  if (len > max_len)
    throw SequenceError("sequence length " + std::to_string(len) +
                        " exceeds maximum " + std::to_string(max_len));
  Var pos = len == max_len ? pos_table : tape.slice_rows(pos_table, 0, len);
  return tape.add(x, pos);
}

// Multi-head self-attention over a stack of independent examples.
//
// x is [n_examples*seq_len x d]; each consecutive block of seq_len rows is
// one example. Per head, rows are projected through column slices of the
// full [d x d] Q/K/V weights, scores are scaled by 1/sqrt(d_k), masked key
// columns are pushed to kMaskNegative before the softmax, and the per-head
// outputs are concatenated and projected by wo. When mask is null every
// position is treated as real. If weights_out is given, the post-softmax
// attention matrices are appended to it, ordered example-major then head.
template <class R>
Var multi_head_self_attention(Tape<R>& tape, Var x, const AttnVars& p, int heads,
                              std::int64_t seq_len, const Mask* mask,
                              std::vector<Var>* weights_out = nullptr) {
  const Shape& xs = tape.shape(x);
  if (xs.size() != 2) throw ShapeError("attention input must be rank 2, got " + shape_str(xs));
  const std::int64_t d = xs[1];
  if (heads < 1 || d % heads != 0)
    throw ContractError("model width " + std::to_string(d) + " not divisible by " +
                        std::to_string(heads) + " heads");
  if (seq_len < 1 || xs[0] % seq_len != 0)
    throw ShapeError("row count " + shape_str(xs) + " not a multiple of sequence length " +
                     std::to_string(seq_len));
  const std::int64_t n_examples = xs[0] / seq_len;
  if (mask && static_cast<std::int64_t>(mask->size()) != xs[0])
    throw ContractError("mask length " + std::to_string(mask->size()) +
                        " does not match " + std::to_string(xs[0]) + " attention rows");

  const std::int64_t dk = d / heads;
  const R scale = static_cast<R>(1.0 / std::sqrt(static_cast<double>(dk)));

  Var q = tape.matmul(x, p.wq);
  Var k = tape.matmul(x, p.wk);
  Var v = tape.matmul(x, p.wv);

  // Per-example additive key bias: 0 for real keys, kMaskNegative for pads.
  std::vector<Var> key_bias(static_cast<std::size_t>(n_examples));
  if (mask) {
    for (std::int64_t e = 0; e < n_examples; ++e) {
      std::vector<R> bias(static_cast<std::size_t>(seq_len));
      for (std::int64_t j = 0; j < seq_len; ++j)
        bias[static_cast<std::size_t>(j)] =
            (*mask)[static_cast<std::size_t>(e * seq_len + j)] ? R(0) : static_cast<R>(kMaskNegative);
      key_bias[static_cast<std::size_t>(e)] = tape.constant({seq_len}, std::move(bias));
    }
  }

  std::vector<Var> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::int64_t c0 = h * dk, c1 = (h + 1) * dk;
    Var qh = tape.slice_cols(q, c0, c1);
    Var kh = tape.slice_cols(k, c0, c1);
    Var vh = tape.slice_cols(v, c0, c1);
    std::vector<Var> per_example;
    per_example.reserve(static_cast<std::size_t>(n_examples));
    for (std::int64_t e = 0; e < n_examples; ++e) {
      Var qe = n_examples == 1 ? qh : tape.slice_rows(qh, e * seq_len, (e + 1) * seq_len);
      Var ke = n_examples == 1 ? kh : tape.slice_rows(kh, e * seq_len, (e + 1) * seq_len);
      Var ve = n_examples == 1 ? vh : tape.slice_rows(vh, e * seq_len, (e + 1) * seq_len);
      Var scores = tape.affine(tape.matmul(qe, tape.transpose(ke)), scale, R(0));
      if (mask) scores = tape.add(scores, key_bias[static_cast<std::size_t>(e)]);
      Var attn = tape.softmax_lastdim(scores);
      if (weights_out) weights_out->push_back(attn);
      per_example.push_back(tape.matmul(attn, ve));
    }
    head_outputs.push_back(n_examples == 1 ? per_example[0] : tape.concat_rows(per_example));
  }
  Var merged = heads == 1 ? head_outputs[0] : tape.concat_cols(head_outputs);
  return tape.matmul(merged, p.wo);
}

// Position-wise two-layer feed-forward: act(x*w1 + b1)*w2 + b2.
template <class R>
Var feed_forward(Tape<R>& tape, Var x, const FfnVars& p, R slope) {
  Var h = tape.leaky_relu(tape.add(tape.matmul(x, p.w1), p.b1), slope);
  return tape.add(tape.matmul(h, p.w2), p.b2);
}

template <class R>
Var layer_norm(Tape<R>& tape, Var x, const LnVars& p) {
  return tape.layer_norm(x, p.gain, p.bias, static_cast<R>(kLayerNormEps));
}

// Post-norm Transformer encoder block:
//   x -> MHSA -> +x -> LN -> FFN -> +residual -> LN
template <class R>
Var encoder_block(Tape<R>& tape, Var x, const BlockVars& p, int heads, std::int64_t seq_len,
                  R slope, const Mask* mask, std::vector<Var>* weights_out = nullptr) {
  Var attn = multi_head_self_attention(tape, x, p.attn, heads, seq_len, mask, weights_out);
  Var h = layer_norm(tape, tape.add(x, attn), p.ln1);
  Var ff = feed_forward(tape, h, p.ffn, slope);
  return layer_norm(tape, tape.add(h, ff), p.ln2);
}

// Concat of the element-wise mean and element-wise max over real rows;
// output [1 x 2d]. Padded rows never influence either half.
template <class R>
Var mean_max_pool(Tape<R>& tape, Var z, const Mask& mask) {
  Var mean = tape.masked_mean_rows(z, mask);
  Var mx = tape.masked_max_rows(z, mask);
  const Var parts[2] = {mean, mx};
  return tape.concat_cols(std::span<const Var>(parts, 2));
}

}  // namespace txt
