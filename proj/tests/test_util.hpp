#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "txt/baselines.hpp"
#include "txt/rng.hpp"
#include "txt/tensor.hpp"

// Shared oracles for the test suites. Everything here is independent of the
// tape implementation it checks: plain loops in double (or long double)
// precision.

namespace txt::test {

// Relative error with an absolute floor so near-zero gradients compare on
// noise level rather than blowing up the ratio.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / (std::max(std::abs(a), std::abs(b)) + 1e-6);
}

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Central finite differences over every element of every parameter in the
// store. `loss` must evaluate the model from the store's current values.
template <class R>
FdReport finite_difference_check(ParamStore<R>& params, const GradMap<R>& analytic,
                                 const std::function<double()>& loss, double step = 1e-5) {
  FdReport report;
  for (auto& [name, tensor] : params.items()) {
    const auto& g = analytic.at(name);
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      const R saved = tensor.data[i];
      tensor.data[i] = saved + static_cast<R>(step);
      const double up = loss();
      tensor.data[i] = saved - static_cast<R>(step);
      const double down = loss();
      tensor.data[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double err = rel_err(fd, static_cast<double>(g[i]));
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

// Naive scaled dot-product attention for one head's column slice, computed
// with explicit loops and no tape. x is [L x d] row-major.
inline std::vector<double> naive_attention_head(const std::vector<double>& x,
                                                const std::vector<double>& wq,
                                                const std::vector<double>& wk,
                                                const std::vector<double>& wv, std::int64_t L,
                                                std::int64_t d, std::int64_t c0, std::int64_t dk,
                                                const std::vector<std::uint8_t>* mask) {
  auto project = [&](const std::vector<double>& w) {
    std::vector<double> out(static_cast<std::size_t>(L * dk), 0.0);
    for (std::int64_t i = 0; i < L; ++i)
      for (std::int64_t j = 0; j < dk; ++j) {
        double acc = 0;
        for (std::int64_t k = 0; k < d; ++k)
          acc += x[static_cast<std::size_t>(i * d + k)] *
                 w[static_cast<std::size_t>(k * d + c0 + j)];
        out[static_cast<std::size_t>(i * dk + j)] = acc;
      }
    return out;
  };
  auto q = project(wq), k = project(wk), v = project(wv);
  std::vector<double> out(static_cast<std::size_t>(L * dk), 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::int64_t i = 0; i < L; ++i) {
    std::vector<double> scores(static_cast<std::size_t>(L));
    for (std::int64_t j = 0; j < L; ++j) {
      double acc = 0;
      for (std::int64_t t = 0; t < dk; ++t)
        acc += q[static_cast<std::size_t>(i * dk + t)] * k[static_cast<std::size_t>(j * dk + t)];
      scores[static_cast<std::size_t>(j)] = acc * scale;
      if (mask && !(*mask)[static_cast<std::size_t>(j)])
        scores[static_cast<std::size_t>(j)] += -1e9;
    }
    double m = scores[0];
    for (double s : scores) m = std::max(m, s);
    double sum = 0;
    for (auto& s : scores) {
      s = std::exp(s - m);
      sum += s;
    }
    for (auto& s : scores) s /= sum;
    for (std::int64_t j = 0; j < L; ++j)
      for (std::int64_t t = 0; t < dk; ++t)
        out[static_cast<std::size_t>(i * dk + t)] +=
            scores[static_cast<std::size_t>(j)] * v[static_cast<std::size_t>(j * dk + t)];
  }
  return out;
}

// Full multi-head attention oracle: per-head naive computation, concat,
// output projection, all plain loops.
inline std::vector<double> naive_multi_head(const std::vector<double>& x,
                                            const std::vector<double>& wq,
                                            const std::vector<double>& wk,
                                            const std::vector<double>& wv,
                                            const std::vector<double>& wo, std::int64_t L,
                                            std::int64_t d, int heads,
                                            const std::vector<std::uint8_t>* mask) {
  const std::int64_t dk = d / heads;
  std::vector<double> merged(static_cast<std::size_t>(L * d), 0.0);
  for (int h = 0; h < heads; ++h) {
    auto head = naive_attention_head(x, wq, wk, wv, L, d, h * dk, dk, mask);
    for (std::int64_t i = 0; i < L; ++i)
      for (std::int64_t j = 0; j < dk; ++j)
        merged[static_cast<std::size_t>(i * d + h * dk + j)] =
            head[static_cast<std::size_t>(i * dk + j)];
  }
  std::vector<double> out(static_cast<std::size_t>(L * d), 0.0);
  for (std::int64_t i = 0; i < L; ++i)
    for (std::int64_t j = 0; j < d; ++j) {
      double acc = 0;
      for (std::int64_t k = 0; k < d; ++k)
        acc += merged[static_cast<std::size_t>(i * d + k)] * wo[static_cast<std::size_t>(k * d + j)];
      out[static_cast<std::size_t>(i * d + j)] = acc;
    }
  return out;
}

// Per-position feed-forward oracle.
inline std::vector<double> naive_feed_forward(const std::vector<double>& x,
                                              const std::vector<double>& w1,
                                              const std::vector<double>& b1,
                                              const std::vector<double>& w2,
                                              const std::vector<double>& b2, std::int64_t L,
                                              std::int64_t d, std::int64_t dff, double slope) {
  std::vector<double> out(static_cast<std::size_t>(L * d));
  for (std::int64_t i = 0; i < L; ++i) {
    std::vector<double> h(static_cast<std::size_t>(dff));
    for (std::int64_t j = 0; j < dff; ++j) {
      double acc = b1[static_cast<std::size_t>(j)];
      for (std::int64_t k = 0; k < d; ++k)
        acc += x[static_cast<std::size_t>(i * d + k)] * w1[static_cast<std::size_t>(k * dff + j)];
      h[static_cast<std::size_t>(j)] = acc >= 0 ? acc : slope * acc;
    }
    for (std::int64_t j = 0; j < d; ++j) {
      double acc = b2[static_cast<std::size_t>(j)];
      for (std::int64_t k = 0; k < dff; ++k)
        acc += h[static_cast<std::size_t>(k)] * w2[static_cast<std::size_t>(k * d + j)];
      out[static_cast<std::size_t>(i * d + j)] = acc;
    }
  }
  return out;
}

inline std::vector<double> naive_layer_norm(const std::vector<double>& x,
                                            const std::vector<double>& gain,
                                            const std::vector<double>& bias, std::int64_t L,
                                            std::int64_t d, double eps) {
  std::vector<double> out(x.size());
  for (std::int64_t i = 0; i < L; ++i) {
    double mean = 0;
    for (std::int64_t j = 0; j < d; ++j) mean += x[static_cast<std::size_t>(i * d + j)];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      double c = x[static_cast<std::size_t>(i * d + j)] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    for (std::int64_t j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i * d + j)] =
          (x[static_cast<std::size_t>(i * d + j)] - mean) * inv * gain[static_cast<std::size_t>(j)] +
          bias[static_cast<std::size_t>(j)];
  }
  return out;
}

// Mean-max pooling oracle straight from the formula: mean over real rows,
// columnwise max over real rows, concatenated.
inline std::vector<double> naive_mean_max_pool(const std::vector<double>& z,
                                               const std::vector<std::uint8_t>& mask,
                                               std::int64_t L, std::int64_t d) {
  std::vector<double> out(static_cast<std::size_t>(2 * d), 0.0);
  std::int64_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  for (std::int64_t j = 0; j < d; ++j) {
    double sum = 0;
    double best = 0;
    bool first = true;
    for (std::int64_t i = 0; i < L; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      double v = z[static_cast<std::size_t>(i * d + j)];
      sum += v;
      if (first || v > best) best = v;
      first = false;
    }
    out[static_cast<std::size_t>(j)] = sum / static_cast<double>(n);
    out[static_cast<std::size_t>(d + j)] = best;
  }
  return out;
}

// Hand-rolled per-step GRU oracle in plain double loops.
inline std::vector<double> gru_oracle_logits(const GruModel<double>& model, const OrderExample& ex) {
  const auto& p = model.params();
  const std::int64_t d = model.config().d_embed;
  const std::int64_t v = model.config().item_vocab;
  auto matvec = [&](const std::vector<double>& m, const std::vector<double>& x, std::int64_t rows,
                    std::int64_t cols) {
    std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < cols; ++j)
        out[static_cast<std::size_t>(j)] +=
            x[static_cast<std::size_t>(i)] * m[static_cast<std::size_t>(i * cols + j)];
    return out;
  };
  std::vector<double> h(static_cast<std::size_t>(d), 0.0);
  for (std::size_t t = 0; t < ex.input_ids.size(); ++t) {
    if (!ex.mask[t]) continue;
    const auto id = ex.input_ids[t];
    std::vector<double> x(static_cast<std::size_t>(d));
    for (std::int64_t j = 0; j < d; ++j)
      x[static_cast<std::size_t>(j)] = p.at("item_emb").data[static_cast<std::size_t>(id * d + j)];
    auto xz = matvec(p.at("gru.wz").data, x, d, d);
    auto hz = matvec(p.at("gru.uz").data, h, d, d);
    auto xr = matvec(p.at("gru.wr").data, x, d, d);
    auto hr = matvec(p.at("gru.ur").data, h, d, d);
    std::vector<double> z(static_cast<std::size_t>(d)), r(static_cast<std::size_t>(d));
    for (std::int64_t j = 0; j < d; ++j) {
      z[static_cast<std::size_t>(j)] =
          1.0 / (1.0 + std::exp(-(xz[static_cast<std::size_t>(j)] + hz[static_cast<std::size_t>(j)] +
                                  p.at("gru.bz").data[static_cast<std::size_t>(j)])));
      r[static_cast<std::size_t>(j)] =
          1.0 / (1.0 + std::exp(-(xr[static_cast<std::size_t>(j)] + hr[static_cast<std::size_t>(j)] +
                                  p.at("gru.br").data[static_cast<std::size_t>(j)])));
    }
    std::vector<double> rh(static_cast<std::size_t>(d));
    for (std::int64_t j = 0; j < d; ++j)
      rh[static_cast<std::size_t>(j)] = r[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(j)];
    auto xn = matvec(p.at("gru.wn").data, x, d, d);
    auto hn = matvec(p.at("gru.un").data, rh, d, d);
    for (std::int64_t j = 0; j < d; ++j) {
      double n = std::tanh(xn[static_cast<std::size_t>(j)] + hn[static_cast<std::size_t>(j)] +
                           p.at("gru.bn").data[static_cast<std::size_t>(j)]);
      double zj = z[static_cast<std::size_t>(j)];
      h[static_cast<std::size_t>(j)] = (1.0 - zj) * h[static_cast<std::size_t>(j)] + zj * n;
    }
  }
  if (model.config().use_context) {
    for (std::int64_t j = 0; j < d; ++j) {
      double sum = 0.0;
      for (std::size_t f = 0; f < model.config().ctx_fields.size(); ++f) {
        const auto& table = p.at("ctx_emb." + model.config().ctx_fields[f].name).data;
        sum += table[static_cast<std::size_t>(ex.ctx[f] * d + j)];
      }
      h[static_cast<std::size_t>(j)] *= sum;
    }
  }
  auto logits = matvec(p.at("head.w").data, h, d, v);
  for (std::int64_t j = 0; j < v; ++j)
    logits[static_cast<std::size_t>(j)] += p.at("head.b").data[static_cast<std::size_t>(j)];
  return logits;
}

template <class R>
std::vector<R> random_vector(CounterRng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<R> out(n);
  for (auto& v : out) v = static_cast<R>(rng.next_uniform(lo, hi));
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace txt::test
