#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "txt/data.hpp"
#include "txt/example.hpp"
#include "txt/tensor.hpp"

// Adam optimization and the training loop. The data-parallel mode runs W
// in-process workers per step, each computing gradients for its shard on a
// private tape; the shard gradients are averaged in a fixed ascending-id
// pairwise order and applied as one Adam update, so a parallel step is
// numerically the step of the combined batch.

namespace txt {

template <class R>
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  GradMap<R> m, v;
};

// One update. Validates every gradient before mutating anything, so a
// non-finite gradient aborts the step with the parameter named and the
// state untouched. clip > 0 rescales by the global L2 norm.
template <class R>
void adam_step(ParamStore<R>& params, const GradMap<R>& grads, AdamState<R>& state,
               double clip = 0.0) {
  for (const auto& [name, tensor] : params.items()) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;  // absent means zero gradient
    if (it->second.size() != tensor.data.size())
      throw TrainError("gradient size mismatch for parameter " + name);
    if (!all_finite(it->second))
      throw TrainError("non-finite gradient for parameter " + name);
  }

  double scale = 1.0;
  if (clip > 0.0) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
      for (R v : g) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (norm > clip) scale = clip / norm;
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, tensor] : params.items()) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(tensor.data.size(), R(0));
    if (v.empty()) v.assign(tensor.data.size(), R(0));
    const auto& g = it->second;
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * scale;
      const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<R>(mi);
      v[i] = static_cast<R>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      tensor.data[i] =
          static_cast<R>(static_cast<double>(tensor.data[i]) -
                         state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

struct TrainConfig {
  std::int32_t epochs = 1;
  std::int32_t batch_size = 512;
  std::uint64_t seed = 0;
  std::int32_t workers = 1;
  double lr = 0.001;
  double clip = 0.0;
  std::int32_t log_every = 0;  // 0 = silent
};

struct TrainResult {
  std::vector<std::pair<std::int64_t, double>> trace;  // (step, batch mean loss)
};

template <class Model, class R = typename Model::scalar_type>
double sequential_step(Model& model, std::span<const OrderExample> batch, AdamState<R>& state,
                       double clip = 0.0) {
  Tape<R> tape;
  auto bound = model.bind(tape);
  Var loss = model.batch_loss(tape, bound, batch);
  tape.backward(loss);
  auto grads = tape.grads_by_name();
  adam_step(model.params(), grads, state, clip);
  return static_cast<double>(tape.value(loss)[0]);
}

namespace detail {

// Fixed pairwise tree reduction over ascending worker ids: (0+1), (2+3),
// then across, so the parallel step's floating-point result is independent
// of thread scheduling.
template <class R>
void tree_reduce(std::vector<GradMap<R>>& maps, std::vector<double>& losses) {
  for (std::size_t stride = 1; stride < maps.size(); stride *= 2) {
    for (std::size_t i = 0; i + stride < maps.size(); i += 2 * stride) {
      for (auto& [name, acc] : maps[i]) {
        const auto& other = maps[i + stride].at(name);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += other[j];
      }
      losses[i] += losses[i + stride];
    }
  }
}

}  // namespace detail

// One synchronous data-parallel step over W equal-size shards. Because the
// batch loss is a mean, the average of the shard gradients equals the
// gradient of the concatenated batch.
template <class Model, class R = typename Model::scalar_type>
double parallel_step(Model& model, const std::vector<std::span<const OrderExample>>& shards,
                     AdamState<R>& state, double clip = 0.0) {
  if (shards.empty()) throw ContractError("parallel step needs at least one worker shard");
  const std::size_t shard_size = shards[0].size();
  for (const auto& s : shards)
    if (s.size() != shard_size || s.empty())
      throw ContractError("parallel step requires equal-size non-empty shards");

  const std::size_t w = shards.size();
  std::vector<GradMap<R>> grads(w);
  std::vector<double> losses(w, 0.0);
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (std::size_t i = 0; i < w; ++i) {
    threads.emplace_back([&, i] {
      try {
        Tape<R> tape;
        auto bound = model.bind(tape);
        Var loss = model.batch_loss(tape, bound, shards[i]);
        tape.backward(loss);
        grads[i] = tape.grads_by_name();
        losses[i] = static_cast<double>(tape.value(loss)[0]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  detail::tree_reduce(grads, losses);
  const R inv = R(1) / static_cast<R>(w);
  for (auto& [name, g] : grads[0])
    for (auto& x : g) x *= inv;
  adam_step(model.params(), grads[0], state, clip);
  return losses[0] / static_cast<double>(w);
}

// Full training loop: seeded shuffle per epoch, fixed-size batches (final
// short batch kept), one Adam step per batch. A batch is split across
// workers only when it divides evenly; leftovers run sequentially.
template <class Model, class R = typename Model::scalar_type>
TrainResult train(Model& model, const std::vector<OrderExample>& examples,
                  const TrainConfig& cfg) {
  if (examples.empty()) throw ContractError("training set is empty: 0 batches");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.workers < 1)
    throw ContractError("bad training configuration");
  AdamState<R> state;
  state.lr = cfg.lr;
  TrainResult result;
  std::int64_t step = 0;
  std::vector<OrderExample> batch;
  for (std::int32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = make_batches(examples.size(), static_cast<std::size_t>(cfg.batch_size),
                                cfg.seed, static_cast<std::uint64_t>(epoch));
    for (const auto& idx : batches) {
      batch.clear();
      for (auto i : idx) batch.push_back(examples[i]);
      double loss;
      if (cfg.workers > 1 && batch.size() % static_cast<std::size_t>(cfg.workers) == 0) {
        const std::size_t shard = batch.size() / static_cast<std::size_t>(cfg.workers);
        std::vector<std::span<const OrderExample>> shards;
        for (std::int32_t wkr = 0; wkr < cfg.workers; ++wkr)
          shards.emplace_back(batch.data() + static_cast<std::size_t>(wkr) * shard, shard);
        loss = parallel_step(model, shards, state, cfg.clip);
      } else {
        loss = sequential_step(model, std::span<const OrderExample>(batch), state, cfg.clip);
      }
      ++step;
      result.trace.emplace_back(step, loss);
      if (cfg.log_every > 0 && step % cfg.log_every == 0)
        std::fprintf(stderr, "step %lld loss %.6f\n", static_cast<long long>(step), loss);
    }
  }
  return result;
}

inline std::string loss_trace_text(const TrainResult& result) {
  std::string out;
  char line[64];
  for (const auto& [step, loss] : result.trace) {
    std::snprintf(line, sizeof(line), "%lld %.8f\n", static_cast<long long>(step), loss);
    out += line;
  }
  return out;
}

}  // namespace txt
