#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "txt/baselines.hpp"
#include "txt/bundle.hpp"
#include "txt/itemcf.hpp"
#include "txt/model.hpp"

// Request/response inference over a loaded bundle, plus a small TCP
// endpoint. Wire framing is a u32 little-endian payload length followed by
// a UTF-8 JSON object; one connection may carry any number of frames. The
// exact request/response grammar is in docs/FORMATS.md.

namespace txt {

struct RecommendRequest {
  std::vector<std::string> items;  // basket in add-to-cart order; may be empty
  std::string timestamp;           // ISO-8601; empty = unknown time
  std::string weather;
  std::string store_id;
  std::string region;
  double temperature = 0.0;
  bool has_temperature = false;
  std::int32_t k = 3;
  bool exclude_basket = true;
};

struct RecommendResponse {
  std::string model_version;
  bool cold_start = false;
  std::vector<std::pair<std::string, double>> items;  // (name, probability) descending
};

// Immutable inference wrapper around a loaded bundle; safe for concurrent
// use from many threads.
class BundlePredictor {
 public:
  explicit BundlePredictor(ModelBundle bundle);

  RecommendResponse recommend(const RecommendRequest& request) const;
  const std::string& version() const { return bundle_.tag; }
  const ModelBundle& bundle() const { return bundle_; }

  // Raw per-item scores for an already-encoded example; probabilities for
  // the neural kinds, normalized co-occurrence scores for itemcf.
  std::vector<double> score_example(const OrderExample& ex) const;

 private:
  ModelBundle bundle_;
  DataConfig data_cfg_;
  std::variant<TxtModel<float>, TxtModel<double>, GruModel<float>, GruModel<double>,
               CooccurrenceModel>
      model_;
};

// One-shot operation: build a predictor for the bundle and answer.
RecommendResponse predict_top_k(const ModelBundle& bundle, const RecommendRequest& request);

// JSON layer: parses a request payload, answers it, and turns any failure
// into a structured error response instead of tearing the connection down.
std::string handle_request_json(const BundlePredictor& predictor, const std::string& payload);

RecommendRequest request_from_json(const std::string& payload);
std::string response_to_json(const RecommendResponse& response);

class RecServer {
 public:
  using Handler = std::function<std::string(const std::string&)>;

  explicit RecServer(Handler handler) : handler_(std::move(handler)) {}
  ~RecServer();

  // Binds and starts accepting; port 0 picks an ephemeral port.
  void start(const std::string& host, int port);
  int port() const { return port_; }
  void stop();

 private:
  Handler handler_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<std::thread> connections_;

  void accept_loop();
  void serve_connection(int fd);
};

// Client side: one frame out, one frame back, over a fresh connection.
std::string request_once(const std::string& host, int port, const std::string& payload);

}  // namespace txt
