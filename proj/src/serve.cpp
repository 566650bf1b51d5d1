#include "txt/serve.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>

#include <json.hpp>

#include "txt/bundle_models.hpp"
#include "txt/data.hpp"
#include "txt/metrics.hpp"

namespace txt {

namespace {

constexpr std::uint32_t kMaxFrame = 16u << 20;

using json = nlohmann::json;

std::int32_t ctx_id(const Vocabs& vocabs, const std::string& field, const std::string& token,
                    bool known) {
  if (!known) return kUnkId;
  return vocabs.ctx_field(field).id_of(token);
}

}  // namespace

BundlePredictor::BundlePredictor(ModelBundle bundle)
    : bundle_(std::move(bundle)),
      data_cfg_(data_config_from(bundle_)),
      model_([&]() -> decltype(model_) {
        const bool wide = bundle_.precision == "wide";
        if (bundle_.kind == "txt")
          return wide ? decltype(model_)(txt_from_bundle<double>(bundle_))
                      : decltype(model_)(txt_from_bundle<float>(bundle_));
        if (bundle_.kind == "rnn" || bundle_.kind == "rnn-latent-cross")
          return wide ? decltype(model_)(gru_from_bundle<double>(bundle_))
                      : decltype(model_)(gru_from_bundle<float>(bundle_));
        if (bundle_.kind == "itemcf") return itemcf_from_bundle(bundle_);
        throw ContractError("cannot serve bundle of kind " + bundle_.kind);
      }()) {}

std::vector<double> BundlePredictor::score_example(const OrderExample& ex) const {
  return std::visit(
      [&](const auto& model) -> std::vector<double> {
        using M = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<M, CooccurrenceModel>) {
          std::vector<std::int32_t> basket;
          for (std::size_t i = 0; i < ex.mask.size(); ++i)
            if (ex.mask[i]) basket.push_back(ex.input_ids[i]);
          auto raw = model.scores(basket, ex.ctx);
          // Normalized so every reported value is a probability in (0, 1].
          double total = 0.0;
          for (double s : raw) total += s + 1e-9;
          for (auto& s : raw) s = (s + 1e-9) / total;
          return raw;
        } else {
          auto logits = model.logits(ex);
          auto probs = softmax_values<typename M::scalar_type>(
              std::span<const typename M::scalar_type>(logits));
          return std::vector<double>(probs.begin(), probs.end());
        }
      },
      model_);
}

RecommendResponse BundlePredictor::recommend(const RecommendRequest& request) const {
  if (request.k < 1) throw ContractError("k must be at least 1");
  const auto seq_len = static_cast<std::size_t>(data_cfg_.seq_len);

  OrderExample ex;
  bool cold_start = false;
  std::vector<std::int32_t> basket_ids;
  for (const auto& name : request.items) basket_ids.push_back(bundle_.vocabs.item.id_of(name));
  if (basket_ids.empty()) {
    // Cold start: a single UNK placeholder stands in for the empty basket.
    basket_ids.push_back(kUnkId);
    cold_start = true;
  }
  const std::size_t keep = std::min(basket_ids.size(), seq_len);
  ex.input_ids.assign(basket_ids.end() - static_cast<std::ptrdiff_t>(keep), basket_ids.end());
  ex.input_ids.resize(seq_len, kPadId);
  ex.mask.assign(seq_len, 0);
  for (std::size_t i = 0; i < keep; ++i) ex.mask[i] = 1;

  const auto ts = parse_timestamp(request.timestamp);
  ex.ctx.push_back(ctx_id(bundle_.vocabs, "hour", ts ? hour_token(ts->hour) : "", ts.has_value()));
  ex.ctx.push_back(
      ctx_id(bundle_.vocabs, "dow", ts ? dow_token(ts->weekday) : "", ts.has_value()));
  ex.ctx.push_back(ctx_id(bundle_.vocabs, "temp",
                          request.has_temperature ? temp_token(request.temperature, data_cfg_) : "",
                          request.has_temperature));
  ex.ctx.push_back(ctx_id(bundle_.vocabs, "weather", request.weather, !request.weather.empty()));
  ex.ctx.push_back(ctx_id(bundle_.vocabs, "store", request.store_id, !request.store_id.empty()));
  ex.ctx.push_back(ctx_id(bundle_.vocabs, "region", request.region, !request.region.empty()));
  ex.label = 2;  // scoring only; never read

  auto probs = score_example(ex);

  std::vector<std::int32_t> banned = {kPadId, kUnkId};
  if (request.exclude_basket)
    for (auto id : basket_ids)
      if (id > kUnkId) banned.push_back(id);

  std::vector<std::int32_t> ids;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto id = static_cast<std::int32_t>(i);
    if (std::find(banned.begin(), banned.end(), id) == banned.end()) ids.push_back(id);
  }
  std::stable_sort(ids.begin(), ids.end(), [&](std::int32_t a, std::int32_t b) {
    if (probs[static_cast<std::size_t>(a)] != probs[static_cast<std::size_t>(b)])
      return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    return a < b;
  });
  if (ids.size() > static_cast<std::size_t>(request.k))
    ids.resize(static_cast<std::size_t>(request.k));

  RecommendResponse resp;
  resp.model_version = bundle_.tag;
  resp.cold_start = cold_start;
  for (auto id : ids)
    resp.items.emplace_back(bundle_.vocabs.item.token_of(id), probs[static_cast<std::size_t>(id)]);
  return resp;
}

RecommendResponse predict_top_k(const ModelBundle& bundle, const RecommendRequest& request) {
  return BundlePredictor(bundle).recommend(request);
}

RecommendRequest request_from_json(const std::string& payload) {
  json j = json::parse(payload);
  if (!j.is_object()) throw FormatError("request must be a JSON object");
  RecommendRequest req;
  if (j.contains("items")) {
    if (!j["items"].is_array()) throw FormatError("items must be an array of strings");
    for (const auto& item : j["items"]) {
      if (!item.is_string()) throw FormatError("items must be an array of strings");
      req.items.push_back(item.get<std::string>());
    }
  }
  if (j.contains("context")) {
    const auto& c = j["context"];
    if (!c.is_object()) throw FormatError("context must be an object");
    if (c.contains("timestamp")) req.timestamp = c["timestamp"].get<std::string>();
    if (c.contains("weather")) req.weather = c["weather"].get<std::string>();
    if (c.contains("store_id")) req.store_id = c["store_id"].get<std::string>();
    if (c.contains("region")) req.region = c["region"].get<std::string>();
    if (c.contains("temperature")) {
      if (!c["temperature"].is_number()) throw FormatError("temperature must be a number");
      req.temperature = c["temperature"].get<double>();
      req.has_temperature = true;
    }
  }
  if (j.contains("k")) {
    if (!j["k"].is_number_integer()) throw FormatError("k must be an integer");
    req.k = j["k"].get<std::int32_t>();
  }
  if (j.contains("exclude_basket")) req.exclude_basket = j["exclude_basket"].get<bool>();
  return req;
}

std::string response_to_json(const RecommendResponse& response) {
  json j;
  j["type"] = "recommendation";
  j["model_version"] = response.model_version;
  j["cold_start"] = response.cold_start;
  j["items"] = json::array();
  for (const auto& [name, prob] : response.items)
    j["items"].push_back({{"name", name}, {"probability", prob}});
  return j.dump();
}

std::string handle_request_json(const BundlePredictor& predictor, const std::string& payload) {
  auto error_json = [](const std::string& category, const std::string& message) {
    json j;
    j["type"] = "error";
    j["category"] = category;
    j["message"] = message;
    return j.dump();
  };
  try {
    json j = json::parse(payload);
    const std::string type = j.is_object() && j.contains("type") && j["type"].is_string()
                                 ? j["type"].get<std::string>()
                                 : "recommend";
    if (type == "health") {
      json ok;
      ok["type"] = "ok";
      ok["model_version"] = predictor.version();
      return ok.dump();
    }
    if (type != "recommend") return error_json("format", "unknown request type: " + type);
    auto resp = predictor.recommend(request_from_json(payload));
    return response_to_json(resp);
  } catch (const json::exception& e) {
    return error_json("format", e.what());
  } catch (const Error& e) {
    return error_json(e.category(), e.what());
  } catch (const std::exception& e) {
    return error_json("internal", e.what());
  }
}

// ---- framing ----

namespace {

bool read_exact(int fd, void* buf, std::size_t n) {
  auto* p = static_cast<std::uint8_t*>(buf);
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, p + got, n - got, 0);
    if (r <= 0) return false;
    got += static_cast<std::size_t>(r);
  }
  return true;
}

bool write_all(int fd, const void* buf, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(buf);
  std::size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::send(fd, p + sent, n - sent, 0);
    if (r <= 0) return false;
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

bool write_frame(int fd, const std::string& payload) {
  const auto len = static_cast<std::uint32_t>(payload.size());
  std::uint8_t head[4] = {static_cast<std::uint8_t>(len & 0xFF),
                          static_cast<std::uint8_t>((len >> 8) & 0xFF),
                          static_cast<std::uint8_t>((len >> 16) & 0xFF),
                          static_cast<std::uint8_t>((len >> 24) & 0xFF)};
  return write_all(fd, head, 4) && write_all(fd, payload.data(), payload.size());
}

bool read_frame(int fd, std::string& payload) {
  std::uint8_t head[4];
  if (!read_exact(fd, head, 4)) return false;
  const std::uint32_t len = static_cast<std::uint32_t>(head[0]) |
                            (static_cast<std::uint32_t>(head[1]) << 8) |
                            (static_cast<std::uint32_t>(head[2]) << 16) |
                            (static_cast<std::uint32_t>(head[3]) << 24);
  if (len > kMaxFrame) return false;
  payload.resize(len);
  return len == 0 || read_exact(fd, payload.data(), len);
}

}  // namespace

RecServer::~RecServer() { stop(); }

void RecServer::start(const std::string& host, int port) {
  if (running_) throw ContractError("server already running");
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw IoError("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw IoError("bad listen address: " + host);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  if (::listen(listen_fd_, 128) != 0) throw IoError("listen() failed");
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void RecServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    std::lock_guard<std::mutex> lock(conn_mutex_);
    connections_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void RecServer::serve_connection(int fd) {
  std::string payload;
  while (running_ && read_frame(fd, payload)) {
    const std::string response = handler_(payload);
    if (!write_frame(fd, response)) break;
  }
  ::close(fd);
}

void RecServer::stop() {
  if (!running_) return;
  running_ = false;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard<std::mutex> lock(conn_mutex_);
  for (auto& t : connections_)
    if (t.joinable()) t.join();
  connections_.clear();
}

std::string request_once(const std::string& host, int port, const std::string& payload) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw IoError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw IoError("bad address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw IoError("cannot connect to " + host + ":" + std::to_string(port));
  }
  std::string response;
  const bool ok = write_frame(fd, payload) && read_frame(fd, response);
  ::close(fd);
  if (!ok) throw IoError("request failed");
  return response;
}

}  // namespace txt
