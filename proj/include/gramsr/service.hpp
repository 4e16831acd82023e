#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gramsr/checkpoint.hpp"
#include "gramsr/guidance.hpp"

namespace httplib {
class Server;
}

namespace gramsr {

inline constexpr int kDefaultPort = 8731;

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws FormatError on characters outside the alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(const std::string& text);

struct InferRequest {
  std::string image;  // base64 PNG
  GuidanceScales scales;
  GuidanceMode mode = GuidanceMode::residual;

  // Throws FormatError / ConfigError on a malformed document.
  static InferRequest from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct InferResponse {
  std::string image;  // base64 PNG
  std::size_t width = 0;
  std::size_t height = 0;
  double elapsed_ms = 0.0;
  GuidanceScales scales;
  GuidanceMode mode = GuidanceMode::residual;

  nlohmann::json to_json() const;
};

struct HttpReply {
  int status = 200;
  std::string body;
};

// Holds one immutable stage-3 checkpoint. All handlers are const and may be
// called concurrently.
class InferenceService {
 public:
  explicit InferenceService(Checkpoint ckpt);

  const GuidedModel& model() const { return model_; }

  // PNG bytes of the restoration; the CLI writes exactly these bytes.
  std::vector<std::uint8_t> infer_png(const Image& lq, const GuidanceScales& scales, GuidanceMode mode) const;

  InferResponse handle_infer(const InferRequest& req) const;
  nlohmann::json handle_health() const;
  nlohmann::json handle_model() const;

  // JSON-in / JSON-out wrapper with status mapping: malformed requests 400,
  // anything else 500.
  HttpReply handle_infer_body(const std::string& body) const;

 private:
  GuidedModel model_;
  std::chrono::steady_clock::time_point started_;
};

// Background HTTP server exposing POST /api/infer, GET /api/health and
// GET /api/model.
class HttpServer {
 public:
  explicit HttpServer(const InferenceService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  void stop();
  // Blocks serving requests on the calling thread.
  void run(const std::string& host, int port);

 private:
  void install_routes();

  const InferenceService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

// Entry point of the gramsr tool. Usage errors return 2, other failures 1.
int cli_dispatch(int argc, const char* const* argv);

}  // namespace gramsr
