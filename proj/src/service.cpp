#include "gramsr/service.hpp"

#include <cctype>
#include <cmath>

#include <httplib.h>

#include "gramsr/error.hpp"

namespace gramsr {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

json scales_json(const GuidanceScales& s) {
  return {{"lambda_pix", s.lambda_pix}, {"lambda_sem", s.lambda_sem}, {"lambda_gram", s.lambda_gram}};
}

double read_scale(const json& j, const char* key) {
  if (!j.contains(key)) return 1.0;
  if (!j.at(key).is_number()) throw FormatError(std::string(key) + " must be a number");
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw ConfigError(std::string(key) + " must be finite");
  return v;
}

json error_body(const std::string& msg) { return {{"error", msg}}; }

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int k = 3; k >= 0; --k) out += kAlphabet[(v >> (6 * k)) & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  // Tolerate a data-URL prefix and whitespace.
  std::string s;
  const auto comma = text.find(',');
  const std::size_t start = text.rfind("data:", 0) == 0 && comma != std::string::npos ? comma + 1 : 0;
  for (std::size_t i = start; i < text.size(); ++i)
    if (!std::isspace(static_cast<unsigned char>(text[i]))) s += text[i];
  if (s.size() % 4) throw FormatError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = s[i + k];
      if (c == '=') {
        if (i + 4 != s.size() || k < 2) throw FormatError("base64: misplaced padding");
        v[k] = 0;
        ++pad;
      } else {
        if (pad) throw FormatError("base64: data after padding");
        v[k] = decode_char(c);
        if (v[k] < 0) throw FormatError("base64: invalid character");
      }
    }
    const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(w >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(w));
  }
  return out;
}

InferRequest InferRequest::from_json(const json& j) {
  if (!j.is_object()) throw FormatError("request body must be a JSON object");
  if (!j.contains("image") || !j.at("image").is_string()) throw FormatError("request needs a base64 image string");
  InferRequest r;
  r.image = j.at("image").get<std::string>();
  r.scales = {read_scale(j, "lambda_pix"), read_scale(j, "lambda_sem"), read_scale(j, "lambda_gram")};
  if (j.contains("mode")) {
    if (!j.at("mode").is_string()) throw FormatError("mode must be a string");
    r.mode = guidance_mode_from_string(j.at("mode").get<std::string>());
  }
  return r;
}

json InferRequest::to_json() const {
  json j = scales_json(scales);
  j["image"] = image;
  j["mode"] = gramsr::to_string(mode);
  return j;
}

json InferResponse::to_json() const {
  return {{"image", image},
          {"width", width},
          {"height", height},
          {"timings", {{"total_ms", elapsed_ms}}},
          {"scales", scales_json(scales)},
          {"mode", gramsr::to_string(mode)}};
}

InferenceService::InferenceService(Checkpoint ckpt)
    : model_(std::move(ckpt)), started_(std::chrono::steady_clock::now()) {
  if (model_.checkpoint().stage != 3)
    throw ConfigError("the service needs a stage-3 checkpoint, got stage " +
                      std::to_string(model_.checkpoint().stage));
}

std::vector<std::uint8_t> InferenceService::infer_png(const Image& lq, const GuidanceScales& scales,
                                                      GuidanceMode mode) const {
  return encode_png(model_.infer(lq, scales, mode));
}

InferResponse InferenceService::handle_infer(const InferRequest& req) const {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bytes = base64_decode(req.image);
  const Image lq = decode_png(bytes);
  const auto png = infer_png(lq, req.scales, req.mode);
  InferResponse out;
  out.image = base64_encode(png);
  out.width = lq.width * model_.frozen().scale();
  out.height = lq.height * model_.frozen().scale();
  out.scales = req.scales;
  out.mode = req.mode;
  out.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

json InferenceService::handle_health() const {
  const auto& ck = model_.checkpoint();
  const double uptime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  return {{"status", "ok"},
          {"stage", ck.stage},
          {"stride", ck.config.codec_stride},
          {"encoder_seeds",
           {{"conditioning", ck.config.conditioning_encoder.seed}, {"gram", ck.config.gram_encoder.seed}}},
          {"uptime_s", uptime}};
}

json InferenceService::handle_model() const {
  const auto& ck = model_.checkpoint();
  json sets = json::array();
  for (const auto& s : ck.model.lora_sets)
    sets.push_back({{"name", s.name}, {"rank", s.rank}, {"scaling", s.scaling}, {"targets", s.targets}});
  return {{"stage", ck.stage}, {"step", ck.step}, {"lora_sets", sets}, {"config", gramsr::to_json(ck.config)}};
}

HttpReply InferenceService::handle_infer_body(const std::string& body) const {
  InferRequest req;
  try {
    req = InferRequest::from_json(json::parse(body));
  } catch (const json::exception& e) {
    return {400, error_body(std::string("invalid JSON: ") + e.what()).dump()};
  } catch (const Error& e) {
    return {400, error_body(e.what()).dump()};
  }
  try {
    return {200, handle_infer(req).to_json().dump()};
  } catch (const FormatError& e) {
    return {400, error_body(e.what()).dump()};
  } catch (const ShapeError& e) {
    return {400, error_body(e.what()).dump()};
  } catch (const std::exception& e) {
    return {500, error_body(e.what()).dump()};
  }
}

HttpServer::HttpServer(const InferenceService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.Post("/api/infer", [this](const httplib::Request& req, httplib::Response& res) {
    const HttpReply r = service_.handle_infer_body(req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  s.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(service_.handle_health().dump(), "application/json");
  });
  s.Get("/api/model", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(service_.handle_model().dump(), "application/json");
  });
}

int HttpServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::run(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace gramsr
