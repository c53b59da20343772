// SPDX-License-Identifier: Apache-2.0
#include "smoj/stylizer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <future>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "smoj/error.hpp"

namespace smoj::stylize {

void check_params(const Params& p) {
  if (p.prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "stylize: prompt must be non-empty");
  for (const auto& [name, v] : {std::pair{"strength", p.strength}, std::pair{"edge", p.edge},
                                std::pair{"identity", p.identity}}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, std::string("stylize: ") + name + " must lie in [0,1]");
    }
  }
}

namespace {

std::string number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '\n') {
      out += "\\n";
    } else if (c == '\r') {
      out += "\\r";
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i >= s.size()) throw Error(ErrorCode::kParse, "stylize params: dangling escape");
    switch (s[i]) {
      case '\\':
        out += '\\';
        break;
      case 'n':
        out += '\n';
        break;
      case 'r':
        out += '\r';
        break;
      default:
        throw Error(ErrorCode::kParse, "stylize params: unknown escape");
    }
  }
  return out;
}

double parse_number(std::string_view key, std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kParse, "stylize params: bad number for " + std::string(key));
  }
  return v;
}

}  // namespace

std::string encode_params(const Params& p) {
  return "prompt=" + escape(p.prompt) + "\nstrength=" + number(p.strength) + "\nedge=" + number(p.edge) +
         "\nidentity=" + number(p.identity) + "\n";
}

Params decode_params(std::string_view text) {
  Params p;
  bool seen[4] = {false, false, false, false};
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::kParse, "stylize params: expected key=value");
    const std::string_view key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "prompt") {
      p.prompt = unescape(value);
      seen[0] = true;
    } else if (key == "strength") {
      p.strength = parse_number(key, value);
      seen[1] = true;
    } else if (key == "edge") {
      p.edge = parse_number(key, value);
      seen[2] = true;
    } else if (key == "identity") {
      p.identity = parse_number(key, value);
      seen[3] = true;
    } else {
      throw Error(ErrorCode::kParse, "stylize params: unknown key '" + std::string(key) + "'");
    }
  }
  if (!(seen[0] && seen[1] && seen[2] && seen[3])) throw Error(ErrorCode::kParse, "stylize params: missing keys");
  return p;
}

namespace {

struct Endpoint {
  std::string host;
  int port = 80;
};

Endpoint parse_endpoint(const std::string& url) {
  std::string_view s = url;
  if (s.starts_with("http://")) s.remove_prefix(7);
  if (s.starts_with("https://")) throw Error(ErrorCode::kInvalidArgument, "stylize: https endpoints are not supported");
  if (const auto slash = s.find('/'); slash != std::string_view::npos) s = s.substr(0, slash);
  Endpoint e;
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos) {
    e.host = std::string(s);
  } else {
    e.host = std::string(s.substr(0, colon));
    const std::string_view ps = s.substr(colon + 1);
    const auto r = std::from_chars(ps.data(), ps.data() + ps.size(), e.port);
    if (r.ec != std::errc() || r.ptr != ps.data() + ps.size() || e.port <= 0 || e.port > 65535) {
      throw Error(ErrorCode::kInvalidArgument, "stylize: bad endpoint port in '" + url + "'");
    }
  }
  if (e.host.empty()) throw Error(ErrorCode::kInvalidArgument, "stylize: bad endpoint '" + url + "'");
  return e;
}

}  // namespace

Response stylize(const Request& req, const std::string& endpoint) {
  check_params(req.params);
  if (!(req.timeout_seconds > 0.0)) throw Error(ErrorCode::kInvalidArgument, "stylize: timeout must be > 0");
  const Image8 sent = decode_png(req.png);
  const Endpoint ep = parse_endpoint(endpoint);

  auto client = std::make_shared<httplib::Client>(ep.host, ep.port);
  const auto secs = static_cast<time_t>(req.timeout_seconds);
  const auto usecs = static_cast<time_t>((req.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);

  const httplib::MultipartFormDataItems items = {
      {"image", std::string(req.png.begin(), req.png.end()), "image.png", "image/png"},
      {"params", encode_params(req.params), "", "text/plain"},
  };
  const auto start = std::chrono::steady_clock::now();
  auto pending = std::async(std::launch::async, [client, items] { return client->Post("/v1/stylize", items); });
  const auto deadline = start + std::chrono::duration<double>(req.timeout_seconds);
  if (pending.wait_until(deadline) != std::future_status::ready) {
    client->stop();
    pending.wait();
    throw Error(ErrorCode::kTimeout, "stylize: no reply within " + number(req.timeout_seconds) + " s");
  }
  httplib::Result res = pending.get();
  Response out;
  out.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!res) {
    if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
        res.error() == httplib::Error::ConnectionTimeout) {
      if (out.elapsed >= 0.9 * req.timeout_seconds) {
        throw Error(ErrorCode::kTimeout, "stylize: no reply within " + number(req.timeout_seconds) + " s");
      }
    }
    throw Error(ErrorCode::kIo, "stylize: request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kService, "stylize: service error " + std::to_string(res->status) + ": " + res->body);
  }
  out.png.assign(res->body.begin(), res->body.end());
  try {
    out.image = decode_png(out.png);
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, std::string("stylize: malformed response: ") + e.what());
  }
  if (out.image.width != sent.width || out.image.height != sent.height) {
    throw Error(ErrorCode::kValidation, "stylize: response is " + std::to_string(out.image.width) + "x" +
                                            std::to_string(out.image.height) + ", request was " +
                                            std::to_string(sent.width) + "x" + std::to_string(sent.height));
  }
  out.service_mode = res->get_header_value("X-Service-Mode");
  const std::string lat = res->get_header_value("X-Latency-Seconds");
  if (!lat.empty()) {
    const auto r = std::from_chars(lat.data(), lat.data() + lat.size(), out.service_latency);
    if (r.ec != std::errc()) throw Error(ErrorCode::kParse, "stylize: bad X-Latency-Seconds header");
  }
  return out;
}

MockMode parse_mock_mode(std::string_view name) {
  if (name == "echo") return MockMode::kEcho;
  if (name == "tint") return MockMode::kTint;
  if (name == "fail") return MockMode::kFail;
  if (name == "slow") return MockMode::kSlow;
  throw Error(ErrorCode::kInvalidArgument, "unknown mock mode '" + std::string(name) + "'");
}

std::string mock_mode_name(MockMode mode) {
  switch (mode) {
    case MockMode::kEcho:
      return "echo";
    case MockMode::kTint:
      return "tint";
    case MockMode::kFail:
      return "fail";
    case MockMode::kSlow:
      return "slow";
  }
  return "unknown";
}

Image8 apply_tint(const Image8& in, double strength, const std::array<int, 3>& tint) {
  Image8 out = in;
  const int color_channels = in.channels >= 3 ? 3 : 1;
  for (std::size_t p = 0; p < in.pixels.size(); p += static_cast<std::size_t>(in.channels)) {
    for (int c = 0; c < color_channels; ++c) {
      const double v = static_cast<double>(in.pixels[p + c]) + strength * tint[c];
      out.pixels[p + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

struct MockServer::Impl {
  MockOptions opts;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;

  void handle(const httplib::Request& req, httplib::Response& res) {
    const auto start = std::chrono::steady_clock::now();
    res.set_header("X-Service-Mode", mock_mode_name(opts.mode));
    auto finish = [&](int status) {
      res.status = status;
      const double lat = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      res.set_header("X-Latency-Seconds", number(lat));
    };
    if (!req.has_file("image") || !req.has_file("params")) {
      res.set_content("missing image or params part", "text/plain");
      return finish(400);
    }
    Params params;
    Image8 image;
    try {
      params = decode_params(req.get_file_value("params").content);
      check_params(params);
      const std::string& png = req.get_file_value("image").content;
      image = decode_png(std::span(reinterpret_cast<const std::uint8_t*>(png.data()), png.size()));
    } catch (const Error& e) {
      res.set_content(e.what(), "text/plain");
      return finish(400);
    }
    switch (opts.mode) {
      case MockMode::kFail:
        res.set_content("mock service failure", "text/plain");
        return finish(500);
      case MockMode::kSlow: {
        std::unique_lock lock(mu);
        cv.wait_for(lock, std::chrono::duration<double>(opts.slow_seconds), [&] { return stopping; });
        [[fallthrough]];
      }
      case MockMode::kEcho:
        res.set_content(req.get_file_value("image").content, "image/png");
        return finish(200);
      case MockMode::kTint: {
        const auto bytes = encode_png(apply_tint(image, params.strength, opts.tint));
        res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
        return finish(200);
      }
    }
  }
};

MockServer::MockServer(int port, MockOptions opts) : impl_(std::make_unique<Impl>()) {
  impl_->opts = opts;
  Impl* impl = impl_.get();
  // SO_REUSEADDR only: the library default (SO_REUSEPORT) lets a second
  // server bind a port that is already in use.
  impl->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  impl->server.Post("/v1/stylize",
                    [impl](const httplib::Request& req, httplib::Response& res) { impl->handle(req, res); });
  if (port == 0) {
    impl->port = impl->server.bind_to_any_port("127.0.0.1");
    if (impl->port < 0) throw Error(ErrorCode::kIo, "mock server: no free port");
  } else {
    if (!impl->server.bind_to_port("127.0.0.1", port)) {
      throw Error(ErrorCode::kIo, "mock server: port " + std::to_string(port) + " is busy");
    }
    impl->port = port;
  }
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl->server.wait_until_ready();
}

MockServer::~MockServer() { stop(); }

int MockServer::port() const { return impl_->port; }

std::string MockServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

void MockServer::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  impl_->server.stop();
  impl_->thread.join();
}

}  // namespace smoj::stylize
