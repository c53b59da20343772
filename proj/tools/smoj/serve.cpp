// SPDX-License-Identifier: Apache-2.0
#include "serve.hpp"

#include <atomic>
#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

namespace smoj::cli {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

std::string check_drive_frame(std::string_view text, std::size_t channels) {
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' || text[i] == '\r')) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\n' && text[j] != '\r') ++j;
    const std::string_view token = text.substr(i, j - i);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      return "field " + std::to_string(count + 1) + " is not a decimal number: '" + std::string(token) + "'";
    }
    if (!std::isfinite(v)) return "field " + std::to_string(count + 1) + " is not finite";
    ++count;
    i = j;
  }
  if (count != channels) {
    return "expected " + std::to_string(channels) + " weights, got " + std::to_string(count);
  }
  return {};
}

namespace {

std::string content_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".wasm") return "application/wasm";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

constexpr const char* kPlaceholderPage =
    "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>smoj viewer</title></head>\n"
    "<body><p>No viewer bundle installed. Asset: <a href=\"/asset.smoj\">/asset.smoj</a>. "
    "Live drive: ws /drive, subscribers: ws /viewers.</p></body></html>\n";

}  // namespace

struct LiveServer::Impl : std::enable_shared_from_this<LiveServer::Impl> {
  class Session {
   public:
    virtual ~Session() = default;
    virtual void shutdown() = 0;
  };

  class WsSession : public Session, public std::enable_shared_from_this<WsSession> {
   public:
    enum class Role { kDrive, kViewer };

    WsSession(tcp::socket socket, Role role, std::shared_ptr<Impl> hub)
        : ws_(std::move(socket)), role_(role), hub_(std::move(hub)) {}

    void start(http::request<http::string_body> req) {
      ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        if (self->role_ == Role::kViewer) self->hub_->viewers.insert(self);
        self->read();
      });
    }

    void send(std::shared_ptr<const std::string> msg) {
      if (closing_) return;
      queue_.push_back(std::move(msg));
      if (queue_.size() == 1) write();
    }

    void shutdown() override {
      if (closing_) return;
      closing_ = true;
      ws_.async_close(websocket::close_code::going_away, [self = shared_from_this()](beast::error_code) {});
    }

   private:
    void read() {
      ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->hub_->viewers.erase(self);
          return;
        }
        self->on_message();
        self->buffer_.consume(self->buffer_.size());
        self->read();
      });
    }

    void on_message() {
      if (role_ == Role::kViewer) return;
      if (!ws_.got_text()) {
        send(std::make_shared<const std::string>("error: binary frames are not accepted"));
        return;
      }
      auto text = std::make_shared<const std::string>(beast::buffers_to_string(buffer_.data()));
      const std::string why = check_drive_frame(*text, hub_->opts.channels);
      if (!why.empty()) {
        send(std::make_shared<const std::string>("error: " + why));
        return;
      }
      hub_->broadcast(text);
    }

    void write() {
      ws_.text(true);
      ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->hub_->viewers.erase(self);
          return;
        }
        self->queue_.pop_front();
        if (!self->queue_.empty()) self->write();
      });
    }

    websocket::stream<beast::tcp_stream> ws_;
    Role role_;
    std::shared_ptr<Impl> hub_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    bool closing_ = false;
  };

  class HttpSession : public Session, public std::enable_shared_from_this<HttpSession> {
   public:
    HttpSession(tcp::socket socket, std::shared_ptr<Impl> hub) : stream_(std::move(socket)), hub_(std::move(hub)) {}

    void start() { read(); }

    void shutdown() override {
      beast::error_code ec;
      stream_.socket().shutdown(tcp::socket::shutdown_both, ec);
      stream_.close();
    }

   private:
    void read() {
      request_ = {};
      stream_.expires_after(std::chrono::seconds(30));
      http::async_read(stream_, buffer_, request_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return;
        self->on_request();
      });
    }

    void on_request() {
      const std::string target(request_.target());
      if (websocket::is_upgrade(request_)) {
        WsSession::Role role;
        if (target == "/drive") {
          role = WsSession::Role::kDrive;
        } else if (target == "/viewers") {
          role = WsSession::Role::kViewer;
        } else {
          respond(http::status::not_found, "text/plain", "unknown websocket path\n");
          return;
        }
        stream_.expires_never();
        auto ws = std::make_shared<WsSession>(stream_.release_socket(), role, hub_);
        hub_->track(ws);
        ws->start(std::move(request_));
        return;
      }
      if (request_.method() != http::verb::get && request_.method() != http::verb::head) {
        respond(http::status::method_not_allowed, "text/plain", "method not allowed\n");
        return;
      }
      const std::string path = target.substr(0, target.find('?'));
      if (path == "/asset.smoj") {
        const auto& bytes = hub_->opts.asset_bytes;
        respond(http::status::ok, "application/octet-stream", std::string(bytes.begin(), bytes.end()));
        return;
      }
      serve_static(path);
    }

    void serve_static(const std::string& path) {
      const std::filesystem::path rel = path == "/" ? std::filesystem::path("index.html")
                                                    : std::filesystem::path(path.substr(1));
      for (const auto& part : rel) {
        if (part == ".." || part == ".") {
          respond(http::status::bad_request, "text/plain", "bad path\n");
          return;
        }
      }
      if (hub_->opts.static_dir.empty()) {
        if (path == "/" || path == "/index.html") {
          respond(http::status::ok, "text/html; charset=utf-8", kPlaceholderPage);
        } else {
          respond(http::status::not_found, "text/plain", "not found\n");
        }
        return;
      }
      const auto file = hub_->opts.static_dir / rel;
      std::ifstream in(file, std::ios::binary);
      if (!in || std::filesystem::is_directory(file)) {
        respond(http::status::not_found, "text/plain", "not found\n");
        return;
      }
      std::ostringstream ss;
      ss << in.rdbuf();
      respond(http::status::ok, content_type(file), ss.str());
    }

    void respond(http::status status, const std::string& type, std::string body) {
      auto res = std::make_shared<http::response<http::string_body>>(status, request_.version());
      res->set(http::field::server, "smoj");
      res->set(http::field::content_type, type);
      res->keep_alive(request_.keep_alive());
      const bool head = request_.method() == http::verb::head;
      res->body() = head ? std::string() : std::move(body);
      res->prepare_payload();
      if (head) res->content_length(body.size());
      http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
        if (ec) return;
        if (res->need_eof()) {
          self->shutdown();
          return;
        }
        self->read();
      });
    }

    beast::tcp_stream stream_;
    std::shared_ptr<Impl> hub_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
  };

  explicit Impl(ServeOptions o) : opts(std::move(o)), acceptor(io) {}

  void open() {
    const tcp::endpoint ep(net::ip::make_address(opts.address), opts.port);
    acceptor.open(ep.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen(net::socket_base::max_listen_connections);
    bound_port = acceptor.local_endpoint().port();
  }

  void accept() {
    acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto session = std::make_shared<HttpSession>(std::move(socket), self);
      self->track(session);
      session->start();
      self->accept();
    });
  }

  void track(const std::shared_ptr<Session>& s) {
    std::erase_if(sessions, [](const std::weak_ptr<Session>& w) { return w.expired(); });
    sessions.push_back(s);
  }

  void broadcast(const std::shared_ptr<const std::string>& msg) {
    ++relayed;
    for (const auto& v : viewers) v->send(msg);
    viewer_total = viewers.size();
  }

  void shutdown_all() {
    beast::error_code ec;
    acceptor.close(ec);
    for (const auto& w : sessions) {
      if (auto s = w.lock()) s->shutdown();
    }
    viewers.clear();
  }

  ServeOptions opts;
  net::io_context io;
  tcp::acceptor acceptor;
  unsigned short bound_port = 0;
  std::vector<std::weak_ptr<Session>> sessions;
  std::set<std::shared_ptr<WsSession>> viewers;
  std::atomic<std::uint64_t> relayed{0};
  std::atomic<std::size_t> viewer_total{0};
  std::thread thread;
  bool stopped = false;
};

LiveServer::LiveServer(ServeOptions opts) : impl_(std::make_shared<Impl>(std::move(opts))) {
  impl_->open();
  impl_->accept();
  impl_->thread = std::thread([impl = impl_] { impl->io.run(); });
}

LiveServer::~LiveServer() { stop(); }

unsigned short LiveServer::port() const { return impl_->bound_port; }

std::uint64_t LiveServer::frames_relayed() const { return impl_->relayed.load(); }

std::size_t LiveServer::viewer_count() const {
  std::promise<std::size_t> p;
  auto f = p.get_future();
  net::post(impl_->io, [&] { p.set_value(impl_->viewers.size()); });
  if (f.wait_for(std::chrono::seconds(2)) != std::future_status::ready) return 0;
  return f.get();
}

void LiveServer::stop() {
  if (impl_->stopped) return;
  impl_->stopped = true;
  net::post(impl_->io, [impl = impl_] { impl->shutdown_all(); });
  // Give close handshakes a moment, then force the loop down.
  auto done = std::async(std::launch::async, [impl = impl_] {
    if (impl->thread.joinable()) impl->thread.join();
  });
  if (done.wait_for(std::chrono::seconds(2)) != std::future_status::ready) {
    impl_->io.stop();
    done.wait();
  }
}

}  // namespace smoj::cli
