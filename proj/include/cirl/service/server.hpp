#pragma once

#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "cirl/service/session.hpp"

namespace cirl::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

inline http::status status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::UnknownSession: return http::status::not_found;
    case ErrorKind::StaleRound: return http::status::conflict;
    case ErrorKind::SessionExpired: return http::status::gone;
    default: return http::status::bad_request;
  }
}

inline ojson error_json(ErrorKind k, const std::string& message) {
  return {{"type", "error"}, {"kind", std::string(to_string(k))}, {"message", message}};
}

/// Splits "/session/{id}/{rest}" into id and rest; rest is empty for
/// "/session".
struct Route {
  std::string id;
  std::string rest;
};

inline std::optional<Route> parse_route(std::string_view target) {
  if (const auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  constexpr std::string_view prefix = "/session";
  if (target.substr(0, prefix.size()) != prefix) return std::nullopt;
  target.remove_prefix(prefix.size());
  if (target.empty() || target == "/") return Route{};
  if (target.front() != '/') return std::nullopt;
  target.remove_prefix(1);
  const auto slash = target.find('/');
  if (slash == std::string_view::npos) return Route{std::string(target), ""};
  return Route{std::string(target.substr(0, slash)), std::string(target.substr(slash + 1))};
}

/// Metadata from a create request body: a JSON object whose values are kept
/// as strings (non-string values are stored in their JSON text form).
inline Metadata parse_metadata(const std::string& body) {
  Metadata m;
  if (body.empty()) return m;
  const ojson j = ojson::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorKind::UsageError, "session metadata must be a JSON object");
  for (const auto& [k, v] : j.items()) m[k] = v.is_string() ? v.get<std::string>() : v.dump();
  return m;
}

class Server;

class StreamConnection : public std::enable_shared_from_this<StreamConnection> {
 public:
  StreamConnection(tcp::socket&& socket, Server& server, std::string id)
      : ws_(std::move(socket)), server_(server), id_(std::move(id)) {}

  void run(http::request<http::string_body> req);
  void send(std::string text) {
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write_next();
  }
  void close() {
    if (closing_) return;
    closing_ = true;
    if (queue_.empty()) do_close();
  }

 private:
  void read_next() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }
  void on_read(beast::error_code ec);
  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
      else if (self->closing_) self->do_close();
    });
  }
  void do_close() {
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server& server_;
  std::string id_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool closing_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, Server& server) : stream_(std::move(socket)), server_(server) {}
  void run() { read_next(); }

 private:
  void read_next() {
    req_ = {};
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }
  void on_read(beast::error_code ec);

  beast::tcp_stream stream_;
  Server& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> res_;
};

/// HTTP + WebSocket front end over a SessionManager. Single-threaded: run
/// the io_context on one thread; the tick timer and all connections share it.
class Server {
 public:
  Server(net::io_context& ioc, SessionManager& manager, tcp::endpoint endpoint)
      : ioc_(ioc), manager_(manager), acceptor_(ioc), timer_(ioc) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }
  SessionManager& manager() { return manager_; }

  void start() {
    accept_next();
    next_tick_ = std::chrono::steady_clock::now();
    schedule_tick();
  }

  void stop() {
    beast::error_code ec;
    acceptor_.close(ec);
    timer_.cancel();
    for (auto& [id, w] : streams_)
      if (auto s = w.lock()) s->close();
    streams_.clear();
  }

  http::response<http::string_body> handle(const http::request<http::string_body>& req) {
    http::response<http::string_body> res;
    res.version(req.version());
    res.keep_alive(req.keep_alive());
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    auto reply = [&](http::status st, const ojson& body) {
      res.result(st);
      res.body() = body.dump();
      res.prepare_payload();
      return res;
    };
    try {
      const auto route = parse_route(std::string_view(req.target().data(), req.target().size()));
      if (!route) return reply(http::status::not_found, error_json(ErrorKind::UsageError, "no such route"));
      if (route->id.empty() && req.method() == http::verb::post)
        return reply(http::status::ok, manager_.create_session(parse_metadata(req.body())));
      if (!route->id.empty() && route->rest == "summary" && req.method() == http::verb::get)
        return reply(http::status::ok, manager_.summary(route->id));
      if (!route->id.empty() && route->rest == "complete" && req.method() == http::verb::post)
        return reply(http::status::ok, manager_.complete(route->id));
      return reply(http::status::not_found, error_json(ErrorKind::UsageError, "no such route"));
    } catch (const Error& e) {
      return reply(status_for(e.kind()), error_json(e.kind(), e.what()));
    }
  }

  /// Upgrades a stream request; returns false when the session is unknown.
  bool open_stream(tcp::socket&& socket, http::request<http::string_body> req, const std::string& id) {
    if (!manager_.with_session(id, [](const Session&) { return true; })) return false;
    auto conn = std::make_shared<StreamConnection>(std::move(socket), *this, id);
    conn->run(std::move(req));
    return true;
  }

  void on_stream_open(const std::string& id, const std::shared_ptr<StreamConnection>& conn) {
    if (auto old = streams_[id].lock(); old && old != conn) old->close();
    streams_[id] = conn;
    try {
      for (const auto& m : manager_.attach(id)) conn->send(m.dump());
    } catch (const Error& e) {
      conn->send(error_json(e.kind(), e.what()).dump());
      conn->close();
    }
  }

  void on_stream_message(const std::string& id, const std::shared_ptr<StreamConnection>& conn,
                         const std::string& text) {
    const ojson j = ojson::parse(text, nullptr, false);
    try {
      if (j.is_discarded() || !j.is_object() || j.value("type", "") != "action")
        fail(ErrorKind::InvalidAction, "expected {type:\"action\", round, tick, action}");
      if (!j.contains("round") || !j["round"].is_number_integer() || !j.contains("action") ||
          !j["action"].is_string())
        fail(ErrorKind::InvalidAction, "action message needs integer round and string action");
      const int round = j["round"].get<int>();
      const long long tick = j.value("tick", 0LL);
      manager_.submit_action(id, round, tick, j["action"].get<std::string>());
      conn->send(ojson{{"type", "ack"}, {"round", round}, {"tick", tick}}.dump());
    } catch (const Error& e) {
      conn->send(error_json(e.kind(), e.what()).dump());
      if (e.kind() == ErrorKind::SessionExpired || e.kind() == ErrorKind::UnknownSession) conn->close();
    }
  }

  void on_stream_closed(const std::string& id, const StreamConnection* conn) {
    const auto it = streams_.find(id);
    if (it == streams_.end()) return;
    const auto live = it->second.lock();
    if (!live || live.get() == conn) streams_.erase(it);
  }

 private:
  void accept_next() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpConnection>(std::move(socket), *this)->run();
      accept_next();
    });
  }

  void schedule_tick() {
    next_tick_ += std::chrono::milliseconds(manager_.config().tick_period_ms);
    timer_.expires_at(next_tick_);
    timer_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      on_tick();
      schedule_tick();
    });
  }

  void on_tick() {
    for (auto& [id, messages] : manager_.tick_all()) {
      const auto it = streams_.find(id);
      if (it == streams_.end()) continue;
      auto conn = it->second.lock();
      if (!conn) continue;
      for (const auto& m : messages) {
        conn->send(m.dump());
        if (m.value("reason", "") == "expired") conn->close();
      }
    }
  }

  net::io_context& ioc_;
  SessionManager& manager_;
  tcp::acceptor acceptor_;
  net::steady_timer timer_;
  std::chrono::steady_clock::time_point next_tick_;
  std::map<std::string, std::weak_ptr<StreamConnection>> streams_;
};

inline void StreamConnection::run(http::request<http::string_body> req) {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    self->server_.on_stream_open(self->id_, self);
    self->read_next();
  });
}

inline void StreamConnection::on_read(beast::error_code ec) {
  if (ec) {
    server_.on_stream_closed(id_, this);
    return;
  }
  server_.on_stream_message(id_, shared_from_this(), beast::buffers_to_string(buffer_.data()));
  buffer_.consume(buffer_.size());
  read_next();
}

inline void HttpConnection::on_read(beast::error_code ec) {
  if (ec) {
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    return;
  }
  if (websocket::is_upgrade(req_)) {
    const auto route = parse_route(std::string_view(req_.target().data(), req_.target().size()));
    if (route && !route->id.empty() && route->rest == "stream") {
      try {
        server_.open_stream(stream_.release_socket(), std::move(req_), route->id);
      } catch (const Error&) {
        // Unknown or expired session: the socket is dropped.
      }
      return;
    }
  }
  res_ = std::make_shared<http::response<http::string_body>>(server_.handle(req_));
  http::async_write(stream_, *res_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) return;
    if (!self->res_->keep_alive()) {
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    self->read_next();
  });
}

}  // namespace cirl::service
