#pragma once

// WebSocket transport for SimulationService. Network I/O runs on an asio
// thread; the caller's thread owns the service and advances the simulation.
// Requires Boost (Beast, Asio).

#include <windlift/service.hpp>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace windlift {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  bool autoplay = true;        // step at the scene's h while not paused
  double broadcast_hz = 30.0;
  std::size_t queue_capacity = 256;
};

namespace detail {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

class WsSession;

struct Command {
  std::shared_ptr<WsSession> session;
  std::string text;
};

/// Bounded multi-producer queue drained by the simulation thread.
class CommandQueue {
 public:
  explicit CommandQueue(std::size_t capacity) : capacity_(capacity) {}

  bool try_push(Command c) {
    {
      std::lock_guard lock(mutex_);
      if (items_.size() >= capacity_) return false;
      items_.push_back(std::move(c));
    }
    cv_.notify_one();
    return true;
  }

  /// Waits until an item arrives, `deadline` passes or `wake` is called.
  std::deque<Command> drain_until(std::chrono::steady_clock::time_point deadline) {
    std::unique_lock lock(mutex_);
    cv_.wait_until(lock, deadline, [&] { return !items_.empty() || woken_; });
    woken_ = false;
    return std::exchange(items_, {});
  }

  void wake() {
    {
      std::lock_guard lock(mutex_);
      woken_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Command> items_;
  std::size_t capacity_;
  bool woken_ = false;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, CommandQueue& queue) : ws_(std::move(socket)), queue_(queue) {}

  /// Handshake, then serve. With a reject message the session only sends
  /// that message and closes.
  void start(std::function<void()> on_close, std::optional<std::string> reject = std::nullopt) {
    on_close_ = std::move(on_close);
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(4u << 20);
    ws_.async_accept([self = shared_from_this(), reject = std::move(reject)](beast::error_code ec) {
      if (ec) return self->closed();
      if (reject) {
        self->send(*reject);
        self->close();
        return;
      }
      self->read();
    });
  }

  /// Thread-safe. Broadcast frames replace an unsent broadcast instead of queueing.
  void send(std::string text, bool broadcast = false) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text), broadcast]() mutable {
      if (self->closed_ || self->closing_) return;
      if (broadcast && self->outbox_.size() > 1 && self->outbox_.back().broadcast) {
        self->outbox_.back().text = std::move(text);
        return;
      }
      self->outbox_.push_back({std::move(text), broadcast});
      if (self->outbox_.size() == 1) self->write();
    });
  }

  /// Thread-safe. Flushes queued messages, then performs the close handshake.
  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closed_ || self->closing_) return;
      self->closing_ = true;
      if (self->outbox_.empty()) self->shutdown();
    });
  }

 private:
  struct Outgoing {
    std::string text;
    bool broadcast = false;
  };

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->closed();
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      if (!self->queue_.try_push({self, std::move(text)})) {
        self->send(nlohmann::json{{"type", "error"}, {"code", "busy"}, {"message", "command queue full"}}.dump());
      }
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(outbox_.front().text), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->closed();
      self->outbox_.pop_front();
      if (!self->outbox_.empty()) {
        self->write();
      } else if (self->closing_) {
        self->shutdown();
      }
    });
  }

  void shutdown() {
    ws_.async_close(websocket::close_code::going_away, [self = shared_from_this()](beast::error_code) { self->closed(); });
  }

  void closed() {
    if (closed_) return;
    closed_ = true;
    outbox_.clear();
    if (on_close_) on_close_();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  CommandQueue& queue_;
  std::deque<Outgoing> outbox_;
  std::function<void()> on_close_;
  bool closing_ = false;
  bool closed_ = false;
};

}  // namespace detail

/// Single-session WebSocket server around a SimulationService.
class WebSocketServer {
 public:
  WebSocketServer(SimulationService& service, ServerOptions options)
      : service_(service),
        options_(std::move(options)),
        queue_(options_.queue_capacity),
        acceptor_(ioc_, {detail::net::ip::make_address(options_.address), options_.port}) {}

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// Serve until stop(). The calling thread runs the simulation loop.
  void run() {
    accept();
    std::jthread io([this] {
      ioc_.run();
      io_idle_ = true;
    });
    const auto h = std::chrono::duration<double>(service_.simulator().scene().sim.h);
    const auto tick = std::chrono::duration_cast<std::chrono::steady_clock::duration>(h);
    const auto broadcast_gap = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / std::max(1e-3, options_.broadcast_hz)));
    auto next_tick = std::chrono::steady_clock::now() + tick;
    auto last_broadcast = std::chrono::steady_clock::time_point{};
    while (!stopping_) {
      const bool stepping = options_.autoplay && !service_.paused();
      const auto deadline = stepping ? next_tick : std::chrono::steady_clock::now() + std::chrono::milliseconds(50);
      for (detail::Command& c : queue_.drain_until(deadline)) {
        c.session->send(service_.handle_text(c.text).dump());
      }
      const auto now = std::chrono::steady_clock::now();
      if (!options_.autoplay || service_.paused()) {
        next_tick = now + tick;
        continue;
      }
      if (now < next_tick) continue;
      next_tick = std::max(next_tick + tick, now);
      const nlohmann::json frame = service_.tick();
      if (frame.is_null()) continue;
      const bool is_error = frame.value("type", "") == "error";
      if (is_error || now - last_broadcast >= broadcast_gap) {
        if (auto s = current()) s->send(frame.dump(), !is_error);
        last_broadcast = now;
      }
    }
    if (auto s = current()) s->close();
    detail::net::post(ioc_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
    });
    // Give the close handshake a moment; a silent peer must not block shutdown.
    const auto give_up = std::chrono::steady_clock::now() + std::chrono::seconds(1);
    while (!io_idle_ && std::chrono::steady_clock::now() < give_up) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ioc_.stop();
  }

  /// Thread-safe and async-signal tolerant (only touches atomics and a condvar).
  void stop() {
    stopping_ = true;
    queue_.wake();
  }

  detail::net::io_context& io_context() { return ioc_; }

 private:
  std::shared_ptr<detail::WsSession> current() {
    std::lock_guard lock(session_mutex_);
    return session_.lock();
  }

  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, detail::tcp::socket socket) {
      if (ec) return;
      auto session = std::make_shared<detail::WsSession>(std::move(socket), queue_);
      {
        std::lock_guard lock(session_mutex_);
        if (!session_.expired()) {
          session->start({}, nlohmann::json{{"type", "error"}, {"code", "busy"}, {"message", "another client is connected"}}.dump());
          accept();
          return;
        }
        session_ = session;
      }
      session->start([this, weak = std::weak_ptr(session)] {
        std::lock_guard lock(session_mutex_);
        if (session_.lock() == weak.lock()) session_.reset();
      });
      accept();
    });
  }

  SimulationService& service_;
  ServerOptions options_;
  detail::CommandQueue queue_;
  detail::net::io_context ioc_;
  detail::tcp::acceptor acceptor_;
  std::mutex session_mutex_;
  std::weak_ptr<detail::WsSession> session_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> io_idle_{false};
};

}  // namespace windlift
