/*
 * Copyright 2026 The byzfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "byzfed/errors.h"
#include "byzfed/net.h"

namespace byzfed {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string errno_text() { return std::strerror(errno); }

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) reset(o.release());
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    const int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset(int fd = -1) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }
  // Wakes any thread blocked on the descriptor without releasing it.
  void shutdown_io() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

void send_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t k =
        ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw TransportError("send failed: " + errno_text());
    }
    sent += static_cast<std::size_t>(k);
  }
}

void recv_exact(int fd, std::uint8_t* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t k = ::recv(fd, dst + got, n - got, 0);
    if (k == 0) throw TransportError("peer closed the connection");
    if (k < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        throw TransportError("receive timed out");
      }
      throw TransportError("receive failed: " + errno_text());
    }
    got += static_cast<std::size_t>(k);
  }
}

std::vector<std::uint8_t> recv_frame(int fd) {
  std::vector<std::uint8_t> frame(4);
  recv_exact(fd, frame.data(), 4);
  const std::uint32_t length = static_cast<std::uint32_t>(frame[0]) |
                               static_cast<std::uint32_t>(frame[1]) << 8 |
                               static_cast<std::uint32_t>(frame[2]) << 16 |
                               static_cast<std::uint32_t>(frame[3]) << 24;
  if (length > kMaxFrameBytes) {
    throw ProtocolError("oversized frame: " + std::to_string(length) +
                        " bytes");
  }
  frame.resize(4 + std::size_t{length});
  recv_exact(fd, frame.data() + 4, length);
  return frame;
}

void set_timeouts(int fd, std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

sockaddr_in loopback(std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return addr;
}

class SequentialTransport final : public Transport {
 public:
  SequentialTransport(std::vector<ClientHandler> clients, WireDtype dtype)
      : clients_(std::move(clients)), dtype_(dtype) {}

  Gathered exchange(std::uint32_t round, const ParamSet& global) override {
    Gathered g;
    g.updates.resize(clients_.size());
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      const auto id = static_cast<std::uint32_t>(i);
      auto t = Clock::now();
      const Message down =
          decode(encode({MessageKind::kBroadcast, round, id, dtype_, global}));
      g.timings.broadcast_ms += ms_since(t);

      t = Clock::now();
      ParamSet local = clients_[i](round, down.payload);
      g.timings.client_compute_ms += ms_since(t);

      t = Clock::now();
      Message up = decode(
          encode({MessageKind::kUpdate, round, id, dtype_, std::move(local)}));
      g.updates[i] = std::move(up.payload);
      g.timings.upload_ms += ms_since(t);
    }
    return g;
  }

  void shutdown() override {}
  const char* name() const override { return "sequential"; }

 private:
  std::vector<ClientHandler> clients_;
  WireDtype dtype_;
};

class SocketTransport final : public Transport {
 public:
  SocketTransport(std::vector<ClientHandler> clients, WireDtype dtype,
                  std::uint16_t port, std::chrono::milliseconds watchdog)
      : handlers_(std::move(clients)),
        dtype_(dtype),
        watchdog_(watchdog),
        conns_(handlers_.size()),
        compute_ms_(handlers_.size(), 0.0),
        errors_(handlers_.size()) {
    listen_ = Fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!listen_.valid()) throw TransportError("socket: " + errno_text());
    int one = 1;
    ::setsockopt(listen_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = loopback(port);
    if (::bind(listen_.get(), reinterpret_cast<sockaddr*>(&addr),
               sizeof(addr)) != 0) {
      throw TransportError("bind 127.0.0.1:" + std::to_string(port) + ": " +
                           errno_text());
    }
    if (::listen(listen_.get(), static_cast<int>(handlers_.size()) + 8) != 0) {
      throw TransportError("listen: " + errno_text());
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);

    threads_.reserve(handlers_.size());
    for (std::size_t i = 0; i < handlers_.size(); ++i) {
      threads_.emplace_back([this, i] { client_main(i); });
    }
    try {
      accept_all();
    } catch (...) {
      teardown();
      throw;
    }
  }

  ~SocketTransport() override {
    try {
      shutdown();
    } catch (...) {
    }
  }

  Gathered exchange(std::uint32_t round, const ParamSet& global) override {
    if (broken_) throw TransportError("transport already failed");
    const std::size_t n = conns_.size();
    Gathered g;
    g.updates.resize(n);
    try {
      const auto t0 = Clock::now();
      for (std::size_t i = 0; i < n; ++i) {
        send_all(conns_[i].get(),
                 encode({MessageKind::kBroadcast, round,
                         static_cast<std::uint32_t>(i), dtype_, global}));
      }
      g.timings.broadcast_ms = ms_since(t0);

      const auto t1 = Clock::now();
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::uint8_t> frame;
        try {
          frame = recv_frame(conns_[i].get());
        } catch (const Error& e) {
          throw TransportError("client " + std::to_string(i) + ": " +
                               e.what() + client_error(i));
        }
        Message msg = decode(frame);
        if (msg.kind != MessageKind::kUpdate || msg.round != round ||
            msg.client_id != i) {
          throw ProtocolError("client " + std::to_string(i) +
                              " sent an unexpected frame (kind " +
                              std::to_string(static_cast<int>(msg.kind)) +
                              ", round " + std::to_string(msg.round) + ")");
        }
        g.updates[i] = std::move(msg.payload);
      }
      const double gather_ms = ms_since(t1);
      double compute = 0.0;
      {
        std::lock_guard<std::mutex> lock(mu_);
        for (double c : compute_ms_) compute = std::max(compute, c);
      }
      g.timings.client_compute_ms = compute;
      g.timings.upload_ms = std::max(0.0, gather_ms - compute);
    } catch (...) {
      broken_ = true;
      throw;
    }
    return g;
  }

  void shutdown() override {
    if (shut_down_) return;
    shut_down_ = true;
    const Message bye{MessageKind::kShutdown, 0, 0, dtype_, {}};
    const auto frame = encode(bye);
    for (Fd& c : conns_) {
      if (!c.valid()) continue;
      try {
        send_all(c.get(), frame);
      } catch (const Error&) {
      }
    }
    teardown();
  }

  const char* name() const override { return "parallel"; }

 private:
  void accept_all() {
    for (std::size_t k = 0; k < conns_.size(); ++k) {
      pollfd p{listen_.get(), POLLIN, 0};
      const int ready = ::poll(&p, 1, static_cast<int>(watchdog_.count()));
      if (ready <= 0) throw TransportError("timed out waiting for clients");
      Fd conn(::accept(listen_.get(), nullptr, nullptr));
      if (!conn.valid()) throw TransportError("accept: " + errno_text());
      set_timeouts(conn.get(), watchdog_);
      set_nodelay(conn.get());
      const Message hello = decode(recv_frame(conn.get()));
      if (hello.kind != MessageKind::kAck || hello.client_id >= conns_.size() ||
          conns_[hello.client_id].valid()) {
        throw ProtocolError("bad client handshake");
      }
      conns_[hello.client_id] = std::move(conn);
    }
  }

  void client_main(std::size_t i) {
    Fd fd;
    try {
      fd = Fd(::socket(AF_INET, SOCK_STREAM, 0));
      if (!fd.valid()) throw TransportError("socket: " + errno_text());
      sockaddr_in addr = loopback(port_);
      if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr),
                    sizeof(addr)) != 0) {
        throw TransportError("connect: " + errno_text());
      }
      set_nodelay(fd.get());
      const auto id = static_cast<std::uint32_t>(i);
      send_all(fd.get(), encode({MessageKind::kAck, 0, id, dtype_, {}}));
      for (;;) {
        const Message msg = decode(recv_frame(fd.get()));
        if (msg.kind == MessageKind::kShutdown) break;
        if (msg.kind != MessageKind::kBroadcast) {
          throw ProtocolError("client expected a broadcast frame");
        }
        const auto t = Clock::now();
        ParamSet local = handlers_[i](msg.round, msg.payload);
        {
          std::lock_guard<std::mutex> lock(mu_);
          compute_ms_[i] = ms_since(t);
        }
        send_all(fd.get(), encode({MessageKind::kUpdate, msg.round, id,
                                   dtype_, std::move(local)}));
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      errors_[i] = std::current_exception();
    }
  }

  std::string client_error(std::size_t i) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!errors_[i]) return "";
    try {
      std::rethrow_exception(errors_[i]);
    } catch (const std::exception& e) {
      return std::string(" (client error: ") + e.what() + ")";
    } catch (...) {
      return " (client error: unknown)";
    }
  }

  void teardown() {
    for (Fd& c : conns_) c.shutdown_io();
    listen_.shutdown_io();
    for (std::thread& t : threads_) {
      if (t.joinable()) t.join();
    }
    threads_.clear();
    for (Fd& c : conns_) c.reset();
    listen_.reset();
  }

  std::vector<ClientHandler> handlers_;
  WireDtype dtype_;
  std::chrono::milliseconds watchdog_;
  Fd listen_;
  std::uint16_t port_ = 0;
  std::vector<Fd> conns_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::vector<double> compute_ms_;
  std::vector<std::exception_ptr> errors_;
  bool broken_ = false;
  bool shut_down_ = false;
};

}  // namespace

std::unique_ptr<Transport> make_sequential_transport(
    std::vector<ClientHandler> clients, WireDtype dtype) {
  return std::make_unique<SequentialTransport>(std::move(clients), dtype);
}

std::unique_ptr<Transport> make_socket_transport(
    std::vector<ClientHandler> clients, WireDtype dtype, std::uint16_t port,
    std::chrono::milliseconds watchdog) {
  return std::make_unique<SocketTransport>(std::move(clients), dtype, port,
                                           watchdog);
}

std::uint16_t port_from_env() {
  const char* env = std::getenv("BYZFED_PORT");
  if (env == nullptr || *env == '\0') return 47600;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 0 || v > 65535) {
    throw ConfigError(std::string("BYZFED_PORT is not a port number: ") + env);
  }
  return static_cast<std::uint16_t>(v);
}

}  // namespace byzfed
