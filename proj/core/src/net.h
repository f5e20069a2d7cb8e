#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace em3::net {

struct Endpoint {
  std::string host;
  int port = 0;
};

// "tcp://host:port" or "host:port". Throws kConfig.
Endpoint parse_endpoint(std::string_view text);

// Blocking stream socket with per-call timeouts. Failures throw kTransport.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  static Socket connect(const Endpoint& endpoint, std::chrono::milliseconds timeout);

  void set_timeout(std::chrono::milliseconds timeout);
  void send_all(std::span<const std::uint8_t> bytes);
  // False on orderly shutdown before the first byte; throws on a partial read.
  bool recv_exact(std::span<std::uint8_t> out);
  void shutdown();
  void close();

  int fd() const { return fd_; }
  bool open() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

// Listens on an endpoint and runs `handler` on one thread per connection.
// Port 0 picks a free port.
class TcpServer {
 public:
  using Handler = std::function<void(Socket&)>;

  TcpServer() = default;
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;
  ~TcpServer() { stop(); }

  void start(const Endpoint& endpoint, Handler handler);
  void stop();
  int port() const { return port_; }
  bool running() const { return running_.load(); }

 private:
  void accept_loop();

  int listen_fd_ = -1;
  int port_ = 0;
  Handler handler_;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::set<int> live_;
  std::vector<std::thread> workers_;
};

}  // namespace em3::net
