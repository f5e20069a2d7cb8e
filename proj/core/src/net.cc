#include "net.h"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "em3/error.h"

namespace em3::net {
namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  fail(ErrorCode::kTransport, what + ": " + std::strerror(errno));
}

timeval to_timeval(std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  return tv;
}

}  // namespace

Endpoint parse_endpoint(std::string_view text) {
  std::string_view rest = text;
  if (rest.starts_with("tcp://")) rest.remove_prefix(6);
  const auto colon = rest.rfind(':');
  require(colon != std::string_view::npos && colon > 0 && colon + 1 < rest.size(),
          ErrorCode::kConfig, "endpoint '" + std::string(text) + "' is not host:port");
  Endpoint ep;
  ep.host = std::string(rest.substr(0, colon));
  const auto port_text = rest.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), ep.port);
  require(ec == std::errc() && ptr == port_text.data() + port_text.size() && ep.port >= 0 &&
              ep.port <= 65535,
          ErrorCode::kConfig, "bad port in endpoint '" + std::string(text) + "'");
  return ep;
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

Socket Socket::connect(const Endpoint& endpoint, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(endpoint.port);
  if (int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    fail(ErrorCode::kTransport, "cannot resolve '" + endpoint.host + "': " + gai_strerror(rc));
  }
  Socket s(::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol));
  if (!s.open()) {
    ::freeaddrinfo(res);
    sys_fail("socket");
  }
  // Non-blocking connect so the timeout also covers the handshake.
  const int flags = ::fcntl(s.fd_, F_GETFL, 0);
  ::fcntl(s.fd_, F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  const std::string where = endpoint.host + ":" + port;
  if (rc != 0) {
    if (errno != EINPROGRESS) sys_fail("connect " + where);
    pollfd pfd{s.fd_, POLLOUT, 0};
    rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc == 0) fail(ErrorCode::kTransport, "connect " + where + ": timed out");
    if (rc < 0) sys_fail("connect " + where);
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd_, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      errno = err;
      sys_fail("connect " + where);
    }
  }
  ::fcntl(s.fd_, F_SETFL, flags);
  const int one = 1;
  ::setsockopt(s.fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  s.set_timeout(timeout);
  return s;
}

void Socket::set_timeout(std::chrono::milliseconds timeout) {
  const timeval tv = to_timeval(timeout);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) fail(ErrorCode::kTransport, "send timed out");
      sys_fail("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool Socket::recv_exact(std::span<std::uint8_t> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      fail(ErrorCode::kTransport, "connection closed mid-message");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) fail(ErrorCode::kTransport, "receive timed out");
      sys_fail("recv");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void TcpServer::start(const Endpoint& endpoint, Handler handler) {
  require(!running_, ErrorCode::kState, "server already running");
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) sys_fail("socket");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(endpoint.port));
  const std::string host = endpoint.host == "localhost" ? "127.0.0.1" : endpoint.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    fail(ErrorCode::kConfig, "cannot listen on '" + endpoint.host + "': IPv4 address required");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    const int err = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    errno = err;
    sys_fail("listen on " + endpoint.host + ":" + std::to_string(endpoint.port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  handler_ = std::move(handler);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpServer::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 50);
    if (rc <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    live_.insert(fd);
    workers_.emplace_back([this, fd] {
      Socket s(fd);
      try {
        handler_(s);
      } catch (const std::exception&) {
        // Transport failure on one connection never stops the server.
      }
      std::lock_guard inner(mu_);
      live_.erase(fd);
    });
  }
}

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : live_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
}

}  // namespace em3::net
