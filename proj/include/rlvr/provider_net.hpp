#pragma once

// Reward-provider wire protocol: newline-delimited JSON over TCP.
//
//   request : {"id", "family", "response_text", "ground_truth"}
//   response: {"id", "answer_reward", "format_coef", "repetition_coef"}
//             or {"id", "error"}
//
// A client pipelines a whole batch on one connection and matches replies by
// id, so the server may answer in any order. Each score() call owns its
// connection, which makes a RemoteProvider safe to share across threads.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "rlvr/reward.hpp"

namespace rlvr {

namespace net {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

using Clock = std::chrono::steady_clock;

inline int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                        deadline - Clock::now())
                        .count();
  return left > 0 ? static_cast<int>(left) : 0;
}

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

inline Endpoint parse_endpoint(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size())
    throw InvalidConfig("provider address must be HOST:PORT, got '" + address +
                        "'");
  Endpoint ep;
  ep.host = address.substr(0, colon);
  try {
    const long port = std::stol(address.substr(colon + 1));
    if (port <= 0 || port > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw InvalidConfig("provider address has invalid port: '" + address + "'");
  }
  return ep;
}

// Returns an invalid socket on failure or timeout.
inline Socket connect_to(const Endpoint& ep, Clock::time_point deadline) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  const std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) return {};
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0));
  if (!s.valid()) return {};
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    if (errno != EINPROGRESS) return {};
    pollfd p{s.fd(), POLLOUT, 0};
    if (::poll(&p, 1, remaining_ms(deadline)) != 1) return {};
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) return {};
  }
  return s;
}

inline bool send_all(int fd, std::string_view data,
                     Clock::time_point deadline) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n > 0) {
      data.remove_prefix(static_cast<std::size_t>(n));
      continue;
    }
    if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)
      return false;
    pollfd p{fd, POLLOUT, 0};
    if (::poll(&p, 1, remaining_ms(deadline)) != 1) return false;
  }
  return true;
}

// Reads whatever is available (waiting up to the deadline) into `buf`.
// Returns false on EOF, error or timeout.
inline bool recv_some(int fd, std::string& buf, Clock::time_point deadline) {
  char chunk[65536];
  for (;;) {
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n > 0) {
      buf.append(chunk, static_cast<std::size_t>(n));
      return true;
    }
    if (n == 0) return false;
    if (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) return false;
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, remaining_ms(deadline)) != 1) return false;
  }
}

// Pops complete lines off the front of `buf`.
inline std::vector<std::string> take_lines(std::string& buf) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (;;) {
    const std::size_t nl = buf.find('\n', start);
    if (nl == std::string::npos) break;
    lines.emplace_back(buf, start, nl - start);
    start = nl + 1;
  }
  buf.erase(0, start);
  return lines;
}

}  // namespace net

struct RemoteProviderOptions {
  std::string address = "127.0.0.1:7070";
  int timeout_ms = 5000;  // per attempt, whole batch
  int retries = 2;
};

class RemoteProvider final : public RewardProvider {
 public:
  explicit RemoteProvider(RemoteProviderOptions opts)
      : opts_(std::move(opts)), endpoint_(net::parse_endpoint(opts_.address)) {}

  std::vector<ProviderResponse> score(
      std::span<const ProviderRequest> requests) override {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < requests.size(); ++i)
      if (!index.emplace(requests[i].id, i).second)
        throw ProviderError("duplicate request id " + requests[i].id);

    std::vector<std::optional<ProviderResponse>> got(requests.size());
    std::size_t outstanding = requests.size();
    std::string last_failure = "no attempt made";
    for (int attempt = 0; attempt <= opts_.retries && outstanding > 0;
         ++attempt) {
      const auto deadline = net::Clock::now() +
                            std::chrono::milliseconds(opts_.timeout_ms);
      net::Socket s = net::connect_to(endpoint_, deadline);
      if (!s.valid()) {
        last_failure = "cannot connect to " + opts_.address;
        continue;
      }
      std::string payload;
      for (std::size_t i = 0; i < requests.size(); ++i)
        if (!got[i]) payload += request_to_json(requests[i]).dump() + "\n";
      if (!net::send_all(s.fd(), payload, deadline)) {
        last_failure = "send failed or timed out";
        continue;
      }
      std::string buf;
      while (outstanding > 0) {
        if (!net::recv_some(s.fd(), buf, deadline)) {
          last_failure = net::remaining_ms(deadline) == 0
                             ? "timed out after " +
                                   std::to_string(opts_.timeout_ms) + " ms"
                             : "connection closed";
          break;
        }
        for (const std::string& line : net::take_lines(buf)) {
          nlohmann::json j;
          try {
            j = nlohmann::json::parse(line);
          } catch (const nlohmann::json::exception& e) {
            throw ProviderError(std::string("malformed provider line: ") +
                                e.what());
          }
          ProviderResponse r = response_from_json(j);
          const auto it = index.find(r.id);
          if (it == index.end())
            throw ProviderError("provider answered unknown id " + r.id);
          if (!got[it->second]) {
            got[it->second] = std::move(r);
            --outstanding;
          }
        }
      }
    }
    if (outstanding > 0)
      throw ProviderError("remote provider failed after " +
                          std::to_string(opts_.retries + 1) +
                          " attempt(s): " + last_failure);
    std::vector<ProviderResponse> out;
    out.reserve(got.size());
    for (auto& r : got) out.push_back(std::move(*r));
    return out;
  }

 private:
  RemoteProviderOptions opts_;
  net::Endpoint endpoint_;
};

// Test and deployment server wrapping the rule-based verifier.
struct ServerFaults {
  // Requests whose id satisfies this predicate never get a reply.
  std::function<bool(const std::string&)> drop;
  // Answer each received chunk of requests in reverse order.
  bool reverse_order = false;
};

class ProviderServer {
 public:
  explicit ProviderServer(VerifierConfig cfg = {}, ServerFaults faults = {})
      : local_(std::move(cfg)), faults_(std::move(faults)) {}
  ProviderServer(const ProviderServer&) = delete;
  ProviderServer& operator=(const ProviderServer&) = delete;
  ~ProviderServer() { stop(); }

  // Binds 127.0.0.1:port (0 picks a free port) and returns the bound port.
  std::uint16_t start(std::uint16_t port = 0, const std::string& host = "127.0.0.1") {
    listener_ = net::Socket(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!listener_.valid()) throw ProviderError("socket() failed");
    int one = 1;
    ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
      throw ProviderError("invalid bind address " + host);
    if (::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr),
               sizeof(addr)) != 0 ||
        ::listen(listener_.fd(), 64) != 0)
      throw ProviderError(std::string("bind/listen failed: ") +
                          std::strerror(errno));
    socklen_t len = sizeof(addr);
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    return port_;
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> workers;
    {
      std::lock_guard<std::mutex> lock(mu_);
      workers.swap(workers_);
    }
    for (auto& t : workers)
      if (t.joinable()) t.join();
    listener_.reset();
  }

  // Blocks until stop() is called from elsewhere.
  void wait() {
    if (acceptor_.joinable()) acceptor_.join();
  }

  std::uint16_t port() const { return port_; }
  std::string address() const { return "127.0.0.1:" + std::to_string(port_); }

 private:
  void accept_loop() {
    while (running_) {
      pollfd p{listener_.fd(), POLLIN, 0};
      if (::poll(&p, 1, 50) != 1) continue;
      const int fd = ::accept4(listener_.fd(), nullptr, nullptr,
                               SOCK_NONBLOCK | SOCK_CLOEXEC);
      if (fd < 0) continue;
      std::lock_guard<std::mutex> lock(mu_);
      workers_.emplace_back([this, fd] { serve(net::Socket(fd)); });
    }
  }

  std::string handle_line(const std::string& line) {
    nlohmann::json reply;
    std::string id;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      if (j.contains("id") && j.at("id").is_string())
        id = j.at("id").get<std::string>();
      const ProviderRequest req = request_from_json(j);
      if (faults_.drop && faults_.drop(req.id)) return {};
      const std::vector<ProviderResponse> r =
          local_.score(std::span<const ProviderRequest>(&req, 1));
      reply = response_to_json(r.front());
    } catch (const std::exception& e) {
      reply = {{"id", id}, {"error", e.what()}};
    }
    return reply.dump() + "\n";
  }

  void serve(net::Socket conn) {
    std::string buf;
    while (running_) {
      const auto deadline = net::Clock::now() + std::chrono::milliseconds(50);
      if (!net::recv_some(conn.fd(), buf, deadline)) {
        if (net::remaining_ms(deadline) == 0) continue;  // idle tick
        return;                                          // peer closed
      }
      std::vector<std::string> replies;
      for (const std::string& line : net::take_lines(buf)) {
        std::string r = handle_line(line);
        if (!r.empty()) replies.push_back(std::move(r));
      }
      if (faults_.reverse_order)
        std::reverse(replies.begin(), replies.end());
      std::string out;
      for (const auto& r : replies) out += r;
      const auto send_deadline = net::Clock::now() + std::chrono::seconds(5);
      if (!out.empty() && !net::send_all(conn.fd(), out, send_deadline)) return;
    }
  }

  LocalProvider local_;
  ServerFaults faults_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
};

}  // namespace rlvr
