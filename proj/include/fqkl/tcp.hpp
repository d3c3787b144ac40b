#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "fqkl/wire.hpp"

namespace fqkl {

/// Blocking loopback/IPv4 stream connection; also a ByteSource so decoded
/// frames come straight off the socket.
class TcpConn : public ByteSource {
 public:
  explicit TcpConn(int fd) : fd_(fd) {}
  ~TcpConn() override;
  TcpConn(const TcpConn&) = delete;
  TcpConn& operator=(const TcpConn&) = delete;

  static std::unique_ptr<TcpConn> connect(const std::string& host, std::uint16_t port);

  std::size_t read(void* buf, std::size_t n) override;
  void send_all(const void* buf, std::size_t n);
  void send_message(const WireMessage& msg);
  WireMessage recv_message(std::uint64_t max_payload = kDefaultMaxPayload);

 private:
  int fd_;
};

class TcpListener {
 public:
  /// Binds and listens; port 0 asks the OS for an ephemeral port.
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<TcpConn> accept();

 private:
  int fd_;
  std::uint16_t port_;
};

/// "host:port" -> (host, port). Throws ConfigError on malformed input.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

}  // namespace fqkl
