#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dbm::engines {

inline constexpr std::size_t kMaxKeyBytes = 1024;
inline constexpr std::size_t kMaxValueBytes = 64 * 1024;
inline constexpr std::size_t kMaxLineBytes = kMaxKeyBytes + kMaxValueBytes + 64;

/// One request line split into verb and arguments. The final argument of PUT
/// keeps its spaces (the value is the rest of the line).
struct Command {
  std::string verb;
  std::vector<std::string> args;
};

Command parse_command(std::string_view line);

/// A response line: "OK[ payload]" or "ERR <Code>[ message]".
struct Reply {
  bool ok = false;
  std::string code;     // error code name when !ok
  std::string payload;  // text after OK, or the error message

  static Reply parse(std::string_view line);
  std::string to_line() const;
  static Reply success(std::string payload = {}) { return {true, {}, std::move(payload)}; }
  static Reply failure(std::string code, std::string message = {}) {
    return {false, std::move(code), std::move(message)};
  }
};

/// FNV-1a, stable across processes; used to route keys to partitions.
std::uint64_t key_hash(std::string_view key);
int partition_for(std::string_view key, int partitions);

/// Salted SHA-256 for stored passwords: "<salt-hex>$<digest-hex>".
std::string hash_password(std::string_view password);
bool verify_password(std::string_view stored, std::string_view password);

/// Blocking line-oriented TCP connection.
class LineSocket {
 public:
  LineSocket() = default;
  explicit LineSocket(int fd) : fd_(fd) {}
  ~LineSocket();
  LineSocket(LineSocket&& other) noexcept;
  LineSocket& operator=(LineSocket&& other) noexcept;
  LineSocket(const LineSocket&) = delete;
  LineSocket& operator=(const LineSocket&) = delete;

  /// Throws EngineUnreachable.
  static LineSocket connect(const std::string& ip, int port,
                            std::chrono::milliseconds timeout = std::chrono::seconds(2));

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  /// Returns false when the peer has gone away.
  bool send_line(std::string_view line);
  /// nullopt on EOF, error, oversize line, or timeout.
  std::optional<std::string> read_line(
      std::chrono::milliseconds timeout = std::chrono::milliseconds(-1));
  /// send_line + read_line + Reply::parse. Throws EngineUnreachable.
  Reply request(std::string_view line,
                std::chrono::milliseconds timeout = std::chrono::seconds(10));
  void close();

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace dbm::engines
