#pragma once

#include <sys/types.h>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "steinflow/errors.hpp"

namespace steinflow::proto {

/// Declared frame length exceeded the receiver's limit.
class FrameTooLarge : public ProtocolError {
 public:
  explicit FrameTooLarge(std::uint32_t length)
      : ProtocolError("frame length " + std::to_string(length) + " exceeds limit"), length_(length) {}
  std::uint32_t length() const noexcept { return length_; }

 private:
  std::uint32_t length_;
};

/// A bidirectional byte stream over a socket or a pair of pipes. Owns its
/// descriptors and, for exec endpoints, the child process.
class Stream {
 public:
  Stream() = default;
  Stream(int in_fd, int out_fd, pid_t child = -1);
  Stream(Stream&& other) noexcept;
  Stream& operator=(Stream&& other) noexcept;
  Stream(const Stream&) = delete;
  Stream& operator=(const Stream&) = delete;
  ~Stream();

  bool open() const { return in_fd_ >= 0; }
  void close();
  /// Signal EOF to the peer while still reading its replies.
  void close_write();

  void write_all(std::span<const std::uint8_t> bytes);

  /// Next frame body (without the length prefix). nullopt on a clean EOF
  /// at a frame boundary; TransportError on timeout or mid-frame EOF;
  /// FrameTooLarge before reading an oversized body. timeout_ms < 0 waits forever.
  std::optional<std::vector<std::uint8_t>> read_frame(std::uint32_t max_frame, int timeout_ms = -1);

 private:
  bool read_exact(std::uint8_t* out, std::size_t n, int timeout_ms, bool allow_eof);

  int in_fd_ = -1;
  int out_fd_ = -1;
  pid_t child_ = -1;
};

/// "unix:PATH" connects to a listening socket; "exec:CMD" runs CMD under
/// /bin/sh and talks over its stdin/stdout.
Stream connect_endpoint(const std::string& endpoint);

/// Bound, listening unix socket (an existing socket file is replaced).
int listen_unix(const std::string& path, int backlog = 16);

}  // namespace steinflow::proto
