#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "steinflow/expert.hpp"
#include "steinflow/protocol.hpp"
#include "steinflow/transport.hpp"

namespace steinflow {

struct RemoteOptions {
  std::string endpoint;
  std::string conditioning;
  /// What the backend returns: "score" or "velocity".
  std::string kind = "score";
  int timeout_ms = 10000;
  proto::Dtype dtype = proto::Dtype::f32;
  std::uint32_t max_frame = proto::kDefaultMaxFrame;
};

/// Expert served by another process over the framed protocol. Safe for
/// concurrent use: each call borrows a pooled connection, one request in
/// flight per connection. Transport failures are retried once on a fresh
/// connection.
class RemoteExpert final : public ExpertModel {
 public:
  explicit RemoteExpert(RemoteOptions options);

  LatticeField score(const LatticeField& x, double tau, const NoiseSchedule<double>& sched) const override;
  std::string describe() const override;

  const RemoteOptions& options() const { return options_; }
  /// Connections opened so far (handshakes performed).
  int connections_opened() const { return opened_.load(); }

 private:
  proto::Stream acquire() const;
  void release(proto::Stream stream) const;
  LatticeField attempt(const LatticeField& x, double tau, const NoiseSchedule<double>& sched) const;

  RemoteOptions options_;
  mutable std::mutex mutex_;
  mutable std::vector<proto::Stream> idle_;
  mutable std::atomic<std::uint64_t> next_id_{0};
  mutable std::atomic<int> opened_{0};
};

enum class StubMode { gmm, zero };

struct StubOptions {
  GmmExpert expert;
  NoiseSchedule<double> sched;
  StubMode mode = StubMode::gmm;
  std::uint32_t max_frame = proto::kDefaultMaxFrame;
  std::string name = "steinflow-stub";
};

/// Request handling of the reference server, independent of transport.
class StubHandler {
 public:
  explicit StubHandler(StubOptions options) : options_(std::move(options)) {}

  struct Reply {
    std::vector<std::uint8_t> bytes;
    bool close = false;
  };

  /// Answer one frame body. Never throws: malformed input gets an error reply.
  Reply handle_body(std::span<const std::uint8_t> body) const;
  /// Reply to a frame whose declared length exceeded the limit; closes.
  Reply oversized(std::uint32_t length) const;

  /// Serve one connection until EOF, a transport failure, or a closing reply.
  void serve(proto::Stream& stream) const;

  const StubOptions& options() const { return options_; }

 private:
  proto::ScoreResponse answer(const proto::ScoreRequest& request) const;

  StubOptions options_;
};

/// Thread-per-connection server on a unix socket.
class UnixStubServer {
 public:
  UnixStubServer(std::string path, StubHandler handler);
  ~UnixStubServer();
  UnixStubServer(const UnixStubServer&) = delete;
  UnixStubServer& operator=(const UnixStubServer&) = delete;

  void start();
  void stop();
  /// Block until stop() is called from another thread.
  void wait();
  const std::string& path() const { return path_; }

 private:
  void accept_loop();

  std::string path_;
  StubHandler handler_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  void reap_finished();

  std::mutex mutex_;
  std::vector<Worker> workers_;
  std::vector<int> live_fds_;
};

}  // namespace steinflow
