#include "steinflow/remote.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <iterator>

#include "steinflow/flow.hpp"

namespace steinflow {

using proto::Stream;

RemoteExpert::RemoteExpert(RemoteOptions options) : options_(std::move(options)) {
  if (options_.kind != "score" && options_.kind != "velocity") {
    throw ConfigError("remote expert kind must be 'score' or 'velocity'");
  }
  if (options_.endpoint.empty()) throw ConfigError("remote expert needs an endpoint");
}

std::string RemoteExpert::describe() const { return "remote(" + options_.endpoint + ", " + options_.kind + ")"; }

Stream RemoteExpert::acquire() const {
  {
    std::lock_guard lock(mutex_);
    if (!idle_.empty()) {
      Stream s = std::move(idle_.back());
      idle_.pop_back();
      return s;
    }
  }
  Stream s = proto::connect_endpoint(options_.endpoint);
  s.write_all(proto::encode(proto::Hello{proto::kVersion, "steinflow-client", true, {}}));
  auto body = s.read_frame(options_.max_frame, options_.timeout_ms);
  if (!body) throw TransportError("backend closed the connection during handshake");
  const auto hello = proto::parse_hello(proto::decode_body(*body));
  if (!hello.ok) throw BackendError("handshake rejected: " + hello.message);
  if (hello.protocol_version != proto::kVersion) {
    throw ProtocolError("unsupported version " + std::to_string(hello.protocol_version));
  }
  ++opened_;
  return s;
}

void RemoteExpert::release(Stream stream) const {
  std::lock_guard lock(mutex_);
  idle_.push_back(std::move(stream));
}

LatticeField RemoteExpert::attempt(const LatticeField& x, double tau, const NoiseSchedule<double>& sched) const {
  Stream s = acquire();
  proto::ScoreRequest req;
  req.request_id = "r" + std::to_string(next_id_++);
  req.kind = options_.kind;
  req.tau = tau;
  req.shape = x.shape();
  req.data.assign(x.data(), x.data() + x.size());
  req.conditioning = options_.conditioning;
  req.dtype = options_.dtype;
  s.write_all(proto::encode(req));

  auto body = s.read_frame(options_.max_frame, options_.timeout_ms);
  if (!body) throw TransportError("backend closed the connection");
  const auto resp = proto::parse_response(proto::decode_body(*body));
  if (resp.request_id != req.request_id) {
    throw ProtocolError("response id '" + resp.request_id + "' does not echo '" + req.request_id + "'");
  }
  if (!resp.ok) {
    release(std::move(s));
    throw BackendError(resp.message.empty() ? "backend reported an error" : resp.message);
  }
  if (!(resp.shape == x.shape())) {
    throw ProtocolError("response shape " + resp.shape.str() + " does not match request " + x.shape().str());
  }
  release(std::move(s));
  LatticeField out(x.shape(), Eigen::Map<const Eigen::ArrayXd>(resp.data.data(), Eigen::Index(resp.data.size())));
  if (options_.kind == "velocity") return score_from_velocity(x, out, tau, sched);
  return out;
}

LatticeField RemoteExpert::score(const LatticeField& x, double tau, const NoiseSchedule<double>& sched) const {
  try {
    return attempt(x, tau, sched);
  } catch (const TransportError&) {
    return attempt(x, tau, sched);
  }
}

proto::ScoreResponse StubHandler::answer(const proto::ScoreRequest& req) const {
  const auto& expert = options_.expert;
  if (!(req.shape == expert.shape())) {
    return proto::ScoreResponse::error(req.request_id, "shape " + req.shape.str() + " does not match expert shape " +
                                                           expert.shape().str());
  }
  proto::ScoreResponse resp;
  resp.request_id = req.request_id;
  resp.ok = true;
  resp.shape = req.shape;
  resp.dtype = req.dtype;
  if (options_.mode == StubMode::zero) {
    resp.data.assign(std::size_t(req.shape.size()), 0.0);
    return resp;
  }
  try {
    const LatticeField x(req.shape, Eigen::Map<const Eigen::ArrayXd>(req.data.data(), req.shape.size()));
    LatticeField out = gmm_marginal_score(x, req.tau, expert, options_.sched);
    if (req.kind == "velocity") out = velocity_from_score(x, out, req.tau, options_.sched);
    resp.data.assign(out.data(), out.data() + out.size());
  } catch (const std::exception& e) {
    return proto::ScoreResponse::error(req.request_id, e.what());
  }
  return resp;
}

StubHandler::Reply StubHandler::handle_body(std::span<const std::uint8_t> body) const {
  std::string request_id;
  try {
    const auto frame = proto::decode_body(body);
    if (const auto it = frame.header.find("request_id"); it != frame.header.end() && it->is_string()) {
      request_id = it->get<std::string>();
    }
    const auto type = proto::message_type(frame);
    const auto version = frame.header.find("protocol_version");
    const bool version_ok = version != frame.header.end() && version->is_number_integer() &&
                            version->get<std::int64_t>() == proto::kVersion;
    if (type == "hello") {
      proto::Hello reply{proto::kVersion, options_.name, true, {}};
      if (!version_ok) {
        reply.ok = false;
        reply.message = "unsupported version";
      }
      return {proto::encode(reply), false};
    }
    if (type == "score_request") {
      if (!version_ok) return {proto::encode(proto::ScoreResponse::error(request_id, "unsupported version")), false};
      return {proto::encode(answer(proto::parse_request(frame))), false};
    }
    return {proto::encode(proto::ScoreResponse::error(request_id, "unknown message type '" + type + "'")), false};
  } catch (const std::exception& e) {
    return {proto::encode(proto::ScoreResponse::error(request_id, std::string("malformed frame: ") + e.what())),
            false};
  }
}

StubHandler::Reply StubHandler::oversized(std::uint32_t length) const {
  return {proto::encode(proto::ScoreResponse::error(
              "", "malformed frame: length " + std::to_string(length) + " exceeds limit " +
                      std::to_string(options_.max_frame))),
          true};
}

void StubHandler::serve(Stream& stream) const {
  try {
    for (;;) {
      Reply reply;
      try {
        auto body = stream.read_frame(options_.max_frame);
        if (!body) return;
        reply = handle_body(*body);
      } catch (const proto::FrameTooLarge& e) {
        reply = oversized(e.length());
      }
      stream.write_all(reply.bytes);
      if (reply.close) return;
    }
  } catch (const TransportError&) {
  }
}

UnixStubServer::UnixStubServer(std::string path, StubHandler handler)
    : path_(std::move(path)), handler_(std::move(handler)) {}

UnixStubServer::~UnixStubServer() { stop(); }

void UnixStubServer::start() {
  if (running_) return;
  listen_fd_ = proto::listen_unix(path_);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void UnixStubServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    reap_finished();
    std::lock_guard lock(mutex_);
    live_fds_.push_back(fd);
    auto done = std::make_shared<std::atomic<bool>>(false);
    workers_.push_back({std::thread([this, fd, done] {
                          {
                            Stream s(fd, fd);
                            handler_.serve(s);
                            std::lock_guard inner(mutex_);
                            live_fds_.erase(std::remove(live_fds_.begin(), live_fds_.end(), fd), live_fds_.end());
                          }
                          done->store(true);
                        }),
                        done});
  }
}

void UnixStubServer::reap_finished() {
  std::vector<Worker> finished;
  {
    std::lock_guard lock(mutex_);
    auto keep = std::partition(workers_.begin(), workers_.end(), [](const Worker& w) { return !w.done->load(); });
    std::move(keep, workers_.end(), std::back_inserter(finished));
    workers_.erase(keep, workers_.end());
  }
  for (auto& w : finished) w.thread.join();
}

void UnixStubServer::wait() {
  if (acceptor_.joinable()) acceptor_.join();
}

void UnixStubServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<Worker> workers;
  {
    std::lock_guard lock(mutex_);
    for (int fd : live_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& w : workers) w.thread.join();
  ::unlink(path_.c_str());
}

}  // namespace steinflow
