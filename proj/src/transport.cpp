#include "steinflow/transport.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <utility>

namespace steinflow::proto {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void ignore_sigpipe() {
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

}  // namespace

Stream::Stream(int in_fd, int out_fd, pid_t child) : in_fd_(in_fd), out_fd_(out_fd), child_(child) {}

Stream::Stream(Stream&& other) noexcept
    : in_fd_(std::exchange(other.in_fd_, -1)),
      out_fd_(std::exchange(other.out_fd_, -1)),
      child_(std::exchange(other.child_, -1)) {}

Stream& Stream::operator=(Stream&& other) noexcept {
  if (this != &other) {
    close();
    in_fd_ = std::exchange(other.in_fd_, -1);
    out_fd_ = std::exchange(other.out_fd_, -1);
    child_ = std::exchange(other.child_, -1);
  }
  return *this;
}

Stream::~Stream() { close(); }

void Stream::close_write() {
  if (out_fd_ < 0) return;
  if (out_fd_ == in_fd_) {
    ::shutdown(out_fd_, SHUT_WR);
  } else {
    ::close(out_fd_);
  }
  out_fd_ = -1;
}

void Stream::close() {
  if (out_fd_ >= 0 && out_fd_ != in_fd_) ::close(out_fd_);
  if (in_fd_ >= 0) ::close(in_fd_);
  in_fd_ = out_fd_ = -1;
  if (child_ > 0) {
    int status = 0;
    if (::waitpid(child_, &status, WNOHANG) == 0) {
      ::kill(child_, SIGTERM);
      ::waitpid(child_, &status, 0);
    }
    child_ = -1;
  }
}

void Stream::write_all(std::span<const std::uint8_t> bytes) {
  if (out_fd_ < 0) throw TransportError("write on closed stream");
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(out_fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("write"));
    }
    done += std::size_t(n);
  }
}

bool Stream::read_exact(std::uint8_t* out, std::size_t n, int timeout_ms, bool allow_eof) {
  std::size_t done = 0;
  while (done < n) {
    if (timeout_ms >= 0) {
      pollfd p{in_fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, timeout_ms);
      if (r < 0) {
        if (errno == EINTR) continue;
        throw TransportError(errno_text("poll"));
      }
      if (r == 0) throw TransportError("timed out after " + std::to_string(timeout_ms) + " ms");
    }
    const ssize_t got = ::read(in_fd_, out + done, n - done);
    if (got < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("read"));
    }
    if (got == 0) {
      if (allow_eof && done == 0) return false;
      throw TransportError("connection closed mid-frame");
    }
    done += std::size_t(got);
  }
  return true;
}

std::optional<std::vector<std::uint8_t>> Stream::read_frame(std::uint32_t max_frame, int timeout_ms) {
  if (in_fd_ < 0) throw TransportError("read on closed stream");
  std::uint8_t prefix[4];
  if (!read_exact(prefix, 4, timeout_ms, true)) return std::nullopt;
  const std::uint32_t length = (std::uint32_t(prefix[0]) << 24) | (std::uint32_t(prefix[1]) << 16) |
                               (std::uint32_t(prefix[2]) << 8) | std::uint32_t(prefix[3]);
  if (length > max_frame) throw FrameTooLarge(length);
  std::vector<std::uint8_t> body(length);
  if (length > 0) read_exact(body.data(), length, timeout_ms, false);
  return body;
}

Stream connect_endpoint(const std::string& endpoint) {
  ignore_sigpipe();
  if (endpoint.rfind("unix:", 0) == 0) {
    const std::string path = endpoint.substr(5);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.empty() || path.size() >= sizeof(addr.sun_path)) throw TransportError("bad socket path '" + path + "'");
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    const int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw TransportError(errno_text("socket"));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      const std::string msg = errno_text(("connect " + path).c_str());
      ::close(fd);
      throw TransportError(msg);
    }
    return Stream(fd, fd);
  }
  if (endpoint.rfind("exec:", 0) == 0) {
    const std::string cmd = endpoint.substr(5);
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw TransportError(errno_text("pipe"));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw TransportError(errno_text("pipe"));
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw TransportError(errno_text("fork"));
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return Stream(from_child[0], to_child[1], pid);
  }
  throw TransportError("endpoint must start with 'unix:' or 'exec:' (got '" + endpoint + "')");
}

int listen_unix(const std::string& path, int backlog) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.empty() || path.size() >= sizeof(addr.sun_path)) throw TransportError("bad socket path '" + path + "'");
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  struct stat st{};
  if (::stat(path.c_str(), &st) == 0 && S_ISSOCK(st.st_mode)) ::unlink(path.c_str());
  const int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw TransportError(errno_text("socket"));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd, backlog) != 0) {
    const std::string msg = errno_text(("bind " + path).c_str());
    ::close(fd);
    throw TransportError(msg);
  }
  return fd;
}

}  // namespace steinflow::proto
