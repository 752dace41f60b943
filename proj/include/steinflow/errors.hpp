#pragma once

#include <stdexcept>
#include <string>

namespace steinflow {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (shape mismatch, missing data).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A scalar argument fell outside the domain where a formula is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An oracle was asked about a case it cannot evaluate exactly.
class UnsupportedOracle : public Error {
 public:
  using Error::Error;
};

class ExpertError : public Error {
 public:
  ExpertError(std::string expert, const std::string& what)
      : Error("expert '" + expert + "': " + what), expert_(std::move(expert)) {}
  const std::string& expert() const noexcept { return expert_; }

 private:
  std::string expert_;
};

class InversionDiverged : public Error {
 public:
  InversionDiverged(int step, const std::string& what)
      : Error("inversion diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// A particle became non-finite during annealing.
class DivergenceError : public Error {
 public:
  DivergenceError(int t, int particle, const std::string& what)
      : Error("divergence at t=" + std::to_string(t) + ", particle " +
              std::to_string(particle) + ": " + what),
        t_(t),
        particle_(particle) {}
  int t() const noexcept { return t_; }
  int particle() const noexcept { return particle_; }

 private:
  int t_;
  int particle_;
};

class SegmentError : public Error {
 public:
  SegmentError(int segment, const std::string& what)
      : Error("segment " + std::to_string(segment) + ": " + what), segment_(segment) {}
  int segment() const noexcept { return segment_; }

 private:
  int segment_;
};

/// Retriable transport failure (timeout, reset, refused connection).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Peer sent bytes that do not form a valid message.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Peer answered with status="error".
class BackendError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NotARunError : public Error {
 public:
  using Error::Error;
};

}  // namespace steinflow
