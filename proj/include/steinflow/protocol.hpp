#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "steinflow/lattice.hpp"

namespace steinflow::proto {

inline constexpr int kVersion = 1;
inline constexpr std::uint32_t kDefaultMaxFrame = 64u << 20;

enum class Dtype { f32, f64 };

std::string_view to_string(Dtype d);
Dtype parse_dtype(std::string_view name);
std::size_t dtype_size(Dtype d);

/// Decoded frame: JSON header plus raw payload bytes.
struct Frame {
  nlohmann::json header;
  std::vector<std::uint8_t> payload;
};

void write_be32(std::uint8_t* out, std::uint32_t v);
std::uint32_t read_be32(const std::uint8_t* in);

/// u32 BE body length | u32 BE header length | header UTF-8 | payload.
std::vector<std::uint8_t> encode_frame(const nlohmann::json& header, std::span<const std::uint8_t> payload = {});

/// Parse a frame body (everything after the 4-byte length prefix).
/// Throws ProtocolError on any inconsistency.
Frame decode_body(std::span<const std::uint8_t> body);

/// Little-endian packing of doubles at the given width.
std::vector<std::uint8_t> pack(std::span<const double> values, Dtype dtype);
std::vector<double> unpack(std::span<const std::uint8_t> bytes, Dtype dtype);

struct Hello {
  int protocol_version = kVersion;
  std::string peer;
  bool ok = true;
  std::string message;
};

struct ScoreRequest {
  int protocol_version = kVersion;
  std::string request_id;
  std::string kind = "score";
  double tau = 0.0;
  LatticeShape shape;
  std::vector<double> data;
  std::string conditioning;
  Dtype dtype = Dtype::f32;
};

struct ScoreResponse {
  std::string request_id;
  bool ok = false;
  LatticeShape shape;
  std::vector<double> data;
  std::string message;
  Dtype dtype = Dtype::f32;

  static ScoreResponse error(std::string request_id, std::string message);
};

std::vector<std::uint8_t> encode(const Hello& hello);
std::vector<std::uint8_t> encode(const ScoreRequest& request);
std::vector<std::uint8_t> encode(const ScoreResponse& response);

/// Message type of a decoded frame ("hello", "score_request", "score_response").
std::string message_type(const Frame& frame);

Hello parse_hello(const Frame& frame);
ScoreRequest parse_request(const Frame& frame);
/// Validates status, shape and data length; never returns a partial tensor.
ScoreResponse parse_response(const Frame& frame);

LatticeShape parse_shape(const nlohmann::json& j);
nlohmann::json shape_json(const LatticeShape& shape);

}  // namespace steinflow::proto
