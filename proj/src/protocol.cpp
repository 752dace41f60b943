#include "steinflow/protocol.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace steinflow::proto {

using nlohmann::json;

std::string_view to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

Dtype parse_dtype(std::string_view name) {
  if (name == "f32") return Dtype::f32;
  if (name == "f64") return Dtype::f64;
  throw ProtocolError("unknown dtype '" + std::string(name) + "'");
}

std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

void write_be32(std::uint8_t* out, std::uint32_t v) {
  out[0] = std::uint8_t(v >> 24);
  out[1] = std::uint8_t(v >> 16);
  out[2] = std::uint8_t(v >> 8);
  out[3] = std::uint8_t(v);
}

std::uint32_t read_be32(const std::uint8_t* in) {
  return (std::uint32_t(in[0]) << 24) | (std::uint32_t(in[1]) << 16) | (std::uint32_t(in[2]) << 8) |
         std::uint32_t(in[3]);
}

std::vector<std::uint8_t> encode_frame(const json& header, std::span<const std::uint8_t> payload) {
  const std::string text = header.dump(-1, ' ', false, json::error_handler_t::replace);
  const std::size_t body = 4 + text.size() + payload.size();
  if (body > std::numeric_limits<std::uint32_t>::max()) throw ProtocolError("frame too large to encode");
  std::vector<std::uint8_t> out(4 + body);
  write_be32(out.data(), std::uint32_t(body));
  write_be32(out.data() + 4, std::uint32_t(text.size()));
  std::memcpy(out.data() + 8, text.data(), text.size());
  if (!payload.empty()) std::memcpy(out.data() + 8 + text.size(), payload.data(), payload.size());
  return out;
}

Frame decode_body(std::span<const std::uint8_t> body) {
  if (body.size() < 4) throw ProtocolError("frame body shorter than header length field");
  const std::uint32_t header_len = read_be32(body.data());
  if (header_len > body.size() - 4) throw ProtocolError("header length exceeds frame body");
  Frame f;
  const auto* text = reinterpret_cast<const char*>(body.data() + 4);
  try {
    f.header = json::parse(text, text + header_len);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("header is not valid JSON: ") + e.what());
  }
  if (!f.header.is_object()) throw ProtocolError("header must be a JSON object");
  f.payload.assign(body.begin() + 4 + header_len, body.end());
  return f;
}

std::vector<std::uint8_t> pack(std::span<const double> values, Dtype dtype) {
  std::vector<std::uint8_t> out(values.size() * dtype_size(dtype));
  std::uint8_t* p = out.data();
  for (double v : values) {
    if (dtype == Dtype::f32) {
      const auto bits = std::bit_cast<std::uint32_t>(float(v));
      for (int b = 0; b < 4; ++b) *p++ = std::uint8_t(bits >> (8 * b));
    } else {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) *p++ = std::uint8_t(bits >> (8 * b));
    }
  }
  return out;
}

std::vector<double> unpack(std::span<const std::uint8_t> bytes, Dtype dtype) {
  const std::size_t width = dtype_size(dtype);
  if (bytes.size() % width != 0) throw ProtocolError("payload is not a whole number of elements");
  std::vector<double> out(bytes.size() / width);
  const std::uint8_t* p = bytes.data();
  for (auto& v : out) {
    if (dtype == Dtype::f32) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t(*p++) << (8 * b);
      v = double(std::bit_cast<float>(bits));
    } else {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= std::uint64_t(*p++) << (8 * b);
      v = std::bit_cast<double>(bits);
    }
  }
  return out;
}

ScoreResponse ScoreResponse::error(std::string request_id, std::string message) {
  ScoreResponse r;
  r.request_id = std::move(request_id);
  r.ok = false;
  r.message = std::move(message);
  return r;
}

json shape_json(const LatticeShape& shape) { return json::array({shape.h, shape.w, shape.n, shape.c}); }

LatticeShape parse_shape(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ProtocolError("shape must be an array of 4 integers");
  int d[4];
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_number_integer()) throw ProtocolError("shape entries must be integers");
    const auto v = j[i].get<std::int64_t>();
    if (v < 1 || v > (1 << 24)) throw ProtocolError("shape entry out of range");
    d[i] = int(v);
  }
  LatticeShape s{d[0], d[1], d[2], d[3]};
  if (s.size() > (std::int64_t(1) << 28)) throw ProtocolError("shape too large");
  return s;
}

namespace {

template <typename T>
T field(const json& h, const char* key) {
  const auto it = h.find(key);
  if (it == h.end()) throw ProtocolError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(std::string("field '") + key + "' has the wrong type");
  }
}

std::string optional_string(const json& h, const char* key) {
  const auto it = h.find(key);
  if (it == h.end() || it->is_null()) return {};
  if (!it->is_string()) throw ProtocolError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

int integer_field(const json& h, const char* key) {
  const auto it = h.find(key);
  if (it == h.end()) throw ProtocolError(std::string("missing field '") + key + "'");
  if (!it->is_number_integer()) throw ProtocolError(std::string("field '") + key + "' must be an integer");
  const auto v = it->get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ProtocolError(std::string("field '") + key + "' out of range");
  }
  return int(v);
}

// Tensor data from the binary payload or an inline "data" array.
std::vector<double> tensor_data(const Frame& f, const LatticeShape& shape, Dtype dtype) {
  const auto expected = std::size_t(shape.size());
  std::vector<double> data;
  if (!f.payload.empty()) {
    if (f.header.contains("data")) throw ProtocolError("both payload and inline data present");
    if (f.payload.size() != expected * dtype_size(dtype)) {
      throw ProtocolError("payload holds " + std::to_string(f.payload.size()) + " bytes, shape needs " +
                          std::to_string(expected * dtype_size(dtype)));
    }
    data = unpack(f.payload, dtype);
  } else {
    const auto it = f.header.find("data");
    if (it == f.header.end()) throw ProtocolError("no tensor data");
    if (!it->is_array()) throw ProtocolError("data must be an array");
    if (it->size() != expected) {
      throw ProtocolError("data has " + std::to_string(it->size()) + " entries, shape needs " +
                          std::to_string(expected));
    }
    data.reserve(expected);
    for (const auto& v : *it) {
      if (!v.is_number()) throw ProtocolError("data entries must be numbers");
      data.push_back(v.get<double>());
    }
  }
  return data;
}

Dtype header_dtype(const json& h) {
  const auto name = optional_string(h, "dtype");
  return name.empty() ? Dtype::f32 : parse_dtype(name);
}

}  // namespace

std::vector<std::uint8_t> encode(const Hello& hello) {
  json h{{"type", "hello"}, {"protocol_version", hello.protocol_version}, {"peer", hello.peer},
         {"status", hello.ok ? "ok" : "error"}};
  if (!hello.message.empty()) h["message"] = hello.message;
  return encode_frame(h);
}

std::vector<std::uint8_t> encode(const ScoreRequest& r) {
  json h{{"type", "score_request"}, {"protocol_version", r.protocol_version},
         {"request_id", r.request_id}, {"kind", r.kind},
         {"tau", r.tau}, {"shape", shape_json(r.shape)},
         {"conditioning", r.conditioning}, {"dtype", to_string(r.dtype)}};
  return encode_frame(h, pack(r.data, r.dtype));
}

std::vector<std::uint8_t> encode(const ScoreResponse& r) {
  json h{{"type", "score_response"}, {"request_id", r.request_id}, {"status", r.ok ? "ok" : "error"}};
  if (!r.message.empty()) h["message"] = r.message;
  if (!r.ok) return encode_frame(h);
  h["shape"] = shape_json(r.shape);
  h["dtype"] = to_string(r.dtype);
  return encode_frame(h, pack(r.data, r.dtype));
}

std::string message_type(const Frame& f) { return field<std::string>(f.header, "type"); }

Hello parse_hello(const Frame& f) {
  if (message_type(f) != "hello") throw ProtocolError("expected a hello message");
  Hello h;
  h.protocol_version = integer_field(f.header, "protocol_version");
  h.peer = optional_string(f.header, "peer");
  const auto status = optional_string(f.header, "status");
  if (!status.empty() && status != "ok" && status != "error") throw ProtocolError("bad hello status");
  h.ok = status != "error";
  h.message = optional_string(f.header, "message");
  return h;
}

ScoreRequest parse_request(const Frame& f) {
  if (message_type(f) != "score_request") throw ProtocolError("expected a score_request message");
  ScoreRequest r;
  r.protocol_version = integer_field(f.header, "protocol_version");
  r.request_id = field<std::string>(f.header, "request_id");
  r.kind = field<std::string>(f.header, "kind");
  if (r.kind != "score" && r.kind != "velocity") throw ProtocolError("kind must be 'score' or 'velocity'");
  const auto tau = f.header.find("tau");
  if (tau == f.header.end() || !tau->is_number()) throw ProtocolError("tau must be a number");
  r.tau = tau->get<double>();
  if (!std::isfinite(r.tau)) throw ProtocolError("tau must be finite");
  r.shape = parse_shape(f.header.contains("shape") ? f.header["shape"] : json());
  r.conditioning = optional_string(f.header, "conditioning");
  r.dtype = header_dtype(f.header);
  r.data = tensor_data(f, r.shape, r.dtype);
  return r;
}

ScoreResponse parse_response(const Frame& f) {
  if (message_type(f) != "score_response") throw ProtocolError("expected a score_response message");
  ScoreResponse r;
  r.request_id = field<std::string>(f.header, "request_id");
  const auto status = field<std::string>(f.header, "status");
  r.message = optional_string(f.header, "message");
  if (status == "error") return r;
  if (status != "ok") throw ProtocolError("status must be 'ok' or 'error'");
  r.ok = true;
  r.shape = parse_shape(f.header.contains("shape") ? f.header["shape"] : json());
  r.dtype = header_dtype(f.header);
  r.data = tensor_data(f, r.shape, r.dtype);
  return r;
}

}  // namespace steinflow::proto
