#include "steinflow/tensor_io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace steinflow::io {

namespace {

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(std::uint8_t(v >> (8 * b)));
}

std::uint32_t get_le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

constexpr std::size_t kHeaderBytes = 16 + 16;

}  // namespace

std::vector<std::uint8_t> encode_tensor(const LatticeField& field) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * std::size_t(field.size()));
  for (char ch : kTensorMagic) out.push_back(std::uint8_t(ch));
  put_le32(out, kTensorVersion);
  put_le32(out, 0);
  for (int d : field.shape().dims()) put_le32(out, std::uint32_t(d));
  for (Eigen::Index i = 0; i < field.size(); ++i) put_le32(out, std::bit_cast<std::uint32_t>(float(field.array()[i])));
  return out;
}

LatticeField decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw ContractViolation("tensor file shorter than its header");
  if (std::memcmp(bytes.data(), kTensorMagic, 8) != 0) throw ContractViolation("not a tensor file (bad magic)");
  const auto version = get_le32(bytes.data() + 8);
  if (version != kTensorVersion) throw ContractViolation("unsupported tensor version " + std::to_string(version));
  if (get_le32(bytes.data() + 12) != 0) throw ContractViolation("tensor reserved field must be 0");
  int dims[4];
  for (int i = 0; i < 4; ++i) {
    const auto d = get_le32(bytes.data() + 16 + 4 * i);
    if (d == 0 || d > (1u << 24)) throw ContractViolation("tensor dimension out of range");
    dims[i] = int(d);
  }
  const LatticeShape shape{dims[0], dims[1], dims[2], dims[3]};
  if (bytes.size() != kHeaderBytes + 4 * std::size_t(shape.size())) {
    throw ContractViolation("tensor payload size does not match shape " + shape.str());
  }
  LatticeField out(shape);
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (Eigen::Index i = 0; i < out.size(); ++i, p += 4) out.array()[i] = double(std::bit_cast<float>(get_le32(p)));
  return out;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw Error("failed writing " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_tensor(const std::filesystem::path& path, const LatticeField& field) { write_bytes(path, encode_tensor(field)); }

LatticeField read_tensor(const std::filesystem::path& path) { return decode_tensor(read_bytes(path)); }

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_bytes(path)); }

}  // namespace steinflow::io
