#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

namespace hingenet {

using Digest = std::array<uint8_t, 32>;

// Incremental SHA-256, self-contained so the shared library carries no crypto
// dependency. Checked against the FIPS 180-2 test vectors in the unit tests.
class Sha256 {
 public:
  Sha256();
  void update(const void* bytes, size_t len);
  Digest finish();

 private:
  void process_block(const uint8_t* block);

  std::array<uint32_t, 8> state_;
  std::array<uint8_t, 64> buffer_;
  size_t buffer_len_ = 0;
  uint64_t total_len_ = 0;
};

Digest sha256(const void* bytes, size_t len);
std::string digest_hex(const Digest& d);

}  // namespace hingenet
