#pragma once

#include <openssl/evp.h>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dibjscc/errors.hpp"

namespace dibjscc {

// Incremental SHA-256, used for dataset content addressing and parameter
// freeze checksums.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw io_error("sha256: digest init failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t len) {
    if (EVP_DigestUpdate(ctx_, data, len) != 1) {
      throw io_error("sha256: digest update failed");
    }
  }

  void update(const std::string& s) { update(s.data(), s.size()); }

  template <typename T>
  void update_values(const T* values, std::size_t count) {
    update(static_cast<const void*>(values), count * sizeof(T));
  }

  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, digest, &len) != 1) {
      throw io_error("sha256: digest final failed");
    }
    static const char* kHex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[digest[i] >> 4]);
      out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_ = nullptr;
};

inline std::string sha256_hex(const void* data, std::size_t len) {
  Sha256 h;
  h.update(data, len);
  return h.hex();
}

inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(s.data(), s.size());
}

}  // namespace dibjscc
