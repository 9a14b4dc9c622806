#include "openrdm/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <stdexcept>

namespace openrdm {

std::string sha256_hex(std::string_view bytes, std::size_t length) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int md_len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &md_len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  hex.reserve(2 * md_len);
  for (unsigned int i = 0; i < md_len; ++i) {
    char buf[3];
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  if (length < hex.size())
    hex.resize(length);
  return hex;
}

std::string sha256_hex(std::span<const double> values, std::size_t length) {
  return sha256_hex(std::string_view(reinterpret_cast<const char *>(values.data()),
                                     values.size() * sizeof(double)),
                    length);
}

} // namespace openrdm
