#include "common/random.hpp"

#include <sodium.h>

#include <stdexcept>
#include <vector>

namespace dbm {
namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

}  // namespace

void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw std::runtime_error("libsodium initialization failed");
}

std::string random_alnum(std::size_t length) {
  ensure_sodium();
  std::string out(length, '\0');
  for (auto& c : out) c = kAlphabet[randombytes_uniform(62)];
  return out;
}

std::string random_hex(std::size_t bytes) {
  ensure_sodium();
  std::vector<unsigned char> raw(bytes);
  randombytes_buf(raw.data(), raw.size());
  std::string hex(bytes * 2 + 1, '\0');
  sodium_bin2hex(hex.data(), hex.size(), raw.data(), raw.size());
  hex.pop_back();
  return hex;
}

}  // namespace dbm
