#include "gateway/session.hpp"

#include <sodium.h>

#include <vector>

#include <json.hpp>

#include "common/error.hpp"
#include "common/fsutil.hpp"
#include "common/random.hpp"
#include "common/timeutil.hpp"

namespace dbm::gateway {
namespace {

std::string to_b64(const std::string& in) {
  std::vector<char> out(sodium_base64_ENCODED_LEN(in.size(), sodium_base64_VARIANT_URLSAFE_NO_PADDING));
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(in.data()),
                    in.size(), sodium_base64_VARIANT_URLSAFE_NO_PADDING);
  return out.data();
}

std::string from_b64(const std::string& in) {
  std::vector<unsigned char> out(in.size());
  size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), in.data(), in.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_URLSAFE_NO_PADDING) != 0) {
    throw Error(Errc::Unauthenticated, "malformed session token");
  }
  return std::string(reinterpret_cast<char*>(out.data()), len);
}

[[noreturn]] void reject(const std::string& why) { throw Error(Errc::Unauthenticated, why); }

}  // namespace

SessionIssuer::SessionIssuer(const fs::path& key_file, const security::IdentityTable& identities,
                             std::chrono::seconds lifetime)
    : identities_(identities), lifetime_(lifetime) {
  ensure_sodium();
  if (auto existing = fsutil::try_read_file(key_file);
      existing && existing->size() == crypto_auth_hmacsha256_KEYBYTES) {
    key_ = *existing;
    return;
  }
  key_.resize(crypto_auth_hmacsha256_KEYBYTES);
  crypto_auth_hmacsha256_keygen(reinterpret_cast<unsigned char*>(key_.data()));
  fs::create_directories(key_file.parent_path());
  fsutil::write_file_atomic(key_file, key_, fs::perms::owner_read | fs::perms::owner_write);
}

std::string SessionIssuer::sign(const std::string& payload) const {
  unsigned char mac[crypto_auth_hmacsha256_BYTES];
  crypto_auth_hmacsha256(mac, reinterpret_cast<const unsigned char*>(payload.data()),
                         payload.size(), reinterpret_cast<const unsigned char*>(key_.data()));
  char hex[sizeof mac * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, mac, sizeof mac);
  return hex;
}

std::string SessionIssuer::login(const std::string& user) const {
  identities_.require(user);
  auto now = std::chrono::duration_cast<std::chrono::seconds>(
                 timeutil::Clock::now().time_since_epoch())
                 .count();
  auto payload = to_b64(nlohmann::json{{"user", user}, {"exp", now + lifetime_.count()}}.dump());
  return payload + "." + sign(payload);
}

security::Identity SessionIssuer::authenticate(const std::string& token) const {
  auto dot = token.find('.');
  if (dot == std::string::npos) reject("malformed session token");
  auto payload = token.substr(0, dot);
  auto mac = token.substr(dot + 1);
  auto expected = sign(payload);
  if (mac.size() != expected.size() ||
      sodium_memcmp(mac.data(), expected.data(), expected.size()) != 0) {
    reject("invalid session token");
  }
  nlohmann::json claims;
  try {
    claims = nlohmann::json::parse(from_b64(payload));
  } catch (const nlohmann::json::exception&) {
    reject("malformed session token");
  }
  auto now = std::chrono::duration_cast<std::chrono::seconds>(
                 timeutil::Clock::now().time_since_epoch())
                 .count();
  if (claims.value("exp", std::int64_t{0}) < now) reject("session expired");
  return identities_.require(claims.value("user", ""));
}

}  // namespace dbm::gateway
