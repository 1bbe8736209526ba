#pragma once

#include <memory>
#include <string>

#include <json.hpp>

namespace httplib {
class Client;
}

namespace dbm::gateway {

struct HttpResponse {
  int status = 0;
  nlohmann::json body;
};

/// Thin JSON client for the gateway API (used by the C API and the CLI).
class HttpClient {
 public:
  /// `url` like "http://127.0.0.1:8080".
  explicit HttpClient(const std::string& url);
  ~HttpClient();
  HttpClient(HttpClient&&) noexcept;
  HttpClient& operator=(HttpClient&&) noexcept;

  /// POST /login and keep the token. Throws like call().
  void login(const std::string& user);
  const std::string& token() const { return token_; }
  void set_token(std::string token) { token_ = std::move(token); }

  /// Raw exchange; transport failures are status 0 with an Io error body.
  HttpResponse send(const std::string& method, const std::string& path,
                    const nlohmann::json& body = nullptr);
  /// send() that throws dbm::Error rebuilt from the structured error body.
  nlohmann::json call(const std::string& method, const std::string& path,
                      const nlohmann::json& body = nullptr);

 private:
  std::unique_ptr<httplib::Client> http_;
  std::string token_;
};

}  // namespace dbm::gateway
