#include "gateway/http_client.hpp"

#include <httplib.h>

#include "common/error.hpp"

namespace dbm::gateway {

HttpClient::HttpClient(const std::string& url) : http_(std::make_unique<httplib::Client>(url)) {
  if (!http_->is_valid()) throw Error(Errc::InvalidArgument, "bad service URL: " + url);
  http_->set_connection_timeout(5);
  http_->set_read_timeout(180);
  http_->set_write_timeout(30);
}

HttpClient::~HttpClient() = default;
HttpClient::HttpClient(HttpClient&&) noexcept = default;
HttpClient& HttpClient::operator=(HttpClient&&) noexcept = default;

void HttpClient::login(const std::string& user) {
  auto j = call("POST", "/login", {{"user", user}});
  token_ = j.at("token").get<std::string>();
}

HttpResponse HttpClient::send(const std::string& method, const std::string& path,
                              const nlohmann::json& body) {
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  std::string payload = body.is_null() ? std::string() : body.dump();
  httplib::Result r;
  if (method == "GET") {
    r = http_->Get(path, headers);
  } else if (method == "POST") {
    r = http_->Post(path, headers, payload, "application/json");
  } else if (method == "PUT") {
    r = http_->Put(path, headers, payload, "application/json");
  } else if (method == "DELETE") {
    r = http_->Delete(path, headers, payload, "application/json");
  } else {
    throw Error(Errc::InvalidArgument, "unsupported method " + method);
  }
  HttpResponse out;
  if (!r) {
    out.status = 0;
    out.body = {{"error",
                 Error(Errc::Io, "cannot reach the service: " + httplib::to_string(r.error()))
                     .to_json()}};
    return out;
  }
  out.status = r->status;
  if (!r->body.empty()) {
    try {
      out.body = nlohmann::json::parse(r->body);
    } catch (const nlohmann::json::exception&) {
      out.body = {{"raw", r->body}};
    }
  }
  return out;
}

nlohmann::json HttpClient::call(const std::string& method, const std::string& path,
                                const nlohmann::json& body) {
  auto r = send(method, path, body);
  if (r.status >= 200 && r.status < 300) return r.body;
  Errc code = Errc::Internal;
  std::string message = "HTTP " + std::to_string(r.status);
  nlohmann::json details = nlohmann::json::object();
  if (r.body.is_object() && r.body.contains("error")) {
    const auto& e = r.body["error"];
    try {
      code = errc_from_name(e.value("code", "Internal"));
    } catch (const Error&) {
    }
    message = e.value("message", message);
    details = e.value("details", details);
  }
  throw Error(code, message, details);
}

}  // namespace dbm::gateway
