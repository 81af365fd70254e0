// SPDX-License-Identifier: Apache-2.0
//
// Recommendation, justification, and what-if requests over a loaded model,
// plus the HTTP front end. Request and response bodies are JSON.
#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "premier/checkpoint.hpp"
#include "premier/error.hpp"

namespace premier {

inline constexpr const char* kServiceVersion = "premier-service 1";

/// Malformed request; `field` is a path such as "visits[2].d[0]".
class RequestError : public Error {
 public:
  RequestError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Thrown by the request handlers when no model is loaded.
class ModelUnavailable : public Error {
 public:
  ModelUnavailable() : Error("no model loaded") {}
};

struct HttpResponse {
  int status = 200;
  std::string body;
};

class Service {
 public:
  Service() = default;
  explicit Service(LoadedModel loaded);

  bool loaded() const { return state_ != nullptr; }
  const PremierModel& model() const;
  const Vocabularies& vocabularies() const;

  /// {"visits": [{"d": [...], "p": [...], "m": [...]}, ...],
  ///  "options": {"threshold": 0.5, "top_n": 2, "history": "recorded"}}
  nlohmann::json recommend(const nlohmann::json& request) const;
  /// {"base": request, "modified": request} -> both responses and their diff.
  nlohmann::json whatif(const nlohmann::json& request) const;
  /// Full per-element breakdown of one medication at the final visit.
  nlohmann::json explain(const nlohmann::json& request, const std::string& medication) const;
  nlohmann::json health() const;

  /// Routes GET /health, POST /recommend, POST /whatif. Never throws.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

 private:
  struct State;
  std::shared_ptr<const State> state_;
};

/// Differences between two recommend responses.
nlohmann::json recommendation_diff(const nlohmann::json& base, const nlohmann::json& modified);

class HttpServer {
 public:
  explicit HttpServer(const Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port; returns the bound port. IoError on failure.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace premier
