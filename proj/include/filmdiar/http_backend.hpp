// Copyright 2026 The filmdiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Chat-completion backend for any endpoint speaking the OpenAI
// /v1/chat/completions request and response shape.

#pragma once

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <string>

#include "filmdiar/chat_backend.hpp"

namespace filmdiar {

struct HttpBackendConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string credential_variable = kDefaultCredentialVariable;
  int timeout_s = 120;
};

struct ParsedUrl {
  std::string scheme_host_port;  // "https://api.example.com:8443"
  std::string path;              // "/v1/chat/completions"
};

inline ParsedUrl split_url(const std::string &url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw InvalidArgument("endpoint URL lacks a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    const char *key = std::getenv(cfg_.credential_variable.c_str());
    if (!key || !*key) {
      throw AuthError("credential variable " + cfg_.credential_variable +
                      " is not set");
    }
    key_ = key;
    url_ = split_url(cfg_.endpoint);
  }

  std::string complete(const ChatRequest &request) override {
    nlohmann::json body;
    body["model"] = request.model;
    body["temperature"] = request.temperature;
    body["messages"] = nlohmann::json::array(
        {{{"role", "system"}, {"content", request.system}},
         {{"role", "user"}, {"content", request.user}}});

    httplib::Client client(url_.scheme_host_port);
    client.set_connection_timeout(30);
    client.set_read_timeout(cfg_.timeout_s);
    const httplib::Headers headers = {{"Authorization", "Bearer " + key_}};
    auto res = client.Post(url_.path, headers, body.dump(), "application/json");
    if (!res) {
      throw TransientError("transport error: " + httplib::to_string(res.error()));
    }
    if (res->status == 401 || res->status == 403) {
      throw AuthError("endpoint rejected the credential in " +
                      cfg_.credential_variable + " (HTTP " +
                      std::to_string(res->status) + ")");
    }
    if (res->status == 429 || res->status >= 500) {
      throw TransientError("HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
      throw Error("HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception &e) {
      throw TransientError(std::string("malformed completion body: ") + e.what());
    }
  }

 private:
  HttpBackendConfig cfg_;
  std::string key_;
  ParsedUrl url_;
};

}  // namespace filmdiar
