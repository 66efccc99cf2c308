#pragma once

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "descaudit/counterfactual.hpp"
#include "descaudit/detectors.hpp"
#include "descaudit/errors.hpp"
#include "descaudit/flagging.hpp"

namespace descaudit {

namespace detail {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // starts with '/'
};

inline SplitUrl split_url(const std::string& url) {
  size_t scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorCode::SchemaError, "endpoint URL needs a scheme: " + url);
  }
  size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, slash), url.substr(slash)};
}

inline std::string api_key_from_env(const std::string& env_var) {
  if (env_var.empty()) return {};
  const char* value = std::getenv(env_var.c_str());
  return value ? value : std::string();
}

}  // namespace detail

struct HttpEndpoint {
  std::string url;
  std::string api_key_env;  // name of the env var holding the secret
  int timeout_seconds = 30;
};

// POST {"input_block", "sample_index"} -> {"text"}.
class HttpTextGenerator : public TextGenerator {
 public:
  explicit HttpTextGenerator(HttpEndpoint endpoint)
      : endpoint_(std::move(endpoint)),
        split_(detail::split_url(endpoint_.url)),
        client_(split_.base) {
    client_.set_read_timeout(endpoint_.timeout_seconds, 0);
    api_key_ = detail::api_key_from_env(endpoint_.api_key_env);
  }

  std::string generate(const std::string& input_block,
                       int sample_index) override {
    nlohmann::json request{{"input_block", input_block},
                           {"sample_index", sample_index}};
    httplib::Headers headers;
    if (!api_key_.empty()) {
      headers.insert({"Authorization", "Bearer " + api_key_});
    }
    auto response = client_.Post(split_.path, headers, request.dump(),
                                 "application/json");
    if (!response || response->status != 200) {
      throw Error(ErrorCode::GeneratorError,
                  "generator endpoint failed (status " +
                      std::to_string(response ? response->status : 0) + ")");
    }
    nlohmann::json body = nlohmann::json::parse(response->body, nullptr, false);
    if (body.is_discarded() || !body.contains("text")) {
      throw Error(ErrorCode::GeneratorError,
                  "generator response missing 'text'");
    }
    return body["text"].get<std::string>();
  }

  std::string tag() const override { return endpoint_.url; }

 private:
  HttpEndpoint endpoint_;
  detail::SplitUrl split_;
  httplib::Client client_;
  std::string api_key_;
};

// Chat-style completion endpoint. Request/response bodies can be logged
// for replay; the API key travels only in the Authorization header and is
// never written to the log.
class HttpLLMClient : public LLMClient {
 public:
  HttpLLMClient(HttpEndpoint endpoint, std::string model_tag,
                std::optional<std::filesystem::path> log_path = std::nullopt)
      : endpoint_(std::move(endpoint)),
        split_(detail::split_url(endpoint_.url)),
        client_(split_.base),
        model_tag_(std::move(model_tag)) {
    client_.set_read_timeout(endpoint_.timeout_seconds, 0);
    api_key_ = detail::api_key_from_env(endpoint_.api_key_env);
    if (log_path) {
      log_.open(*log_path, std::ios::app);
    }
  }

  std::string complete(const std::string& prompt) override {
    nlohmann::json request{
        {"model", model_tag_},
        {"messages",
         nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    httplib::Headers headers;
    if (!api_key_.empty()) {
      headers.insert({"Authorization", "Bearer " + api_key_});
    }
    auto response = client_.Post(split_.path, headers, request.dump(),
                                 "application/json");
    if (!response || response->status != 200) {
      throw Error(ErrorCode::ClientError,
                  "completion endpoint failed (status " +
                      std::to_string(response ? response->status : 0) + ")");
    }
    nlohmann::json body = nlohmann::json::parse(response->body, nullptr, false);
    std::string text;
    if (!body.is_discarded() && body.contains("choices") &&
        !body["choices"].empty()) {
      text = body["choices"][0].at("message").at("content").get<std::string>();
    } else if (!body.is_discarded() && body.contains("text")) {
      text = body["text"].get<std::string>();
    } else {
      throw Error(ErrorCode::ClientError, "unrecognized completion response");
    }
    if (log_.is_open()) {
      nlohmann::json line{{"request", request}, {"response", body}};
      std::lock_guard<std::mutex> lock(log_mutex_);
      log_ << line.dump() << '\n';
      log_.flush();
    }
    return text;
  }

 private:
  HttpEndpoint endpoint_;
  detail::SplitUrl split_;
  httplib::Client client_;
  std::string model_tag_;
  std::string api_key_;
  std::ofstream log_;
  std::mutex log_mutex_;
};

// POST {"text"} -> {"score"} in [0, 1].
class HttpToxicityScorer : public ToxicityScorer {
 public:
  explicit HttpToxicityScorer(HttpEndpoint endpoint)
      : endpoint_(std::move(endpoint)),
        split_(detail::split_url(endpoint_.url)),
        client_(split_.base) {
    client_.set_read_timeout(endpoint_.timeout_seconds, 0);
    api_key_ = detail::api_key_from_env(endpoint_.api_key_env);
  }

  double score(const std::string& text) override {
    nlohmann::json request{{"text", text}};
    httplib::Headers headers;
    if (!api_key_.empty()) {
      headers.insert({"Authorization", "Bearer " + api_key_});
    }
    auto response = client_.Post(split_.path, headers, request.dump(),
                                 "application/json");
    if (!response || response->status != 200) {
      throw Error(ErrorCode::ScorerUnavailable,
                  "toxicity endpoint failed (status " +
                      std::to_string(response ? response->status : 0) + ")");
    }
    nlohmann::json body = nlohmann::json::parse(response->body, nullptr, false);
    if (body.is_discarded() || !body.contains("score")) {
      throw Error(ErrorCode::ScorerUnavailable,
                  "toxicity response missing 'score'");
    }
    return body["score"].get<double>();
  }

 private:
  HttpEndpoint endpoint_;
  detail::SplitUrl split_;
  httplib::Client client_;
  std::string api_key_;
};

}  // namespace descaudit
