#pragma once

// HTTP LLM backend. Request/response contract:
//   POST <path>  body: {"model": "...", "prompt": "...", "temperature": 0}
//   reply 200    body: {"text": "...free-form completion..."}
// The completion is parsed with parse_label_reply. Failures (connect, non-200,
// bad JSON, unparseable answer) are retried up to `retries` times; then a
// PseudoLabelUnavailable is raised for the sample. When `api_key_env` names a
// set environment variable its value is sent as a bearer token.
//
// Answers are cached in memory and, when cache_path is set, in a JSON file
// {"z:<id>": label, "f:<id>": label} — zero-shot and few-shot entries are
// kept apart because their prompts differ. A cached sample never triggers a
// second HTTP call, within or across runs.

#include <httplib.h>

#include "delora/relabel.hpp"

namespace delora::relabel {

class HttpLlm final : public Backend {
 public:
  explicit HttpLlm(HttpLlmConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.cache_path.empty()) load_cache();
  }

  std::string label_for(const data::Sample& sample, const std::vector<std::string>& options,
                        const std::vector<Demo>& demos) override {
    require(!options.empty(), "HttpLlm: options must be non-empty");
    const std::string key = (demos.empty() ? "z:" : "f:") + std::to_string(sample.id);
    {
      std::lock_guard<std::mutex> lock(mu_);
      const auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    const std::string prompt = render_prompt(options, demos, prompt_text(sample));
    std::string failure;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      const std::optional<std::string> label = try_once(prompt, options, failure);
      if (label) {
        std::lock_guard<std::mutex> lock(mu_);
        cache_[key] = *label;
        if (!cfg_.cache_path.empty()) persist_cache();
        return *label;
      }
    }
    throw PseudoLabelUnavailable(sample.id, failure);
  }

  const char* name() const override { return "http"; }

 private:
  std::optional<std::string> try_once(const std::string& prompt,
                                      const std::vector<std::string>& options,
                                      std::string& failure) {
    httplib::Client client(cfg_.host, cfg_.port);
    client.set_connection_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
    client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()))
      client.set_bearer_token_auth(key);
    const nlohmann::json body{{"model", cfg_.model}, {"prompt", prompt}, {"temperature", 0}};
    const httplib::Result res = client.Post(cfg_.path, body.dump(), "application/json");
    if (!res) {
      failure = "connection failed";
      return std::nullopt;
    }
    if (res->status != 200) {
      failure = "HTTP status " + std::to_string(res->status);
      return std::nullopt;
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      failure = "response is not JSON";
      return std::nullopt;
    }
    if (!reply.contains("text") || !reply["text"].is_string()) {
      failure = "response lacks a 'text' field";
      return std::nullopt;
    }
    const std::optional<std::string> label =
        parse_label_reply(reply["text"].get<std::string>(), options);
    if (!label) failure = "could not find a label in the completion";
    return label;
  }

  void load_cache() {
    std::ifstream in(cfg_.cache_path);
    if (!in) return;  // first run: file does not exist yet
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("HttpLlm cache: invalid JSON in " + cfg_.cache_path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("HttpLlm cache: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!value.is_string()) throw ConfigError("HttpLlm cache: labels must be strings");
      cache_[key] = value.get<std::string>();
    }
  }

  // Caller holds mu_.
  void persist_cache() {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, value] : cache_) j[key] = value;
    std::ofstream out(cfg_.cache_path);
    if (!out) throw ConfigError("HttpLlm cache: cannot write " + cfg_.cache_path);
    out << j.dump(1) << '\n';
  }

  HttpLlmConfig cfg_;
  std::mutex mu_;
  std::map<std::string, std::string> cache_;
};

}  // namespace delora::relabel
