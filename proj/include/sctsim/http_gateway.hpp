#pragma once

#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

#include <httplib.h>
// <resolv.h> defines _res as a macro, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "sctsim/gateway.hpp"

namespace sctsim {

// Wire format (Ollama-style, non-streaming):
//
//   POST {chat_path}   {"model", "messages": [{"role","content"}...], "stream": false,
//                       "options": {"temperature"}}
//     <- {"message": {"role": "assistant", "content": "..."}}
//        or the OpenAI shape {"choices": [{"message": {"content": "..."}}]}
//   POST {embed_path}  {"model", "input": "..."}
//     <- {"embeddings": [[...]]}, {"embedding": [...]} or {"data": [{"embedding": [...]}]}
//
// No top-k / top-p fields are ever sent.

inline Json chat_request_body(const GatewayConfig& cfg, const ChatRequest& req) {
  Json messages = Json::array();
  if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
  messages.push_back({{"role", "user"}, {"content", req.user}});
  return Json{{"model", cfg.chat_model},
              {"messages", std::move(messages)},
              {"stream", false},
              {"options", {{"temperature", cfg.temperature}}}};
}

inline Json embed_request_body(const GatewayConfig& cfg, std::string_view text) {
  return Json{{"model", cfg.embed_model}, {"input", std::string(text)}};
}

/// Extracts the assistant text; nullopt when the body has neither known shape.
inline std::optional<std::string> parse_chat_response(const Json& body) {
  if (auto m = body.find("message"); m != body.end() && m->is_object()) {
    if (auto c = m->find("content"); c != m->end() && c->is_string()) return c->get<std::string>();
  }
  if (auto ch = body.find("choices"); ch != body.end() && ch->is_array() && !ch->empty()) {
    const auto& first = (*ch)[0];
    if (auto m = first.find("message"); m != first.end() && m->is_object())
      if (auto c = m->find("content"); c != m->end() && c->is_string())
        return c->get<std::string>();
  }
  return std::nullopt;
}

inline std::optional<Embedding> parse_embed_response(const Json& body) {
  const Json* vec = nullptr;
  if (auto e = body.find("embeddings"); e != body.end() && e->is_array() && !e->empty())
    vec = &(*e)[0];
  else if (auto e1 = body.find("embedding"); e1 != body.end())
    vec = &*e1;
  else if (auto d = body.find("data"); d != body.end() && d->is_array() && !d->empty())
    if (auto e2 = (*d)[0].find("embedding"); e2 != (*d)[0].end()) vec = &*e2;
  if (!vec || !vec->is_array()) return std::nullopt;
  Embedding out;
  out.reserve(vec->size());
  for (const auto& x : *vec) {
    if (!x.is_number()) return std::nullopt;
    out.push_back(x.get<double>());
  }
  return out;
}

/// Live backend over JSON/HTTP. Thread-safe; in-flight requests are bounded
/// by max_concurrent_requests.
class HttpGateway final : public ModelGateway {
 public:
  explicit HttpGateway(GatewayConfig cfg)
      : cfg_(std::move(cfg)), slots_(cfg_.max_concurrent_requests) {
    cfg_.mode = GatewayMode::Live;
    cfg_.validate();
  }

  const GatewayConfig& config() const noexcept override { return cfg_; }

  ChatResponse chat(const ChatRequest& req) override {
    if (req.user.empty()) throw std::invalid_argument("chat: empty user text");
    const Json body = post(cfg_.chat_path, chat_request_body(cfg_, req));
    auto text = parse_chat_response(body);
    if (!text)
      throw GatewayError(GatewayError::Kind::Protocol, url(cfg_.chat_path),
                         "chat response from " + url(cfg_.chat_path) +
                             " has no message content");
    return {*text, {}};
  }

  Embedding embed(std::string_view text) override {
    if (text.empty()) throw std::invalid_argument("embed: empty text");
    const Json body = post(cfg_.embed_path, embed_request_body(cfg_, text));
    auto v = parse_embed_response(body);
    if (!v)
      throw GatewayError(GatewayError::Kind::Protocol, url(cfg_.embed_path),
                         "embedding response from " + url(cfg_.embed_path) + " has no vector");
    if (v->size() != kEmbeddingDim)
      throw GatewayError(GatewayError::Kind::Protocol, url(cfg_.embed_path),
                         "expected " + std::to_string(kEmbeddingDim) + "-dim embedding, got " +
                             std::to_string(v->size()));
    normalize(*v);
    return std::move(*v);
  }

 private:
  std::string url(std::string_view path) const { return cfg_.base_url + std::string(path); }

  Json post(const std::string& path, const Json& payload) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<1024>& s;
      ~Release() { s.release(); }
    } release{slots_};

    httplib::Client client(cfg_.base_url);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    auto res = client.Post(path, payload.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      const auto kind = err == httplib::Error::Read || err == httplib::Error::Write
                            ? GatewayError::Kind::Timeout
                            : GatewayError::Kind::Connection;
      throw GatewayError(kind, url(path),
                         "request to " + url(path) + " failed: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300)
      throw GatewayError(GatewayError::Kind::HttpStatus, url(path),
                         "request to " + url(path) + " returned HTTP " +
                             std::to_string(res->status),
                         res->status);
    try {
      return Json::parse(res->body);
    } catch (const Json::parse_error& e) {
      throw GatewayError(GatewayError::Kind::Protocol, url(path),
                         "non-JSON response from " + url(path) + ": " + e.what());
    }
  }

  GatewayConfig cfg_;
  std::counting_semaphore<1024> slots_;
};

inline std::shared_ptr<ModelGateway> make_gateway(const GatewayConfig& cfg) {
  if (cfg.mode == GatewayMode::Stub) return std::make_shared<StubGateway>(cfg);
  return std::make_shared<HttpGateway>(cfg);
}

}  // namespace sctsim
