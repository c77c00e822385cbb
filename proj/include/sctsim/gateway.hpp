#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sctsim/hashing.hpp"
#include "sctsim/persona.hpp"
#include "sctsim/text.hpp"

namespace sctsim {

enum class GatewayMode { Live, Stub };

constexpr std::string_view to_string(GatewayMode m) noexcept {
  return m == GatewayMode::Live ? "live" : "stub";
}

inline std::optional<GatewayMode> parse_gateway_mode(std::string_view s) noexcept {
  if (s == "live") return GatewayMode::Live;
  if (s == "stub") return GatewayMode::Stub;
  return std::nullopt;
}

struct GatewayConfig {
  std::string base_url = "http://localhost:11434";
  std::string chat_model = "llama3.2:3b-instruct";
  std::string embed_model = "mxbai-embed-large";
  double temperature = 0.2;
  GatewayMode mode = GatewayMode::Stub;
  std::optional<std::uint64_t> seed = 42;
  int max_concurrent_requests = 4;
  double timeout_seconds = 120.0;
  std::string chat_path = "/api/chat";
  std::string embed_path = "/api/embed";

  void validate() const {
    if (!(temperature >= 0.0 && temperature <= 2.0))
      throw std::invalid_argument("temperature must lie in [0, 2], got " +
                                  text::format_double(temperature));
    if (mode == GatewayMode::Stub && !seed)
      throw std::invalid_argument("stub gateway requires a seed");
    if (max_concurrent_requests < 1)
      throw std::invalid_argument("max_concurrent_requests must be positive");
    if (!(timeout_seconds > 0.0)) throw std::invalid_argument("timeout must be positive");
  }

  /// Overlays MODEL_BASE_URL, CHAT_MODEL and EMBED_MODEL when set.
  GatewayConfig with_env() const {
    GatewayConfig c = *this;
    if (const char* v = std::getenv("MODEL_BASE_URL"); v && *v) c.base_url = v;
    if (const char* v = std::getenv("CHAT_MODEL"); v && *v) c.chat_model = v;
    if (const char* v = std::getenv("EMBED_MODEL"); v && *v) c.embed_model = v;
    return c;
  }
};

class GatewayError : public std::runtime_error {
 public:
  enum class Kind { Connection, HttpStatus, Timeout, Protocol };

  GatewayError(Kind kind, std::string url, const std::string& message, int status = 0)
      : std::runtime_error(message), kind_(kind), url_(std::move(url)), status_(status) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& url() const noexcept { return url_; }
  int status() const noexcept { return status_; }

 private:
  Kind kind_;
  std::string url_;
  int status_;
};

// ---------------------------------------------------------------------------
// Prompt templates

class PromptBundle {
 public:
  static constexpr std::array<std::string_view, 2> kPersonaSlots = {"{profile}", "{values}"};
  static constexpr std::array<std::string_view, 4> kConversationSlots = {
      "{context}", "{background}", "{interlocutor}", "{instructions}"};

  PromptBundle() : PromptBundle(default_persona_template(), default_conversation_template()) {}

  PromptBundle(std::string persona_init, std::string conversation)
      : persona_init_(std::move(persona_init)), conversation_(std::move(conversation)) {
    check_slots(persona_init_, kPersonaSlots, "persona_init_template");
    check_slots(conversation_, kConversationSlots, "conversation_template");
  }

  const std::string& persona_init_template() const noexcept { return persona_init_; }
  const std::string& conversation_template() const noexcept { return conversation_; }

  std::string render_persona(std::string_view profile, std::string_view values) const {
    std::string s = persona_init_;
    s = text::replace_all(std::move(s), "{profile}", profile);
    return text::replace_all(std::move(s), "{values}", values);
  }

  std::string render_conversation(std::string_view context, std::string_view background,
                                  std::string_view interlocutor,
                                  std::string_view instructions) const {
    // Fill in one pass so slot-like text inside a value is never re-expanded.
    std::string out;
    std::size_t pos = 0;
    while (pos < conversation_.size()) {
      bool matched = false;
      const std::array<std::pair<std::string_view, std::string_view>, 4> fills = {
          {{"{context}", context},
           {"{background}", background},
           {"{interlocutor}", interlocutor},
           {"{instructions}", instructions}}};
      for (const auto& [slot, value] : fills) {
        if (conversation_.compare(pos, slot.size(), slot) == 0) {
          out.append(value);
          pos += slot.size();
          matched = true;
          break;
        }
      }
      if (!matched) out.push_back(conversation_[pos++]);
    }
    return out;
  }

  static std::string default_persona_template() {
    return "You are the person described below. Stay in character at all times and answer "
           "in the first person, as yourself. Never mention being an AI, a model or an "
           "assistant, and never break character.\n\nWho you are:\n{profile}\n\n"
           "What you value:\n{values}\n";
  }

  static std::string default_conversation_template() {
    return "Context of the conversation:\n{context}\n\n"
           "Relevant parts of your own background:\n{background}\n\n"
           "You are speaking with: {interlocutor}\n\n"
           "Instructions: {instructions}\n";
  }

 private:
  template <std::size_t N>
  static void check_slots(const std::string& tpl, const std::array<std::string_view, N>& slots,
                          std::string_view name) {
    for (auto slot : slots) {
      const int n = text::count_phrase(tpl, slot);
      if (n != 1)
        throw std::invalid_argument(std::string(name) + ": slot " + std::string(slot) +
                                    " must appear exactly once (found " + std::to_string(n) +
                                    ")");
    }
  }

  std::string persona_init_;
  std::string conversation_;
};

// ---------------------------------------------------------------------------
// Requests

/// Identity a stub backend uses to pick persona template families.
struct StubPersona {
  std::string agent_id;
  std::string name;
  std::string job_title;
  std::string ideology;
};

/// Out-of-band inputs for the stub backend. Never serialized onto the wire,
/// so hidden scenario metadata can shape stub behavior without appearing in
/// any prompt.
struct StubHints {
  std::uint64_t unit_seed = 0;
  double intensity = 0.0;
  double reliability = 0.0;
  std::optional<StubPersona> persona;  // nullopt: vanilla agent
  std::string scenario_text;
};

struct ChatRequest {
  std::string system;
  std::string user;
  StubHints hints;
};

struct ChatResponse {
  std::string text;
  std::string template_id;  // audit field, stub only
};

class ModelGateway {
 public:
  virtual ~ModelGateway() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
  /// Unit-norm embedding of kEmbeddingDim components.
  virtual Embedding embed(std::string_view text) = 0;
  virtual const GatewayConfig& config() const noexcept = 0;

  bool is_stub() const noexcept { return config().mode == GatewayMode::Stub; }
};

// ---------------------------------------------------------------------------
// Stub backend

/// Feature-hashed bag-of-words embedding: each content token contributes a
/// fixed signed pattern, so texts sharing most tokens land close together.
inline Embedding stub_embedding(std::string_view s, std::uint64_t seed) {
  Embedding v(kEmbeddingDim, 0.0);
  auto toks = text::content_tokens(s);
  if (toks.empty()) toks = text::tokenize(s);
  if (toks.empty()) toks.emplace_back(s);
  for (const auto& t : toks) {
    const std::uint64_t h = hash_combine(hash_combine(seed, "embed"), t);
    for (std::uint64_t k = 0; k < 8; ++k) {
      const std::uint64_t z = mix64(h + k * 0x632be59bd9b4e019ULL);
      v[z % kEmbeddingDim] += (z >> 63) ? 1.0 : -1.0;
    }
  }
  normalize(v);
  if (l2_norm(v) == 0.0) v[0] = 1.0;  // all patterns cancelled
  return v;
}

namespace stub_bank {

enum class Family { Affirm, Hedge, Resist };

constexpr std::string_view family_name(Family f) noexcept {
  switch (f) {
    case Family::Affirm: return "affirm";
    case Family::Hedge: return "hedge";
    case Family::Resist: return "resist";
  }
  return "?";
}

// Two phrasings per construct and level (0.0, 0.5, 1.0).
inline const std::array<std::array<std::array<std::string_view, 2>, 3>, kConstructCount>&
construct_phrases() {
  static const std::array<std::array<std::array<std::string_view, 2>, 3>, kConstructCount> k = {{
      // self-efficacy
      {{{"I doubt anything I personally do could change how this turns out.",
         "Honestly, my own actions would not make much difference here."},
        {"I might be able to act on this, though I am not sure I would follow through.",
         "I could try to do something, but my confidence in pulling it off is mixed."},
        {"I am confident I can make the right choices and influence the outcome.",
         "I know I have what it takes to make a real difference on this."}}},
      // behavioral capability
      {{{"I do not really know how I would even start acting on this.",
         "This is outside what I know how to do in practice."},
        {"I know a little about how to handle this, but I am not always sure how to apply it.",
         "I have partial know-how here and would need to learn more."},
        {"I have learned exactly how to handle this kind of situation effectively.",
         "My skills let me put this into practice without much trouble."}}},
      // expectations
      {{{"I do not expect any of this to make a real difference.",
         "Whatever happens, I expect the outcome will be the same."},
        {"It could turn out well, but I am not expecting a big impact.",
         "The results might be positive, though my expectations are modest."},
        {"I expect this will lead to significantly better outcomes.",
         "I fully anticipate real and lasting benefits from this."}}},
      // self-regulation
      {{{"I lose track of these things, so I stopped trying to monitor them.",
         "I never set goals around this and do not keep track."},
        {"I sometimes think about monitoring this, but I do not set strict goals.",
         "Now and then I check on my progress, though not consistently."},
        {"I regularly check my progress and set clear goals every month.",
         "I monitor this closely and adjust my plans to meet my goals."}}},
      // observational learning
      {{{"Most people I know do not bother with this, so why should I.",
         "Watching others has never changed how I approach this."},
        {"I see others doing this and consider that maybe I could too.",
         "Some people around me have shifted, and I am starting to notice."},
        {"Seeing friends and colleagues do this has inspired me to follow their example.",
         "I have adopted what I learned from watching others succeed."}}},
      // reinforcements
      {{{"No one noticed or cared, so I did not continue.",
         "Nothing I did was ever recognized, so I lost interest."},
        {"I have been praised occasionally, but it has not changed my habits much.",
         "Some feedback has been encouraging, but it only motivates me a little."},
        {"Positive feedback motivates me to continue and improve.",
         "Every bit of recognition pushes me to keep going and do better."}}},
  }};
  return k;
}

// Family tilt toward the 1.0 level (+) or the 0.0 level (-) per construct,
// in kAllConstructs order.
inline constexpr std::array<std::array<double, kConstructCount>, 3> kFamilyBias = {{
    {-0.3, 0.0, 0.3, 0.3, 0.6, 0.3},     // affirm
    {0.0, 0.0, 0.0, 0.0, 0.0, 0.0},      // hedge
    {0.6, 0.3, -0.3, -0.2, -0.5, -0.3},  // resist
}};

}  // namespace stub_bank

/// Deterministic offline backend. Responses are expanded from template
/// families (affirm / hedge / resist) drawn with weights set by the hinted
/// contradiction intensity and reliability; the vanilla path uses a single
/// neutral family.
class StubGateway final : public ModelGateway {
 public:
  explicit StubGateway(GatewayConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.mode = GatewayMode::Stub;
    cfg_.validate();
  }

  const GatewayConfig& config() const noexcept override { return cfg_; }

  Embedding embed(std::string_view text) override {
    if (text.empty()) throw std::invalid_argument("embed: empty text");
    return stub_embedding(text, *cfg_.seed);
  }

  ChatResponse chat(const ChatRequest& req) override {
    if (req.user.empty()) throw std::invalid_argument("chat: empty user text");
    std::uint64_t key = hash_combine(*cfg_.seed, req.hints.unit_seed);
    key = hash_combine(key, req.system);
    key = hash_combine(key, req.user);
    SplitMix64 rng(key);
    if (!req.hints.persona) return vanilla_response(req.hints, rng);
    return persona_response(req.hints, *req.hints.persona, rng);
  }

 private:
  static std::string echo(std::string_view scenario, double fraction, SplitMix64& rng) {
    auto toks = text::content_tokens(scenario);
    std::vector<std::string> uniq;
    for (auto& t : toks)
      if (std::find(uniq.begin(), uniq.end(), t) == uniq.end()) uniq.push_back(t);
    std::vector<std::string> picked;
    for (auto& t : uniq)
      if (rng.uniform() < fraction) picked.push_back(t);
    if (picked.empty()) return {};
    std::string s = "You point to";
    for (auto& t : picked) s += " " + t;
    return s + ".";
  }

  static std::string construct_sentences(SplitMix64& rng, const std::array<double, 6>& tilt,
                                         const std::array<double, 6>& persona_bias) {
    std::string out;
    const auto& bank = stub_bank::construct_phrases();
    for (std::size_t c = 0; c < kConstructCount; ++c) {
      const double s = tilt[c] + persona_bias[c] + rng.uniform(-0.6, 0.6);
      const std::size_t level = s < -0.33 ? 0 : (s > 0.33 ? 2 : 1);
      out += " ";
      out += bank[c][level][rng.below(2)];
    }
    return out;
  }

  ChatResponse vanilla_response(const StubHints& h, SplitMix64& rng) const {
    std::string s = "Thank you for sharing this information. There are several perspectives "
                    "to consider on this topic.";
    if (auto e = echo(h.scenario_text, 0.35, rng); !e.empty()) s += " " + e;
    s += " This matters because the evidence should be weighed carefully.";
    const auto& bank = stub_bank::construct_phrases();
    for (std::size_t c = 0; c < kConstructCount; ++c) {
      s += " ";
      s += bank[c][1][rng.below(2)];
    }
    return {s, "vanilla/neutral"};
  }

  ChatResponse persona_response(const StubHints& h, const StubPersona& p, SplitMix64& rng) const {
    using stub_bank::Family;
    const double C = std::clamp(h.intensity, 0.0, 1.0);
    const double R = std::clamp(h.reliability, 0.0, 1.0);
    const double w_resist = 0.15 + 0.85 * C * (1.0 - 0.4 * R);
    const double w_hedge = 0.35;
    const double w_affirm = 0.15 + 0.5 * (1.0 - C) + 0.35 * R * (1.0 - C);
    const double u = rng.uniform() * (w_resist + w_hedge + w_affirm);
    const Family fam = u < w_resist ? Family::Resist
                       : u < w_resist + w_hedge ? Family::Hedge
                                                : Family::Affirm;

    std::string s;
    switch (fam) {
      case Family::Resist:
        s = "I am certain my views as " + p.job_title +
            " are grounded, and I am not convinced by this claim. I am absolutely sure about "
            "where I stand.";
        break;
      case Family::Hedge:
        s = "Perhaps there is something to this, but I might need more time to weigh it. "
            "Maybe I am unsure.";
        break;
      case Family::Affirm:
        s = "That is a fair point, and I can see why it deserves attention.";
        break;
    }

    const std::array<std::string, 3> prior = {
        "In my years as " + p.job_title + ", I have seen claims like this come and go.",
        "I have always believed in my " + p.ideology + " outlook.",
        "My experience shapes how I read this."};
    const int n_prior = rng.binomial(3, 0.1 + 0.75 * C);
    for (int i = 0; i < n_prior; ++i) s += " " + prior[static_cast<std::size_t>(i)];

    if (auto e = echo(h.scenario_text, 0.1 + 0.8 * C, rng); !e.empty()) s += " " + e;

    static const std::array<std::string_view, 3> just = {
        "I say this because the evidence on the ground tells a different story.",
        "That is why I weigh the data from my own work first.",
        "The reason is simple: decisions here affect real families."};
    const int n_just = rng.binomial(3, 0.1 + 0.75 * C);
    for (int i = 0; i < n_just; ++i) s += " " + std::string(just[static_cast<std::size_t>(i)]);

    std::array<double, 6> tilt{};
    std::array<double, 6> bias{};
    const auto& fb = stub_bank::kFamilyBias[static_cast<std::size_t>(fam)];
    for (std::size_t c = 0; c < kConstructCount; ++c) {
      tilt[c] = fb[c] * (0.5 + C);
      bias[c] = hashed_uniform(hash_combine(fnv1a64(p.agent_id), c)) - 0.5;
    }
    s += construct_sentences(rng, tilt, bias);
    return {s, "persona/" + std::string(stub_bank::family_name(fam))};
  }

  GatewayConfig cfg_;
};

/// Decorator capturing every chat request, for prompt audits.
class RecordingGateway final : public ModelGateway {
 public:
  explicit RecordingGateway(std::shared_ptr<ModelGateway> inner) : inner_(std::move(inner)) {}

  ChatResponse chat(const ChatRequest& request) override {
    {
      std::lock_guard lock(mu_);
      prompts_.push_back({request.system, request.user});
    }
    return inner_->chat(request);
  }
  Embedding embed(std::string_view text) override { return inner_->embed(text); }
  const GatewayConfig& config() const noexcept override { return inner_->config(); }

  std::vector<std::pair<std::string, std::string>> prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
  }

 private:
  std::shared_ptr<ModelGateway> inner_;
  mutable std::mutex mu_;
  std::vector<std::pair<std::string, std::string>> prompts_;
};

}  // namespace sctsim
