#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "sctsim/gateway.hpp"
#include "sctsim/hashing.hpp"
#include "sctsim/memory.hpp"
#include "sctsim/persona.hpp"
#include "sctsim/text.hpp"

namespace sctsim {

inline constexpr std::array<double, 3> kAlignmentLevels = {0.0, 0.5, 1.0};
inline constexpr std::array<std::string_view, 3> kAlignmentKeys = {"0.0", "0.5", "1.0"};

/// Example statements per construct and alignment level.
class ConstructExemplars {
 public:
  using Levels = std::array<std::vector<std::string>, 3>;

  static ConstructExemplars from_json(const Json& doc) {
    ConstructExemplars ex;
    for (Construct c : kAllConstructs) {
      const std::string key(to_string(c));
      if (!doc.contains(key))
        throw std::invalid_argument("exemplars: missing construct '" + key + "'");
      const Json& levels = doc.at(key);
      for (std::size_t l = 0; l < 3; ++l) {
        const std::string lk(kAlignmentKeys[l]);
        if (!levels.contains(lk) || !levels.at(lk).is_array() || levels.at(lk).empty())
          throw std::invalid_argument("exemplars: construct '" + key + "' level " + lk +
                                      " is missing or empty");
        for (const auto& s : levels.at(lk)) ex.sets_[index_of(c)][l].push_back(s.get<std::string>());
      }
    }
    return ex;
  }

  static ConstructExemplars load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open exemplar file " + path.string());
    Json doc;
    try {
      doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw std::runtime_error("malformed exemplar file " + path.string() + ": " + e.what());
    }
    return from_json(doc);
  }

  const Levels& levels(Construct c) const noexcept { return sets_[index_of(c)]; }

  Json to_json() const {
    Json doc = Json::object();
    for (Construct c : kAllConstructs)
      for (std::size_t l = 0; l < 3; ++l)
        doc[std::string(to_string(c))][std::string(kAlignmentKeys[l])] = sets_[index_of(c)][l];
    return doc;
  }

 private:
  std::array<Levels, kConstructCount> sets_;
};

/// Exemplars with embeddings precomputed by a given gateway.
class ExemplarIndex {
 public:
  ExemplarIndex(const ConstructExemplars& ex, ModelGateway& embedder) : exemplars_(ex) {
    for (Construct c : kAllConstructs)
      for (std::size_t l = 0; l < 3; ++l)
        for (const auto& s : ex.levels(c)[l]) vecs_[index_of(c)][l].push_back(embedder.embed(s));
  }

  const ConstructExemplars& exemplars() const noexcept { return exemplars_; }
  const std::vector<Embedding>& vectors(Construct c, std::size_t level) const {
    return vecs_[index_of(c)][level];
  }

 private:
  ConstructExemplars exemplars_;
  std::array<std::array<std::vector<Embedding>, 3>, kConstructCount> vecs_;
};

namespace detail {

inline double snap_level(double v) {
  double best = kAlignmentLevels[0];
  for (double l : kAlignmentLevels)
    if (std::abs(v - l) < std::abs(v - best)) best = l;
  return best;
}

inline std::optional<double> first_number(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) continue;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v);
    if (ec == std::errc()) return v;
  }
  return std::nullopt;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n.");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n.");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string alignment_prompt(std::string_view response, Construct c,
                                    const ConstructExemplars& ex) {
  std::string p = "Rate how the response below expresses the construct \"" +
                  std::string(display_name(c)) + "\".\nExamples per score:\n";
  for (std::size_t l = 0; l < 3; ++l)
    for (const auto& s : ex.levels(c)[l])
      p += std::string(kAlignmentKeys[l]) + ": \"" + s + "\"\n";
  p += "\nResponse:\n\"" + std::string(response) +
       "\"\n\nReply with exactly one of 0.0, 0.5 or 1.0 and nothing else.";
  return p;
}

}  // namespace detail

inline std::optional<double> exact_level(std::string_view response, Construct construct,
                                         const ConstructExemplars& ex) {
  const std::string whole = detail::trim(response);
  for (std::size_t l = 0; l < 3; ++l)
    for (const auto& s : ex.levels(construct)[l])
      if (detail::trim(s) == whole) return kAlignmentLevels[l];
  return std::nullopt;
}

/// Embeddings of a response and each of its sentences.
inline std::vector<Embedding> alignment_candidates(std::string_view response, ModelGateway& gateway) {
  std::vector<Embedding> out{gateway.embed(detail::trim(response))};
  for (const auto& s : text::sentences(response))
    if (!detail::trim(s).empty()) out.push_back(gateway.embed(s));
  return out;
}

inline double nearest_level(const ExemplarIndex& index, Construct construct,
                            const std::vector<Embedding>& candidates) {
  std::array<double, 3> best{-2.0, -2.0, -2.0};
  for (std::size_t l = 0; l < 3; ++l)
    for (const auto& ev : index.vectors(construct, l))
      for (const auto& cv : candidates) best[l] = std::max(best[l], cosine(ev, cv));
  std::size_t pick = 1;
  for (std::size_t l : {std::size_t{0}, std::size_t{2}})
    if (best[l] > best[pick]) pick = l;
  return kAlignmentLevels[pick];
}

/// Alignment level in {0.0, 0.5, 1.0}. Stub mode picks the level whose
/// exemplars are nearest in embedding space to the response or any of its
/// sentences; ties go to the neutral level.
inline double score_alignment(std::string_view response, Construct construct,
                              const ExemplarIndex& index, ModelGateway& gateway) {
  if (detail::trim(response).empty()) throw std::invalid_argument("score_alignment: empty response");
  if (auto exact = exact_level(response, construct, index.exemplars())) return *exact;

  if (!gateway.is_stub()) {
    ChatRequest req;
    req.system = "You are an evaluator of social cognitive constructs in text.";
    req.user = detail::alignment_prompt(response, construct, index.exemplars());
    const auto reply = gateway.chat(req).text;
    auto v = detail::first_number(reply);
    if (!v)
      throw GatewayError(GatewayError::Kind::Protocol, gateway.config().base_url,
                         "alignment reply has no score: " + reply);
    return detail::snap_level(*v);
  }

  return nearest_level(index, construct, alignment_candidates(response, gateway));
}

inline double score_alignment(std::string_view response, Construct construct,
                              const ConstructExemplars& exemplars, ModelGateway& gateway) {
  return score_alignment(response, construct, ExemplarIndex(exemplars, gateway), gateway);
}

inline constexpr double kDefaultUpdateRate = 0.3;

inline SctConstructVector update_construct_vector(const SctConstructVector& prev,
                                                  const std::array<double, kConstructCount>& scores,
                                                  double rate = kDefaultUpdateRate) {
  if (!(rate > 0.0 && rate <= 1.0))
    throw std::invalid_argument("update rate must lie in (0, 1], got " + text::format_double(rate));
  SctConstructVector next;
  for (Construct c : kAllConstructs) {
    const double p = prev[c];
    const double s = scores[index_of(c)];
    next[c] = std::clamp(p + rate * (s - p), kConstructMin, kConstructMax);
  }
  return next;
}

struct ResponseAnalysis {
  std::array<double, kConstructCount> alignment{};  // kAllConstructs order
  double certainty = 0.0;
  double prior_belief_reference = 0.0;
  double new_info_incorporation = 0.0;
  double justification = 0.0;
  double semantic_alignment = 0.0;
  double emotional_alignment = 0.0;
};

/// y: five times the mean of the four content-analysis dimensions, in [0, 5].
inline double response_pattern_score(const ResponseAnalysis& a) {
  for (double v : {a.certainty, a.prior_belief_reference, a.new_info_incorporation, a.justification})
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("response analysis sub-score outside [0, 1]: " +
                                  text::format_double(v));
  return 5.0 * (a.certainty + a.prior_belief_reference + a.new_info_incorporation +
                a.justification) / 4.0;
}

struct AnalysisContext {
  std::string scenario_text;
  std::string background;
  double intensity = 0.0;  // contradiction intensity of the scenario
  std::uint64_t seed = 0;
};

namespace lexicon {

inline constexpr std::array<std::string_view, 8> kCertainty = {
    "certain", "sure", "absolutely", "definitely", "clearly", "convinced", "no doubt", "i know"};
inline constexpr std::array<std::string_view, 9> kHedge = {
    "perhaps", "maybe", "might", "unsure", "possibly", "not sure", "not certain", "could be",
    "i wonder"};
inline constexpr std::array<std::string_view, 8> kPrior = {
    "i have always", "in my years", "my experience", "i have seen", "i believe", "my views",
    "as i have said", "i have long"};
inline constexpr std::array<std::string_view, 7> kJustification = {
    "because", "that is why", "the reason", "therefore", "since", "the evidence", "which means"};
inline constexpr std::array<std::string_view, 10> kPositive = {
    "fair", "hope", "glad", "appreciate", "good", "benefit", "inspired", "confident", "welcome",
    "motivates"};
inline constexpr std::array<std::string_view, 10> kNegative = {
    "worried", "afraid", "angry", "doubt", "unfair", "threat", "fear", "frustrat", "concern",
    "not convinced"};

template <std::size_t N>
int count(std::string_view lower, const std::array<std::string_view, N>& words) {
  int n = 0;
  for (auto w : words) n += text::count_phrase(lower, w);
  return n;
}

}  // namespace lexicon

/// Raw textual features, before stub noise.
struct ResponseFeatures {
  double certainty = 0.5;
  double prior = 0.0;
  double new_info = 0.0;
  double justification = 0.0;
  double emotion = 0.5;
};

inline ResponseFeatures extract_features(std::string_view response, std::string_view scenario) {
  const std::string lower = text::to_lower(response);
  ResponseFeatures f;
  const int negated = text::count_phrase(lower, "not sure") + text::count_phrase(lower, "not certain");
  const int cert = lexicon::count(lower, lexicon::kCertainty) - 2 * negated;
  const int hedge = lexicon::count(lower, lexicon::kHedge);
  f.certainty = std::clamp(0.5 + 0.2 * (cert - hedge), 0.0, 1.0);
  f.prior = std::min(1.0, lexicon::count(lower, lexicon::kPrior) / 3.0);
  f.justification = std::min(1.0, lexicon::count(lower, lexicon::kJustification) / 3.0);

  auto scen = text::content_tokens(scenario);
  std::sort(scen.begin(), scen.end());
  scen.erase(std::unique(scen.begin(), scen.end()), scen.end());
  if (!scen.empty()) {
    auto resp = text::content_tokens(response);
    std::sort(resp.begin(), resp.end());
    std::size_t hit = 0;
    for (const auto& t : scen)
      if (std::binary_search(resp.begin(), resp.end(), t)) ++hit;
    f.new_info = static_cast<double>(hit) / static_cast<double>(scen.size());
  }

  const int pos = lexicon::count(lower, lexicon::kPositive);
  const int neg = lexicon::count(lower, lexicon::kNegative);
  if (pos + neg > 0) f.emotion = 0.5 + 0.5 * (pos - neg) / static_cast<double>(pos + neg);
  return f;
}

// Stub sub-score: 0.8 * textual feature + 0.2 * (0.35 C + 0.65 u), u a
// hashed uniform of (seed, response, scenario, dimension).
inline constexpr double kStubFeatureWeight = 0.8;
inline constexpr double kStubIntensityShare = 0.35;

namespace detail {

inline double stub_subscore(double feature, double intensity, std::uint64_t key) {
  const double u = hashed_uniform(key);
  const double noise = kStubIntensityShare * intensity + (1.0 - kStubIntensityShare) * u;
  return std::clamp(kStubFeatureWeight * feature + (1.0 - kStubFeatureWeight) * noise, 0.0, 1.0);
}

inline std::optional<Json> json_object_in(std::string_view s) {
  const auto b = s.find('{');
  const auto e = s.rfind('}');
  if (b == std::string_view::npos || e == std::string_view::npos || e < b) return std::nullopt;
  try {
    return Json::parse(s.substr(b, e - b + 1));
  } catch (const Json::parse_error&) {
    return std::nullopt;
  }
}

inline double unit_field(const Json& j, const char* key, const std::string& url) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw GatewayError(GatewayError::Kind::Protocol, url,
                       std::string("analysis reply lacks numeric field '") + key + "'");
  return std::clamp(j.at(key).get<double>(), 0.0, 1.0);
}

}  // namespace detail

/// Full analysis of one response. `gateway` is the evaluator backend, kept
/// separate from the one voicing the persona.
inline ResponseAnalysis analyze_response(std::string_view response, const AnalysisContext& ctx,
                                         const ExemplarIndex& exemplars, ModelGateway& gateway) {
  if (detail::trim(response).empty()) throw std::invalid_argument("analyze_response: empty response");
  if (!(ctx.intensity >= 0.0 && ctx.intensity <= 1.0))
    throw std::invalid_argument("analyze_response: intensity outside [0, 1]");
  ResponseAnalysis a;
  if (gateway.is_stub()) {
    const auto candidates = alignment_candidates(response, gateway);
    for (Construct c : kAllConstructs)
      a.alignment[index_of(c)] = exact_level(response, c, exemplars.exemplars())
                                     .value_or(nearest_level(exemplars, c, candidates));
  } else {
    for (Construct c : kAllConstructs)
      a.alignment[index_of(c)] = score_alignment(response, c, exemplars, gateway);
  }

  const Embedding rv = gateway.embed(response);
  if (!ctx.background.empty())
    a.semantic_alignment = std::clamp(cosine(rv, gateway.embed(ctx.background)), 0.0, 1.0);

  if (gateway.is_stub()) {
    const ResponseFeatures f = extract_features(response, ctx.scenario_text);
    std::uint64_t key = hash_combine(hash_combine(ctx.seed, response), ctx.scenario_text);
    a.certainty = detail::stub_subscore(f.certainty, ctx.intensity, hash_combine(key, 1));
    a.prior_belief_reference = detail::stub_subscore(f.prior, ctx.intensity, hash_combine(key, 2));
    a.new_info_incorporation = detail::stub_subscore(f.new_info, ctx.intensity, hash_combine(key, 3));
    a.justification = detail::stub_subscore(f.justification, ctx.intensity, hash_combine(key, 4));
    a.emotional_alignment = f.emotion;
    return a;
  }

  ChatRequest req;
  req.system = "You analyze conversational responses. Reply with a single JSON object only.";
  req.user =
      "Scenario presented to the speaker:\n" + ctx.scenario_text + "\n\nSpeaker's response:\n" +
      std::string(response) +
      "\n\nScore each dimension from 0 to 1 and reply as JSON with the keys "
      "\"certainty\" (strength of certainty markers), \"prior_belief_reference\" (appeals to "
      "previously held beliefs), \"new_info_incorporation\" (use of the scenario's new "
      "information), \"justification\" (explicit reasoning offered) and \"emotional_alignment\" "
      "(0 negative affect, 1 positive affect).";
  const auto reply = gateway.chat(req).text;
  const auto j = detail::json_object_in(reply);
  const std::string url = gateway.config().base_url;
  if (!j) throw GatewayError(GatewayError::Kind::Protocol, url, "analysis reply is not JSON: " + reply);
  a.certainty = detail::unit_field(*j, "certainty", url);
  a.prior_belief_reference = detail::unit_field(*j, "prior_belief_reference", url);
  a.new_info_incorporation = detail::unit_field(*j, "new_info_incorporation", url);
  a.justification = detail::unit_field(*j, "justification", url);
  a.emotional_alignment = detail::unit_field(*j, "emotional_alignment", url);
  return a;
}

// ---------------------------------------------------------------------------
// Memory-facing scores

enum class ContentKind { ScenarioStatement, OwnResponse, Other };

/// type_score fed to the memory importance score.
constexpr double type_score(ContentKind k) noexcept {
  switch (k) {
    case ContentKind::ScenarioStatement: return 1.0;
    case ContentKind::OwnResponse: return 0.8;
    case ContentKind::Other: return 0.5;
  }
  return 0.5;
}

struct MemoryRatings {
  int agreement = 4;
  int impression = 4;
  int relevance = 4;
  memory::LongTermRatings long_term;
  memory::SharedRatings shared;
};

struct RatingRequest {
  std::string content;
  ContentKind kind = ContentKind::Other;
  std::string owner_agent;
  double intensity = 0.0;
  double reliability = 0.0;  // hidden; stub only
  std::uint64_t seed = 0;
};

namespace detail {
inline int seven_point(double v) {
  return std::clamp(1 + static_cast<int>(std::floor(7.0 * std::clamp(v, 0.0, 0.999999))), 1, 7);
}
}  // namespace detail

/// Seeded stub rating table. Reliable, low-contradiction statements rate
/// higher on every scale.
inline MemoryRatings stub_ratings(const RatingRequest& r) {
  const std::uint64_t key = hash_combine(hash_combine(r.seed, r.owner_agent), r.content);
  const double lean = 0.5 * r.reliability + 0.5 * (1.0 - r.intensity);
  auto draw = [&](std::uint64_t k) {
    return detail::seven_point(0.55 * hashed_uniform(hash_combine(key, k)) + 0.45 * lean);
  };
  MemoryRatings m;
  m.agreement = draw(1);
  m.impression = draw(2);
  m.relevance = draw(3);
  m.long_term = {draw(4), draw(5)};
  m.shared = {draw(6), draw(7), draw(8)};
  return m;
}

/// Ratings for a memory write; the live path asks the evaluator backend.
inline MemoryRatings rate_memory(const RatingRequest& r, ModelGateway& gateway) {
  if (gateway.is_stub()) return stub_ratings(r);
  ChatRequest req;
  req.system = "You rate statements for an agent's memory. Reply with a single JSON object only.";
  req.user = "Statement:\n" + r.content +
             "\n\nRate it on 1-7 integer scales and reply as JSON with the keys \"agreement\", "
             "\"impression\", \"relevance\", \"importance\", \"persistence\", \"consensus\", "
             "\"impact\" and \"collaboration\".";
  const auto reply = gateway.chat(req).text;
  const std::string url = gateway.config().base_url;
  const auto j = detail::json_object_in(reply);
  if (!j) throw GatewayError(GatewayError::Kind::Protocol, url, "rating reply is not JSON: " + reply);
  auto get = [&](const char* key) {
    if (!j->contains(key) || !j->at(key).is_number())
      throw GatewayError(GatewayError::Kind::Protocol, url,
                         std::string("rating reply lacks field '") + key + "'");
    return std::clamp(static_cast<int>(std::lround(j->at(key).get<double>())), 1, 7);
  };
  MemoryRatings m;
  m.agreement = get("agreement");
  m.impression = get("impression");
  m.relevance = get("relevance");
  m.long_term = {get("importance"), get("persistence")};
  m.shared = {get("consensus"), get("impact"), get("collaboration")};
  return m;
}

}  // namespace sctsim
