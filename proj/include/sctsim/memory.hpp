#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sctsim/persona.hpp"
#include "sctsim/text.hpp"

namespace sctsim::memory {

enum class MessageType { Spoken, Heard, Default };
enum class Recency { Current, Recent, Older, Oldest };
enum class Relationship { Own, Other };
enum class Tier { ShortTerm, LongTerm, Shared };

constexpr std::string_view to_string(MessageType m) noexcept {
  switch (m) {
    case MessageType::Spoken: return "spoken";
    case MessageType::Heard: return "heard";
    case MessageType::Default: return "default";
  }
  return "?";
}

constexpr std::string_view to_string(Tier t) noexcept {
  switch (t) {
    case Tier::ShortTerm: return "short_term";
    case Tier::LongTerm: return "long_term";
    case Tier::Shared: return "shared";
  }
  return "?";
}

// Context weights
constexpr double weight(MessageType m) noexcept {
  switch (m) {
    case MessageType::Spoken: return 0.7;
    case MessageType::Heard: return 0.3;
    case MessageType::Default: return 0.5;
  }
  return 0.0;
}

constexpr double weight(Recency r) noexcept {
  switch (r) {
    case Recency::Current: return 1.0;
    case Recency::Recent: return 0.8;
    case Recency::Older: return 0.6;
    case Recency::Oldest: return 0.4;
  }
  return 0.0;
}

constexpr double weight(Relationship r) noexcept {
  return r == Relationship::Own ? 0.7 : 0.3;
}

/// current: same round; recent: 1 back; older: 2-3 back; oldest: 4 or more.
constexpr Recency recency_bucket(int current_round, int item_round) noexcept {
  const int age = current_round - item_round;
  if (age <= 0) return Recency::Current;
  if (age == 1) return Recency::Recent;
  if (age <= 3) return Recency::Older;
  return Recency::Oldest;
}

inline constexpr double kTypeWeight = 0.4;
inline constexpr double kRagWeight = 0.3;
inline constexpr double kMessageTypeWeight = 0.1;
inline constexpr double kRecencyWeight = 0.1;
inline constexpr double kRelationshipWeight = 0.1;

/// Importance score gating long-term transfer.
inline constexpr double kTransferThreshold = 0.7;

namespace detail {
inline void require_unit(double x, const char* what) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1], got " +
                                text::format_double(x));
}
inline void require_rating(int r, const char* what) {
  if (r < 1 || r > 7)
    throw std::invalid_argument(std::string(what) + " rating must lie in [1, 7], got " +
                                std::to_string(r));
}
}  // namespace detail

inline double importance_score(double type_score, double rag, MessageType message_type,
                               Recency recency, Relationship relationship) {
  detail::require_unit(type_score, "type_score");
  detail::require_unit(rag, "rag");
  return kTypeWeight * type_score + kRagWeight * rag +
         kMessageTypeWeight * weight(message_type) + kRecencyWeight * weight(recency) +
         kRelationshipWeight * weight(relationship);
}

// RAG metrics. The weights are fixed; the functional forms are the simplest
// linear readings of them and each lives in exactly one function.
inline constexpr double kTraceAlpha = 0.6;
inline constexpr double kTraceBeta = 0.4;
inline constexpr double kSimilarityLambda = 0.2;
inline constexpr double kInterferenceMu = 0.3;
inline constexpr double kTraceWeight = 0.4;
inline constexpr double kSimilarityWeight = 0.4;
inline constexpr double kInterferenceWeight = 0.2;

struct RagMetrics {
  double memory_trace = 0.0;
  double similarity = 0.0;
  double interference = 0.0;
  bool operator==(const RagMetrics&) const = default;
};

inline double memory_trace(double encoding_strength, double rehearsal) {
  detail::require_unit(encoding_strength, "encoding_strength");
  detail::require_unit(rehearsal, "rehearsal");
  return kTraceAlpha * encoding_strength + kTraceBeta * rehearsal;
}

inline double rag_composite(const RagMetrics& m, double neighbor_mean_similarity) {
  detail::require_unit(m.memory_trace, "memory_trace");
  detail::require_unit(m.similarity, "similarity");
  detail::require_unit(m.interference, "interference");
  detail::require_unit(neighbor_mean_similarity, "neighbor_mean_similarity");
  const double sim_adj =
      (1.0 - kSimilarityLambda) * m.similarity + kSimilarityLambda * neighbor_mean_similarity;
  const double v = kTraceWeight * m.memory_trace + kSimilarityWeight * sim_adj -
                   kInterferenceWeight * (kInterferenceMu * m.interference);
  return std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Records

struct ShortTermRecord {
  std::string content;
  int agreement = 4;
  int impression = 4;
  int relevance = 4;
  MessageType message_type = MessageType::Default;
  int round = 1;
  std::string owner_agent;
  std::string source_agent;

  void validate() const {
    detail::require_rating(agreement, "agreement");
    detail::require_rating(impression, "impression");
    detail::require_rating(relevance, "relevance");
    if (round < 1) throw std::invalid_argument("round must be >= 1");
  }
};

struct LongTermRatings {
  int importance = 4;
  int persistence = 4;
};

struct LongTermRecord {
  ShortTermRecord base;
  int importance = 4;
  int persistence = 4;
};

struct SharedRatings {
  int consensus = 4;
  int impact = 4;
  int collaboration = 4;
};

struct SharedRecord {
  LongTermRecord base;
  int consensus = 4;
  int impact = 4;
  int collaboration = 4;
};

inline constexpr bool promote_stm_to_ltm(const ShortTermRecord& r) noexcept {
  return r.agreement >= 6 && r.impression >= 6 && r.relevance >= 5;
}

inline constexpr bool promote_ltm_to_shared(const LongTermRecord& r, int consensus) noexcept {
  return r.importance >= 6 && r.persistence >= 5 && consensus >= 6;
}

// ---------------------------------------------------------------------------
// Store

struct MemoryItem {
  std::size_t id = 0;  // insertion order within the system
  Tier tier = Tier::ShortTerm;
  ShortTermRecord record;
  std::optional<LongTermRatings> long_term;
  std::optional<SharedRatings> shared;
  Embedding embedding;
  RagMetrics rag;
  double neighbor_mean_similarity = 0.0;
  double rag_score = 0.0;
  double type_score = 0.0;
  Relationship relationship = Relationship::Other;
  double importance = 0.0;
};

struct RecallHit {
  MemoryItem item;
  double score = 0.0;
};

/// Similarity at or above which two memories count as rehearsing or
/// competing with each other.
inline constexpr double kRelatedSimilarity = 0.6;

/// Three-tier memory for a set of agents with one shared tier across them.
/// Writers serialize on an internal mutex; readers take copies.
class MemorySystem {
 public:
  void register_agent(const std::string& agent) {
    std::lock_guard lock(mu_);
    items_.try_emplace(agent);
  }

  bool has_agent(std::string_view agent) const {
    std::lock_guard lock(mu_);
    return items_.find(std::string(agent)) != items_.end();
  }

  /// Stores a short-term record, scoring it against the owner's existing
  /// memories and the current query. Returns the new item's id.
  std::size_t add_short_term(const ShortTermRecord& rec, Embedding embedding,
                             const Embedding& query, double type_score,
                             Relationship relationship) {
    rec.validate();
    detail::require_unit(type_score, "type_score");
    std::lock_guard lock(mu_);
    auto& own = agent_items_locked(rec.owner_agent);

    std::vector<double> sims;
    std::size_t related = 0, competing = 0;
    for_each_visible_locked(rec.owner_agent, [&](const MemoryItem& e) {
      const double s = std::max(0.0, cosine(embedding, e.embedding));
      sims.push_back(s);
      if (s >= kRelatedSimilarity) {
        ++related;
        if (e.record.source_agent != rec.source_agent) ++competing;
      }
    });

    MemoryItem item;
    item.id = next_id_++;
    item.record = rec;
    item.type_score = type_score;
    item.relationship = relationship;
    const double encoding =
        ((rec.agreement - 1) + (rec.impression - 1) + (rec.relevance - 1)) / 18.0;
    const double rehearsal = std::min(1.0, static_cast<double>(related) / 3.0);
    item.rag.memory_trace = memory_trace(encoding, rehearsal);
    item.rag.similarity = std::clamp(cosine(embedding, query), 0.0, 1.0);
    item.rag.interference =
        sims.empty() ? 0.0 : static_cast<double>(competing) / static_cast<double>(sims.size());
    std::sort(sims.begin(), sims.end(), std::greater<>());
    const std::size_t top = std::min<std::size_t>(3, sims.size());
    double nm = 0.0;
    for (std::size_t i = 0; i < top; ++i) nm += sims[i];
    item.neighbor_mean_similarity = top ? std::min(1.0, nm / static_cast<double>(top)) : 0.0;
    item.rag_score = rag_composite(item.rag, item.neighbor_mean_similarity);
    item.importance = importance_score(type_score, item.rag_score, rec.message_type,
                                       Recency::Current, relationship);
    item.embedding = std::move(embedding);
    own.push_back(std::move(item));
    return own.back().id;
  }

  /// Moves an item to long-term memory when its importance clears the
  /// transfer threshold and its ratings pass the promotion rule.
  bool try_promote_to_long_term(const std::string& owner, std::size_t id,
                                const LongTermRatings& ratings) {
    detail::require_rating(ratings.importance, "importance");
    detail::require_rating(ratings.persistence, "persistence");
    std::lock_guard lock(mu_);
    MemoryItem& it = find_locked(owner, id);
    if (it.tier != Tier::ShortTerm) return false;
    if (it.importance < kTransferThreshold) return false;
    if (!promote_stm_to_ltm(it.record)) return false;
    it.long_term = ratings;
    it.tier = Tier::LongTerm;
    return true;
  }

  bool try_promote_to_shared(const std::string& owner, std::size_t id,
                             const SharedRatings& ratings) {
    detail::require_rating(ratings.consensus, "consensus");
    detail::require_rating(ratings.impact, "impact");
    detail::require_rating(ratings.collaboration, "collaboration");
    std::lock_guard lock(mu_);
    MemoryItem& it = find_locked(owner, id);
    if (it.tier != Tier::LongTerm) return false;
    const LongTermRecord ltm{it.record, it.long_term->importance, it.long_term->persistence};
    if (!promote_ltm_to_shared(ltm, ratings.consensus)) return false;
    it.shared = ratings;
    it.tier = Tier::Shared;
    return true;
  }

  /// Top-k of the owner's memories plus everyone's shared tier, ranked by
  /// rag score times cosine to the query; ties keep insertion order.
  std::vector<RecallHit> recall(const std::string& owner, const Embedding& query,
                                std::size_t k) const {
    if (k == 0) throw std::invalid_argument("recall: k must be positive");
    std::lock_guard lock(mu_);
    if (items_.find(owner) == items_.end())
      throw std::out_of_range("recall: unknown agent '" + owner + "'");
    std::vector<RecallHit> hits;
    for_each_visible_locked(owner, [&](const MemoryItem& e) {
      hits.push_back({e, e.rag_score * cosine(query, e.embedding)});
    });
    std::stable_sort(hits.begin(), hits.end(), [](const RecallHit& a, const RecallHit& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.item.id < b.item.id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
  }

  std::vector<MemoryItem> items(const std::string& owner) const {
    std::lock_guard lock(mu_);
    auto it = items_.find(owner);
    if (it == items_.end()) throw std::out_of_range("unknown agent '" + owner + "'");
    return it->second;
  }

  std::vector<MemoryItem> shared_items() const {
    std::lock_guard lock(mu_);
    std::vector<MemoryItem> out;
    for (const auto& [_, v] : items_)
      for (const auto& e : v)
        if (e.tier == Tier::Shared) out.push_back(e);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
  }

  /// Checkpoint of one agent's memories (embeddings omitted).
  Json dump(const std::string& owner) const {
    Json arr = Json::array();
    for (const auto& e : items(owner)) {
      Json j{{"id", e.id},
             {"tier", to_string(e.tier)},
             {"content", e.record.content},
             {"message_type", to_string(e.record.message_type)},
             {"round", e.record.round},
             {"source_agent", e.record.source_agent},
             {"agreement", e.record.agreement},
             {"impression", e.record.impression},
             {"relevance", e.record.relevance},
             {"memory_trace", e.rag.memory_trace},
             {"similarity", e.rag.similarity},
             {"interference", e.rag.interference},
             {"neighbor_mean_similarity", e.neighbor_mean_similarity},
             {"rag_score", e.rag_score},
             {"type_score", e.type_score},
             {"relationship", e.relationship == Relationship::Own ? "own" : "other"},
             {"importance_score", e.importance}};
      if (e.long_term) {
        j["importance"] = e.long_term->importance;
        j["persistence"] = e.long_term->persistence;
      }
      if (e.shared) {
        j["consensus"] = e.shared->consensus;
        j["impact"] = e.shared->impact;
        j["collaboration"] = e.shared->collaboration;
      }
      arr.push_back(std::move(j));
    }
    return Json{{"agent", owner}, {"memories", std::move(arr)}};
  }

  /// Restores a dump. Embeddings are recomputed by `embed`.
  template <typename EmbedFn>
  void load(const Json& doc, EmbedFn&& embed) {
    const std::string owner = doc.at("agent").get<std::string>();
    std::vector<MemoryItem> restored;
    for (const auto& j : doc.at("memories")) {
      MemoryItem e;
      e.id = j.at("id").get<std::size_t>();
      const auto tier = j.at("tier").get<std::string>();
      e.tier = tier == "shared" ? Tier::Shared : tier == "long_term" ? Tier::LongTerm : Tier::ShortTerm;
      e.record.content = j.at("content").get<std::string>();
      const auto mt = j.at("message_type").get<std::string>();
      e.record.message_type = mt == "spoken" ? MessageType::Spoken
                              : mt == "heard" ? MessageType::Heard
                                              : MessageType::Default;
      e.record.round = j.at("round").get<int>();
      e.record.owner_agent = owner;
      e.record.source_agent = j.at("source_agent").get<std::string>();
      e.record.agreement = j.at("agreement").get<int>();
      e.record.impression = j.at("impression").get<int>();
      e.record.relevance = j.at("relevance").get<int>();
      e.record.validate();
      e.rag = {j.at("memory_trace").get<double>(), j.at("similarity").get<double>(),
               j.at("interference").get<double>()};
      e.neighbor_mean_similarity = j.at("neighbor_mean_similarity").get<double>();
      e.rag_score = j.at("rag_score").get<double>();
      e.type_score = j.at("type_score").get<double>();
      e.relationship = j.at("relationship").get<std::string>() == "own" ? Relationship::Own
                                                                        : Relationship::Other;
      e.importance = j.at("importance_score").get<double>();
      if (j.contains("importance"))
        e.long_term = LongTermRatings{j.at("importance").get<int>(), j.at("persistence").get<int>()};
      if (j.contains("consensus"))
        e.shared = SharedRatings{j.at("consensus").get<int>(), j.at("impact").get<int>(),
                                 j.at("collaboration").get<int>()};
      e.embedding = embed(e.record.content);
      restored.push_back(std::move(e));
    }
    std::lock_guard lock(mu_);
    for (const auto& e : restored) next_id_ = std::max(next_id_, e.id + 1);
    items_[owner] = std::move(restored);
  }

 private:
  std::vector<MemoryItem>& agent_items_locked(const std::string& owner) {
    auto it = items_.find(owner);
    if (it == items_.end()) throw std::out_of_range("unknown agent '" + owner + "'");
    return it->second;
  }

  MemoryItem& find_locked(const std::string& owner, std::size_t id) {
    for (auto& e : agent_items_locked(owner))
      if (e.id == id) return e;
    throw std::out_of_range("no memory " + std::to_string(id) + " for agent '" + owner + "'");
  }

  template <typename F>
  void for_each_visible_locked(const std::string& owner, F&& f) const {
    std::vector<const MemoryItem*> visible;
    for (const auto& [agent, v] : items_)
      for (const auto& e : v)
        if (agent == owner || e.tier == Tier::Shared) visible.push_back(&e);
    std::sort(visible.begin(), visible.end(),
              [](const MemoryItem* a, const MemoryItem* b) { return a->id < b->id; });
    for (const MemoryItem* e : visible) f(*e);
  }

  mutable std::mutex mu_;
  std::map<std::string, std::vector<MemoryItem>> items_;
  std::size_t next_id_ = 0;
};

}  // namespace sctsim::memory
