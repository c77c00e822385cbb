#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sctsim/gateway.hpp"
#include "sctsim/persona.hpp"
#include "sctsim/text.hpp"

namespace sctsim {

using Embedder = std::function<Embedding(std::string_view)>;

inline Embedder embedder_of(ModelGateway& gw) {
  return [&gw](std::string_view s) { return gw.embed(s); };
}

class GraphError : public std::runtime_error {
 public:
  enum class Kind { DuplicateAgent, UnknownAgent, Embedder, Backend };

  GraphError(Kind kind, std::string subject, const std::string& message)
      : std::runtime_error(message), kind_(kind), subject_(std::move(subject)) {}

  Kind kind() const noexcept { return kind_; }
  /// agent_id or question_id the error concerns.
  const std::string& subject() const noexcept { return subject_; }

 private:
  Kind kind_;
  std::string subject_;
};

struct ImportSummary {
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  bool operator==(const ImportSummary&) const = default;
};

/// Persistence contract for persona graphs: Agent -> Category -> Dimension -> Question.
class GraphStore {
 public:
  virtual ~GraphStore() = default;

  /// Stores the agent's hierarchy. Factors must already carry embeddings.
  /// With `replace`, an existing agent is swapped out atomically.
  virtual ImportSummary put_agent(const AgentProfile& agent,
                                  const std::vector<PersonalFactor>& factors, bool replace) = 0;
  virtual bool has_agent(std::string_view agent_id) const = 0;
  virtual std::vector<std::string> agent_ids() const = 0;
  /// All question payloads of the agent, ordered by question_id.
  virtual std::vector<PersonalFactor> factors(std::string_view agent_id) const = 0;
  virtual ImportSummary summary(std::string_view agent_id) const = 0;
  /// {"nodes": [{id, type, label}], "edges": [{from, to, type}]}
  virtual Json export_adjacency() const = 0;
};

inline ImportSummary hierarchy_summary(const std::vector<PersonalFactor>& factors) {
  std::set<Category> cats;
  std::set<std::pair<Category, std::string>> dims;
  for (const auto& f : factors) {
    cats.insert(f.category);
    dims.insert({f.category, f.dimension});
  }
  const std::size_t nodes = 1 + cats.size() + dims.size() + factors.size();
  return {nodes, nodes - 1};
}

/// In-process store. Readers share; writers are exclusive.
class InMemoryGraphStore final : public GraphStore {
 public:
  ImportSummary put_agent(const AgentProfile& agent, const std::vector<PersonalFactor>& factors,
                          bool replace) override {
    for (const auto& f : factors)
      if (!f.embedding)
        throw GraphError(GraphError::Kind::Embedder, f.question_id,
                         "factor " + f.question_id + " has no embedding");
    AgentNode node{agent, {}};
    for (const auto& f : factors) node.tree[f.category][f.dimension].push_back(f);
    for (auto& [cat, dims] : node.tree)
      for (auto& [dim, qs] : dims)
        std::sort(qs.begin(), qs.end(),
                  [](const auto& a, const auto& b) { return a.question_id < b.question_id; });

    std::unique_lock lock(mu_);
    if (agents_.contains(agent.agent_id) && !replace)
      throw GraphError(GraphError::Kind::DuplicateAgent, agent.agent_id,
                       "agent '" + agent.agent_id + "' already imported (pass replace)");
    agents_[agent.agent_id] = std::move(node);
    return summary_locked(agent.agent_id);
  }

  bool has_agent(std::string_view agent_id) const override {
    std::shared_lock lock(mu_);
    return agents_.find(std::string(agent_id)) != agents_.end();
  }

  std::vector<std::string> agent_ids() const override {
    std::shared_lock lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : agents_) ids.push_back(id);
    return ids;
  }

  std::vector<PersonalFactor> factors(std::string_view agent_id) const override {
    std::shared_lock lock(mu_);
    const auto& node = find_locked(agent_id);
    std::vector<PersonalFactor> out;
    for (const auto& [cat, dims] : node.tree)
      for (const auto& [dim, qs] : dims) out.insert(out.end(), qs.begin(), qs.end());
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
    return out;
  }

  ImportSummary summary(std::string_view agent_id) const override {
    std::shared_lock lock(mu_);
    return summary_locked(agent_id);
  }

  Json export_adjacency() const override {
    std::shared_lock lock(mu_);
    Json nodes = Json::array(), edges = Json::array();
    for (const auto& [id, node] : agents_) {
      const std::string a = "agent:" + id;
      nodes.push_back({{"id", a}, {"type", "Agent"}, {"label", node.profile.name}});
      for (const auto& [cat, dims] : node.tree) {
        const std::string c = "category:" + id + "/" + std::string(to_string(cat));
        nodes.push_back({{"id", c}, {"type", "Category"}, {"label", to_string(cat)}});
        edges.push_back({{"from", a}, {"to", c}, {"type", "HAS_CATEGORY"}});
        for (const auto& [dim, qs] : dims) {
          const std::string d = "dimension:" + id + "/" + std::string(to_string(cat)) + "/" + dim;
          nodes.push_back({{"id", d}, {"type", "Dimension"}, {"label", dim}});
          edges.push_back({{"from", c}, {"to", d}, {"type", "HAS_DIMENSION"}});
          for (const auto& q : qs) {
            const std::string qid = "question:" + id + "/" + q.question_id;
            nodes.push_back({{"id", qid},
                             {"type", "Question"},
                             {"label", q.question},
                             {"answer", q.answer}});
            edges.push_back({{"from", d}, {"to", qid}, {"type", "HAS_QUESTION"}});
          }
        }
      }
    }
    return Json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
  }

 private:
  struct AgentNode {
    AgentProfile profile;
    std::map<Category, std::map<std::string, std::vector<PersonalFactor>>> tree;
  };

  const AgentNode& find_locked(std::string_view agent_id) const {
    auto it = agents_.find(std::string(agent_id));
    if (it == agents_.end())
      throw GraphError(GraphError::Kind::UnknownAgent, std::string(agent_id),
                       "unknown agent '" + std::string(agent_id) + "'");
    return it->second;
  }

  ImportSummary summary_locked(std::string_view agent_id) const {
    const auto& node = find_locked(agent_id);
    std::size_t nodes = 1, edges = 0;
    for (const auto& [cat, dims] : node.tree) {
      ++nodes, ++edges;
      for (const auto& [dim, qs] : dims) {
        ++nodes, ++edges;
        nodes += qs.size();
        edges += qs.size();
      }
    }
    return {nodes, edges};
  }

  mutable std::shared_mutex mu_;
  std::map<std::string, AgentNode> agents_;
};

/// Embeds every factor's question text and stores the hierarchy.
inline ImportSummary import_factors(GraphStore& store, const AgentProfile& agent,
                                    const std::vector<PersonalFactor>& factors,
                                    const Embedder& embedder, bool replace = false) {
  if (!replace && store.has_agent(agent.agent_id))
    throw GraphError(GraphError::Kind::DuplicateAgent, agent.agent_id,
                     "agent '" + agent.agent_id + "' already imported (pass replace)");
  std::vector<PersonalFactor> embedded = factors;
  for (auto& f : embedded) {
    try {
      f.embedding = embedder(f.question);
    } catch (const std::exception& e) {
      throw GraphError(GraphError::Kind::Embedder, f.question_id,
                       "embedding failed for question " + f.question_id + ": " + e.what());
    }
  }
  return store.put_agent(agent, embedded, replace);
}

// ---------------------------------------------------------------------------
// Category extraction

/// Keyword table used by the offline classifier. A message maps to every
/// category with at least one keyword among its tokens (exact match, or
/// match after dropping a trailing "s").
inline const std::array<std::pair<Category, std::vector<std::string_view>>, 4>& category_keywords() {
  static const std::array<std::pair<Category, std::vector<std::string_view>>, 4> k = {{
      {Category::Cognitive,
       {"think", "thought", "believe", "belief", "know", "knowledge", "understand", "reason",
        "opinion", "view", "idea", "evidence", "fact", "data", "study", "research", "report",
        "learn", "value", "identity", "policy", "economy", "economic", "energy", "transition",
        "plant", "closing", "closure", "science", "scientific", "cost", "carbon", "claim"}},
      {Category::Motivational,
       {"goal", "want", "drive", "motivate", "motivation", "plan", "future", "achieve", "job",
        "career", "work", "ambition", "improve", "succeed", "success", "invest", "investment",
        "inspire", "habit", "procrastination", "opportunity", "growth", "profit"}},
      {Category::Biological,
       {"health", "healthy", "body", "physical", "age", "sick", "illness", "air", "lung",
        "breathe", "breathing", "pollution", "sleep", "genetic", "heritage", "diet", "exercise",
        "disease", "asthma", "water", "preventive", "fitness"}},
      {Category::Affective,
       {"feel", "feeling", "emotion", "emotional", "afraid", "fear", "angry", "anger", "happy",
        "sad", "worry", "worried", "anxious", "anxiety", "love", "hate", "hope", "upset",
        "frustrated", "proud", "trigger", "stress"}},
  }};
  return k;
}

/// Offline classifier: keyword-table lookup with an all-categories fallback.
inline std::set<Category> keyword_categories(std::string_view message) {
  std::set<Category> out;
  for (const auto& tok : text::tokenize(message)) {
    std::string stem = tok;
    if (stem.size() > 3 && stem.back() == 's') stem.pop_back();
    for (const auto& [cat, words] : category_keywords())
      for (auto w : words)
        if (tok == w || stem == w) out.insert(cat);
  }
  if (out.empty()) out.insert(kAllCategories.begin(), kAllCategories.end());
  return out;
}

inline std::string category_prompt(std::string_view message) {
  return "Classify the message below into one or more of these personal-factor categories: "
         "Cognitive, Motivational, Biological, Affective. Reply with the matching category "
         "names separated by commas and nothing else.\n\nMessage: " +
         std::string(message);
}

/// Categories named in a classifier reply; all four when none are recognized.
inline std::set<Category> parse_category_reply(std::string_view reply) {
  std::set<Category> out;
  const std::string lower = text::to_lower(reply);
  for (Category c : kAllCategories)
    if (lower.find(text::to_lower(to_string(c))) != std::string::npos) out.insert(c);
  if (out.empty()) out.insert(kAllCategories.begin(), kAllCategories.end());
  return out;
}

inline std::set<Category> extract_categories(std::string_view message, ModelGateway& gateway) {
  if (message.empty()) throw std::invalid_argument("extract_categories: empty message");
  if (gateway.is_stub()) return keyword_categories(message);
  ChatRequest req;
  req.system = "You are a precise text classifier.";
  req.user = category_prompt(message);
  return parse_category_reply(gateway.chat(req).text);
}

// ---------------------------------------------------------------------------
// Retrieval

inline constexpr double kDefaultSimilarityThreshold = 0.6;

struct RetrievalHit {
  PersonalFactor factor;
  double similarity = 0.0;
};

/// Ranked factors of one agent whose question embedding is at least
/// `threshold`-similar to the message. Ties go to the smaller question_id.
/// When `categories` is empty the message is classified first.
inline std::vector<RetrievalHit> retrieve_relevant_factors(
    const GraphStore& store, ModelGateway& gateway, std::string_view agent_id,
    std::string_view message, std::size_t k, double threshold = kDefaultSimilarityThreshold,
    std::set<Category> categories = {}) {
  if (k == 0) throw std::invalid_argument("retrieve_relevant_factors: k must be positive");
  if (!store.has_agent(agent_id))
    throw GraphError(GraphError::Kind::UnknownAgent, std::string(agent_id),
                     "unknown agent '" + std::string(agent_id) + "'");
  if (categories.empty()) categories = extract_categories(message, gateway);
  const Embedding q = gateway.embed(message);

  std::vector<RetrievalHit> hits;
  for (auto& f : store.factors(agent_id)) {
    if (!categories.contains(f.category)) continue;
    const double sim = cosine(q, *f.embedding);
    if (sim >= threshold) hits.push_back({std::move(f), sim});
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.factor.question_id < b.factor.question_id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

struct Background {
  std::string text;
  bool truncated = false;
};

inline std::string format_background_record(const PersonalFactor& f) {
  return "Q: " + f.question + "\nA: " + f.answer + "\n";
}

inline constexpr std::size_t kDefaultBackgroundBudget = 4000;

/// Q/A pairs in rank order, cut at the first record that would exceed
/// `budget` characters.
inline Background compile_background(const std::vector<RetrievalHit>& hits, std::size_t budget) {
  if (budget == 0) throw std::invalid_argument("compile_background: budget must be positive");
  Background out;
  for (const auto& h : hits) {
    const std::string rec = format_background_record(h.factor);
    if (out.text.size() + rec.size() > budget) {
      out.truncated = true;
      break;
    }
    out.text += rec;
  }
  return out;
}

}  // namespace sctsim
