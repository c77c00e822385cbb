#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sctsim/evaluator.hpp"
#include "sctsim/gateway.hpp"
#include "sctsim/hashing.hpp"
#include "sctsim/memory.hpp"
#include "sctsim/observations.hpp"
#include "sctsim/persona.hpp"
#include "sctsim/persona_graph.hpp"

namespace sctsim {

enum class SourceTier { PeerReviewed, Government, NonPeerReviewed };

constexpr std::string_view to_string(SourceTier t) noexcept {
  switch (t) {
    case SourceTier::PeerReviewed: return "peer_reviewed";
    case SourceTier::Government: return "government";
    case SourceTier::NonPeerReviewed: return "non_peer_reviewed";
  }
  return "?";
}

inline std::optional<SourceTier> parse_source_tier(std::string_view s) noexcept {
  for (auto t : {SourceTier::PeerReviewed, SourceTier::Government, SourceTier::NonPeerReviewed})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

/// Reliability range [lo, hi) of a tier.
struct TierRange {
  double lo;
  double hi;
};

constexpr TierRange tier_range(SourceTier t) noexcept {
  switch (t) {
    case SourceTier::PeerReviewed: return {0.8, 1.0};
    case SourceTier::Government: return {0.5, 0.8};
    case SourceTier::NonPeerReviewed: return {0.1, 0.5};
  }
  return {0.0, 0.0};
}

struct Statement {
  std::string text;
  double reliability = 0.0;  // hidden: never rendered into a prompt
  SourceTier source_tier = SourceTier::NonPeerReviewed;
};

struct Scenario {
  std::string scenario_id;
  std::string target_agent;
  std::vector<Statement> statements;
  double contradiction_intensity = 0.0;
  int complexity_rank = 1;

  std::string text() const {
    std::string s;
    for (const auto& st : statements) s += (s.empty() ? "" : " ") + st.text;
    return s;
  }

  double mean_reliability() const {
    double r = 0.0;
    for (const auto& st : statements) r += st.reliability;
    return statements.empty() ? 0.0 : r / static_cast<double>(statements.size());
  }
};

class ScenarioError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-agent statement templates.
class ScenarioBank {
 public:
  struct Template {
    SourceTier tier;
    std::string text;
  };

  static ScenarioBank from_json(const Json& doc) {
    ScenarioBank b;
    if (!doc.contains("agents") || !doc.at("agents").is_object())
      throw ScenarioError("scenario bank: missing 'agents' object");
    for (const auto& [agent, entry] : doc.at("agents").items()) {
      auto& v = b.templates_[agent];
      for (const auto& s : entry.at("statements")) {
        const auto tier_s = s.at("source_tier").get<std::string>();
        auto tier = parse_source_tier(tier_s);
        if (!tier) throw ScenarioError("scenario bank: unknown source tier '" + tier_s + "' for " + agent);
        v.push_back({*tier, s.at("text").get<std::string>()});
      }
      if (v.size() < kScenarioCount)
        throw ScenarioError("scenario bank: agent '" + agent + "' needs at least " +
                            std::to_string(kScenarioCount) + " statements");
    }
    return b;
  }

  static ScenarioBank load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario bank " + path.string());
    try {
      return from_json(Json::parse(in));
    } catch (const Json::exception& e) {
      throw ScenarioError("malformed scenario bank " + path.string() + ": " + e.what());
    }
  }

  bool has(std::string_view agent) const { return templates_.contains(std::string(agent)); }

  const std::vector<Template>& templates(std::string_view agent) const {
    auto it = templates_.find(std::string(agent));
    if (it == templates_.end())
      throw ScenarioError("no scenario template bank for agent '" + std::string(agent) + "'");
    return it->second;
  }

  static constexpr std::size_t kScenarioCount = 5;

 private:
  std::map<std::string, std::vector<Template>> templates_;
};

inline constexpr double kIntensityPerRank = 0.12;
inline constexpr double kIntensityJitter = 0.4;

/// Five scenarios of increasing complexity: scenario r holds r statements
/// drawn from the agent's bank, with intensity 0.12 r + U(0, 0.4).
inline std::vector<Scenario> build_scenarios(const std::string& agent_id, const ScenarioBank& bank,
                                             std::uint64_t seed) {
  const auto& pool = bank.templates(agent_id);
  SplitMix64 rng(hash_combine(hash_combine(seed, "scenarios"), agent_id));
  std::vector<Scenario> out;
  for (int r = 1; r <= static_cast<int>(ScenarioBank::kScenarioCount); ++r) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Scenario s;
    s.scenario_id = agent_id + "/s" + std::to_string(r);
    s.target_agent = agent_id;
    s.complexity_rank = r;
    for (int k = 0; k < r; ++k) {
      const auto pick = static_cast<std::size_t>(k) + rng.below(idx.size() - static_cast<std::size_t>(k));
      std::swap(idx[static_cast<std::size_t>(k)], idx[pick]);
      const auto& tpl = pool[idx[static_cast<std::size_t>(k)]];
      const auto range = tier_range(tpl.tier);
      s.statements.push_back({tpl.text, rng.uniform(range.lo, range.hi), tpl.tier});
    }
    s.contradiction_intensity = std::clamp(kIntensityPerRank * r + rng.uniform(0.0, kIntensityJitter), 0.0, 1.0);
    out.push_back(std::move(s));
  }
  return out;
}

/// Scenario shown at each round 1..n_rounds. Scenario s appears at round
/// min(s, n_rounds); rounds past the fifth repeat the last scenario, and
/// with fewer than five rounds the final round merges the remainder.
inline std::vector<Scenario> round_schedule(const std::vector<Scenario>& scenarios, int n_rounds) {
  if (n_rounds < 1) throw std::invalid_argument("round_schedule: n_rounds must be positive");
  if (scenarios.empty()) throw std::invalid_argument("round_schedule: no scenarios");
  const int S = static_cast<int>(scenarios.size());
  std::vector<Scenario> out;
  for (int t = 1; t <= n_rounds; ++t) {
    if (t < n_rounds || n_rounds >= S) {
      out.push_back(scenarios[static_cast<std::size_t>(std::min(t, S) - 1)]);
      continue;
    }
    Scenario m = scenarios[static_cast<std::size_t>(t - 1)];
    double c = m.contradiction_intensity;
    for (int s = t + 1; s <= S; ++s) {
      const auto& next = scenarios[static_cast<std::size_t>(s - 1)];
      m.scenario_id += "+" + next.scenario_id;
      m.statements.insert(m.statements.end(), next.statements.begin(), next.statements.end());
      m.complexity_rank = next.complexity_rank;
      c += next.contradiction_intensity;
    }
    m.contradiction_intensity = c / static_cast<double>(S - t + 1);
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interaction loop

using Rater = std::function<MemoryRatings(const RatingRequest&)>;

struct EngineSettings {
  std::size_t retrieval_k = 5;
  double retrieval_threshold = kDefaultSimilarityThreshold;
  std::size_t recall_k = 3;
  std::size_t background_budget = kDefaultBackgroundBudget;
  double update_rate = kDefaultUpdateRate;
};

/// Similarity cut for persona retrieval. Hashed bag-of-words embeddings
/// score far lower than neural ones on paraphrases, so the stub uses a
/// lower cut.
inline constexpr double kStubRetrievalThreshold = 0.15;

struct EngineDeps {
  std::shared_ptr<ModelGateway> persona;    // voices the agent
  std::shared_ptr<ModelGateway> evaluator;  // scores responses
  const GraphStore* graph = nullptr;
  const ScenarioBank* bank = nullptr;
  const ExemplarIndex* exemplars = nullptr;
  std::map<std::string, AgentProfile> profiles;
  PromptBundle prompts;
  EngineSettings settings;
  Rater rater;  // empty: rate_memory on the evaluator gateway
};

struct AgentState {
  std::string agent_id;
  SctConstructVector constructs;
  memory::MemorySystem memory;
  std::uint64_t unit_seed = 0;

  AgentState(std::string agent, std::uint64_t seed) : agent_id(std::move(agent)), unit_seed(seed) {
    memory.register_agent(agent_id);
  }
};

struct RoundResult {
  std::string response;
  std::string template_id;
  ObservationRow row;
  ResponseAnalysis analysis;
};

namespace detail {

inline std::string level_word(double v) {
  if (v < 0.4) return "low";
  if (v < 0.7) return "moderate";
  return "high";
}

inline std::string profile_text(const AgentProfile& p) {
  return "Name: " + p.name + "\nAge: " + std::to_string(p.age) + "\nRole: " + p.job_title +
         "\nOutlook: " + p.ideology + "\nAppearance: " + p.physical_characteristics +
         "\nPersonality: " + p.personality + "\nBackground: " + p.background +
         "\nDuties: " + p.job_duties + "\nHobbies: " + p.hobbies + "\nConcerns: " + p.concerns;
}

// Construct levels are described in words; no numeric value reaches a prompt.
inline std::string values_text(const SctConstructVector& v) {
  std::string s;
  for (Construct c : kAllConstructs)
    s += std::string(display_name(c)) + ": " + level_word(v[c]) + "\n";
  return s;
}

inline constexpr std::string_view kInterlocutor = "a moderator presenting new information";
inline constexpr std::string_view kInstructions =
    "Respond in character in a few sentences. Say how this information fits with what you "
    "already believe and whether it changes your view.";

inline MemoryRatings rate(const EngineDeps& deps, const RatingRequest& r) {
  return deps.rater ? deps.rater(r) : rate_memory(r, *deps.evaluator);
}

inline void remember(AgentState& st, const EngineDeps& deps, const std::string& content,
                     ContentKind kind, memory::MessageType mt, int round, const std::string& source,
                     const Embedding& query, const RatingRequest& rr, memory::Relationship rel) {
  const MemoryRatings m = rate(deps, rr);
  memory::ShortTermRecord rec;
  rec.content = content;
  rec.agreement = m.agreement;
  rec.impression = m.impression;
  rec.relevance = m.relevance;
  rec.message_type = mt;
  rec.round = round;
  rec.owner_agent = st.agent_id;
  rec.source_agent = source;
  const auto id = st.memory.add_short_term(rec, deps.persona->embed(content), query, type_score(kind), rel);
  if (st.memory.try_promote_to_long_term(st.agent_id, id, m.long_term))
    st.memory.try_promote_to_shared(st.agent_id, id, m.shared);
}

}  // namespace detail

/// One pass of the triadic loop for a persona agent: retrieve factors,
/// recall memories, prompt, respond, analyze, update constructs and write
/// memories. Returns exactly one observation.
inline RoundResult run_round(AgentState& st, const Scenario& scenario, int round, int iteration,
                             const EngineDeps& deps) {
  const auto& profile = deps.profiles.at(st.agent_id);
  ModelGateway& gw = *deps.persona;
  const std::string message = scenario.text();
  const double C = scenario.contradiction_intensity;
  const double R = scenario.mean_reliability();

  const auto categories = extract_categories(message, gw);
  const auto hits = retrieve_relevant_factors(*deps.graph, gw, st.agent_id, message, deps.settings.retrieval_k,
                                              deps.settings.retrieval_threshold, categories);
  std::string background = compile_background(hits, deps.settings.background_budget).text;
  const Embedding query = gw.embed(message);
  const auto recalled = st.memory.recall(st.agent_id, query, deps.settings.recall_k);
  if (!recalled.empty()) {
    background += "\nThings you remember from earlier:\n";
    for (const auto& h : recalled) background += "- " + h.item.record.content + "\n";
  }
  if (background.empty()) background = "(nothing specific comes to mind)";

  ChatRequest req;
  req.system = deps.prompts.render_persona(detail::profile_text(profile), detail::values_text(st.constructs));
  req.user = deps.prompts.render_conversation(message, background, detail::kInterlocutor, detail::kInstructions);
  req.hints.unit_seed = hash_combine(st.unit_seed, static_cast<std::uint64_t>(round));
  req.hints.intensity = C;
  req.hints.reliability = R;
  req.hints.persona = StubPersona{profile.agent_id, profile.name, profile.job_title, profile.ideology};
  req.hints.scenario_text = message;
  const ChatResponse resp = gw.chat(req);

  RoundResult out;
  out.response = resp.text;
  out.template_id = resp.template_id;
  AnalysisContext ctx{message, background, C, req.hints.unit_seed};
  out.analysis = analyze_response(resp.text, ctx, *deps.exemplars, *deps.evaluator);
  st.constructs = update_construct_vector(st.constructs, out.analysis.alignment, deps.settings.update_rate);

  const auto rel = scenario.target_agent == st.agent_id ? memory::Relationship::Own
                                                         : memory::Relationship::Other;
  for (const auto& s : scenario.statements) {
    RatingRequest rr{s.text, ContentKind::ScenarioStatement, st.agent_id, C, s.reliability, req.hints.unit_seed};
    // A heard statement is scored against itself: it is the current context.
    detail::remember(st, deps, s.text, ContentKind::ScenarioStatement, memory::MessageType::Heard, round,
                     "scenario", gw.embed(s.text), rr, rel);
  }
  RatingRequest own{resp.text, ContentKind::OwnResponse, st.agent_id, C, R, req.hints.unit_seed};
  detail::remember(st, deps, resp.text, ContentKind::OwnResponse, memory::MessageType::Spoken, round,
                   st.agent_id, query, own, memory::Relationship::Own);

  ObservationRow& row = out.row;
  row.agent = st.agent_id;
  row.iteration = iteration;
  row.round = round;
  row.C = C;
  row.reliability = R;
  for (std::size_t k = 0; k < kConstructCount; ++k) row.x[k] = st.constructs[kDesignOrder[k]];
  row.y = response_pattern_score(out.analysis);
  return out;
}

/// Baseline round: no persona, no retrieval, no memory; constructs stay at
/// the neutral midpoint.
inline RoundResult run_vanilla_round(const Scenario& scenario, int round, int iteration,
                                     std::uint64_t unit_seed, const EngineDeps& deps) {
  const std::string message = scenario.text();
  const double C = scenario.contradiction_intensity;
  ChatRequest req;
  req.system = "You are a helpful assistant.";
  req.user = deps.prompts.render_conversation(message, "(none)", detail::kInterlocutor, detail::kInstructions);
  req.hints.unit_seed = hash_combine(unit_seed, static_cast<std::uint64_t>(round));
  req.hints.intensity = C;
  req.hints.reliability = scenario.mean_reliability();
  req.hints.scenario_text = message;
  const ChatResponse resp = deps.persona->chat(req);

  RoundResult out;
  out.response = resp.text;
  out.template_id = resp.template_id;
  AnalysisContext ctx{message, "", C, req.hints.unit_seed};
  out.analysis = analyze_response(resp.text, ctx, *deps.exemplars, *deps.evaluator);
  out.row.agent = std::string(kVanillaAgent);
  out.row.iteration = iteration;
  out.row.round = round;
  out.row.C = C;
  out.row.reliability = scenario.mean_reliability();
  out.row.x.fill(kConstructDefault);
  out.row.y = response_pattern_score(out.analysis);
  return out;
}

// ---------------------------------------------------------------------------
// Experiment

struct ExperimentConfig {
  std::vector<std::string> agents;
  bool include_vanilla = false;
  int n_iterations = 100;
  int n_rounds = 6;
  std::uint64_t seed = 42;
  GatewayMode mode = GatewayMode::Stub;
  int jobs = 1;

  void validate() const {
    if (n_iterations < 1) throw std::invalid_argument("n_iterations must be >= 1");
    if (n_rounds < 1) throw std::invalid_argument("n_rounds must be >= 1");
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
    if (agents.empty() && !include_vanilla) throw std::invalid_argument("no agents selected");
  }

  std::size_t expected_rows() const {
    return (agents.size() + (include_vanilla ? 1 : 0)) * static_cast<std::size_t>(n_iterations) *
           static_cast<std::size_t>(n_rounds);
  }
};

struct Unit {
  std::string agent;
  int iteration = 0;
};

inline std::uint64_t unit_seed(std::uint64_t seed, const std::string& agent, int iteration) {
  return seed ^ hash_combine(fnv1a64(agent), static_cast<std::uint64_t>(iteration));
}

inline std::vector<Unit> experiment_units(const ExperimentConfig& cfg) {
  std::vector<Unit> u;
  auto agents = cfg.agents;
  if (cfg.include_vanilla) agents.emplace_back(kVanillaAgent);
  for (const auto& a : agents)
    for (int j = 1; j <= cfg.n_iterations; ++j) u.push_back({a, j});
  return u;
}

/// All rounds of one (agent, iteration) with fresh state.
inline std::vector<ObservationRow> run_unit(const Unit& u, const ExperimentConfig& cfg, const EngineDeps& deps) {
  const std::uint64_t s = unit_seed(cfg.seed, u.agent, u.iteration);
  const auto schedule = round_schedule(build_scenarios(u.agent, *deps.bank, s), cfg.n_rounds);
  std::vector<ObservationRow> rows;
  if (u.agent == kVanillaAgent) {
    for (int t = 1; t <= cfg.n_rounds; ++t)
      rows.push_back(run_vanilla_round(schedule[static_cast<std::size_t>(t - 1)], t, u.iteration, s, deps).row);
    return rows;
  }
  AgentState st(u.agent, s);
  for (int t = 1; t <= cfg.n_rounds; ++t)
    rows.push_back(run_round(st, schedule[static_cast<std::size_t>(t - 1)], t, u.iteration, deps).row);
  return rows;
}

class ExperimentAborted : public std::runtime_error {
 public:
  ExperimentAborted(const std::string& msg, std::vector<Unit> completed, ObservationTable partial,
                    Unit failed)
      : std::runtime_error(msg),
        completed_(std::move(completed)),
        partial_(std::move(partial)),
        failed_(std::move(failed)) {}
  const std::vector<Unit>& completed() const noexcept { return completed_; }
  const ObservationTable& partial() const noexcept { return partial_; }
  const Unit& failed() const noexcept { return failed_; }

 private:
  std::vector<Unit> completed_;
  ObservationTable partial_;
  Unit failed_;
};

/// Runs every unit on up to cfg.jobs threads. A failing unit is retried
/// once; a second failure stops the run with the completed units attached.
/// `order` optionally permutes execution order; the result is sorted
/// canonically either way.
inline ObservationTable run_experiment(const ExperimentConfig& cfg, const EngineDeps& deps,
                                       std::vector<std::size_t> order = {}) {
  cfg.validate();
  for (const auto& a : cfg.agents) {
    if (!deps.profiles.contains(a)) throw std::invalid_argument("no profile loaded for agent '" + a + "'");
    if (!deps.graph->has_agent(a)) throw std::invalid_argument("agent '" + a + "' is not ingested");
    if (!deps.bank->has(a)) throw ScenarioError("no scenario template bank for agent '" + a + "'");
  }
  if (cfg.include_vanilla && !deps.bank->has(kVanillaAgent))
    throw ScenarioError("no scenario template bank for the vanilla agent");

  const auto units = experiment_units(cfg);
  if (order.empty()) {
    order.resize(units.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  if (order.size() != units.size()) throw std::invalid_argument("run_experiment: order has wrong length");

  std::vector<std::optional<std::vector<ObservationRow>>> results(units.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex err_mu;
  std::optional<std::pair<std::size_t, std::string>> failure;

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= order.size()) return;
      const std::size_t i = order[slot];
      std::string last_error;
      for (int attempt = 0; attempt < 2; ++attempt) {
        try {
          results[i] = run_unit(units[i], cfg, deps);
          break;
        } catch (const std::exception& e) {
          last_error = e.what();
        }
      }
      if (!results[i]) {
        std::lock_guard lock(err_mu);
        if (!failure) failure = {i, last_error};
        stop = true;
        return;
      }
    }
  };
  const int n_threads = std::min<int>(cfg.jobs, static_cast<int>(units.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ObservationTable table;
  std::vector<Unit> done;
  for (std::size_t i = 0; i < units.size(); ++i)
    if (results[i]) {
      done.push_back(units[i]);
      table.insert(table.end(), results[i]->begin(), results[i]->end());
    }
  canonical_sort(table);
  if (failure) {
    const Unit& bad = units[failure->first];
    throw ExperimentAborted("unit (" + bad.agent + ", " + std::to_string(bad.iteration) +
                                ") failed twice: " + failure->second,
                            std::move(done), std::move(table), bad);
  }
  return table;
}

}  // namespace sctsim
