#pragma once

#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
// <resolv.h> defines _res as a macro, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "sctsim/persona_graph.hpp"

namespace sctsim {

struct GraphConnection {
  std::string uri;  // http://host:7474
  std::string user;
  std::string pass;
  std::string database = "neo4j";

  /// GRAPH_URI / GRAPH_USER / GRAPH_PASS; nullopt when GRAPH_URI is unset.
  static std::optional<GraphConnection> from_env() {
    const char* uri = std::getenv("GRAPH_URI");
    if (!uri || !*uri) return std::nullopt;
    GraphConnection c;
    c.uri = uri;
    if (const char* u = std::getenv("GRAPH_USER")) c.user = u;
    if (const char* p = std::getenv("GRAPH_PASS")) c.pass = p;
    return c;
  }
};

/// Property-graph backend speaking the transactional Cypher-over-HTTP API
/// (POST /db/{database}/tx/commit). Similarity is computed client-side from
/// the stored embedding property.
class CypherHttpGraphStore final : public GraphStore {
 public:
  explicit CypherHttpGraphStore(GraphConnection conn) : conn_(std::move(conn)) {
    if (conn_.uri.rfind("http://", 0) != 0 && conn_.uri.rfind("https://", 0) != 0)
      throw GraphError(GraphError::Kind::Backend, conn_.uri,
                       "GRAPH_URI must be an http(s) endpoint of the Cypher HTTP API, got " +
                           conn_.uri);
  }

  ImportSummary put_agent(const AgentProfile& agent, const std::vector<PersonalFactor>& factors,
                          bool replace) override {
    if (has_agent(agent.agent_id) && !replace)
      throw GraphError(GraphError::Kind::DuplicateAgent, agent.agent_id,
                       "agent '" + agent.agent_id + "' already imported (pass replace)");
    Json rows = Json::array();
    for (const auto& f : factors) {
      if (!f.embedding)
        throw GraphError(GraphError::Kind::Embedder, f.question_id,
                         "factor " + f.question_id + " has no embedding");
      rows.push_back({{"question_id", f.question_id},
                      {"category", std::string(to_string(f.category))},
                      {"dimension", f.dimension},
                      {"question", f.question},
                      {"answer", f.answer},
                      {"embedding", *f.embedding}});
    }
    const Json id = agent.agent_id;
    Json statements = Json::array();
    statements.push_back(statement(
        "MATCH (a:Agent {agent_id: $id}) "
        "OPTIONAL MATCH (a)-[:HAS_CATEGORY]->(c)-[:HAS_DIMENSION]->(d)-[:HAS_QUESTION]->(q) "
        "DETACH DELETE a, c, d, q",
        {{"id", id}}));
    statements.push_back(statement("CREATE (a:Agent {agent_id: $id, name: $name, profile: $profile})",
                                   {{"id", id},
                                    {"name", agent.name},
                                    {"profile", to_json(agent).dump()}}));
    statements.push_back(statement(
        "MATCH (a:Agent {agent_id: $id}) UNWIND $factors AS f "
        "MERGE (c:Category {key: $id + '/' + f.category}) ON CREATE SET c.name = f.category "
        "MERGE (a)-[:HAS_CATEGORY]->(c) "
        "MERGE (d:Dimension {key: $id + '/' + f.category + '/' + f.dimension}) "
        "ON CREATE SET d.name = f.dimension "
        "MERGE (c)-[:HAS_DIMENSION]->(d) "
        "CREATE (q:Question {key: $id + '/' + f.question_id, question_id: f.question_id, "
        "question: f.question, answer: f.answer, embedding: f.embedding}) "
        "CREATE (d)-[:HAS_QUESTION]->(q)",
        {{"id", id}, {"factors", rows}}));
    commit(statements);
    return hierarchy_summary(factors);
  }

  bool has_agent(std::string_view agent_id) const override {
    const Json res = commit(Json::array(
        {statement("MATCH (a:Agent {agent_id: $id}) RETURN count(a)", {{"id", agent_id}})}));
    const auto& data = res.at("results").at(0).at("data");
    return !data.empty() && data.at(0).at("row").at(0).get<long long>() > 0;
  }

  std::vector<std::string> agent_ids() const override {
    const Json res = commit(Json::array(
        {statement("MATCH (a:Agent) RETURN a.agent_id ORDER BY a.agent_id", Json::object())}));
    std::vector<std::string> ids;
    for (const auto& row : res.at("results").at(0).at("data"))
      ids.push_back(row.at("row").at(0).get<std::string>());
    return ids;
  }

  std::vector<PersonalFactor> factors(std::string_view agent_id) const override {
    if (!has_agent(agent_id))
      throw GraphError(GraphError::Kind::UnknownAgent, std::string(agent_id),
                       "unknown agent '" + std::string(agent_id) + "'");
    const Json res = commit(Json::array({statement(
        "MATCH (:Agent {agent_id: $id})-[:HAS_CATEGORY]->(c)-[:HAS_DIMENSION]->(d)"
        "-[:HAS_QUESTION]->(q) "
        "RETURN q.question_id, c.name, d.name, q.question, q.answer, q.embedding "
        "ORDER BY q.question_id",
        {{"id", agent_id}})}));
    std::vector<PersonalFactor> out;
    for (const auto& r : res.at("results").at(0).at("data")) {
      const auto& row = r.at("row");
      PersonalFactor f;
      f.question_id = row.at(0).get<std::string>();
      auto cat = parse_category(row.at(1).get<std::string>());
      if (!cat)
        throw GraphError(GraphError::Kind::Backend, f.question_id,
                         "stored category is not one of the four: " + row.at(1).dump());
      f.category = *cat;
      f.dimension = row.at(2).get<std::string>();
      f.question = row.at(3).get<std::string>();
      f.answer = row.at(4).get<std::string>();
      f.embedding = row.at(5).get<Embedding>();
      out.push_back(std::move(f));
    }
    return out;
  }

  ImportSummary summary(std::string_view agent_id) const override {
    return hierarchy_summary(factors(agent_id));
  }

  Json export_adjacency() const override {
    InMemoryGraphStore mirror;
    for (const auto& id : agent_ids()) {
      AgentProfile p;
      p.agent_id = id;
      p.name = id;
      mirror.put_agent(p, factors(id), true);
    }
    return mirror.export_adjacency();
  }

 private:
  static Json statement(std::string cypher, Json params) {
    return Json{{"statement", std::move(cypher)}, {"parameters", std::move(params)}};
  }

  Json commit(const Json& statements) const {
    httplib::Client client(conn_.uri);
    if (!conn_.user.empty()) client.set_basic_auth(conn_.user, conn_.pass);
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(120, 0);
    const std::string path = "/db/" + conn_.database + "/tx/commit";
    auto res = client.Post(path, Json{{"statements", statements}}.dump(), "application/json");
    if (!res)
      throw GraphError(GraphError::Kind::Backend, conn_.uri,
                       "graph request to " + conn_.uri + path +
                           " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw GraphError(GraphError::Kind::Backend, conn_.uri,
                       "graph request returned HTTP " + std::to_string(res->status));
    Json body;
    try {
      body = Json::parse(res->body);
    } catch (const Json::parse_error& e) {
      throw GraphError(GraphError::Kind::Backend, conn_.uri,
                       std::string("graph response is not JSON: ") + e.what());
    }
    if (auto errs = body.find("errors"); errs != body.end() && !errs->empty())
      throw GraphError(GraphError::Kind::Backend, conn_.uri,
                       "graph backend error: " + errs->dump());
    return body;
  }

  GraphConnection conn_;
};

/// In-process store unless GRAPH_URI names an external backend.
inline std::unique_ptr<GraphStore> make_graph_store() {
  if (auto conn = GraphConnection::from_env())
    return std::make_unique<CypherHttpGraphStore>(std::move(*conn));
  return std::make_unique<InMemoryGraphStore>();
}

}  // namespace sctsim
