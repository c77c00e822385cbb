#include <gtest/gtest.h>

#include <thread>

#include "sctsim/graph_http_store.hpp"
#include "sctsim/persona_graph.hpp"
#include "support.hpp"

using namespace sctsim;

namespace {

std::shared_ptr<ModelGateway> stub() {
  GatewayConfig c;
  c.mode = GatewayMode::Stub;
  return std::make_shared<StubGateway>(c);
}

PersonaDataset forty_factors() {
  return persona_dataset_from_json(sctsim::testing::synthetic_dataset("agent_a", 40));
}

// Minimal stand-in for the transactional Cypher endpoint: recognises the
// handful of statements the store issues and keeps rows in memory.
class FakeCypherServer {
 public:
  FakeCypherServer() {
    server_.Post("/db/neo4j/tx/commit", [this](const httplib::Request& req, httplib::Response& res) {
      auth_ = req.get_header_value("Authorization");
      const Json body = Json::parse(req.body);
      Json results = Json::array();
      std::lock_guard lock(mu_);
      for (const auto& st : body.at("statements")) {
        const auto cypher = st.at("statement").get<std::string>();
        const auto& p = st.at("parameters");
        Json data = Json::array();
        if (cypher.find("DETACH DELETE") != std::string::npos) {
          agents_.erase(p.at("id").get<std::string>());
        } else if (cypher.rfind("CREATE (a:Agent", 0) == 0) {
          agents_[p.at("id").get<std::string>()] = Json::array();
        } else if (cypher.find("UNWIND $factors") != std::string::npos) {
          agents_[p.at("id").get<std::string>()] = p.at("factors");
        } else if (cypher.find("RETURN count(a)") != std::string::npos) {
          data.push_back({{"row", {agents_.count(p.at("id").get<std::string>())}}});
        } else if (cypher.find("RETURN a.agent_id") != std::string::npos) {
          for (const auto& [id, _] : agents_) data.push_back({{"row", {id}}});
        } else if (cypher.find("RETURN q.question_id") != std::string::npos) {
          auto rows = agents_.at(p.at("id").get<std::string>());
          std::vector<Json> sorted(rows.begin(), rows.end());
          std::sort(sorted.begin(), sorted.end(),
                    [](const Json& a, const Json& b) { return a["question_id"] < b["question_id"]; });
          for (const auto& f : sorted)
            data.push_back({{"row",
                             {f["question_id"], f["category"], f["dimension"], f["question"], f["answer"],
                              f["embedding"]}}});
        } else {
          res.set_content(Json{{"results", Json::array()},
                               {"errors", {{{"message", "unexpected statement"}}}}}
                              .dump(),
                          "application/json");
          return;
        }
        results.push_back({{"columns", Json::array()}, {"data", data}});
      }
      res.set_content(Json{{"results", results}, {"errors", Json::array()}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeCypherServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::string auth() const {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::map<std::string, Json> agents_;
  std::string auth_;
};

}  // namespace

TEST(PersonaGraph, ImportCountsNodesAndEdges) {
  InMemoryGraphStore store;
  auto gw = stub();
  const auto ds = forty_factors();
  const auto s = import_factors(store, ds.profile, ds.factors, embedder_of(*gw));
  // 1 agent + 4 categories + 8 dimensions + 40 questions
  EXPECT_EQ(s.node_count, 53u);
  EXPECT_EQ(s.edge_count, 52u);
  const auto again = import_factors(store, ds.profile, ds.factors, embedder_of(*gw), true);
  EXPECT_EQ(again.node_count, s.node_count);
  EXPECT_EQ(again.edge_count, s.edge_count);
  EXPECT_EQ(store.factors("agent_a").size(), 40u);
}

TEST(PersonaGraph, EmptyImportHasOnlyTheAgent) {
  InMemoryGraphStore store;
  auto gw = stub();
  const auto ds = persona_dataset_from_json(sctsim::testing::synthetic_dataset("lonely", 0));
  const auto s = import_factors(store, ds.profile, ds.factors, embedder_of(*gw));
  EXPECT_EQ(s.node_count, 1u);
  EXPECT_EQ(s.edge_count, 0u);
}

TEST(PersonaGraph, DuplicateImportNeedsReplace) {
  InMemoryGraphStore store;
  auto gw = stub();
  const auto ds = forty_factors();
  import_factors(store, ds.profile, ds.factors, embedder_of(*gw));
  try {
    import_factors(store, ds.profile, ds.factors, embedder_of(*gw));
    FAIL();
  } catch (const GraphError& e) {
    EXPECT_EQ(e.kind(), GraphError::Kind::DuplicateAgent);
  }
}

TEST(PersonaGraph, AdjacencyExportMatchesSummary) {
  InMemoryGraphStore store;
  auto gw = stub();
  const auto ds = forty_factors();
  const auto s = import_factors(store, ds.profile, ds.factors, embedder_of(*gw));
  const auto adj = store.export_adjacency();
  EXPECT_EQ(adj["nodes"].size(), s.node_count);
  EXPECT_EQ(adj["edges"].size(), s.edge_count);
}

TEST(CategoryExtraction, KeywordTable) {
  auto gw = stub();
  EXPECT_EQ(extract_categories("How do you feel about the plant closing?", *gw),
            (std::set<Category>{Category::Affective, Category::Cognitive}));
  EXPECT_EQ(extract_categories("zxq vrrp blargh", *gw).size(), 4u);
  EXPECT_THROW(extract_categories("", *gw), std::invalid_argument);
}

TEST(CategoryExtraction, ReplyParsingFallsBackToAll) {
  EXPECT_EQ(parse_category_reply("Affective, cognitive"),
            (std::set<Category>{Category::Affective, Category::Cognitive}));
  EXPECT_EQ(parse_category_reply("no idea").size(), 4u);
}

TEST(Retrieval, SelfQueryRanksFirstWithUnitSimilarity) {
  InMemoryGraphStore store;
  auto gw = stub();
  const auto ds = forty_factors();
  import_factors(store, ds.profile, ds.factors, embedder_of(*gw));
  const auto& target = ds.factors[13];
  const auto hits = retrieve_relevant_factors(store, *gw, "agent_a", target.question, 5, 0.0,
                                              {kAllCategories.begin(), kAllCategories.end()});
  ASSERT_FALSE(hits.empty());
  EXPECT_EQ(hits[0].factor.question_id, target.question_id);
  EXPECT_NEAR(hits[0].similarity, 1.0, 1e-6);
}

TEST(Retrieval, HighThresholdExcludesUnrelated) {
  InMemoryGraphStore store;
  auto gw = stub();
  const auto ds = forty_factors();
  import_factors(store, ds.profile, ds.factors, embedder_of(*gw));
  EXPECT_TRUE(retrieve_relevant_factors(store, *gw, "agent_a", "penguins skating on frozen lakes", 5, 0.999)
                  .empty());
}

TEST(Retrieval, TruncatesToKInDescendingOrder) {
  InMemoryGraphStore store;
  auto gw = stub();
  const auto ds = forty_factors();
  import_factors(store, ds.profile, ds.factors, embedder_of(*gw));
  const std::set<Category> all(kAllCategories.begin(), kAllCategories.end());
  const auto wide = retrieve_relevant_factors(store, *gw, "agent_a", "Question about topic", 40, -1.0, all);
  ASSERT_GE(wide.size(), 10u);
  const auto hits = retrieve_relevant_factors(store, *gw, "agent_a", "Question about topic", 3, -1.0, all);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_GE(hits[0].similarity, hits[1].similarity);
  EXPECT_GE(hits[1].similarity, hits[2].similarity);
  EXPECT_THROW(retrieve_relevant_factors(store, *gw, "nobody", "x", 3), GraphError);
  EXPECT_THROW(retrieve_relevant_factors(store, *gw, "agent_a", "x", 0), std::invalid_argument);
}

TEST(Background, BudgetRules) {
  EXPECT_EQ(compile_background({}, 100).text, "");
  PersonalFactor a{"q1", Category::Cognitive, "d", "What?", "This.", std::nullopt};
  PersonalFactor b{"q2", Category::Affective, "d", "Why?", "That.", std::nullopt};
  const auto both = compile_background({{a, 0.9}, {b, 0.8}}, 1000);
  EXPECT_FALSE(both.truncated);
  EXPECT_LT(both.text.find("What?"), both.text.find("Why?"));
  const auto none = compile_background({{a, 0.9}, {b, 0.8}}, 5);
  EXPECT_EQ(none.text, "");
  EXPECT_TRUE(none.truncated);
}

TEST(CypherStore, RoundTripsThroughHttpEndpoint) {
  FakeCypherServer server;
  CypherHttpGraphStore store({server.url(), "neo4j", "secret"});
  auto gw = stub();
  const auto ds = forty_factors();
  const auto s = import_factors(store, ds.profile, ds.factors, embedder_of(*gw));
  EXPECT_EQ(s.node_count, 53u);
  EXPECT_TRUE(store.has_agent("agent_a"));
  EXPECT_FALSE(store.has_agent("agent_b"));
  EXPECT_EQ(store.agent_ids(), std::vector<std::string>{"agent_a"});
  const auto back = store.factors("agent_a");
  ASSERT_EQ(back.size(), 40u);
  EXPECT_EQ(store.summary("agent_a").edge_count, 52u);
  EXPECT_EQ(server.auth().rfind("Basic ", 0), 0u);
  const auto hits = retrieve_relevant_factors(store, *gw, "agent_a", ds.factors[7].question, 1, 0.0,
                                              {kAllCategories.begin(), kAllCategories.end()});
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].factor.question_id, ds.factors[7].question_id);
}

TEST(CypherStore, RejectsNonHttpUri) {
  EXPECT_THROW(CypherHttpGraphStore({"bolt://localhost:7687", "", ""}), GraphError);
}

TEST(CypherStore, UnreachableBackendIsBackendError) {
  CypherHttpGraphStore store({"http://127.0.0.1:9", "", ""});
  try {
    store.has_agent("x");
    FAIL();
  } catch (const GraphError& e) {
    EXPECT_EQ(e.kind(), GraphError::Kind::Backend);
  }
}
