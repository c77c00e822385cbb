#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <cstdlib>
#include <sstream>

#include "sctsim/pipeline.hpp"
#include "support.hpp"

using namespace sctsim;
using sctsim::testing::TempDir;
namespace fs = std::filesystem;

namespace {

ObservationTable stub_run(int iterations, int rounds, bool vanilla = true) {
  GatewayConfig g;
  g.mode = GatewayMode::Stub;
  EngineSettings s;
  s.retrieval_threshold = kStubRetrievalThreshold;
  Workspace ws(DataLayout::under(sctsim::testing::kDataDir), g, std::make_unique<InMemoryGraphStore>(), s);
  ExperimentConfig cfg;
  cfg.agents = ws.agents();
  cfg.include_vanilla = vanilla;
  cfg.n_iterations = iterations;
  cfg.n_rounds = rounds;
  return run_experiment(cfg, ws.deps());
}

const ObservationTable& small_run() {
  static const auto t = stub_run(6, 6);
  return t;
}

bool well_formed_xml(const std::string& doc, std::string& why) {
  std::istringstream in(doc);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_xml(in, tree);
  } catch (const boost::property_tree::xml_parser_error& e) {
    why = e.what();
    return false;
  }
  return true;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

#ifdef SCTSIM_CLI_PATH
int cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + SCTSIM_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void copy_data(const fs::path& to) {
  fs::copy(sctsim::testing::kDataDir, to, fs::copy_options::recursive);
}
#endif

}  // namespace

TEST(Observations, CsvRoundTripIsExact) {
  const auto& t = small_run();
  std::stringstream ss;
  write_observations(ss, t);
  const auto back = read_observations(ss);
  EXPECT_EQ(back, t);
  std::stringstream again;
  write_observations(again, back);
  std::stringstream first;
  write_observations(first, t);
  EXPECT_EQ(again.str(), first.str());
  EXPECT_EQ(first.str().substr(0, first.str().find('\n')),
            "agent,iteration,round,C,reliability,reinforcements,observational_learning,expectations,"
            "self_regulation,behavioral_capability,self_efficacy,y");
}

TEST(Observations, MissingColumnIsNamed) {
  std::stringstream ss;
  write_observations(ss, small_run());
  std::string csv = ss.str();
  // Drop the trailing y column from every line.
  std::stringstream in(csv), cut;
  for (std::string line; std::getline(in, line);) cut << line.substr(0, line.rfind(',')) << '\n';
  try {
    read_observations(cut);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.column(), "y");
    EXPECT_NE(std::string(e.what()).find("'y'"), std::string::npos);
  }
}

TEST(Observations, NonNumericCellIsNamed) {
  std::stringstream ss("agent,iteration,round,C,reliability,reinforcements,observational_learning,expectations,"
                       "self_regulation,behavioral_capability,self_efficacy,y\n"
                       "a,1,1,0.5,0.5,0.5,0.5,0.5,0.5,0.5,oops,1\n");
  try {
    read_observations(ss);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.column(), "self_efficacy");
  }
  std::stringstream empty;
  EXPECT_THROW(read_observations(empty), SchemaError);
}

TEST(Analysis, IsPureAndReproducible) {
  const auto copy = small_run();
  const auto a = render_analysis(analyze(small_run(), 7));
  const auto b = render_analysis(analyze(small_run(), 7));
  EXPECT_EQ(a, b);
  EXPECT_EQ(copy, small_run());
  for (const char* f :
       {"fits.json", "per_agent.csv", "fixed_effects.csv", "temporal_effects.csv", "pca.json", "sensitivity.json"})
    EXPECT_TRUE(a.contains(f)) << f;
  const auto c = render_analysis(analyze(small_run(), 8));
  EXPECT_EQ(a.at("fits.json"), c.at("fits.json"));
  EXPECT_NE(a.at("sensitivity.json"), c.at("sensitivity.json"));  // bootstrap seed only
}

TEST(Analysis, TablesHaveExpectedShape) {
  const auto art = render_analysis(analyze(small_run()));
  const auto t1 = art.at("per_agent.csv");
  EXPECT_EQ(t1.substr(0, t1.find('\n')), "Agent,Coefficient,SE,R2,CI_lower,CI_upper,p,n,dropped");
  EXPECT_EQ(count(t1, "\n"), 1u + 6u);  // five personas and the baseline
  const auto t2 = art.at("fixed_effects.csv");
  EXPECT_EQ(count(t2, "\n"), 1u + 8u + 14u);
  const Json fits = Json::parse(art.at("fits.json"));
  EXPECT_EQ(fits["lrt"]["df"], 6);
  EXPECT_EQ(fits["model1"]["n_obs"], 5 * 6 * 6);
  const Json pca = Json::parse(art.at("pca.json"));
  EXPECT_EQ(pca["loadings"].size(), kConstructCount);
  EXPECT_EQ(pca["eigenvalues"].size(), kConstructCount);
}

TEST(Report, RendersFiveWellFormedSvgs) {
  const auto art = render_analysis(analyze(small_run()));
  const auto svgs = render_report(Json::parse(art.at("pca.json")), Json::parse(art.at("sensitivity.json")));
  ASSERT_EQ(svgs.size(), kReportFiles.size());
  for (auto name : kReportFiles) {
    const auto& body = svgs.at(std::string(name));
    std::string why;
    EXPECT_TRUE(well_formed_xml(body, why)) << name << ": " << why;
    EXPECT_NE(body.find("xmlns=\"http://www.w3.org/2000/svg\""), std::string::npos);
  }
  EXPECT_EQ(count(svgs.at("biplot.svg"), "class=\"loading\""), kConstructCount);
  EXPECT_EQ(count(svgs.at("trajectories.svg"), "class=\"trajectory\""), kConstructCount);
  EXPECT_EQ(count(svgs.at("trajectories.svg"), "class=\"ci-band\""), kConstructCount);
  EXPECT_EQ(count(svgs.at("loo.svg"), "class=\"loo\""), kConstructCount);
  EXPECT_EQ(count(svgs.at("bootstrap.svg"), "class=\"interval\""), kConstructCount);
}

TEST(Report, MissingArtifactIsNamed) {
  TempDir dir;
  try {
    render_report(dir.path());
    FAIL();
  } catch (const ReportError& e) {
    EXPECT_NE(std::string(e.what()).find("missing analysis artifact"), std::string::npos);
  }
}

TEST(Report, WellFormedCheckerRejectsBrokenXml) {
  std::string why;
  EXPECT_FALSE(well_formed_xml("<svg><g></svg>", why));
  EXPECT_FALSE(well_formed_xml("<svg a=1/>", why));
  EXPECT_TRUE(well_formed_xml("<?xml version=\"1.0\"?><svg x=\"1\"><g/>A &amp; B</svg>", why));
}

TEST(Ingest, BadFileIsSkippedAndReported) {
  TempDir dir;
  for (const auto& e : fs::directory_iterator(sctsim::testing::kDataDir / "personas"))
    fs::copy_file(e.path(), dir / e.path().filename().string());
  sctsim::testing::spit(dir / "zz_broken.json", "{ not json");
  InMemoryGraphStore store;
  GatewayConfig g;
  StubGateway gw(g);
  const auto rep = ingest_directory(dir.path(), store, gw);
  EXPECT_FALSE(rep.ok());
  EXPECT_EQ(rep.profiles.size(), 5u);
  ASSERT_EQ(rep.entries.size(), 6u);
  EXPECT_FALSE(rep.entries.back().error.empty());
  EXPECT_EQ(store.agent_ids().size(), 5u);
}

#ifdef SCTSIM_CLI_PATH
TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli(""), 1);
  EXPECT_EQ(cli("run --mode sideways"), 1);
  EXPECT_EQ(cli("frobnicate"), 1);
  TempDir out;
  EXPECT_EQ(cli("run --agents nobody --iterations 1 --rounds 1 --out \"" + out.path().string() + "\""), 1);
}

TEST(Cli, DataErrorsExitTwo) {
  TempDir tmp;
  EXPECT_EQ(cli("ingest --data \"" + (tmp / "absent").string() + "\""), 2);
  copy_data(tmp / "data");
  sctsim::testing::spit(tmp / "data" / "personas" / "sierra_jameson.json", "{\"profile\": {}}");
  EXPECT_EQ(cli("ingest --data \"" + (tmp / "data").string() + "\""), 2);
  EXPECT_EQ(cli("run --iterations 1 --rounds 1 --data \"" + (tmp / "data").string() + "\" --out \"" +
                (tmp / "out").string() + "\""),
            2);
  sctsim::testing::spit(tmp / "bad.csv", "agent,iteration\nx,1\n");
  EXPECT_EQ(cli("analyze \"" + (tmp / "bad.csv").string() + "\""), 2);
}

TEST(Cli, UnreachableModelServerExitsThreeWithoutOutput) {
  TempDir tmp;
  EXPECT_EQ(cli("run --mode live --iterations 1 --rounds 1 --out \"" + tmp.path().string() + "\"",
                "MODEL_BASE_URL=http://127.0.0.1:9"),
            3);
  EXPECT_FALSE(fs::exists(tmp / "observations.csv"));
  EXPECT_FALSE(fs::exists(tmp / "observations.partial.csv"));
}

TEST(Cli, StubRunWritesManifestAndAnalysis) {
  TempDir tmp;
  const auto out = tmp / "run";
  ASSERT_EQ(cli("run --mode stub --seed 5 --agents 2 --iterations 3 --rounds 4 --jobs 2 --out \"" + out.string() +
                "\""),
            0);
  const Json m = Json::parse(sctsim::testing::slurp(out / "manifest.json"));
  EXPECT_EQ(m["status"], "complete");
  EXPECT_EQ(m["rows"], 24);
  EXPECT_EQ(m["expected_rows"], 24);
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["config"]["resolved_agents"].size(), 2u);
  EXPECT_EQ(m["config_hash"].get<std::string>().size(), 16u);
  EXPECT_FALSE(m["version"].get<std::string>().empty());
  EXPECT_EQ(read_observations(out / "observations.csv").size(), 24u);

  ASSERT_EQ(cli("analyze \"" + (out / "observations.csv").string() + "\""), 0);
  ASSERT_EQ(cli("report \"" + (out / "analysis").string() + "\""), 0);
  for (auto name : kReportFiles) EXPECT_TRUE(fs::exists(out / "analysis" / std::string(name))) << name;
}

TEST(Cli, ConfigFileIsReadAndFlagsOverrideIt) {
  TempDir tmp;
  sctsim::testing::spit(tmp / "cfg.json", R"({"mode": "stub", "seed": 9, "agents": "1", "iterations": 2,
                                             "rounds": 3, "jobs": 1})");
  ASSERT_EQ(cli("run --config \"" + (tmp / "cfg.json").string() + "\" --rounds 2 --out \"" + (tmp / "o").string() +
                "\""),
            0);
  const Json m = Json::parse(sctsim::testing::slurp(tmp / "o" / "manifest.json"));
  EXPECT_EQ(m["seed"], 9);
  EXPECT_EQ(m["config"]["rounds"], 2);
  EXPECT_EQ(m["rows"], 4);
  sctsim::testing::spit(tmp / "broken.json", "{");
  EXPECT_EQ(cli("run --config \"" + (tmp / "broken.json").string() + "\""), 1);
}
#endif
