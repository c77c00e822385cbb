#include <gtest/gtest.h>

#include "sctsim/evaluator.hpp"
#include "support.hpp"

using namespace sctsim;

namespace {

GatewayConfig stub_config() {
  GatewayConfig c;
  c.mode = GatewayMode::Stub;
  return c;
}

// Live-mode gateway with a canned chat reply and hashed embeddings.
class ScriptedGateway final : public ModelGateway {
 public:
  explicit ScriptedGateway(std::string reply) : reply_(std::move(reply)) { cfg_.mode = GatewayMode::Live; }
  ChatResponse chat(const ChatRequest& req) override {
    last_user = req.user;
    return {reply_, {}};
  }
  Embedding embed(std::string_view t) override { return stub_embedding(t, 1); }
  const GatewayConfig& config() const noexcept override { return cfg_; }
  std::string last_user;

 private:
  GatewayConfig cfg_;
  std::string reply_;
};

const ConstructExemplars& exemplars() {
  static const auto ex = ConstructExemplars::load(sctsim::testing::kDataDir / "exemplars.json");
  return ex;
}

}  // namespace

TEST(Exemplars, ShippedFileCoversEveryConstructAndLevel) {
  for (Construct c : kAllConstructs)
    for (const auto& level : exemplars().levels(c)) EXPECT_FALSE(level.empty()) << to_string(c);
  const auto back = ConstructExemplars::from_json(exemplars().to_json());
  EXPECT_EQ(back.to_json(), exemplars().to_json());
}

TEST(Exemplars, MissingLevelIsRejected) {
  auto doc = exemplars().to_json();
  doc["expectations"].erase("0.5");
  EXPECT_THROW(ConstructExemplars::from_json(doc), std::invalid_argument);
}

TEST(Alignment, VerbatimHighExemplarScoresOne) {
  StubGateway gw(stub_config());
  const ExemplarIndex idx(exemplars(), gw);
  for (Construct c : kAllConstructs) {
    const auto& top = exemplars().levels(c)[2].front();
    EXPECT_EQ(score_alignment(top, c, idx, gw), 1.0) << to_string(c);
  }
}

TEST(Alignment, SelfEfficacyLowExemplarScoresZero) {
  StubGateway gw(stub_config());
  EXPECT_EQ(score_alignment("I don't think my individual actions can make a significant difference",
                            Construct::SelfEfficacy, exemplars(), gw),
            0.0);
}

TEST(Alignment, StubIsDeterministic) {
  StubGateway gw(stub_config());
  const ExemplarIndex idx(exemplars(), gw);
  const std::string r = "I am confident we can adapt, and I plan each step carefully.";
  const double first = score_alignment(r, Construct::SelfRegulation, idx, gw);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(score_alignment(r, Construct::SelfRegulation, idx, gw), first);
  EXPECT_THROW(score_alignment("  ", Construct::SelfRegulation, idx, gw), std::invalid_argument);
}

TEST(Alignment, LiveReplyIsSnappedToLevel) {
  ScriptedGateway gw("Score: 0.8");
  const ExemplarIndex idx(exemplars(), gw);
  EXPECT_EQ(score_alignment("Some novel reply.", Construct::Expectations, idx, gw), 1.0);
  ScriptedGateway mid("0.4");
  EXPECT_EQ(score_alignment("Some novel reply.", Construct::Expectations, idx, mid), 0.5);
  ScriptedGateway junk("no idea");
  EXPECT_THROW(score_alignment("Some novel reply.", Construct::Expectations, idx, junk), GatewayError);
}

TEST(ConstructUpdate, HandComputedSteps) {
  std::array<double, kConstructCount> half{};
  half.fill(0.5);
  EXPECT_EQ(update_construct_vector(SctConstructVector::uniform(0.5), half, 0.9), SctConstructVector::uniform(0.5));
  std::array<double, kConstructCount> one{};
  one.fill(1.0);
  EXPECT_NEAR(update_construct_vector(SctConstructVector::uniform(0.5), one, 0.3)[Construct::Expectations], 0.65,
              1e-12);
  std::array<double, kConstructCount> zero{};
  EXPECT_EQ(update_construct_vector(SctConstructVector::uniform(0.1), zero, 0.3)[Construct::SelfEfficacy], 0.1);
  EXPECT_THROW(update_construct_vector(SctConstructVector::uniform(0.5), half, 0.0), std::invalid_argument);
  EXPECT_THROW(update_construct_vector(SctConstructVector::uniform(0.5), half, 1.5), std::invalid_argument);
}

TEST(ResponsePattern, HandComputedScores) {
  ResponseAnalysis a;
  EXPECT_EQ(response_pattern_score(a), 0.0);
  a.certainty = a.prior_belief_reference = a.new_info_incorporation = a.justification = 1.0;
  EXPECT_EQ(response_pattern_score(a), 5.0);
  a.certainty = 0.8;
  a.prior_belief_reference = 0.6;
  a.new_info_incorporation = 0.4;
  a.justification = 0.2;
  EXPECT_NEAR(response_pattern_score(a), 2.5, 1e-12);
  a.justification = 1.2;
  EXPECT_THROW(response_pattern_score(a), std::invalid_argument);
}

TEST(Analyzer, RejectsEmptyResponse) {
  StubGateway gw(stub_config());
  const ExemplarIndex idx(exemplars(), gw);
  EXPECT_THROW(analyze_response("", {"scenario", "", 0.5, 1}, idx, gw), std::invalid_argument);
}

TEST(Analyzer, StubIsDeterministicAndBounded) {
  StubGateway gw(stub_config());
  const ExemplarIndex idx(exemplars(), gw);
  const AnalysisContext ctx{"Solar jobs now outnumber coal jobs in the state.", "Q: x\nA: y\n", 0.7, 9};
  const std::string r = "I am certain coal still matters, because I have always believed in hard work.";
  const auto a = analyze_response(r, ctx, idx, gw);
  const auto b = analyze_response(r, ctx, idx, gw);
  EXPECT_EQ(a.alignment, b.alignment);
  EXPECT_EQ(a.certainty, b.certainty);
  EXPECT_EQ(a.justification, b.justification);
  for (double v : {a.certainty, a.prior_belief_reference, a.new_info_incorporation, a.justification,
                   a.semantic_alignment, a.emotional_alignment}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (double v : a.alignment) EXPECT_TRUE(v == 0.0 || v == 0.5 || v == 1.0);
}

TEST(Analyzer, HigherIntensityRaisesExpectedNewInfoScore) {
  StubGateway gw(stub_config());
  const ExemplarIndex idx(exemplars(), gw);
  const std::string scenario = "A new report says wind farms cut local power bills.";
  const std::string r = "Perhaps, but I need to see more about wind farms and local bills.";
  double lo = 0.0, hi = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    lo += analyze_response(r, {scenario, "", 0.2, s}, idx, gw).new_info_incorporation;
    hi += analyze_response(r, {scenario, "", 0.8, s}, idx, gw).new_info_incorporation;
  }
  EXPECT_GT(hi, lo);
}

TEST(Analyzer, LiveRepliesAreParsed) {
  ScriptedGateway gw(
      R"(Here you go: {"certainty": 0.9, "prior_belief_reference": 0.2, "new_info_incorporation": 0.5,
         "justification": 1.4, "emotional_alignment": 0.3})");
  const ExemplarIndex idx(exemplars(), gw);
  // Alignment prompts get the same JSON; its first number (0.9) snaps to 1.0.
  const auto a = analyze_response("I stand by my record.", {"scenario", "", 0.5, 0}, idx, gw);
  EXPECT_EQ(a.certainty, 0.9);
  EXPECT_EQ(a.justification, 1.0);  // clamped
  EXPECT_EQ(a.alignment[0], 1.0);
  ScriptedGateway bad("{\"certainty\": 0.5}");
  const ExemplarIndex idx2(exemplars(), bad);
  EXPECT_THROW(analyze_response("I stand by my record.", {"scenario", "", 0.5, 0}, idx2, bad), GatewayError);
}

TEST(Features, MarkersAreCounted) {
  const auto f = extract_features("I am certain. I have always believed this because it is true.", "");
  EXPECT_GT(f.certainty, 0.5);
  EXPECT_GT(f.prior, 0.0);
  EXPECT_GT(f.justification, 0.0);
}

TEST(MemoryRatings, StubRatingsAreSeededAndLeanWithReliability) {
  RatingRequest r{"Statement text", ContentKind::ScenarioStatement, "a", 0.2, 0.9, 5};
  const auto m1 = stub_ratings(r);
  const auto m2 = stub_ratings(r);
  EXPECT_EQ(m1.agreement, m2.agreement);
  EXPECT_EQ(m1.shared.consensus, m2.shared.consensus);
  double hi = 0, lo = 0;
  for (std::uint64_t s = 0; s < 500; ++s) {
    r.seed = s;
    r.reliability = 0.95;
    r.intensity = 0.1;
    hi += stub_ratings(r).agreement;
    r.reliability = 0.1;
    r.intensity = 0.9;
    lo += stub_ratings(r).agreement;
  }
  EXPECT_GT(hi, lo);
  EXPECT_EQ(type_score(ContentKind::ScenarioStatement), 1.0);
  EXPECT_EQ(type_score(ContentKind::OwnResponse), 0.8);
}

TEST(MemoryRatings, LiveRepliesAreRoundedAndClamped) {
  ScriptedGateway gw(R"({"agreement": 6.6, "impression": 9, "relevance": 5, "importance": 6,
                        "persistence": 5, "consensus": 0, "impact": 3, "collaboration": 2})");
  const auto m = rate_memory({"text", ContentKind::Other, "a", 0.5, 0.5, 1}, gw);
  EXPECT_EQ(m.agreement, 7);
  EXPECT_EQ(m.impression, 7);
  EXPECT_EQ(m.shared.consensus, 1);
  EXPECT_EQ(gw.last_user.find("0.5"), std::string::npos);  // reliability is never sent
}
