#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sctsim/evaluator.hpp"
#include "sctsim/graph_http_store.hpp"
#include "sctsim/http_gateway.hpp"
#include "sctsim/observations.hpp"
#include "sctsim/persona.hpp"
#include "sctsim/persona_graph.hpp"
#include "sctsim/report/svg.hpp"
#include "sctsim/scenario.hpp"
#include "sctsim/stats/analysis.hpp"

namespace sctsim {

// ---------------------------------------------------------------------------
// Ingestion

struct IngestEntry {
  std::filesystem::path file;
  std::string agent_id;
  std::map<Category, std::size_t> counts;
  std::size_t total = 0;
  std::string error;  // empty on success
};

struct IngestReport {
  std::vector<IngestEntry> entries;
  std::map<std::string, AgentProfile> profiles;

  bool ok() const {
    for (const auto& e : entries)
      if (!e.error.empty()) return false;
    return !entries.empty();
  }
};

/// Imports every dataset file in `dir` into `store`. A bad file is recorded
/// and skipped so the remaining agents still load.
inline IngestReport ingest_directory(const std::filesystem::path& dir, GraphStore& store, ModelGateway& gateway) {
  IngestReport rep;
  const Embedder embed = embedder_of(gateway);
  for (const auto& file : dataset_files(dir)) {
    IngestEntry e;
    e.file = file;
    try {
      const auto ds = load_persona_dataset(file);
      e.agent_id = ds.profile.agent_id;
      import_factors(store, ds.profile, ds.factors, embed, true);
      e.counts = ds.category_counts();
      e.total = ds.factors.size();
      rep.profiles[ds.profile.agent_id] = ds.profile;
    } catch (const GatewayError&) {
      throw;  // backend failures abort the whole ingest
    } catch (const GraphError& err) {
      if (err.kind() == GraphError::Kind::Embedder || err.kind() == GraphError::Kind::Backend) throw;
      e.error = err.what();
    } catch (const DatasetError& err) {
      e.error = err.what();
      if (!err.record().empty() && err.record() != file.string()) e.error += " [record " + err.record() + "]";
    } catch (const std::exception& err) {
      e.error = err.what();
    }
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Workspace: everything a run needs, loaded from a data directory

struct DataLayout {
  std::filesystem::path personas;
  std::filesystem::path scenarios;
  std::filesystem::path exemplars;

  static DataLayout under(const std::filesystem::path& root) {
    return {root / "personas", root / "scenarios.json", root / "exemplars.json"};
  }
};

class Workspace {
 public:
  Workspace(const DataLayout& layout, const GatewayConfig& gateway, std::unique_ptr<GraphStore> store,
            EngineSettings settings = {})
      : graph_(std::move(store)) {
    deps_.persona = make_gateway(gateway);
    deps_.evaluator = make_gateway(gateway);
    ingest_ = ingest_directory(layout.personas, *graph_, *deps_.persona);
    bank_ = ScenarioBank::load(layout.scenarios);
    index_ = std::make_unique<ExemplarIndex>(ConstructExemplars::load(layout.exemplars), *deps_.evaluator);
    deps_.graph = graph_.get();
    deps_.bank = &bank_;
    deps_.exemplars = index_.get();
    deps_.profiles = ingest_.profiles;
    deps_.settings = settings;
  }

  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const IngestReport& ingest() const noexcept { return ingest_; }
  EngineDeps& deps() noexcept { return deps_; }
  const EngineDeps& deps() const noexcept { return deps_; }

  /// Ingested agents in file order.
  std::vector<std::string> agents() const {
    std::vector<std::string> out;
    for (const auto& e : ingest_.entries)
      if (e.error.empty()) out.push_back(e.agent_id);
    return out;
  }

 private:
  std::unique_ptr<GraphStore> graph_;
  ScenarioBank bank_;
  std::unique_ptr<ExemplarIndex> index_;
  IngestReport ingest_;
  EngineDeps deps_;
};

// ---------------------------------------------------------------------------
// Analysis artifacts

/// File name -> contents. Rendering is separate from writing so repeated
/// analyses can be compared byte for byte.
using Artifacts = std::map<std::string, std::string>;

struct AnalysisResult {
  stats::ModelComparison models;
  std::vector<stats::AgentEffect> per_agent;
  std::optional<stats::AgentInvariance> invariance;
  stats::RoundEffects effects;
  std::array<stats::TemporalSummary, kConstructCount> temporal;
  stats::PrefixSensitivity prefix;
  stats::LeaveOneOut loo;
  std::array<stats::BootstrapCi, kConstructCount> bootstrap;
  stats::PcaResult pca;
};

inline constexpr int kPcaComponents = 2;

inline AnalysisResult analyze(const ObservationTable& obs, std::uint64_t seed = 42) {
  AnalysisResult a;
  a.models = stats::fit_models(obs);
  a.per_agent = stats::per_agent_table(obs);
  if (stats::agents_of(stats::without_vanilla(obs)).size() >= 2) a.invariance = stats::agent_invariance(obs);
  a.effects = stats::round_effects(a.models.model2, stats::rounds_of(stats::without_vanilla(obs)));
  a.temporal = stats::temporal_summary(a.effects);
  a.prefix = stats::round_subset_sensitivity(a.effects);
  a.loo = stats::leave_one_out(a.effects);
  const auto samples = stats::effect_samples(a.models.model2, obs);
  for (std::size_t k = 0; k < kConstructCount; ++k)
    a.bootstrap[k] = stats::bootstrap_ci(samples[k], stats::kDefaultResamples, 0.95,
                                         hash_combine(seed, static_cast<std::uint64_t>(k)));
  a.pca = stats::pca_varimax(stats::construct_matrix(obs), kPcaComponents);
  return a;
}

namespace detail {

inline std::string construct_name(std::size_t k) { return std::string(to_string(kDesignOrder[k])); }

inline Json fit_json(const stats::ModelFit& f) {
  Json params = Json::array();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    params.push_back({{"parameter", f.names[i]}, {"estimate", f.beta(j)}, {"se", f.se(j)},
                      {"z", f.z(j)}, {"p", f.p(j)}});
  }
  return {{"parameters", params}, {"sigma_u2", f.sigma_u2}, {"sigma_e2", f.sigma_e2},
          {"loglik", f.loglik}, {"r2", f.r2}, {"n_params", f.n_params},
          {"n_obs", f.n_obs}, {"n_groups", f.n_groups}};
}

inline Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json loadings_json(const Eigen::MatrixXd& L) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    Json r = {{"construct", construct_name(static_cast<std::size_t>(i))}};
    for (Eigen::Index j = 0; j < L.cols(); ++j) r["PC" + std::to_string(j + 1)] = L(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline std::string csv_num(double v) { return text::format_double(v); }

}  // namespace detail

inline Artifacts render_analysis(const AnalysisResult& a) {
  using detail::construct_name;
  using detail::csv_num;
  Artifacts out;

  Json fits = {{"model1", detail::fit_json(a.models.model1)},
               {"model2", detail::fit_json(a.models.model2)},
               {"lrt", {{"lambda", a.models.lrt.lambda}, {"df", a.models.lrt.df}, {"p", a.models.lrt.p}}}};
  if (a.invariance) {
    Json dummies = Json::array();
    for (std::size_t k = 0; k < a.invariance->dummy_beta.size(); ++k)
      dummies.push_back({{"agent", a.invariance->agents[k + 1]},
                         {"estimate", a.invariance->dummy_beta[k]},
                         {"p", a.invariance->dummy_p[k]}});
    fits["agent_invariance"] = {{"reference", a.invariance->agents.front()},
                                {"dummies", dummies},
                                {"eta_squared", a.invariance->eta_squared}};
  }
  out["fits.json"] = fits.dump(2) + "\n";

  std::ostringstream t1;
  t1 << "Agent,Coefficient,SE,R2,CI_lower,CI_upper,p,n,dropped\n";
  for (const auto& e : a.per_agent) {
    std::string dropped;
    for (const auto& d : e.dropped) dropped += (dropped.empty() ? "" : ";") + d;
    t1 << e.agent << ',' << csv_num(e.coefficient) << ',' << csv_num(e.se) << ',' << csv_num(e.r2) << ','
       << csv_num(e.ci_lo) << ',' << csv_num(e.ci_hi) << ',' << csv_num(e.p) << ',' << e.n << ',' << dropped
       << '\n';
  }
  out["per_agent.csv"] = t1.str();

  std::ostringstream t2;
  t2 << "Model,Parameter,Estimate,SE,z,p\n";
  for (const auto* f : {&a.models.model1, &a.models.model2})
    for (std::size_t i = 0; i < f->names.size(); ++i) {
      const auto j = static_cast<Eigen::Index>(i);
      t2 << (f == &a.models.model1 ? "model1" : "model2") << ',' << f->names[i] << ',' << csv_num(f->beta(j))
         << ',' << csv_num(f->se(j)) << ',' << csv_num(f->z(j)) << ',' << csv_num(f->p(j)) << '\n';
    }
  out["fixed_effects.csv"] = t2.str();

  std::ostringstream t5;
  t5 << "Construct";
  for (int r : a.effects.rounds) t5 << ",round_" << r;
  t5 << ",Mean,Median,SD,SE,CI_lower,CI_upper,Delta,SE_conventional\n";
  for (std::size_t k = 0; k < kConstructCount; ++k) {
    const auto& s = a.temporal[k];
    t5 << construct_name(k);
    for (double v : s.values) t5 << ',' << csv_num(v);
    t5 << ',' << csv_num(s.mean) << ',' << csv_num(s.median) << ',' << csv_num(s.sd) << ',' << csv_num(s.se)
       << ',' << csv_num(s.ci_lo) << ',' << csv_num(s.ci_hi) << ',' << csv_num(s.delta) << ','
       << csv_num(s.se_conventional) << '\n';
  }
  out["temporal_effects.csv"] = t5.str();

  Json pca = {{"constructs", Json::array()},
              {"eigenvalues", detail::vec_json(a.pca.eigenvalues)},
              {"variance_explained", detail::vec_json(a.pca.variance_explained)},
              {"cumulative", detail::vec_json(a.pca.cumulative)},
              {"unrotated_loadings", detail::loadings_json(a.pca.unrotated_loadings)},
              {"loadings", detail::loadings_json(a.pca.loadings)},
              {"communalities", detail::vec_json(a.pca.communalities)},
              {"varimax_iterations", a.pca.iterations},
              {"criterion_history", a.pca.criterion_history}};
  for (std::size_t k = 0; k < kConstructCount; ++k) pca["constructs"].push_back(construct_name(k));
  Json rot = Json::array();
  for (Eigen::Index i = 0; i < a.pca.rotation.rows(); ++i) rot.push_back(detail::vec_json(a.pca.rotation.row(i)));
  pca["rotation"] = rot;
  out["pca.json"] = pca.dump(2) + "\n";

  Json sens;
  sens["rounds"] = a.effects.rounds;
  Json effects = Json::object(), boot = Json::object(), prefix = Json::object(), loo = Json::object();
  for (std::size_t k = 0; k < kConstructCount; ++k) {
    const auto name = construct_name(k);
    effects[name] = {{"value", a.effects.value[k]}, {"se", a.effects.se[k]}};
    boot[name] = {{"mean", a.bootstrap[k].mean}, {"lo", a.bootstrap[k].lo}, {"hi", a.bootstrap[k].hi}};
    prefix[name] = {{"mean", a.prefix.mean[k]}, {"sign_stable", a.prefix.sign_stable[k]}};
    loo[name] = {{"full_mean", a.loo.full_mean[k]},
                 {"mean", a.loo.mean[k]},
                 {"largest_deviation_round", a.loo.largest_deviation_round[k]}};
  }
  auto ranking_names = [](const std::vector<std::size_t>& r) {
    Json j = Json::array();
    for (auto k : r) j.push_back(construct_name(k));
    return j;
  };
  Json rankings = Json::array();
  for (const auto& r : a.loo.ranking) rankings.push_back(ranking_names(r));
  sens["round_effects"] = effects;
  sens["bootstrap"] = {{"resamples", stats::kDefaultResamples}, {"level", 0.95}, {"constructs", boot}};
  sens["round_subset"] = {{"last_round", a.prefix.last_round}, {"constructs", prefix}};
  sens["leave_one_out"] = {{"excluded", a.loo.excluded},
                           {"constructs", loo},
                           {"full_ranking", ranking_names(a.loo.full_ranking)},
                           {"rankings", rankings},
                           {"ranking_preserved", a.loo.ranking_preserved}};
  out["sensitivity.json"] = sens.dump(2) + "\n";
  return out;
}

/// Console summary: LRT, per-agent C coefficients and PCA variance.
inline std::string analysis_summary(const AnalysisResult& a) {
  std::ostringstream s;
  s << "Likelihood ratio test: Lambda = " << text::format_fixed(a.models.lrt.lambda, 2)
    << ", df = " << a.models.lrt.df << ", p = " << text::format_double(a.models.lrt.p) << "\n";
  s << "Contradiction coefficient by agent:\n";
  for (const auto& e : a.per_agent)
    s << "  " << e.agent << ": " << text::format_fixed(e.coefficient, 3) << " (SE "
      << text::format_fixed(e.se, 3) << ", R2 " << text::format_fixed(e.r2, 3) << ")\n";
  s << "PCA variance explained:";
  for (Eigen::Index j = 0; j < kPcaComponents; ++j)
    s << " PC" << j + 1 << " " << text::format_fixed(100.0 * a.pca.variance_explained(j), 1) << "%";
  s << " (cumulative " << text::format_fixed(100.0 * a.pca.cumulative(kPcaComponents - 1), 1) << "%)\n";
  return s.str();
}

inline void write_artifacts(const std::filesystem::path& dir, const Artifacts& files) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, body] : files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << body;
  }
}

// ---------------------------------------------------------------------------
// Report

class ReportError : public std::runtime_error {
 public:
  explicit ReportError(const std::string& m) : std::runtime_error(m) {}
};

inline constexpr std::array<std::string_view, 5> kReportFiles = {"biplot.svg", "trajectories.svg", "bootstrap.svg",
                                                                 "sensitivity.svg", "loo.svg"};

namespace detail {

inline Json read_artifact(const std::filesystem::path& dir, const std::string& name) {
  const auto path = dir / name;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("missing analysis artifact: " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ReportError("malformed analysis artifact " + path.string() + ": " + e.what());
  }
}

inline std::vector<double> as_doubles(const Json& j) { return j.get<std::vector<double>>(); }

}  // namespace detail

/// Renders the five figures from pca.json and sensitivity.json.
inline Artifacts render_report(const Json& pca, const Json& sens) {
  Artifacts out;
  try {
    const auto& loads = pca.at("loadings");
    std::vector<std::string> names;
    std::vector<double> pc1, pc2;
    for (const auto& r : loads) {
      names.push_back(r.at("construct").get<std::string>());
      pc1.push_back(r.at("PC1").get<double>());
      pc2.push_back(r.at("PC2").get<double>());
    }
    const auto var = detail::as_doubles(pca.at("variance_explained"));
    out["biplot.svg"] = report::biplot_svg(names, pc1, pc2, var.at(0), var.at(1));

    std::vector<double> rounds;
    for (int r : sens.at("rounds").get<std::vector<int>>()) rounds.push_back(r);
    const std::vector<std::string> constructs = pca.at("constructs").get<std::vector<std::string>>();

    std::vector<report::Series> traj, prefix, loo;
    std::vector<report::Interval> boot;
    for (const auto& c : constructs) {
      const auto& e = sens.at("round_effects").at(c);
      report::Series s{c, rounds, detail::as_doubles(e.at("value")), {}, {}};
      const auto se = detail::as_doubles(e.at("se"));
      for (std::size_t i = 0; i < s.y.size(); ++i) {
        s.lo.push_back(s.y[i] - stats::kZ95 * se.at(i));
        s.hi.push_back(s.y[i] + stats::kZ95 * se.at(i));
      }
      traj.push_back(std::move(s));
      prefix.push_back({c, rounds, detail::as_doubles(sens.at("round_subset").at("constructs").at(c).at("mean")),
                        {}, {}});
      loo.push_back({c, rounds, detail::as_doubles(sens.at("leave_one_out").at("constructs").at(c).at("mean")),
                     {}, {}});
      const auto& b = sens.at("bootstrap").at("constructs").at(c);
      boot.push_back({c, b.at("mean").get<double>(), b.at("lo").get<double>(), b.at("hi").get<double>()});
    }
    out["trajectories.svg"] =
        report::line_chart_svg("Construct effects by round with 95% CI", "Round", "Effect", traj, "trajectory");
    out["bootstrap.svg"] =
        report::interval_chart_svg("Bootstrap 95% intervals of mean construct effects", "Effect", boot);
    out["sensitivity.svg"] = report::line_chart_svg("Mean effect over rounds 1 to k", "Last included round",
                                                    "Mean effect", prefix, "prefix");
    out["loo.svg"] = report::line_chart_svg("Mean effect with one round left out", "Excluded round",
                                            "Mean effect", loo, "loo");
  } catch (const Json::exception& e) {
    throw ReportError(std::string("analysis artifact lacks expected fields: ") + e.what());
  }
  return out;
}

inline Artifacts render_report(const std::filesystem::path& analysis_dir) {
  return render_report(detail::read_artifact(analysis_dir, "pca.json"),
                       detail::read_artifact(analysis_dir, "sensitivity.json"));
}

}  // namespace sctsim
