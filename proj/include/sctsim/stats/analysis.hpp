#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sctsim/observations.hpp"
#include "sctsim/stats/lmm.hpp"
#include "sctsim/stats/pca.hpp"
#include "sctsim/stats/resampling.hpp"

namespace sctsim::stats {

inline constexpr std::string_view kInterceptName = "(Intercept)";

inline std::string interaction_name(Construct c) { return std::string(to_string(c)) + ":round"; }

/// Model 1: intercept, C and the six constructs.
inline DesignMatrix model1_design(const ObservationTable& obs) {
  const auto n = static_cast<Eigen::Index>(obs.size());
  DesignMatrix d;
  d.y.resize(n);
  d.X.resize(n, 2 + static_cast<Eigen::Index>(kConstructCount));
  d.names = {std::string(kInterceptName), "C"};
  for (Construct c : kDesignOrder) d.names.emplace_back(to_string(c));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = obs[static_cast<std::size_t>(i)];
    d.y(i) = r.y;
    d.X(i, 0) = 1.0;
    d.X(i, 1) = r.C;
    for (std::size_t k = 0; k < kConstructCount; ++k) d.X(i, 2 + static_cast<Eigen::Index>(k)) = r.x[k];
    d.group.push_back(r.iteration);
    d.t.push_back(r.round);
  }
  return d;
}

/// Model 2: Model 1 plus each construct times round.
inline DesignMatrix model2_design(const ObservationTable& obs) {
  DesignMatrix d = model1_design(obs);
  const Eigen::Index base = d.X.cols();
  d.X.conservativeResize(Eigen::NoChange, base + static_cast<Eigen::Index>(kConstructCount));
  for (Construct c : kDesignOrder) d.names.push_back(interaction_name(c));
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(kConstructCount); ++k)
      d.X(i, base + k) = d.X(i, 2 + k) * d.t[static_cast<std::size_t>(i)];
  return d;
}

inline ObservationTable without_vanilla(const ObservationTable& obs) {
  ObservationTable out;
  for (const auto& r : obs)
    if (r.agent != kVanillaAgent) out.push_back(r);
  return out;
}

inline std::vector<std::string> agents_of(const ObservationTable& obs) {
  std::set<std::string> s;
  for (const auto& r : obs) s.insert(r.agent);
  return {s.begin(), s.end()};
}

struct ModelComparison {
  ModelFit model1;
  ModelFit model2;
  LrtResult lrt;
};

/// Both models on the persona agents (vanilla rows excluded) and their LRT.
inline ModelComparison fit_models(const ObservationTable& obs) {
  const auto rows = without_vanilla(obs);
  if (rows.empty()) throw std::invalid_argument("fit_models: no persona-agent rows");
  ModelComparison m;
  m.model1 = fit_lmm(model1_design(rows));
  m.model2 = fit_lmm(model2_design(rows));
  m.lrt = likelihood_ratio_test(m.model1, m.model2);
  return m;
}

// ---------------------------------------------------------------------------
// Per-agent contradiction effect

struct AgentEffect {
  std::string agent;
  double coefficient = 0.0;
  double se = 0.0;
  double r2 = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p = 1.0;
  std::size_t n = 0;
  std::vector<std::string> dropped;  // constant construct columns
};

inline constexpr double kZ95 = 1.96;

namespace detail {

inline DesignMatrix drop_constant_columns(const DesignMatrix& d, std::vector<std::string>& dropped) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const bool intercept = d.names[static_cast<std::size_t>(j)] == kInterceptName;
    const bool constant = (d.X.col(j).array() == d.X(0, j)).all();
    if (!intercept && constant && d.names[static_cast<std::size_t>(j)] != "C")
      dropped.push_back(d.names[static_cast<std::size_t>(j)]);
    else
      keep.push_back(j);
  }
  DesignMatrix out;
  out.y = d.y;
  out.group = d.group;
  out.t = d.t;
  out.X.resize(d.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.X.col(static_cast<Eigen::Index>(k)) = d.X.col(keep[k]);
    out.names.push_back(d.names[static_cast<std::size_t>(keep[k])]);
  }
  return out;
}

}  // namespace detail

/// Model 1 fitted separately for each agent; the C coefficient with its
/// normal-theory 95% interval. Construct columns that are constant within
/// an agent (the vanilla baseline) are dropped.
inline std::vector<AgentEffect> per_agent_table(const ObservationTable& obs) {
  std::vector<AgentEffect> out;
  for (const auto& agent : agents_of(obs)) {
    ObservationTable rows;
    std::set<double> cs;
    for (const auto& r : obs)
      if (r.agent == agent) {
        rows.push_back(r);
        cs.insert(r.C);
      }
    if (cs.size() < 2)
      throw std::invalid_argument("per_agent_table: agent '" + agent + "' has a constant C");
    AgentEffect e;
    e.agent = agent;
    const auto d = detail::drop_constant_columns(model1_design(rows), e.dropped);
    const auto fit = fit_lmm(d);
    const auto j = fit.index_of("C");
    e.coefficient = fit.beta(j);
    e.se = fit.se(j);
    e.p = fit.p(j);
    e.r2 = fit.r2;
    e.ci_lo = e.coefficient - kZ95 * e.se;
    e.ci_hi = e.coefficient + kZ95 * e.se;
    e.n = rows.size();
    out.push_back(std::move(e));
  }
  return out;
}

struct AgentInvariance {
  std::vector<std::string> agents;    // first is the reference level
  std::vector<double> dummy_beta;     // agents[1..]
  std::vector<double> dummy_p;
  double eta_squared = 0.0;
  ModelFit fit;
};

/// Model 1 with agent dummies. eta squared is the sum of squares of the
/// centered dummy contribution to the fixed-effects fit over the total sum
/// of squares of y.
inline AgentInvariance agent_invariance(const ObservationTable& obs_all) {
  const auto obs = without_vanilla(obs_all);
  AgentInvariance a;
  a.agents = agents_of(obs);
  if (a.agents.size() < 2) throw std::invalid_argument("agent_invariance: needs at least two agents");
  DesignMatrix d = model1_design(obs);
  const Eigen::Index base = d.cols();
  const auto extra = static_cast<Eigen::Index>(a.agents.size() - 1);
  d.X.conservativeResize(Eigen::NoChange, base + extra);
  d.X.rightCols(extra).setZero();
  for (std::size_t k = 1; k < a.agents.size(); ++k) d.names.push_back("agent:" + a.agents[k]);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const auto& ag = obs[static_cast<std::size_t>(i)].agent;
    const auto it = std::find(a.agents.begin(), a.agents.end(), ag);
    const auto k = static_cast<Eigen::Index>(it - a.agents.begin());
    if (k > 0) d.X(i, base + k - 1) = 1.0;
  }
  a.fit = fit_lmm(d);
  for (Eigen::Index k = 0; k < extra; ++k) {
    a.dummy_beta.push_back(a.fit.beta(base + k));
    a.dummy_p.push_back(a.fit.p(base + k));
  }
  const Eigen::VectorXd contrib = d.X.rightCols(extra) * a.fit.beta.tail(extra);
  const double ss_agent = (contrib.array() - contrib.mean()).square().sum();
  const double ss_total = (d.y.array() - d.y.mean()).square().sum();
  a.eta_squared = ss_total > 0.0 ? ss_agent / ss_total : 0.0;
  return a;
}

// ---------------------------------------------------------------------------
// Construct effects over rounds

/// Per-construct effect by round, indexed by kDesignOrder position.
struct RoundEffects {
  std::vector<int> rounds;
  std::array<std::vector<double>, kConstructCount> value;
  std::array<std::vector<double>, kConstructCount> se;
};

inline std::vector<int> rounds_of(const ObservationTable& obs) {
  std::set<int> s;
  for (const auto& r : obs) s.insert(r.round);
  return {s.begin(), s.end()};
}

/// beta_k + beta_{k:round} * t from a Model 2 fit, with delta-method SE.
inline RoundEffects round_effects(const ModelFit& model2, const std::vector<int>& rounds) {
  RoundEffects e;
  e.rounds = rounds;
  for (std::size_t k = 0; k < kConstructCount; ++k) {
    const Construct c = kDesignOrder[k];
    const auto m = model2.index_of(std::string(to_string(c)));
    const auto x = model2.index_of(interaction_name(c));
    for (int t : rounds) {
      e.value[k].push_back(model2.beta(m) + model2.beta(x) * t);
      const double var = model2.cov(m, m) + t * t * model2.cov(x, x) + 2.0 * t * model2.cov(m, x);
      e.se[k].push_back(std::sqrt(std::max(var, 0.0)));
    }
  }
  return e;
}

/// Per-row marginal effects from the Model 2 fit, the resampling units for
/// the bootstrap.
inline std::array<std::vector<double>, kConstructCount> effect_samples(const ModelFit& model2,
                                                                      const ObservationTable& obs) {
  std::array<std::vector<double>, kConstructCount> out;
  for (std::size_t k = 0; k < kConstructCount; ++k) {
    const Construct c = kDesignOrder[k];
    const double b = model2.beta(model2.index_of(std::string(to_string(c))));
    const double bt = model2.beta(model2.index_of(interaction_name(c)));
    for (const auto& r : obs)
      if (r.agent != kVanillaAgent) out[k].push_back(b + bt * r.round);
  }
  return out;
}

inline constexpr double kReportedSeShare = 0.2;

struct TemporalSummary {
  std::vector<int> rounds;
  std::vector<double> values;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  double se = 0.0;               // kReportedSeShare * |mean|
  double se_conventional = 0.0;  // sd / sqrt(rounds)
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double delta = 0.0;            // last round minus first
};

inline TemporalSummary temporal_summary(const std::vector<int>& rounds, const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("temporal_summary: needs at least two rounds");
  if (rounds.size() != values.size()) throw std::invalid_argument("temporal_summary: size mismatch");
  TemporalSummary s;
  s.rounds = rounds;
  s.values = values;
  s.mean = mean(values);
  s.median = median(values);
  s.sd = sample_sd(values);
  s.se = kReportedSeShare * std::abs(s.mean);
  s.se_conventional = s.sd / std::sqrt(static_cast<double>(values.size()));
  s.ci_lo = s.mean - kZ95 * s.se;
  s.ci_hi = s.mean + kZ95 * s.se;
  s.delta = values.back() - values.front();
  return s;
}

inline std::array<TemporalSummary, kConstructCount> temporal_summary(const RoundEffects& e) {
  std::array<TemporalSummary, kConstructCount> out;
  for (std::size_t k = 0; k < kConstructCount; ++k) out[k] = temporal_summary(e.rounds, e.value[k]);
  return out;
}

struct PrefixSensitivity {
  std::vector<int> last_round;                             // prefix ends
  std::array<std::vector<double>, kConstructCount> mean;   // per prefix
  std::array<bool, kConstructCount> sign_stable{};
};

/// Mean effect over rounds 1..k for every prefix k.
inline PrefixSensitivity round_subset_sensitivity(const RoundEffects& e) {
  if (e.rounds.empty()) throw std::invalid_argument("round_subset_sensitivity: no rounds");
  PrefixSensitivity s;
  s.last_round = e.rounds;
  for (std::size_t k = 0; k < kConstructCount; ++k) {
    double acc = 0.0;
    for (std::size_t r = 0; r < e.rounds.size(); ++r) {
      acc += e.value[k][r];
      s.mean[k].push_back(acc / static_cast<double>(r + 1));
    }
    const auto& m = s.mean[k];
    s.sign_stable[k] = std::all_of(m.begin(), m.end(), [](double v) { return v > 0.0; }) ||
                       std::all_of(m.begin(), m.end(), [](double v) { return v < 0.0; });
  }
  return s;
}

struct LeaveOneOut {
  std::vector<int> excluded;
  std::array<double, kConstructCount> full_mean{};
  std::array<std::vector<double>, kConstructCount> mean;  // per excluded round
  std::array<int, kConstructCount> largest_deviation_round{};
  std::vector<std::vector<std::size_t>> ranking;  // construct order by mean, per exclusion
  std::vector<std::size_t> full_ranking;
  bool ranking_preserved = true;
};

namespace detail {
inline std::vector<std::size_t> rank_desc(const std::array<double, kConstructCount>& v) {
  std::vector<std::size_t> idx(kConstructCount);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return idx;
}
}  // namespace detail

/// Mean effect with each round removed in turn.
inline LeaveOneOut leave_one_out(const RoundEffects& e) {
  const std::size_t R = e.rounds.size();
  if (R < 2) throw std::invalid_argument("leave_one_out: needs at least two rounds");
  LeaveOneOut l;
  l.excluded = e.rounds;
  for (std::size_t k = 0; k < kConstructCount; ++k) l.full_mean[k] = mean(e.value[k]);
  l.full_ranking = detail::rank_desc(l.full_mean);
  for (std::size_t r = 0; r < R; ++r) {
    std::array<double, kConstructCount> m{};
    for (std::size_t k = 0; k < kConstructCount; ++k) {
      double acc = 0.0;
      for (std::size_t q = 0; q < R; ++q)
        if (q != r) acc += e.value[k][q];
      m[k] = acc / static_cast<double>(R - 1);
      l.mean[k].push_back(m[k]);
    }
    l.ranking.push_back(detail::rank_desc(m));
    if (l.ranking.back() != l.full_ranking) l.ranking_preserved = false;
  }
  for (std::size_t k = 0; k < kConstructCount; ++k) {
    std::size_t arg = 0;
    for (std::size_t r = 1; r < R; ++r)
      if (std::abs(l.mean[k][r] - l.full_mean[k]) > std::abs(l.mean[k][arg] - l.full_mean[k])) arg = r;
    l.largest_deviation_round[k] = e.rounds[arg];
  }
  return l;
}

/// n x 6 matrix of construct values (kDesignOrder columns) of persona rows.
inline Eigen::MatrixXd construct_matrix(const ObservationTable& obs) {
  const auto rows = without_vanilla(obs);
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kConstructCount));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < kConstructCount; ++k)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i].x[k];
  return M;
}

}  // namespace sctsim::stats
