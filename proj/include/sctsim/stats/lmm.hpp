#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sctsim/stats/distributions.hpp"

namespace sctsim::stats {

struct DesignMatrix {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<long long> group;  // random-intercept unit per row
  std::vector<int> t;            // round per row
  std::vector<std::string> names;

  Eigen::Index rows() const noexcept { return y.size(); }
  Eigen::Index cols() const noexcept { return X.cols(); }
};

class RankDeficiencyError : public std::invalid_argument {
 public:
  RankDeficiencyError(std::vector<std::string> columns, const std::string& msg)
      : std::invalid_argument(msg), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

class ConvergenceError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelFit {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  Eigen::MatrixXd cov;
  double sigma_u2 = 0.0;
  double sigma_e2 = 0.0;
  double theta = 0.0;
  double loglik = 0.0;
  double r2 = 0.0;
  int n_params = 0;
  Eigen::Index n_obs = 0;
  Eigen::Index n_groups = 0;
  int iterations = 0;

  Eigen::Index index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<Eigen::Index>(i);
    throw std::out_of_range("no coefficient named '" + name + "'");
  }
};

namespace detail {

inline constexpr double kSigmaFloor = 1e-300;

inline std::string column_name(const DesignMatrix& d, Eigen::Index j) {
  if (static_cast<std::size_t>(j) < d.names.size()) return d.names[static_cast<std::size_t>(j)];
  return "x" + std::to_string(j);
}

// Throws naming the first column that is a combination of earlier ones,
// together with the columns it depends on.
inline void check_rank(const DesignMatrix& d) {
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> full(d.X);
  if (full.rank() == d.cols()) return;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const Eigen::VectorXd col = d.X.col(j);
    if (col.norm() == 0.0)
      throw RankDeficiencyError({column_name(d, j)}, "design column '" + column_name(d, j) + "' is all zero");
    if (!kept.empty()) {
      Eigen::MatrixXd B(d.rows(), static_cast<Eigen::Index>(kept.size()));
      for (std::size_t k = 0; k < kept.size(); ++k) B.col(static_cast<Eigen::Index>(k)) = d.X.col(kept[k]);
      const Eigen::VectorXd coef = B.colPivHouseholderQr().solve(col);
      const double resid = (B * coef - col).norm();
      if (resid <= 1e-9 * col.norm()) {
        std::vector<std::string> cols;
        std::string list;
        for (std::size_t k = 0; k < kept.size(); ++k) {
          if (std::abs(coef(static_cast<Eigen::Index>(k))) <= 1e-9) continue;
          cols.push_back(column_name(d, kept[k]));
          list += (list.empty() ? "'" : ", '") + cols.back() + "'";
        }
        cols.push_back(column_name(d, j));
        throw RankDeficiencyError(cols, "rank-deficient design: column '" + column_name(d, j) +
                                            "' is linearly dependent on " + list);
      }
    }
    kept.push_back(j);
  }
  throw RankDeficiencyError({}, "rank-deficient design matrix");
}

struct GroupSums {
  Eigen::MatrixXd XtX;
  Eigen::VectorXd Xty;
  double yty = 0.0;
  std::vector<double> n;        // rows per group
  std::vector<Eigen::VectorXd> s;  // column sums per group
  std::vector<double> r;        // y sums per group
};

inline GroupSums group_sums(const DesignMatrix& d) {
  GroupSums g;
  g.XtX = d.X.transpose() * d.X;
  g.Xty = d.X.transpose() * d.y;
  g.yty = d.y.squaredNorm();
  std::map<long long, std::size_t> idx;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    auto [it, fresh] = idx.try_emplace(d.group[static_cast<std::size_t>(i)], g.n.size());
    if (fresh) {
      g.n.push_back(0.0);
      g.s.push_back(Eigen::VectorXd::Zero(d.cols()));
      g.r.push_back(0.0);
    }
    const std::size_t k = it->second;
    g.n[k] += 1.0;
    g.s[k] += d.X.row(i).transpose();
    g.r[k] += d.y(i);
  }
  return g;
}

struct Profile {
  double loglik = 0.0;
  double rss = 0.0;
  Eigen::VectorXd beta;
  Eigen::MatrixXd A;  // X' V^-1 X with V = I + theta Z Z'
};

// V^-1 per group is I - c 11' with c = theta / (1 + n theta), so the
// weighted cross products are rank-one corrections of the plain ones.
inline Profile profile(const GroupSums& g, double n_obs, double theta) {
  Profile p;
  p.A = g.XtX;
  Eigen::VectorXd b = g.Xty;
  double yWy = g.yty;
  double logdet = 0.0;
  for (std::size_t k = 0; k < g.n.size(); ++k) {
    const double c = theta / (1.0 + g.n[k] * theta);
    p.A.noalias() -= c * g.s[k] * g.s[k].transpose();
    b.noalias() -= c * g.r[k] * g.s[k];
    yWy -= c * g.r[k] * g.r[k];
    logdet += std::log1p(g.n[k] * theta);
  }
  p.beta = p.A.ldlt().solve(b);
  p.rss = std::max(yWy - b.dot(p.beta), 0.0);
  const double sigma2 = std::max(p.rss / n_obs, kSigmaFloor);
  p.loglik = -0.5 * n_obs * (std::log(2.0 * std::numbers::pi) + 1.0 + std::log(sigma2)) - 0.5 * logdet;
  return p;
}

}  // namespace detail

inline constexpr double kLogThetaLo = -15.0;
inline constexpr double kLogThetaHi = 8.0;
inline constexpr double kLogThetaStep = 0.5;
inline constexpr double kThetaTolerance = 1e-8;
inline constexpr int kMaxRefinements = 200;

/// Profiled ML log-likelihood at variance ratio theta = sigma_u2 / sigma_e2.
inline double profile_loglik(const DesignMatrix& d, double theta) {
  const auto g = detail::group_sums(d);
  return detail::profile(g, static_cast<double>(d.rows()), theta).loglik;
}

/// Random-intercept linear mixed model by maximum likelihood. beta and
/// sigma_e2 are profiled out; theta is found by a log-scale grid bracket
/// followed by golden-section refinement.
inline ModelFit fit_lmm(const DesignMatrix& d) {
  const Eigen::Index n = d.rows();
  if (d.X.rows() != n || static_cast<Eigen::Index>(d.group.size()) != n)
    throw std::invalid_argument("fit_lmm: y, X and group must have the same number of rows");
  if (d.cols() == 0) throw std::invalid_argument("fit_lmm: empty design");
  if (n <= d.cols()) throw std::invalid_argument("fit_lmm: more columns than rows");
  if (!d.X.allFinite() || !d.y.allFinite()) throw std::invalid_argument("fit_lmm: non-finite input");
  detail::check_rank(d);
  const auto g = detail::group_sums(d);
  if (g.n.size() < 2) throw std::invalid_argument("fit_lmm: at least two groups are required");
  const double nd = static_cast<double>(n);
  auto ll = [&](double phi) { return detail::profile(g, nd, std::exp(phi)).loglik; };

  const int steps = static_cast<int>(std::lround((kLogThetaHi - kLogThetaLo) / kLogThetaStep));
  int best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i) {
    const double v = ll(kLogThetaLo + i * kLogThetaStep);
    if (v > best_ll) {
      best_ll = v;
      best = i;
    }
  }
  double lo = kLogThetaLo + std::max(best - 1, 0) * kLogThetaStep;
  double hi = kLogThetaLo + std::min(best + 1, steps) * kLogThetaStep;
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
  double f1 = ll(x1), f2 = ll(x2);
  int iter = 0;
  while (hi - lo > kThetaTolerance) {
    if (++iter > kMaxRefinements)
      throw ConvergenceError("fit_lmm: variance ratio did not converge within " +
                             std::to_string(kMaxRefinements) + " refinements");
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = ll(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = ll(x2);
    }
  }
  double theta = std::exp(0.5 * (lo + hi));
  auto prof = detail::profile(g, nd, theta);
  if (const auto at_zero = detail::profile(g, nd, 0.0); at_zero.loglik >= prof.loglik) {
    theta = 0.0;
    prof = at_zero;
  }

  ModelFit f;
  f.names = d.names;
  if (f.names.size() != static_cast<std::size_t>(d.cols()))
    for (Eigen::Index j = static_cast<Eigen::Index>(f.names.size()); j < d.cols(); ++j)
      f.names.push_back(detail::column_name(d, j));
  f.theta = theta;
  f.sigma_e2 = std::max(prof.rss / nd, detail::kSigmaFloor);
  f.sigma_u2 = theta * f.sigma_e2;
  f.beta = prof.beta;
  f.cov = f.sigma_e2 * prof.A.ldlt().solve(Eigen::MatrixXd::Identity(d.cols(), d.cols()));
  f.se = f.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index j = 0; j < f.se.size(); ++j)
    if (!(f.se(j) > 0.0)) f.se(j) = std::numeric_limits<double>::min();
  f.z = f.beta.cwiseQuotient(f.se);
  f.p.resize(f.z.size());
  for (Eigen::Index j = 0; j < f.z.size(); ++j) f.p(j) = normal_two_sided_p(f.z(j));
  f.loglik = prof.loglik;
  const Eigen::VectorXd fitted = d.X * f.beta;
  const Eigen::VectorXd fc = fitted.array() - fitted.mean();
  const Eigen::VectorXd yc = d.y.array() - d.y.mean();
  const double denom = fc.squaredNorm() * yc.squaredNorm();
  f.r2 = denom > 0.0 ? std::pow(fc.dot(yc), 2) / denom : 0.0;
  f.n_params = static_cast<int>(d.cols()) + 2;
  f.n_obs = n;
  f.n_groups = static_cast<Eigen::Index>(g.n.size());
  f.iterations = iter;
  return f;
}

struct LrtResult {
  double lambda = 0.0;
  int df = 0;
  double p = 1.0;
};

inline LrtResult likelihood_ratio_test(double loglik1, double loglik2, int df) {
  if (df <= 0) throw std::invalid_argument("likelihood_ratio_test: models are not nested (df <= 0)");
  LrtResult r;
  r.lambda = -2.0 * (loglik1 - loglik2);
  r.df = df;
  r.p = chi2_sf(std::max(r.lambda, 0.0), df);
  return r;
}

/// fit1 must be the smaller model.
inline LrtResult likelihood_ratio_test(const ModelFit& fit1, const ModelFit& fit2) {
  return likelihood_ratio_test(fit1.loglik, fit2.loglik, fit2.n_params - fit1.n_params);
}

}  // namespace sctsim::stats
