#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sctsim::stats {

struct PcaResult {
  Eigen::VectorXd eigenvalues;         // all components, nonincreasing
  Eigen::VectorXd variance_explained;  // eigenvalue / variables
  Eigen::VectorXd cumulative;
  Eigen::MatrixXd components;          // unit eigenvectors, variables x k
  Eigen::MatrixXd unrotated_loadings;  // components scaled by sqrt(eigenvalue)
  Eigen::MatrixXd loadings;            // varimax-rotated, variables x k
  Eigen::MatrixXd rotation;            // k x k orthogonal
  Eigen::VectorXd communalities;
  std::vector<double> criterion_history;
  int iterations = 0;
};

inline constexpr int kVarimaxMaxIter = 1000;
inline constexpr double kVarimaxTolerance = 1e-12;

/// Raw varimax criterion: sum over columns of the variance of squared entries.
inline double varimax_criterion(const Eigen::MatrixXd& L) {
  const double p = static_cast<double>(L.rows());
  const Eigen::MatrixXd sq = L.array().square().matrix();
  double v = 0.0;
  for (Eigen::Index j = 0; j < L.cols(); ++j) {
    const double m = sq.col(j).sum() / p;
    v += sq.col(j).array().square().sum() / p - m * m;
  }
  return v;
}

namespace detail {

// Flips each column so its largest-magnitude entry is positive; applies the
// same flips to the columns of `partner` when given.
inline void orient_columns(Eigen::MatrixXd& M, Eigen::MatrixXd* partner = nullptr) {
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    Eigen::Index arg = 0;
    M.col(j).cwiseAbs().maxCoeff(&arg);
    if (M(arg, j) < 0.0) {
      M.col(j) *= -1.0;
      if (partner) partner->col(j) *= -1.0;
    }
  }
}

}  // namespace detail

struct VarimaxResult {
  Eigen::MatrixXd loadings;
  Eigen::MatrixXd rotation;
  std::vector<double> criterion_history;
  int iterations = 0;
};

/// Varimax with Kaiser row normalization, by iterated SVD updates.
inline VarimaxResult varimax(const Eigen::MatrixXd& L) {
  const Eigen::Index p = L.rows(), k = L.cols();
  VarimaxResult r;
  r.rotation = Eigen::MatrixXd::Identity(k, k);
  if (k < 2) {
    r.loadings = L;
    r.criterion_history.push_back(varimax_criterion(L));
    return r;
  }
  Eigen::VectorXd h = L.rowwise().norm();
  for (Eigen::Index i = 0; i < p; ++i)
    if (h(i) == 0.0) h(i) = 1.0;
  const Eigen::MatrixXd Ln = h.cwiseInverse().asDiagonal() * L;
  double d = 0.0;
  r.criterion_history.push_back(varimax_criterion(Ln));
  for (int it = 0; it < kVarimaxMaxIter; ++it) {
    const Eigen::MatrixXd Lam = Ln * r.rotation;
    const Eigen::RowVectorXd colsq = Lam.array().square().colwise().sum();
    const Eigen::MatrixXd target =
        Lam.array().cube().matrix() - Lam * (colsq / static_cast<double>(p)).asDiagonal();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ln.transpose() * target,
                                                Eigen::ComputeFullU | Eigen::ComputeFullV);
    r.rotation = svd.matrixU() * svd.matrixV().transpose();
    const double d_new = svd.singularValues().sum();
    r.iterations = it + 1;
    r.criterion_history.push_back(varimax_criterion(Ln * r.rotation));
    if (d_new < d * (1.0 + kVarimaxTolerance)) break;
    d = d_new;
  }
  r.loadings = h.asDiagonal() * (Ln * r.rotation);
  return r;
}

/// PCA of the correlation matrix of `data` (rows are observations), keeping
/// k components and rotating them by varimax.
inline PcaResult pca_varimax(const Eigen::MatrixXd& data, int k = 2) {
  const Eigen::Index n = data.rows(), p = data.cols();
  if (k < 1 || k > p)
    throw std::invalid_argument("pca_varimax: k must lie in [1, " + std::to_string(p) + "], got " +
                                std::to_string(k));
  if (n <= p)
    throw std::invalid_argument("pca_varimax: need more rows than columns (" + std::to_string(n) +
                                " rows, " + std::to_string(p) + " columns)");
  Eigen::MatrixXd Z = data.rowwise() - data.colwise().mean();
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sd = std::sqrt(Z.col(j).squaredNorm() / static_cast<double>(n - 1));
    if (!(sd > 1e-12 * std::max(1.0, data.col(j).cwiseAbs().maxCoeff())))
      throw std::invalid_argument("pca_varimax: column " + std::to_string(j) + " is constant");
    Z.col(j) /= sd;
  }
  Eigen::MatrixXd R = (Z.transpose() * Z) / static_cast<double>(n - 1);
  R = 0.5 * (R + R.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
  if (es.info() != Eigen::Success) throw std::runtime_error("pca_varimax: eigendecomposition failed");

  PcaResult out;
  out.eigenvalues = es.eigenvalues().reverse();
  Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
  out.variance_explained = out.eigenvalues / static_cast<double>(p);
  out.cumulative.resize(p);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    acc += out.variance_explained(j);
    out.cumulative(j) = std::min(acc, 1.0);
  }
  out.components = vecs.leftCols(k);
  detail::orient_columns(out.components);
  out.unrotated_loadings =
      out.components * out.eigenvalues.head(k).cwiseMax(0.0).cwiseSqrt().asDiagonal();

  auto vm = varimax(out.unrotated_loadings);
  detail::orient_columns(vm.loadings, &vm.rotation);
  out.rotation = vm.rotation;
  out.loadings = vm.loadings;
  out.communalities = out.unrotated_loadings.array().square().rowwise().sum();
  out.criterion_history = std::move(vm.criterion_history);
  out.iterations = vm.iterations;
  return out;
}

}  // namespace sctsim::stats
