#pragma once

// Class statistics and precision-matrix estimators for a shared-covariance
// Gaussian model. All routines are pure; workspaces are local.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "gda/types.hpp"

namespace gda {

enum class Estimator { ks, ledoit_wolf, oas, pinv };

inline std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::ks: return "ks";
    case Estimator::ledoit_wolf: return "ledoit_wolf";
    case Estimator::oas: return "oas";
    case Estimator::pinv: return "pinv";
  }
  return "ks";
}

inline Estimator parse_estimator(std::string_view tag) {
  if (tag == "ks") return Estimator::ks;
  if (tag == "ledoit_wolf") return Estimator::ledoit_wolf;
  if (tag == "oas") return Estimator::oas;
  if (tag == "pinv") return Estimator::pinv;
  fail(ErrorKind::InvalidArgument, "unknown estimator '" + std::string(tag) + "' (expected ks, ledoit_wolf, oas, pinv)");
}

struct ClassStats {
  Matrix means;               // K x D
  std::vector<Index> counts;  // K
  Matrix pooled_cov;          // D x D, denominator N - 1
  Index n_total = 0;
};

struct PrecisionMatrix {
  Matrix values;
  Estimator method = Estimator::ks;
  /// Shrinkage intensity in [0, 1] for ledoit_wolf / oas; unused otherwise.
  double shrinkage = 0.0;
};

inline constexpr double kDegenerateTrace = 1e-12;
inline constexpr double kPinvRelativeCutoff = 1e-10;

inline Matrix class_means(const Matrix& x, const LabelVector& y, Index k) {
  validate_labels(y, x.rows(), k);
  Matrix sums = Matrix::Zero(k, x.cols());
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < x.rows(); ++i) {
    auto c = static_cast<Index>(y[static_cast<std::size_t>(i)]);
    sums.row(c) += x.row(i);
    ++counts[static_cast<std::size_t>(c)];
  }
  for (Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) fail(ErrorKind::EmptyClass, "class " + std::to_string(c) + " has no samples");
    sums.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  return sums;
}

/// Rows of x with their class mean subtracted, in the original row order.
inline Matrix class_centered(const Matrix& x, const LabelVector& y, const Matrix& means) {
  require_dims(means.cols() == x.cols(), "means and features disagree on D");
  validate_labels(y, x.rows(), means.rows());
  Matrix centered(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) centered.row(i) = x.row(i) - means.row(static_cast<Index>(y[static_cast<std::size_t>(i)]));
  return centered;
}

inline ClassStats pooled_covariance(const Matrix& x, const LabelVector& y, const Matrix& means) {
  if (x.rows() < 2) fail(ErrorKind::TooFewSamples, "pooled covariance needs N >= 2");
  Matrix centered = class_centered(x, y, means);
  ClassStats stats;
  stats.means = means;
  stats.counts.assign(static_cast<std::size_t>(means.rows()), 0);
  for (Label c : y) ++stats.counts[static_cast<std::size_t>(c)];
  stats.n_total = x.rows();
  stats.pooled_cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  stats.pooled_cov = 0.5 * (stats.pooled_cov + stats.pooled_cov.transpose());
  return stats;
}

inline ClassStats class_stats(const Matrix& x, const LabelVector& y, Index k) {
  return pooled_covariance(x, y, class_means(x, y, k));
}

namespace detail {

// Inverse of a symmetric positive-definite matrix via Cholesky.
inline Matrix spd_inverse(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) fail(ErrorKind::DegenerateCovariance, "regularized covariance is not positive definite");
  Matrix inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
  return 0.5 * (inv + inv.transpose());
}

inline Matrix shrink_toward_scaled_identity(const Matrix& cov, double intensity) {
  const double target = cov.trace() / static_cast<double>(cov.rows());
  Matrix out = (1.0 - intensity) * cov;
  out.diagonal().array() += intensity * target;
  return out;
}

}  // namespace detail

/// Empirical Bayes ridge-type precision: D * ((N-1) cov + tr(cov) I)^-1.
inline PrecisionMatrix ks_precision(const Matrix& cov, Index n_total) {
  require_dims(cov.rows() == cov.cols(), "covariance must be square");
  const double tr = cov.trace();
  if (!(tr > kDegenerateTrace)) fail(ErrorKind::DegenerateCovariance, "covariance trace is zero; every sample equals its class mean");
  const auto d = static_cast<double>(cov.rows());
  Matrix reg = static_cast<double>(n_total - 1) * cov;
  reg.diagonal().array() += tr;
  return {d * detail::spd_inverse(reg), Estimator::ks, 0.0};
}

inline PrecisionMatrix ks_precision(const ClassStats& stats) { return ks_precision(stats.pooled_cov, stats.n_total); }

/// Ledoit-Wolf (2004) intensity toward (tr/D) I for already-centered rows.
inline double ledoit_wolf_shrinkage(const Matrix& centered) {
  const auto n = static_cast<double>(centered.rows());
  const auto p = static_cast<double>(centered.cols());
  Matrix s = (centered.transpose() * centered) / n;
  const double mu = s.trace() / p;
  Matrix dev = s;
  dev.diagonal().array() -= mu;
  const double delta = dev.squaredNorm() / p;
  // sum_k ||x_k x_k' - S||_F^2 = sum_k ||x_k||^4 - n ||S||_F^2
  const double fourth = centered.rowwise().squaredNorm().array().square().sum();
  double beta = (fourth / n - s.squaredNorm()) / (p * n);
  beta = std::min(std::max(beta, 0.0), delta);
  if (delta <= 0.0 || beta == 0.0) return 0.0;
  return std::clamp(beta / delta, 0.0, 1.0);
}

/// Oracle-approximating shrinkage intensity (Chen, Wiesel, Eldar & Hero 2010).
inline double oas_shrinkage(const Matrix& centered) {
  const auto n = static_cast<double>(centered.rows());
  const auto p = static_cast<double>(centered.cols());
  Matrix s = (centered.transpose() * centered) / n;
  const double tr = s.trace();
  const double tr_sq = s.squaredNorm();  // tr(S^2) for symmetric S
  const double num = (1.0 - 2.0 / p) * tr_sq + tr * tr;
  const double den = (n + 1.0 - 2.0 / p) * (tr_sq - tr * tr / p);
  if (den <= 0.0) return 1.0;
  return std::clamp(num / den, 0.0, 1.0);
}

namespace detail {

template <typename Coefficient>
PrecisionMatrix shrunk_precision(const Matrix& centered, Estimator method, Coefficient coefficient) {
  if (centered.rows() < 2) fail(ErrorKind::TooFewSamples, "shrinkage estimators need N >= 2");
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(centered.rows() - 1);
  cov = 0.5 * (cov + cov.transpose());
  if (!(cov.trace() > kDegenerateTrace)) fail(ErrorKind::DegenerateCovariance, "covariance trace is zero");
  const double intensity = coefficient(centered);
  return {spd_inverse(shrink_toward_scaled_identity(cov, intensity)), method, intensity};
}

}  // namespace detail

inline PrecisionMatrix ledoit_wolf_precision(const Matrix& centered) {
  return detail::shrunk_precision(centered, Estimator::ledoit_wolf, ledoit_wolf_shrinkage);
}

inline PrecisionMatrix oas_precision(const Matrix& centered) {
  return detail::shrunk_precision(centered, Estimator::oas, oas_shrinkage);
}

/// Moore-Penrose pseudoinverse; eigenvalues below 1e-10 * lambda_max are dropped.
inline PrecisionMatrix pinv_precision(const Matrix& cov) {
  require_dims(cov.rows() == cov.cols(), "covariance must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector& lambda = eig.eigenvalues();
  const double top = lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0;
  Vector inv = Vector::Zero(lambda.size());
  if (top > 0.0) {
    for (Index i = 0; i < lambda.size(); ++i)
      if (lambda(i) > kPinvRelativeCutoff * top) inv(i) = 1.0 / lambda(i);
  }
  const Matrix& v = eig.eigenvectors();
  Matrix p = v * inv.asDiagonal() * v.transpose();
  return {0.5 * (p + p.transpose()), Estimator::pinv, 0.0};
}

inline PrecisionMatrix pinv_precision(const ClassStats& stats) { return pinv_precision(stats.pooled_cov); }

/// Dispatch on the estimator tag. `x`/`y` are needed by the data-driven
/// shrinkage coefficients (they see the class-centered rows).
inline PrecisionMatrix estimate_precision(Estimator method, const Matrix& x, const LabelVector& y, const ClassStats& stats) {
  switch (method) {
    case Estimator::ks: return ks_precision(stats);
    case Estimator::pinv: return pinv_precision(stats);
    case Estimator::ledoit_wolf: return ledoit_wolf_precision(class_centered(x, y, stats.means));
    case Estimator::oas: return oas_precision(class_centered(x, y, stats.means));
  }
  return ks_precision(stats);
}

}  // namespace gda
