#pragma once

// Base-to-new generalization (nearest-neighbour data synthesis for classes
// without images) and unsupervised adaptation (EM over a shared-covariance
// Gaussian mixture initialised from the zero-shot head).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include "gda/classifier.hpp"
#include "gda/estimators.hpp"

namespace gda {

inline constexpr int kDefaultNeighbors = 64;

struct SynthesizedDataset {
  Matrix features;                  // rows copied from the base set
  LabelVector labels;               // new-class indices
  std::vector<Index> source_indices;
};

/// For each query row i, the k base rows with the largest inner product,
/// labelled first_label + i. Equal scores go to the smaller base index.
inline SynthesizedDataset knn_synthesize(const Matrix& base, const Matrix& queries, int k, Label first_label) {
  require_dims(base.cols() == queries.cols(), "new-class text embeddings have D=" + std::to_string(queries.cols()) +
                                                   ", base features have D=" + std::to_string(base.cols()));
  if (k < 1) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  const auto take = std::min<Index>(k, base.rows());
  SynthesizedDataset out;
  out.features.resize(take * queries.rows(), base.cols());

  std::vector<Index> order(static_cast<std::size_t>(base.rows()));
  for (Index q = 0; q < queries.rows(); ++q) {
    Vector scores = base * queries.row(q).transpose();
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + take, order.end(), [&](Index a, Index b) {
      return scores(a) > scores(b) || (scores(a) == scores(b) && a < b);
    });
    for (Index j = 0; j < take; ++j) {
      const Index src = order[static_cast<std::size_t>(j)];
      out.features.row(q * take + j) = base.row(src);
      out.labels.push_back(first_label + static_cast<Label>(q));
      out.source_indices.push_back(src);
    }
  }
  return out;
}

/// Fits an M-class model from K base classes plus neighbours synthesized for
/// text rows K..M-1. Statistics are recomputed over the union.
inline EnsembleModel b2n_fit(const Matrix& base_x, const LabelVector& base_y, Index num_base, const Matrix& all_text, int k,
                             double alpha, Estimator estimator = Estimator::ks) {
  const Index m = all_text.rows();
  if (num_base < 1 || num_base > m) fail(ErrorKind::InvalidArgument, "need 1 <= K <= M base classes");
  require_dims(all_text.cols() == base_x.cols(), "text embeddings and base features disagree on D");
  validate_labels(base_y, base_x.rows(), num_base);

  SynthesizedDataset synth = knn_synthesize(base_x, all_text.bottomRows(m - num_base), k, static_cast<Label>(num_base));
  Matrix x(base_x.rows() + synth.features.rows(), base_x.cols());
  x << base_x, synth.features;
  LabelVector y = base_y;
  y.insert(y.end(), synth.labels.begin(), synth.labels.end());
  return fit_pipeline(x, y, ZeroShotHead{all_text}, alpha, estimator);
}

// ---------------------------------------------------------------------------
// EM

enum class EmMode { ensemble, pure_gmm };

/// How the shared covariance is inverted when building the classifier.
enum class EmInversion { ks_regularized, exact };

/// `class_average`: (1/K) sum_k S_k / n_k, the per-component normalised
/// average. `pooled`: sum_k S_k / sum_k n_k, the shared-covariance MLE.
enum class CovarianceUpdate { class_average, pooled };

struct EmOptions {
  EmMode mode = EmMode::ensemble;
  double alpha = 1.0;
  int max_iter = 100;
  double tol = 1e-4;
  EmInversion inversion = EmInversion::ks_regularized;
  CovarianceUpdate covariance_update = CovarianceUpdate::class_average;
};

struct EmState {
  Matrix means;       // K x D
  Matrix covariance;  // D x D
  int iteration = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
};

struct Responsibilities {
  Matrix gamma;  // N x K
};

struct MStepResult {
  Matrix means;
  Matrix covariance;
  std::vector<Index> degenerate;  // components whose mass fell below kDegenerateMass
};

inline constexpr double kDegenerateMass = 1e-8;

inline EmState em_init(const ZeroShotHead& zeroshot, const Matrix& x) {
  if (x.rows() < 1) fail(ErrorKind::InvalidArgument, "EM needs at least one sample");
  require_dims(zeroshot.d() == x.cols(), "zero-shot head and features disagree on D");
  if (x.rows() < 2) fail(ErrorKind::DegenerateCovariance, "a single sample has no covariance");
  Matrix centered = x.rowwise() - x.colwise().mean();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  cov = 0.5 * (cov + cov.transpose());
  if (!(cov.trace() > kDegenerateTrace)) fail(ErrorKind::DegenerateCovariance, "unlabeled features are constant");
  return {zeroshot.weight, std::move(cov), 0, std::numeric_limits<double>::quiet_NaN()};
}

inline Matrix em_precision(const EmState& state, Index n, EmInversion inversion) {
  if (inversion == EmInversion::exact) {
    if (!(state.covariance.trace() > kDegenerateTrace)) fail(ErrorKind::DegenerateCovariance, "EM covariance collapsed");
    return detail::spd_inverse(state.covariance);
  }
  return ks_precision(state.covariance, n).values;
}

inline LinearClassifier em_classifier(const EmState& state, Index n, EmInversion inversion) {
  return build_classifier(state.means, em_precision(state, n, inversion), uniform_priors(state.means.rows()));
}

inline Responsibilities em_e_step(const Matrix& x, const EmState& state, const ZeroShotHead& zeroshot, double alpha, EmMode mode,
                                  EmInversion inversion = EmInversion::ks_regularized) {
  require_dims(state.means.cols() == x.cols(), "EM state and features disagree on D");
  LinearClassifier clf = em_classifier(state, x.rows(), inversion);
  Matrix logits = mode == EmMode::ensemble ? ensemble_logits(x, zeroshot, clf, alpha) : gda_logits(x, clf);
  return {softmax_rows(logits)};
}

/// Weighted means and shared covariance from soft assignments. A component
/// with (near) zero mass keeps its previous mean (the global mean when none
/// is given) and is left out of the covariance average.
inline MStepResult em_m_step(const Matrix& x, const Responsibilities& resp, const Matrix& previous_means = Matrix(),
                             CovarianceUpdate update = CovarianceUpdate::class_average) {
  const Matrix& gamma = resp.gamma;
  require_dims(gamma.rows() == x.rows(), "responsibilities and features disagree on N");
  const Index k = gamma.cols();
  const Index d = x.cols();
  MStepResult out{Matrix(k, d), Matrix::Zero(d, d), {}};

  double used_components = 0.0;
  double used_mass = 0.0;
  for (Index c = 0; c < k; ++c) {
    const double mass = gamma.col(c).sum();
    if (mass < kDegenerateMass) {
      out.degenerate.push_back(c);
      out.means.row(c) = previous_means.rows() == k ? Matrix(previous_means.row(c)) : Matrix(x.colwise().mean());
      continue;
    }
    out.means.row(c) = (gamma.col(c).transpose() * x) / mass;
    Matrix centered = x.rowwise() - out.means.row(c);
    Matrix scatter = centered.transpose() * gamma.col(c).asDiagonal() * centered;
    if (update == CovarianceUpdate::class_average) {
      out.covariance += scatter / mass;
    } else {
      out.covariance += scatter;
    }
    used_components += 1.0;
    used_mass += mass;
  }
  if (used_components > 0.0) {
    out.covariance /= update == CovarianceUpdate::class_average ? used_components : used_mass;
  }
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

/// Observed-data log-likelihood of an equal-prior mixture N(mu_k, P^-1).
inline double mixture_log_likelihood(const Matrix& x, const Matrix& means, const Matrix& precision) {
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) fail(ErrorKind::DegenerateCovariance, "precision is not positive definite");
  const Matrix l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const auto k = static_cast<double>(means.rows());
  const double constant = -std::log(k) + 0.5 * log_det - 0.5 * static_cast<double>(x.cols()) * std::log(2.0 * std::numbers::pi);

  // (x - mu)' P (x - mu) = ||(x - mu) L||^2 with P = L L'
  const Matrix y = x * l;
  const Matrix centers = means * l;
  double total = 0.0;
  Vector terms(means.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index c = 0; c < means.rows(); ++c) terms(c) = constant - 0.5 * (y.row(i) - centers.row(c)).squaredNorm();
    const double top = terms.maxCoeff();
    total += top + std::log((terms.array() - top).exp().sum());
  }
  return total;
}

struct EmResult {
  EnsembleModel model;
  EmState state;
  int iterations = 0;
  bool converged = false;
  std::vector<double> log_likelihood;  // one entry per parameter set, starting with the init state
  std::vector<Index> degenerate;       // components that lost all mass at some iteration
};

inline EmResult em_fit(const Matrix& x, const ZeroShotHead& zeroshot, const EmOptions& options = {}) {
  if (options.max_iter < 0) fail(ErrorKind::InvalidArgument, "max_iter must be >= 0");
  EmState state = em_init(zeroshot, x);
  const Index n = x.rows();
  auto objective = [&](const EmState& s) { return mixture_log_likelihood(x, s.means, em_precision(s, n, options.inversion)); };
  state.objective = objective(state);

  std::vector<double> trace{state.objective};
  std::vector<Index> degenerate;
  bool converged = false;
  for (int it = 0; it < options.max_iter; ++it) {
    Responsibilities resp = em_e_step(x, state, zeroshot, options.alpha, options.mode, options.inversion);
    MStepResult next = em_m_step(x, resp, state.means, options.covariance_update);
    for (Index c : next.degenerate)
      if (std::find(degenerate.begin(), degenerate.end(), c) == degenerate.end()) degenerate.push_back(c);
    const double change = (next.means - state.means).cwiseAbs().maxCoeff();
    state = EmState{std::move(next.means), std::move(next.covariance), it + 1, 0.0};
    state.objective = objective(state);
    trace.push_back(state.objective);
    if (change < options.tol) {
      converged = true;
      break;
    }
  }
  EnsembleModel model(zeroshot, em_classifier(state, n, options.inversion), options.alpha, Estimator::ks);
  return {std::move(model), state, state.iteration, converged, std::move(trace), std::move(degenerate)};
}

}  // namespace gda
