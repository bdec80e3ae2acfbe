#pragma once

// Gaussian discriminant analysis classifier, its posterior, and the logit
// ensemble with a text-derived zero-shot head.

#include <cmath>
#include <string>

#include "gda/data.hpp"
#include "gda/estimators.hpp"

namespace gda {

struct LinearClassifier {
  Matrix weight;  // K x D, row i = precision * mu_i
  Vector bias;    // K, log p_i - mu_i' precision mu_i / 2
  Vector priors;  // K

  Index k() const { return weight.rows(); }
  Index d() const { return weight.cols(); }
};

/// Class embeddings produced by a text encoder, one row per class.
struct ZeroShotHead {
  Matrix weight;  // K x D

  Index k() const { return weight.rows(); }
  Index d() const { return weight.cols(); }

  bool has_unit_rows(double tolerance = 1e-3) const {
    for (Index i = 0; i < weight.rows(); ++i)
      if (std::abs(weight.row(i).norm() - 1.0) > tolerance) return false;
    return true;
  }
};

class EnsembleModel {
 public:
  EnsembleModel(ZeroShotHead zeroshot, LinearClassifier gda, double alpha, Estimator estimator = Estimator::ks)
      : zeroshot_(std::move(zeroshot)), gda_(std::move(gda)), alpha_(alpha), estimator_(estimator) {
    if (!(alpha_ >= 0.0) || !std::isfinite(alpha_)) fail(ErrorKind::InvalidArgument, "alpha must be finite and >= 0");
    require_dims(zeroshot_.k() == gda_.k() && zeroshot_.d() == gda_.d(),
                 "zero-shot head is " + std::to_string(zeroshot_.k()) + "x" + std::to_string(zeroshot_.d()) +
                     " but the GDA classifier is " + std::to_string(gda_.k()) + "x" + std::to_string(gda_.d()));
  }

  const ZeroShotHead& zeroshot() const noexcept { return zeroshot_; }
  const LinearClassifier& gda() const noexcept { return gda_; }
  double alpha() const noexcept { return alpha_; }
  Estimator estimator() const noexcept { return estimator_; }
  Index k() const { return gda_.k(); }
  Index d() const { return gda_.d(); }

  EnsembleModel with_alpha(double alpha) const { return {zeroshot_, gda_, alpha, estimator_}; }

 private:
  ZeroShotHead zeroshot_;
  LinearClassifier gda_;
  double alpha_;
  Estimator estimator_;
};

inline Vector uniform_priors(Index k) { return Vector::Constant(k, 1.0 / static_cast<double>(k)); }

inline LinearClassifier build_classifier(const Matrix& means, const Matrix& precision, const Vector& priors) {
  require_dims(precision.rows() == means.cols() && precision.cols() == means.cols(), "precision must be D x D");
  require_dims(priors.size() == means.rows(), "priors must have K entries");
  if ((priors.array() < 0.0).any() || std::abs(priors.sum() - 1.0) > 1e-6) {
    fail(ErrorKind::InvalidArgument, "priors must be nonnegative and sum to 1");
  }
  LinearClassifier clf;
  clf.weight = means * precision;  // precision is symmetric
  clf.bias.resize(means.rows());
  for (Index i = 0; i < means.rows(); ++i) {
    clf.bias(i) = std::log(priors(i)) - 0.5 * clf.weight.row(i).dot(means.row(i));
  }
  clf.priors = priors;
  return clf;
}

inline LinearClassifier build_classifier(const Matrix& means, const PrecisionMatrix& precision, const Vector& priors) {
  return build_classifier(means, precision.values, priors);
}

inline Matrix gda_logits(const Matrix& x, const LinearClassifier& clf) {
  require_dims(x.cols() == clf.d(), "features have D=" + std::to_string(x.cols()) + ", classifier expects " + std::to_string(clf.d()));
  Matrix logits = x * clf.weight.transpose();
  logits.rowwise() += clf.bias.transpose();
  return logits;
}

/// Row-wise softmax with the row max subtracted first.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - top).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

inline Matrix gda_posterior(const Matrix& x, const LinearClassifier& clf) { return softmax_rows(gda_logits(x, clf)); }

inline Matrix zeroshot_logits(const Matrix& x, const ZeroShotHead& head) {
  require_dims(x.cols() == head.d(), "features have D=" + std::to_string(x.cols()) + ", zero-shot head expects " + std::to_string(head.d()));
  return x * head.weight.transpose();
}

/// x W_c' + alpha (x W' + b)
inline Matrix ensemble_logits(const Matrix& x, const ZeroShotHead& head, const LinearClassifier& clf, double alpha) {
  Matrix out = zeroshot_logits(x, head);
  if (alpha != 0.0) out += alpha * gda_logits(x, clf);
  return out;
}

inline Matrix ensemble_logits(const Matrix& x, const EnsembleModel& model) {
  return ensemble_logits(x, model.zeroshot(), model.gda(), model.alpha());
}

/// Row-wise argmax; ties go to the smallest class index.
inline LabelVector predict(const Matrix& logits) {
  if (logits.cols() < 1) fail(ErrorKind::InvalidArgument, "predict needs K >= 1");
  LabelVector out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<Label>(best);
  }
  return out;
}

/// Means -> pooled covariance -> precision -> classifier with uniform priors.
inline LinearClassifier fit_classifier(const Matrix& x, const LabelVector& y, Index k, Estimator estimator) {
  ClassStats stats = class_stats(x, y, k);
  PrecisionMatrix precision = estimate_precision(estimator, x, y, stats);
  return build_classifier(stats.means, precision, uniform_priors(k));
}

inline EnsembleModel fit_pipeline(const Matrix& x, const LabelVector& y, const ZeroShotHead& zeroshot, double alpha,
                                  Estimator estimator = Estimator::ks) {
  require_dims(zeroshot.d() == x.cols(), "zero-shot head and features disagree on D");
  return EnsembleModel(zeroshot, fit_classifier(x, y, zeroshot.k(), estimator), alpha, estimator);
}

inline EnsembleModel fit_pipeline(const LabeledSet& train, const ZeroShotHead& zeroshot, double alpha,
                                  Estimator estimator = Estimator::ks) {
  return fit_pipeline(train.x.values(), train.y, zeroshot, alpha, estimator);
}

}  // namespace gda
