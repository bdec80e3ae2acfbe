#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gda/npy.hpp"
#include "gda/rng.hpp"
#include "gda/types.hpp"

namespace gda {

/// N x D embedding matrix (rows are samples). Values are held in double
/// precision; on disk they are little-endian float32.
class FeatureMatrix {
 public:
  static constexpr double kUnitTolerance = 1e-4;

  FeatureMatrix() = default;

  explicit FeatureMatrix(Matrix values, bool normalized = false)
      : values_(std::move(values)), normalized_(normalized) {
    if (values_.rows() < 1 || values_.cols() < 1) {
      fail(ErrorKind::InvalidArgument, "feature matrix must have n >= 1 and d >= 1");
    }
    if (!values_.allFinite()) fail(ErrorKind::InvalidArgument, "feature matrix contains NaN or Inf");
    if (normalized_) {
      for (Index i = 0; i < values_.rows(); ++i) {
        if (std::abs(values_.row(i).norm() - 1.0) > kUnitTolerance) {
          fail(ErrorKind::InvalidArgument, "row " + std::to_string(i) + " is flagged normalized but not unit norm");
        }
      }
    }
  }

  const Matrix& values() const noexcept { return values_; }
  Index n() const noexcept { return values_.rows(); }
  Index d() const noexcept { return values_.cols(); }
  bool normalized() const noexcept { return normalized_; }

 private:
  Matrix values_;
  bool normalized_ = false;
};

/// Features paired with their labels.
struct LabeledSet {
  FeatureMatrix x;
  LabelVector y;
};

// ---------------------------------------------------------------------------
// NPY-backed I/O

/// Raw 2-D '<f4' array; zero rows are allowed here (e.g. an empty set of
/// new-class embeddings) but not in FeatureMatrix.
inline Matrix load_dense(const std::string& path) {
  npy::Array a = npy::read(path);
  if (a.shape.size() != 2) {
    fail(ErrorKind::MalformedHeader, path + ": expected a 2-D array, found " + std::to_string(a.shape.size()) + "-D");
  }
  std::vector<float> flat = npy::as_f32(a);
  const auto rows = static_cast<Index>(a.shape[0]);
  const auto cols = static_cast<Index>(a.shape[1]);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<double>(flat[static_cast<std::size_t>(i * cols + j)]);
  return m;
}

inline FeatureMatrix load_matrix(const std::string& path) {
  Matrix m = load_dense(path);
  if (m.rows() < 1 || m.cols() < 1) fail(ErrorKind::MalformedHeader, path + ": empty matrix");
  try {
    return FeatureMatrix(std::move(m));
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

inline std::vector<float> to_f32_row_major(const Matrix& m) {
  std::vector<float> flat(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) flat[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
  return flat;
}

inline void save_matrix(const std::string& path, const Matrix& m) {
  npy::write_f32(path, {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, to_f32_row_major(m));
}

inline void save_matrix(const std::string& path, const FeatureMatrix& x) { save_matrix(path, x.values()); }

inline LabelVector load_labels(const std::string& path) {
  npy::Array a = npy::read(path);
  if (a.shape.size() != 1) fail(ErrorKind::MalformedHeader, path + ": labels must be a 1-D array");
  return npy::as_i64(a);
}

inline void save_labels(const std::string& path, const LabelVector& labels) {
  npy::write_i64(path, {labels.size()}, labels);
}

inline Vector load_vector(const std::string& path) {
  npy::Array a = npy::read(path);
  if (a.shape.size() != 1) fail(ErrorKind::MalformedHeader, path + ": expected a 1-D array");
  std::vector<float> flat = npy::as_f32(a);
  Vector v(static_cast<Index>(flat.size()));
  for (std::size_t i = 0; i < flat.size(); ++i) v(static_cast<Index>(i)) = flat[i];
  return v;
}

inline void save_vector(const std::string& path, const Vector& v) {
  std::vector<float> flat(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) flat[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  npy::write_f32(path, {flat.size()}, flat);
}

// ---------------------------------------------------------------------------
// Preprocessing

inline constexpr double kZeroRowNorm = 1e-12;

inline FeatureMatrix l2_normalize(const FeatureMatrix& x) {
  Matrix out = x.values();
  for (Index i = 0; i < out.rows(); ++i) {
    double norm = out.row(i).norm();
    if (norm < kZeroRowNorm) fail(ErrorKind::ZeroRow, "row " + std::to_string(i) + " has zero norm");
    out.row(i) /= norm;
  }
  return FeatureMatrix(std::move(out), true);
}

inline LabeledSet select_rows(const LabeledSet& set, const std::vector<Index>& rows) {
  Matrix x(static_cast<Index>(rows.size()), set.x.d());
  LabelVector y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = set.x.values().row(rows[i]);
    y[i] = set.y[static_cast<std::size_t>(rows[i])];
  }
  return {FeatureMatrix(std::move(x), set.x.normalized()), std::move(y)};
}

// ---------------------------------------------------------------------------
// Evaluation splits

struct FewShotSplit {
  int shots = 0;
  std::uint64_t seed = 0;
  std::vector<Index> indices;  // sorted ascending, unique
};

/// Draws up to `shots` rows per class without replacement. Class c uses the
/// stream SplitMix64::for_cell(seed, c) over its row indices in ascending
/// order, via a partial Fisher-Yates shuffle.
inline FewShotSplit sample_fewshot(const LabelVector& labels, int shots, std::uint64_t seed) {
  if (shots < 1) fail(ErrorKind::InvalidArgument, "shots must be >= 1");
  std::map<Label, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<Index>(i));

  FewShotSplit split{shots, seed, {}};
  for (auto& [cls, pool] : by_class) {
    auto rng = SplitMix64::for_cell(seed, static_cast<std::uint64_t>(cls));
    const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(shots));
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    split.indices.insert(split.indices.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(split.indices.begin(), split.indices.end());
  return split;
}

struct LongTailGroups {
  std::set<Label> many;    // > 100 training images
  std::set<Label> medium;  // 20..100 inclusive
  std::set<Label> few;     // < 20
};

inline LongTailGroups partition_longtail_counts(const std::vector<std::int64_t>& counts) {
  LongTailGroups g;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    auto cls = static_cast<Label>(k);
    if (counts[k] > 100) {
      g.many.insert(cls);
    } else if (counts[k] >= 20) {
      g.medium.insert(cls);
    } else {
      g.few.insert(cls);
    }
  }
  return g;
}

inline LongTailGroups partition_longtail(const LabelVector& labels, Index num_classes = -1) {
  if (num_classes < 0) num_classes = infer_num_classes(labels);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (Label y : labels) {
    if (y >= 0 && y < num_classes) ++counts[static_cast<std::size_t>(y)];
  }
  return partition_longtail_counts(counts);
}

}  // namespace gda
