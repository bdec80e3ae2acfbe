#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gda/error.hpp"

namespace gda {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

using Label = std::int64_t;
using LabelVector = std::vector<Label>;

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::DimensionMismatch, what);
}

/// Number of classes implied by a label vector (max label + 1).
inline Index infer_num_classes(const LabelVector& labels) {
  Label top = -1;
  for (Label y : labels) top = y > top ? y : top;
  return static_cast<Index>(top + 1);
}

inline void validate_labels(const LabelVector& labels, Index rows, Index k) {
  if (static_cast<Index>(labels.size()) != rows) {
    fail(ErrorKind::LengthMismatch, "label count " + std::to_string(labels.size()) +
                                        " != row count " + std::to_string(rows));
  }
  for (Label y : labels) {
    if (y < 0 || y >= k) {
      fail(ErrorKind::InvalidArgument,
           "label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
  }
}

}  // namespace gda
