#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "fmlp/interval.hpp"

namespace fmlp {

/// A curve known only at finitely many (point, value) pairs.
struct SampledFunction {
  Eigen::VectorXd points;
  Eigen::VectorXd values;

  int size() const { return static_cast<int>(points.size()); }

  void require_consistent() const {
    if (points.size() != values.size()) {
      throw std::invalid_argument("sampled function: points/values length mismatch");
    }
    if (points.size() < 1) {
      throw std::invalid_argument("sampled function: needs at least one observation");
    }
  }

  bool within(const Interval& domain) const {
    for (int j = 0; j < size(); ++j) {
      if (!domain.contains(points[j])) return false;
    }
    return true;
  }
};

}  // namespace fmlp
