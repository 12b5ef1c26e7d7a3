#pragma once

#include <stdexcept>

namespace fmlp {

/// Closed real interval [lo, hi] with lo < hi.
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double length() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
  bool valid() const { return lo < hi; }

  void require_valid(const char* what) const {
    if (!valid()) {
      throw std::invalid_argument(std::string(what) + ": empty or reversed interval");
    }
  }

  bool operator==(const Interval& other) const = default;
};

/// Uniform grid of m points spanning [lo, hi], endpoints exact.
inline double grid_point(const Interval& iv, int m, int j) {
  if (j == 0) return iv.lo;
  if (j == m - 1) return iv.hi;
  return iv.lo + (iv.hi - iv.lo) * (static_cast<double>(j) / (m - 1));
}

}  // namespace fmlp
