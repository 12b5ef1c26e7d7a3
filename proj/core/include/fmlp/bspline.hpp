#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmlp/interval.hpp"
#include "fmlp/sample.hpp"

namespace fmlp {

/// Uniform measure with total mass `mass` on a closed interval.
struct Measure {
  Interval support;
  double mass = 1.0;

  static Measure uniform(Interval support, double mass = 1.0) {
    support.require_valid("measure support");
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      throw std::invalid_argument("measure: mass must be positive and finite");
    }
    return Measure{support, mass};
  }

  /// Lebesgue density of the measure on its support.
  double density() const { return mass / support.length(); }
};

/// Thrown when a least-squares design has fewer independent columns than
/// basis functions. Carries the achieved and required ranks.
class RankError : public std::runtime_error {
 public:
  RankError(int rank, int needed)
      : std::runtime_error("rank-deficient design: rank " + std::to_string(rank) +
                           " of required " + std::to_string(needed) + " (deficient by " +
                           std::to_string(needed - rank) + ")"),
        rank_(rank),
        needed_(needed) {}

  int rank() const { return rank_; }
  int needed() const { return needed_; }

 private:
  int rank_;
  int needed_;
};

/// B-spline basis of `p` functions of a given order (degree + 1) on a closed
/// interval. Knots are clamped (order-fold boundary repetition) with uniform
/// interior knots. Immutable after construction and shareable across threads.
class BSplineBasis {
 public:
  BSplineBasis(int p, int order, Interval domain);

  int size() const { return p_; }
  int order() const { return order_; }
  const Interval& domain() const { return domain_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Index s of the knot span with knots[s] <= x < knots[s+1]. Evaluation is
  /// right-continuous at interior knots; x == domain.hi maps to the last
  /// nonempty span (left limit). x outside the domain is an error.
  int span(double x) const;

  /// Values of the `order` basis functions that can be nonzero at x, written
  /// to local[0..order-1]. The first covered basis index is span - order + 1.
  void eval_local(double x, int span, double* local) const;

  /// d-th derivatives of the same local functions (0 <= d < order).
  void eval_derivative_local(double x, int span, int d, double* local) const;

  /// Full length-p value vector at x.
  Eigen::VectorXd eval(double x) const;

  /// Full length-p d-th derivative vector at x (exact differentiation).
  Eigen::VectorXd eval_derivative(double x, int d) const;

  bool operator==(const BSplineBasis& other) const {
    return p_ == other.p_ && order_ == other.order_ && domain_ == other.domain_;
  }

  static constexpr int kMaxOrder = 32;

 private:
  int p_;
  int order_;
  Interval domain_;
  std::vector<double> knots_;
};

BSplineBasis make_basis(int p, int order, Interval domain);

/// m x p matrix of basis values at the given points.
Eigen::MatrixXd design_matrix(const BSplineBasis& basis, const Eigen::VectorXd& points);

/// Least-squares coefficients minimizing sum_j (y_j - sum_i a_i phi_i(x_j))^2,
/// solved by column-pivoted Householder QR. Throws RankError when the design
/// is rank deficient (including m < p).
Eigen::VectorXd fit_coefficients(const BSplineBasis& basis, const SampledFunction& f);

/// Gram matrix M_ij = integral phi_i phi_j dmu, computed per knot span with
/// `order`-node Gauss-Legendre quadrature (exact for the piecewise-polynomial
/// integrand). The measure support must coincide with the basis domain.
Eigen::MatrixXd gram_matrix(const BSplineBasis& basis, const Measure& mu);

}  // namespace fmlp
