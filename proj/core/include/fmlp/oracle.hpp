#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "fmlp/bspline.hpp"
#include "fmlp/fmodel.hpp"

namespace fmlp::oracle {

// Brute-force reference implementations for validating the main paths.
// These deliberately share no evaluation or integration code with the
// modules they check: integration is composite Simpson (the main path uses
// Gauss-Legendre) and B-spline values come from the naive two-term
// recursion (the main path uses the iterative triangular scheme).

/// Integral of f against a uniform measure by composite Simpson with
/// `resolution` points (odd, >= 3).
double quadrature_integral(const std::function<double(double)>& f, const Measure& mu,
                           int resolution);

/// Central-difference gradient of a scalar loss.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& loss,
                            const Eigen::VectorXd& x, double h);

/// Value of one B-spline basis function by direct Cox-de Boor recursion on
/// an explicit knot vector (index counts basis functions, 0-based).
double bspline_value_recursive(const std::vector<double>& knots, int order, int index, double x);

/// Functional MLP output with true integrals (Simpson at the given
/// resolution) in place of the empirical-mean approximation.
Eigen::VectorXd dense_forward(const FunctionalMLP& model, const std::function<double(double)>& g,
                              int resolution);

}  // namespace fmlp::oracle
