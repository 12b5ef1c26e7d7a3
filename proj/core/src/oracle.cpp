#include "fmlp/oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fmlp::oracle {

double quadrature_integral(const std::function<double(double)>& f, const Measure& mu,
                           int resolution) {
  if (resolution < 3 || resolution % 2 == 0) {
    throw std::invalid_argument("quadrature: resolution must be odd and >= 3");
  }
  const double a = mu.support.lo;
  const double b = mu.support.hi;
  const int n = resolution - 1;  // even interval count
  const double h = (b - a) / n;

  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) {
    acc += f(a + h * i) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  const double integral = acc * h / 3.0;
  if (!std::isfinite(integral)) throw std::runtime_error("quadrature: non-finite integrand");
  return integral * mu.density();
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& loss,
                            const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: h must be > 0");
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (int i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = loss(probe);
    probe[i] = x[i] - h;
    const double down = loss(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("fd_gradient: non-finite loss near coordinate " +
                               std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double bspline_value_recursive(const std::vector<double>& knots, int order, int index, double x) {
  if (order == 1) {
    // Half-open spans, except that the very last point of the knot range
    // belongs to the final nonempty span (left limit at the right boundary).
    const double lo = knots[index];
    const double hi = knots[index + 1];
    if (x >= lo && x < hi) return 1.0;
    if (x == hi && hi == knots.back() && lo < hi) return 1.0;
    return 0.0;
  }
  const double left_den = knots[index + order - 1] - knots[index];
  const double right_den = knots[index + order] - knots[index + 1];
  double value = 0.0;
  if (left_den > 0.0) {
    value += (x - knots[index]) / left_den * bspline_value_recursive(knots, order - 1, index, x);
  }
  if (right_den > 0.0) {
    value += (knots[index + order] - x) / right_den *
             bspline_value_recursive(knots, order - 1, index + 1, x);
  }
  return value;
}

Eigen::VectorXd dense_forward(const FunctionalMLP& model, const std::function<double(double)>& g,
                              int resolution) {
  model.net.require_consistent();
  const Measure mu = Measure::uniform(model.basis.domain());
  const auto& knots = model.basis.knots();
  const int order = model.basis.order();
  const int p = model.basis.size();
  const int k = model.net.hidden_width();

  Eigen::VectorXd pre(k);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd w = model.net.hidden_w.row(i);
    const auto integrand = [&](double x) {
      double weight = 0.0;
      for (int l = 0; l < p; ++l) {
        if (w[l] != 0.0) weight += w[l] * bspline_value_recursive(knots, order, l, x);
      }
      return weight * g(x);
    };
    pre[i] = model.net.hidden_b[i] + quadrature_integral(integrand, mu, resolution);
  }
  return model.net.output_b + model.net.output_w * pre.array().tanh().matrix();
}

}  // namespace fmlp::oracle
