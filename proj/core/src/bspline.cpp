#include "fmlp/bspline.hpp"

#include <algorithm>
#include <cmath>

namespace fmlp {

namespace {

// Gauss-Legendre nodes/weights on [-1, 1], computed by Newton iteration on
// the Legendre polynomial. n <= kMaxOrder in practice.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Recurrence for P_n(x) and P'_n(x).
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
}

}  // namespace

BSplineBasis::BSplineBasis(int p, int order, Interval domain)
    : p_(p), order_(order), domain_(domain) {
  if (order < 1) throw std::invalid_argument("basis: order must be >= 1");
  if (order > kMaxOrder) throw std::invalid_argument("basis: order above 32 unsupported");
  if (p < order) {
    throw std::invalid_argument("basis: need p >= order (got p=" + std::to_string(p) +
                                ", order=" + std::to_string(order) + ")");
  }
  domain.require_valid("basis domain");

  // Clamped knot vector: `order` copies of each endpoint, p - order uniform
  // interior knots.
  knots_.resize(p + order);
  const int interior = p - order;
  for (int i = 0; i < order; ++i) knots_[i] = domain.lo;
  for (int i = 1; i <= interior; ++i) {
    knots_[order - 1 + i] = domain.lo + domain.length() * i / (interior + 1);
  }
  for (int i = 0; i < order; ++i) knots_[p + i] = domain.hi;
}

BSplineBasis make_basis(int p, int order, Interval domain) {
  return BSplineBasis(p, order, domain);
}

int BSplineBasis::span(double x) const {
  if (!domain_.contains(x)) {
    throw std::invalid_argument("basis: x=" + std::to_string(x) + " outside domain [" +
                                std::to_string(domain_.lo) + ", " + std::to_string(domain_.hi) +
                                "]");
  }
  if (x >= knots_[p_]) return p_ - 1;  // right boundary block, left limit
  const auto first = knots_.begin() + (order_ - 1);
  const auto last = knots_.begin() + (p_ + 1);
  const int s = static_cast<int>(std::upper_bound(first, last, x) - knots_.begin()) - 1;
  return std::min(s, p_ - 1);
}

void BSplineBasis::eval_local(double x, int s, double* local) const {
  // Cox-de Boor triangle (the standard iterative scheme).
  double left[kMaxOrder];
  double right[kMaxOrder];
  local[0] = 1.0;
  for (int j = 1; j < order_; ++j) {
    left[j] = x - knots_[s + 1 - j];
    right[j] = knots_[s + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = local[r] / (right[r + 1] + left[j - r]);
      local[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    local[j] = saved;
  }
}

void BSplineBasis::eval_derivative_local(double x, int s, int d, double* local) const {
  if (d < 0 || d >= order_) {
    throw std::invalid_argument("basis: derivative order d=" + std::to_string(d) +
                                " must satisfy 0 <= d < order=" + std::to_string(order_));
  }
  if (d == 0) {
    eval_local(x, s, local);
    return;
  }

  const int k = order_;
  double left[kMaxOrder];
  double right[kMaxOrder];
  double ndu[kMaxOrder][kMaxOrder];

  // Full triangle, keeping the intermediate-order values and knot differences
  // needed for derivatives.
  ndu[0][0] = 1.0;
  for (int j = 1; j < k; ++j) {
    left[j] = x - knots_[s + 1 - j];
    right[j] = knots_[s + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double tmp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    ndu[j][j] = saved;
  }

  double a[2][kMaxOrder];
  for (int r = 0; r < k; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    double value = 0.0;
    for (int dd = 1; dd <= d; ++dd) {
      value = 0.0;
      const int rk = r - dd;
      const int pk = k - 1 - dd;
      if (r >= dd) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        value = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = (rk >= -1) ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? dd - 1 : k - 1 - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        value += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][dd] = -a[s1][dd - 1] / ndu[pk + 1][r];
        value += a[s2][dd] * ndu[r][pk];
      }
      std::swap(s1, s2);
    }
    local[r] = value;
  }

  // Scale by (k-1)(k-2)...(k-d).
  double factor = static_cast<double>(k - 1);
  for (int dd = 2; dd <= d; ++dd) factor *= (k - dd);
  for (int r = 0; r < k; ++r) local[r] *= factor;
}

Eigen::VectorXd BSplineBasis::eval(double x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p_);
  const int s = span(x);
  double local[kMaxOrder];
  eval_local(x, s, local);
  for (int j = 0; j < order_; ++j) out[s - order_ + 1 + j] = local[j];
  return out;
}

Eigen::VectorXd BSplineBasis::eval_derivative(double x, int d) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p_);
  const int s = span(x);
  double local[kMaxOrder];
  eval_derivative_local(x, s, d, local);
  for (int j = 0; j < order_; ++j) out[s - order_ + 1 + j] = local[j];
  return out;
}

Eigen::MatrixXd design_matrix(const BSplineBasis& basis, const Eigen::VectorXd& points) {
  const int m = static_cast<int>(points.size());
  const int p = basis.size();
  const int k = basis.order();
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(m, p);
  double local[BSplineBasis::kMaxOrder];
  for (int j = 0; j < m; ++j) {
    const int s = basis.span(points[j]);
    basis.eval_local(points[j], s, local);
    for (int i = 0; i < k; ++i) design(j, s - k + 1 + i) = local[i];
  }
  return design;
}

Eigen::VectorXd fit_coefficients(const BSplineBasis& basis, const SampledFunction& f) {
  f.require_consistent();
  const int m = f.size();
  const int p = basis.size();
  if (m < p) throw RankError(m, p);
  if (!f.within(basis.domain())) {
    throw std::invalid_argument("fit: observation points outside the basis domain");
  }

  const Eigen::MatrixXd design = design_matrix(basis, f.points);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  const int rank = static_cast<int>(qr.rank());
  if (rank < p) throw RankError(rank, p);
  return qr.solve(f.values);
}

Eigen::MatrixXd gram_matrix(const BSplineBasis& basis, const Measure& mu) {
  if (mu.support != basis.domain()) {
    throw std::invalid_argument("gram: measure support must coincide with the basis domain");
  }
  const int p = basis.size();
  const int k = basis.order();
  const auto& knots = basis.knots();

  std::vector<double> nodes, weights;
  gauss_legendre(k, nodes, weights);

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  double local[BSplineBasis::kMaxOrder];
  const double density = mu.density();
  for (int s = k - 1; s < p; ++s) {
    const double a = knots[s];
    const double b = knots[s + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (int g = 0; g < k; ++g) {
      const double x = mid + half * nodes[g];
      const double w = half * weights[g] * density;
      basis.eval_local(x, s, local);
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
          gram(s - k + 1 + i, s - k + 1 + j) += w * local[i] * local[j];
        }
      }
    }
  }
  return gram;
}

}  // namespace fmlp
