#include <doctest.h>

#include <cmath>

#include "fmlp/fmodel.hpp"
#include "fmlp/oracle.hpp"
#include "fmlp/rng.hpp"

using namespace fmlp;

namespace {

MlpParams random_net(int k, int d, int o, Rng& rng, double scale = 1.0) {
  MlpParams net;
  net.hidden_w.resize(k, d);
  net.hidden_b.resize(k);
  net.output_w.resize(o, k);
  net.output_b.resize(o);
  for (int i = 0; i < k; ++i) {
    for (int l = 0; l < d; ++l) net.hidden_w(i, l) = rng.uniform(-scale, scale);
    net.hidden_b[i] = rng.uniform(-scale, scale);
  }
  for (int r = 0; r < o; ++r) {
    for (int i = 0; i < k; ++i) net.output_w(r, i) = rng.uniform(-scale, scale);
    net.output_b[r] = rng.uniform(-scale, scale);
  }
  return net;
}

SampledFunction grid_samples(const Interval& domain, int m,
                             const std::function<double(double)>& g) {
  SampledFunction f;
  f.points.resize(m);
  f.values.resize(m);
  for (int j = 0; j < m; ++j) {
    f.points[j] = grid_point(domain, m, j);
    f.values[j] = g(f.points[j]);
  }
  return f;
}

}  // namespace

TEST_CASE("approx_integral") {
  const BSplineBasis basis = make_basis(5, 4, {0.0, 1.0});

  SUBCASE("unit weight function on constant data returns the constant") {
    // All-ones coefficients make F identically 1 by partition of unity.
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(5);
    SampledFunction f;
    f.points = Eigen::VectorXd::LinSpaced(17, 0.0, 1.0);
    f.values = Eigen::VectorXd::Constant(17, 3.25);
    CHECK(approx_integral(basis, w, f) == doctest::Approx(3.25).epsilon(1e-14));
  }

  SUBCASE("single observation") {
    Eigen::VectorXd w(5);
    w << 1.0, -0.5, 2.0, 0.0, 1.5;
    SampledFunction f;
    f.points = Eigen::VectorXd::Constant(1, 0.37);
    f.values = Eigen::VectorXd::Constant(1, -2.0);
    const double weight = basis.eval(0.37).dot(w);
    CHECK(approx_integral(basis, w, f) == doctest::Approx(weight * -2.0).epsilon(1e-14));
  }

  SUBCASE("monte-carlo estimate matches the quadrature oracle") {
    Rng rng(314);
    Eigen::VectorXd w(5);
    for (int i = 0; i < 5; ++i) w[i] = rng.uniform(-2.0, 2.0);
    const auto g = [](double x) { return std::sin(5.0 * x) + 0.5; };
    const Measure mu = Measure::uniform(basis.domain());
    const double truth = oracle::quadrature_integral(
        [&](double x) { return basis.eval(x).dot(w) * g(x); }, mu, 4001);

    const int m = 10000;
    SampledFunction f;
    f.points.resize(m);
    f.values.resize(m);
    std::vector<double> terms(m);
    for (int j = 0; j < m; ++j) {
      f.points[j] = rng.uniform01();
      f.values[j] = g(f.points[j]);
      terms[j] = basis.eval(f.points[j]).dot(w) * f.values[j];
    }
    const double estimate = approx_integral(basis, w, f);
    double mean = 0.0;
    for (double t : terms) mean += t;
    mean /= m;
    double var = 0.0;
    for (double t : terms) var += (t - mean) * (t - mean);
    const double sigma = std::sqrt(var / (m - 1));
    CHECK(std::abs(estimate - truth) < 3.0 * sigma / std::sqrt(static_cast<double>(m)));
  }

  SUBCASE("monte-carlo error follows the 1/sqrt(m) law") {
    Rng rng(1618);
    Eigen::VectorXd w(5);
    for (int i = 0; i < 5; ++i) w[i] = rng.uniform(-2.0, 2.0);
    const auto g = [](double x) { return std::cos(4.0 * x) + x; };
    const Measure mu = Measure::uniform(basis.domain());
    const double truth = oracle::quadrature_integral(
        [&](double x) { return basis.eval(x).dot(w) * g(x); }, mu, 4001);

    const auto rms_error = [&](int m, int draws) {
      double acc = 0.0;
      for (int t = 0; t < draws; ++t) {
        SampledFunction f;
        f.points.resize(m);
        f.values.resize(m);
        for (int j = 0; j < m; ++j) {
          f.points[j] = rng.uniform01();
          f.values[j] = g(f.points[j]);
        }
        const double err = approx_integral(basis, w, f) - truth;
        acc += err * err;
      }
      return std::sqrt(acc / draws);
    };
    const double ratio = rms_error(100, 200) / rms_error(400, 200);
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 2.7);
  }
}

TEST_CASE("forward_fmlp") {
  const BSplineBasis basis = make_basis(5, 4, {0.0, 1.0});
  Rng rng(271828);

  SUBCASE("zero weight functions make the output input-independent") {
    MlpParams net = random_net(3, 5, 2, rng);
    net.hidden_w.setZero();
    const FunctionalMLP model{basis, net, 0};
    const Eigen::VectorXd expected =
        net.output_b + net.output_w * net.hidden_b.array().tanh().matrix();
    for (int t = 0; t < 5; ++t) {
      SampledFunction f;
      f.points.resize(7);
      f.values.resize(7);
      for (int j = 0; j < 7; ++j) {
        f.points[j] = rng.uniform01();
        f.values[j] = rng.uniform(-5.0, 5.0);
      }
      CHECK((forward_fmlp(model, f) - expected).lpNorm<Eigen::Infinity>() < 1e-14);
    }
  }

  SUBCASE("identity composition gives tanh(1/2)") {
    MlpParams net;
    net.hidden_w = Eigen::MatrixXd::Ones(1, 5);  // F identically 1
    net.hidden_b = Eigen::VectorXd::Zero(1);
    net.output_w = Eigen::MatrixXd::Ones(1, 1);
    net.output_b = Eigen::VectorXd::Zero(1);
    const FunctionalMLP model{basis, net, 0};
    SampledFunction f;
    f.points = Eigen::VectorXd::LinSpaced(11, 0.0, 1.0);
    f.values = Eigen::VectorXd::Constant(11, 0.5);
    CHECK(forward_fmlp(model, f)[0] == doctest::Approx(0.46211715726).epsilon(1e-10));
  }

  SUBCASE("permutation of the observation pairs leaves the output unchanged") {
    const FunctionalMLP model{basis, random_net(3, 5, 2, rng), 0};
    SampledFunction f;
    const int m = 50;
    f.points.resize(m);
    f.values.resize(m);
    for (int j = 0; j < m; ++j) {
      f.points[j] = rng.uniform01();
      f.values[j] = rng.uniform(-2.0, 2.0);
    }
    const Eigen::VectorXd base = forward_fmlp(model, f);
    for (int t = 0; t < 10; ++t) {
      SampledFunction shuffled = f;
      for (int i = m - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(i + 1));
        std::swap(shuffled.points[i], shuffled.points[j]);
        std::swap(shuffled.values[i], shuffled.values[j]);
      }
      CHECK((forward_fmlp(model, shuffled) - base).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }

  SUBCASE("agrees with the dense-quadrature oracle on fine samplings") {
    const FunctionalMLP model{basis, random_net(4, 5, 3, rng, 1.5), 0};
    const auto g = [](double x) { return std::sin(3.0 * x) - 0.2 * x; };
    const SampledFunction f = grid_samples(basis.domain(), 10000, g);
    const Eigen::VectorXd dense = oracle::dense_forward(model, g, 4001);
    const Eigen::VectorXd empirical = forward_fmlp(model, f);
    CHECK((dense - empirical).lpNorm<Eigen::Infinity>() /
              std::max(1.0, dense.lpNorm<Eigen::Infinity>()) <
          1e-3);
  }
}

TEST_CASE("forward_naive") {
  Rng rng(60221);

  SUBCASE("zero hidden weights give a constant output") {
    MlpParams net = random_net(3, 10, 2, rng);
    net.hidden_w.setZero();
    const NaiveMLP model{net, 0};
    SampledFunction f;
    f.points = Eigen::VectorXd::LinSpaced(10, 0.0, 1.0);
    Eigen::VectorXd first;
    for (int t = 0; t < 5; ++t) {
      f.values = Eigen::VectorXd::NullaryExpr(10, [&](int) { return rng.uniform(-3.0, 3.0); });
      const Eigen::VectorXd out = forward_naive(model, f);
      if (t == 0) first = out;
      CHECK((out - first).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }

  SUBCASE("cancellation") {
    MlpParams net;
    net.hidden_w = Eigen::MatrixXd::Ones(1, 2);
    net.hidden_b = Eigen::VectorXd::Zero(1);
    net.output_w = Eigen::MatrixXd::Ones(1, 1);
    net.output_b = Eigen::VectorXd::Zero(1);
    const NaiveMLP model{net, 0};
    SampledFunction f;
    f.points = Eigen::VectorXd::LinSpaced(2, 0.0, 1.0);
    f.values.resize(2);
    f.values << 0.1, -0.1;
    CHECK(forward_naive(model, f)[0] == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("rejects inputs off the shared grid size") {
    const NaiveMLP model{random_net(2, 5, 1, rng), 0};
    SampledFunction f;
    f.points = Eigen::VectorXd::LinSpaced(6, 0.0, 1.0);
    f.values = Eigen::VectorXd::Zero(6);
    CHECK_THROWS_AS(forward_naive(model, f), std::invalid_argument);
  }

  SUBCASE("every functional model has an exact naive counterpart on a shared grid") {
    const BSplineBasis basis = make_basis(5, 4, {0.0, 1.0});
    const FunctionalMLP fmlp{basis, random_net(3, 5, 2, rng, 1.5), 0};
    const int m = 31;
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(m, 0.0, 1.0);

    // c_ij = F_i(w_i, x_j) / m reproduces the empirical-mean pre-activation.
    NaiveMLP naive{fmlp.net, 0};
    naive.net.hidden_w.resize(3, m);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < m; ++j) {
        naive.net.hidden_w(i, j) = basis.eval(grid[j]).dot(fmlp.net.hidden_w.row(i)) / m;
      }
    }

    for (int t = 0; t < 100; ++t) {
      SampledFunction f;
      f.points = grid;
      f.values = Eigen::VectorXd::NullaryExpr(m, [&](int) { return rng.uniform(-2.0, 2.0); });
      const Eigen::VectorXd functional = forward_fmlp(fmlp, f);
      const Eigen::VectorXd numeric = forward_naive(naive, f);
      CHECK((functional - numeric).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
}

TEST_CASE("forward_fpmlp") {
  const BSplineBasis basis = make_basis(5, 4, {0.0, 1.0});
  Rng rng(141421);

  SUBCASE("in-span functions reduce to the plain forward on true coefficients") {
    const ProjectionMLP model{basis, random_net(3, 5, 2, rng), 0};
    Eigen::VectorXd alpha(5);
    for (int i = 0; i < 5; ++i) alpha[i] = rng.uniform(-2.0, 2.0);
    const SampledFunction f =
        grid_samples(basis.domain(), 40, [&](double x) { return basis.eval(x).dot(alpha); });
    const Eigen::VectorXd via_projection = forward_fpmlp(model, f);
    const Eigen::VectorXd direct = model.net.forward(alpha);
    CHECK((via_projection - direct).lpNorm<Eigen::Infinity>() < 1e-9);
  }

  SUBCASE("output is independent of the sampling points for in-span inputs") {
    const ProjectionMLP model{basis, random_net(3, 5, 2, rng), 0};
    Eigen::VectorXd alpha(5);
    for (int i = 0; i < 5; ++i) alpha[i] = rng.uniform(-2.0, 2.0);
    const auto g = [&](double x) { return basis.eval(x).dot(alpha); };

    const SampledFunction uniform = grid_samples(basis.domain(), 40, g);
    SampledFunction scattered;
    scattered.points.resize(60);
    scattered.values.resize(60);
    for (int j = 0; j < 60; ++j) {
      scattered.points[j] = rng.uniform01();
      scattered.values[j] = g(scattered.points[j]);
    }
    CHECK((forward_fpmlp(model, uniform) - forward_fpmlp(model, scattered))
              .lpNorm<Eigen::Infinity>() < 1e-9);
  }

  SUBCASE("rank errors propagate") {
    const ProjectionMLP model{basis, random_net(2, 5, 1, rng), 0};
    SampledFunction f;
    f.points = Eigen::VectorXd::LinSpaced(3, 0.0, 1.0);
    f.values = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(forward_fpmlp(model, f), RankError);
  }

  SUBCASE("projection net and gram-transformed functional net agree") {
    // Hidden weights c on projection coordinates match functional weights
    // d = M^{-1} c up to the empirical-mean integration error.
    const Measure mu = Measure::uniform(basis.domain());
    MlpParams proj_net = random_net(3, 5, 1, rng);
    MlpParams func_net = proj_net;
    for (int i = 0; i < 3; ++i) {
      func_net.hidden_w.row(i) =
          equivalence_weights(basis, proj_net.hidden_w.row(i).transpose(), mu).transpose();
    }
    const ProjectionMLP fp{basis, proj_net, 0};
    const FunctionalMLP fm{basis, func_net, 0};

    for (int t = 0; t < 10; ++t) {
      const double a = rng.uniform(0.5, 3.0);
      const double b = rng.uniform(-1.0, 1.0);
      const SampledFunction f = grid_samples(basis.domain(), 1001, [&](double x) {
        return std::sin(a * x + b) + 0.3 * x * x;
      });
      const Eigen::VectorXd via_projection = forward_fpmlp(fp, f);
      const Eigen::VectorXd via_functional = forward_fmlp(fm, f);
      const double scale = std::max(1.0, via_projection.lpNorm<Eigen::Infinity>());
      CHECK((via_projection - via_functional).lpNorm<Eigen::Infinity>() / scale < 1e-2);
    }
  }
}

TEST_CASE("equivalence_weights") {
  Rng rng(577215);

  SUBCASE("identity gram returns the coefficients unchanged") {
    // Order-1 splines on unit spans with total mass 4 give M = I.
    const BSplineBasis basis = make_basis(4, 1, {0.0, 4.0});
    const Measure mu = Measure::uniform(basis.domain(), 4.0);
    Eigen::VectorXd c(4);
    c << 1.0, -2.0, 0.5, 3.0;
    CHECK((equivalence_weights(basis, c, mu) - c).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  SUBCASE("scalar case divides by the single gram entry") {
    const BSplineBasis basis = make_basis(1, 1, {0.0, 2.0});
    const Measure mu = Measure::uniform(basis.domain(), 5.0);  // integral of phi^2 is 5
    Eigen::VectorXd c(1);
    c << 2.0;
    CHECK(equivalence_weights(basis, c, mu)[0] == doctest::Approx(0.4).epsilon(1e-12));
  }

  SUBCASE("round trip through the gram matrix") {
    const BSplineBasis basis = make_basis(7, 4, {1.0, 21.0});
    const Measure mu = Measure::uniform(basis.domain());
    const Eigen::MatrixXd gram = gram_matrix(basis, mu);
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd c(7);
      for (int i = 0; i < 7; ++i) c[i] = rng.uniform(-5.0, 5.0);
      const Eigen::VectorXd d = equivalence_weights(basis, c, mu);
      CHECK((gram * d - c).lpNorm<Eigen::Infinity>() < 1e-10);
    }
  }
}

TEST_CASE("param_count") {
  Rng rng(1729);
  SUBCASE("functional model") {
    const BSplineBasis basis = make_basis(5, 4, {0.0, 1.0});
    const Model model = FunctionalMLP{basis, random_net(2, 5, 3, rng), 0};
    CHECK(param_count(model) == 21);
  }
  SUBCASE("naive model") {
    const Model model = NaiveMLP{random_net(3, 101, 3, rng), 0};
    CHECK(param_count(model) == 318);
  }
  SUBCASE("empty hidden layer is invalid") {
    MlpParams net;
    net.hidden_w.resize(0, 5);
    net.hidden_b.resize(0);
    net.output_w.resize(1, 0);
    net.output_b.resize(1);
    CHECK_THROWS_AS(param_count(net), std::invalid_argument);
  }
}

TEST_CASE("argmax ties break toward the lowest index") {
  Eigen::VectorXd out(3);
  out << 0.5, 0.5, 0.1;
  CHECK(argmax_class(out) == 0);
  out << 0.1, 0.7, 0.7;
  CHECK(argmax_class(out) == 1);
}

TEST_CASE("model serialization round-trips binary64 exactly") {
  Rng rng(8675309);
  const BSplineBasis basis = make_basis(6, 4, {1.0, 21.0});

  const auto bitwise_equal = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (int i = 0; i < a.size(); ++i) {
      if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
  };
  const auto roundtrip_exact = [&](const Model& model) {
    const Model copy = model_from_json(model_to_json(model));
    CHECK(variant_name(variant_of(copy)) == variant_name(variant_of(model)));
    const MlpParams& a = params_of(model);
    const MlpParams& b = params_of(copy);
    CHECK(bitwise_equal(a.hidden_w, b.hidden_w));
    CHECK(bitwise_equal(a.hidden_b, b.hidden_b));
    CHECK(bitwise_equal(a.output_w, b.output_w));
    CHECK(bitwise_equal(a.output_b, b.output_b));
  };

  for (int t = 0; t < 5; ++t) {
    // Awkward magnitudes to stress the shortest-round-trip printing.
    MlpParams net = random_net(3, 6, 2, rng, 1e3);
    net.hidden_w(0, 0) = 1.0 / 3.0;
    net.output_b[0] = 1e-17;
    roundtrip_exact(FunctionalMLP{basis, net, rng.next_u64()});
    roundtrip_exact(ProjectionMLP{basis, net, rng.next_u64()});
    roundtrip_exact(NaiveMLP{random_net(2, 11, 3, rng, 1e-4), rng.next_u64()});
  }

  SUBCASE("seed provenance survives") {
    const Model model = NaiveMLP{random_net(2, 4, 1, rng), 0xDEADBEEFCAFEBABEULL};
    const Model copy = model_from_json(model_to_json(model));
    CHECK(std::get<NaiveMLP>(copy).seed == 0xDEADBEEFCAFEBABEULL);
  }

  SUBCASE("basis metadata survives") {
    const Model model = FunctionalMLP{basis, random_net(2, 6, 1, rng), 7};
    const Model copy = model_from_json(model_to_json(model));
    const auto& restored = std::get<FunctionalMLP>(copy);
    CHECK(restored.basis.size() == 6);
    CHECK(restored.basis.order() == 4);
    CHECK(restored.basis.domain().lo == 1.0);
    CHECK(restored.basis.domain().hi == 21.0);
  }
}
