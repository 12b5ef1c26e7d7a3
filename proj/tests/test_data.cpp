#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fmlp/data.hpp"
#include "fmlp/oracle.hpp"
#include "fmlp/rng.hpp"

using namespace fmlp;

namespace {

// Well-formed spectra CSV with synthetic smooth rows.
std::string synthetic_spectra_csv(int rows, std::uint64_t seed) {
  std::ostringstream out;
  out.precision(12);
  for (int j = 0; j < 100; ++j) out << "abs_" << 850 + 2 * j << ",";
  out << "fat\n";
  Rng rng(seed);
  for (int i = 0; i < rows; ++i) {
    const double a = rng.uniform(2.0, 4.0);
    const double b = rng.uniform(-1.0, 1.0);
    for (int j = 0; j < 100; ++j) {
      const double x = (850.0 + 2.0 * j - 950.0) / 100.0;
      out << a + b * x + 0.2 * std::sin(3.0 * x) << ",";
    }
    out << rng.uniform(5.0, 45.0) << "\n";
  }
  return out.str();
}

}  // namespace

TEST_CASE("generating waveforms") {
  SUBCASE("triangular peaks and supports") {
    CHECK(wave_h(11.0, 1) == 6.0);
    CHECK(wave_h(5.0, 1) == 0.0);
    CHECK(wave_h(17.0, 1) == 0.0);
    CHECK(wave_h(15.0, 2) == 6.0);
    CHECK(wave_h(7.0, 3) == 6.0);
    CHECK_THROWS_AS(wave_h(0.0, 4), std::invalid_argument);
  }

  SUBCASE("mixture endpoints and midpoint") {
    // u = 1 gives pure h1 for class 0; u = 0.5 at the h1 peak mixes in h2.
    for (double t : {1.0, 8.5, 11.0, 19.0, 21.0}) {
      CHECK(wave_value(0, 1.0, t) == doctest::Approx(wave_h(t, 1)).epsilon(1e-15));
    }
    CHECK(wave_value(0, 0.5, 11.0) == doctest::Approx(4.0).epsilon(1e-15));
  }

  SUBCASE("dataset dimensions follow the protocol") {
    WaveSpec spec;
    spec.n_per_class = 150;
    spec.seed = 3;
    const LabeledDataset ds = gen_waveform(spec);
    CHECK(ds.size() == 450);
    CHECK(ds.output_dim() == 3);
    for (const auto& f : ds.functions) CHECK(f.size() == 101);
    CHECK(ds.functions.front().points[0] == 1.0);
    CHECK(ds.functions.front().points[100] == 21.0);
    // 150 of each class.
    for (int cls = 0; cls < 3; ++cls) {
      CHECK(std::count(ds.labels.begin(), ds.labels.end(), cls) == 150);
    }
  }

  SUBCASE("noiseless curves are convex combinations of the class pair") {
    WaveSpec spec;
    spec.n_per_class = 30;
    spec.noise_sd = 0.0;
    spec.seed = 8;
    const LabeledDataset ds = gen_waveform(spec);
    const int pairs[3][2] = {{1, 2}, {1, 3}, {2, 3}};
    for (int i = 0; i < ds.size(); ++i) {
      const auto& f = ds.functions[i];
      const int* pair = pairs[ds.labels[i]];
      for (int j = 0; j < f.size(); ++j) {
        const double lo = std::min(wave_h(f.points[j], pair[0]), wave_h(f.points[j], pair[1]));
        const double hi = std::max(wave_h(f.points[j], pair[0]), wave_h(f.points[j], pair[1]));
        CHECK(f.values[j] >= lo - 1e-12);
        CHECK(f.values[j] <= hi + 1e-12);
      }
    }
  }

  SUBCASE("labels and one-hot targets agree") {
    WaveSpec spec;
    spec.n_per_class = 20;
    spec.seed = 11;
    const LabeledDataset ds = gen_waveform(spec);
    for (int i = 0; i < ds.size(); ++i) {
      int argmax = 0;
      ds.targets.row(i).maxCoeff(&argmax);
      CHECK(argmax == ds.labels[i]);
      CHECK(ds.targets.row(i).sum() == 1.0);
    }
  }
}

TEST_CASE("loading spectra") {
  SUBCASE("well-formed file with 215 rows") {
    std::istringstream in(synthetic_spectra_csv(215, 5));
    const LabeledDataset ds = load_tecator(in, "test");
    CHECK(ds.size() == 215);
    CHECK(ds.output_dim() == 2);
    CHECK(ds.domain.lo == 850.0);
    CHECK(ds.domain.hi == 1050.0);
    for (const auto& f : ds.functions) {
      CHECK(f.size() == 100);
      CHECK(f.points[0] == 850.0);
      CHECK(f.points[99] == 1048.0);
    }
  }

  SUBCASE("fat threshold is strict at 20") {
    std::ostringstream rows;
    for (int j = 0; j < 100; ++j) rows << "abs_" << 850 + 2 * j << ",";
    rows << "fat\n";
    for (double fat : {19.99, 20.0, 20.01}) {
      for (int j = 0; j < 100; ++j) rows << 3.0 << ",";
      rows << fat << "\n";
    }
    std::istringstream in(rows.str());
    const LabeledDataset ds = load_tecator(in, "test");
    CHECK(ds.labels == std::vector<int>{0, 1, 1});
  }

  SUBCASE("short rows are rejected with their row number") {
    std::ostringstream rows;
    for (int j = 0; j < 100; ++j) rows << "abs_" << 850 + 2 * j << ",";
    rows << "fat\n";
    for (int j = 0; j < 99; ++j) rows << 1.0 << ",";  // one channel missing
    rows << 12.0 << "\n";
    std::istringstream in(rows.str());
    try {
      load_tecator(in, "test");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
  }

  SUBCASE("non-numeric and non-finite values are rejected") {
    std::ostringstream rows;
    for (int j = 0; j < 100; ++j) rows << "abs_" << 850 + 2 * j << ",";
    rows << "fat\n";
    for (int j = 0; j < 99; ++j) rows << 1.0 << ",";
    rows << "oops,12.0\n";
    std::istringstream in(rows.str());
    CHECK_THROWS_AS(load_tecator(in, "test"), DataError);

    std::ostringstream rows2;
    for (int j = 0; j < 100; ++j) rows2 << "abs_" << 850 + 2 * j << ",";
    rows2 << "fat\n";
    for (int j = 0; j < 99; ++j) rows2 << 1.0 << ",";
    rows2 << "inf,12.0\n";
    std::istringstream in2(rows2.str());
    CHECK_THROWS_AS(load_tecator(in2, "test"), DataError);
  }

  SUBCASE("missing file names the expected format") {
    try {
      load_tecator("/definitely/not/here.csv");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("abs_850") != std::string::npos);
    }
  }
}

TEST_CASE("second-derivative preprocessing") {
  const Interval domain{850.0, 1050.0};
  const BSplineBasis basis = make_basis(12, 4, domain);

  const auto curve_on_grid = [&](const std::function<double(double)>& g) {
    SampledFunction f;
    f.points.resize(100);
    f.values.resize(100);
    for (int j = 0; j < 100; ++j) {
      f.points[j] = 850.0 + 2.0 * j;
      f.values[j] = g(f.points[j]);
    }
    return f;
  };

  const auto wrap = [&](SampledFunction f) {
    LabeledDataset ds;
    ds.domain = domain;
    ds.functions.push_back(std::move(f));
    ds.targets = Eigen::MatrixXd::Zero(1, 2);
    ds.targets(0, 0) = 1.0;
    ds.labels = {0};
    return ds;
  };

  SUBCASE("quadratic curves map to the constant 2") {
    const auto ds = wrap(curve_on_grid([](double x) {
      const double t = x - 850.0;
      return t * t;
    }));
    const LabeledDataset out = second_derivative_preprocess(ds, basis);
    for (int j = 2; j < 98; ++j) CHECK(std::abs(out.functions[0].values[j] - 2.0) < 1e-8);
    CHECK(out.labels == ds.labels);
  }

  SUBCASE("linear curves map to zero") {
    const auto ds = wrap(curve_on_grid([](double x) { return 0.5 * x - 3.0; }));
    const LabeledDataset out = second_derivative_preprocess(ds, basis);
    for (int j = 0; j < 100; ++j) CHECK(std::abs(out.functions[0].values[j]) < 1e-8);
  }

  SUBCASE("matches central second differences of the fitted spline") {
    const auto g = [](double x) { return std::sin((x - 850.0) / 40.0) + 0.001 * (x - 950.0); };
    const auto ds = wrap(curve_on_grid(g));
    const LabeledDataset out = second_derivative_preprocess(ds, basis);

    const Eigen::VectorXd alpha = fit_coefficients(basis, ds.functions[0]);
    const double h = 1e-3;
    for (int j = 5; j < 95; ++j) {
      const double x = ds.functions[0].points[j];
      const double mid = basis.eval(x).dot(alpha);
      const double up = basis.eval(x + h).dot(alpha);
      const double down = basis.eval(x - h).dot(alpha);
      const double numeric = (up - 2.0 * mid + down) / (h * h);
      const double scale = std::max(1e-6, std::abs(numeric));
      CHECK(std::abs(out.functions[0].values[j] - numeric) / scale < 1e-3);
    }
  }

  SUBCASE("preprocessing is linear in the input curve") {
    Rng rng(17);
    const auto f1 = curve_on_grid([](double x) { return std::sin((x - 850.0) / 30.0); });
    const auto f2 = curve_on_grid([](double x) { return std::cos((x - 850.0) / 55.0) + 0.2; });
    const double a = 1.7, b = -0.6;
    SampledFunction mixed = f1;
    mixed.values = a * f1.values + b * f2.values;

    const auto out_mixed = second_derivative_preprocess(wrap(mixed), basis);
    const auto out_1 = second_derivative_preprocess(wrap(f1), basis);
    const auto out_2 = second_derivative_preprocess(wrap(f2), basis);
    const Eigen::VectorXd combined =
        a * out_1.functions[0].values + b * out_2.functions[0].values;
    CHECK((out_mixed.functions[0].values - combined).lpNorm<Eigen::Infinity>() < 1e-9);
  }

  SUBCASE("requires an order supporting second derivatives") {
    const BSplineBasis linear = make_basis(6, 2, domain);
    const auto ds = wrap(curve_on_grid([](double x) { return x; }));
    CHECK_THROWS_AS(second_derivative_preprocess(ds, linear), std::invalid_argument);
  }
}

TEST_CASE("train/test splitting") {
  WaveSpec spec;
  spec.n_per_class = 72;  // 216 total, close to the spectra size
  spec.seed = 9;
  const LabeledDataset ds = gen_waveform(spec);

  SUBCASE("sizes") {
    const auto [train, test] = split_train_test(ds, 160, 4, false);
    CHECK(train.size() == 160);
    CHECK(test.size() == 56);
  }

  SUBCASE("identical seeds give identical splits") {
    const auto [a_train, a_test] = split_train_test(ds, 100, 12345, false);
    const auto [b_train, b_test] = split_train_test(ds, 100, 12345, false);
    for (int i = 0; i < a_train.size(); ++i) {
      CHECK((a_train.functions[i].values - b_train.functions[i].values).norm() == 0.0);
    }
    const auto [c_train, c_test] = split_train_test(ds, 100, 54321, false);
    bool all_same = true;
    for (int i = 0; i < a_train.size() && all_same; ++i) {
      all_same = a_train.labels[i] == c_train.labels[i];
    }
    // Different seed, different permutation (immensely likely).
    CHECK_FALSE(all_same);
  }

  SUBCASE("stratified split preserves class ratios within one") {
    const auto [train, test] = split_train_test(ds, 100, 7, true);
    for (int cls = 0; cls < 3; ++cls) {
      const auto count = std::count(train.labels.begin(), train.labels.end(), cls);
      const double exact = 100.0 * 72 / 216;
      CHECK(std::abs(count - exact) <= 1.0);
    }
  }

  SUBCASE("bad sizes are rejected") {
    CHECK_THROWS_AS(split_train_test(ds, 216, 0, false), std::invalid_argument);
    CHECK_THROWS_AS(split_train_test(ds, 0, 0, false), std::invalid_argument);
  }
}

TEST_CASE("sampling under the observation model") {
  const Measure mu = Measure::uniform({2.0, 5.0});

  SUBCASE("noiseless constant function") {
    const SampledFunction f = sample_under_he([](double) { return 3.5; }, 50, 0.0, 1, mu);
    for (int j = 0; j < 50; ++j) CHECK(f.values[j] == 3.5);
  }

  SUBCASE("points stay inside the support") {
    const SampledFunction f = sample_under_he([](double x) { return x; }, 1000, 0.1, 2, mu);
    for (int j = 0; j < 1000; ++j) {
      CHECK(f.points[j] >= 2.0);
      CHECK(f.points[j] <= 5.0);
    }
  }

  SUBCASE("law of large numbers against the quadrature oracle") {
    const auto g = [](double x) { return std::sin(x) + 0.25 * x; };
    const int m = 100000;
    const SampledFunction f = sample_under_he(g, m, 0.0, 3, mu);
    const double truth = oracle::quadrature_integral(g, mu, 40001);

    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += f.values[j];
    mean /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) var += (f.values[j] - mean) * (f.values[j] - mean);
    const double sigma = std::sqrt(var / (m - 1));
    CHECK(std::abs(mean - truth) < 3.0 * sigma / std::sqrt(static_cast<double>(m)));
  }
}

TEST_CASE("dataset CSV export") {
  WaveSpec spec;
  spec.n_per_class = 3;
  spec.m = 5;
  spec.seed = 21;
  const LabeledDataset ds = gen_waveform(spec);
  std::ostringstream out;
  save_dataset_csv(ds, out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header.substr(0, 4) == "x_1,");
  CHECK(header.find("label") != std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 9);
}
