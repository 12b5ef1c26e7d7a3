#include "fmlp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fmlp/rng.hpp"

namespace fmlp {

void LabeledDataset::require_consistent() const {
  if (static_cast<int>(functions.size()) != targets.rows()) {
    throw std::invalid_argument("dataset: function/target count mismatch");
  }
  if (!labels.empty()) {
    if (static_cast<int>(labels.size()) != size()) {
      throw std::invalid_argument("dataset: label count mismatch");
    }
    for (int i = 0; i < size(); ++i) {
      if (labels[i] < 0 || labels[i] >= targets.cols()) {
        throw std::invalid_argument("dataset: label out of range at index " + std::to_string(i));
      }
    }
  }
}

LabeledDataset make_classification_dataset(std::vector<SampledFunction> functions,
                                           std::vector<int> labels, int n_classes,
                                           Interval domain) {
  if (functions.size() != labels.size()) {
    throw std::invalid_argument("dataset: function/label count mismatch");
  }
  LabeledDataset ds;
  ds.functions = std::move(functions);
  ds.labels = std::move(labels);
  ds.domain = domain;
  ds.targets = Eigen::MatrixXd::Zero(static_cast<int>(ds.functions.size()), n_classes);
  for (int i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= n_classes) {
      throw std::invalid_argument("dataset: label out of range at index " + std::to_string(i));
    }
    ds.targets(i, ds.labels[i]) = 1.0;
  }
  return ds;
}

double wave_h(double t, int which) {
  switch (which) {
    case 1: return std::max(6.0 - std::abs(t - 11.0), 0.0);
    case 2: return wave_h(t - 4.0, 1);
    case 3: return wave_h(t + 4.0, 1);
    default: throw std::invalid_argument("wave_h: which must be 1, 2 or 3");
  }
}

double wave_value(int cls, double u, double t) {
  switch (cls) {
    case 0: return u * wave_h(t, 1) + (1.0 - u) * wave_h(t, 2);
    case 1: return u * wave_h(t, 1) + (1.0 - u) * wave_h(t, 3);
    case 2: return u * wave_h(t, 2) + (1.0 - u) * wave_h(t, 3);
    default: throw std::invalid_argument("wave_value: class must be 0, 1 or 2");
  }
}

LabeledDataset gen_waveform(const WaveSpec& spec) {
  if (spec.n_per_class < 1) throw std::invalid_argument("waveform: n_per_class must be >= 1");
  if (spec.m < 2) throw std::invalid_argument("waveform: m must be >= 2");
  spec.domain.require_valid("waveform domain");

  Eigen::VectorXd grid(spec.m);
  for (int j = 0; j < spec.m; ++j) grid[j] = grid_point(spec.domain, spec.m, j);

  Rng rng(spec.seed);
  std::vector<SampledFunction> functions;
  std::vector<int> labels;
  functions.reserve(3 * spec.n_per_class);
  for (int cls = 0; cls < 3; ++cls) {
    for (int i = 0; i < spec.n_per_class; ++i) {
      const double u = rng.uniform_open01();
      SampledFunction f;
      f.points = grid;
      f.values.resize(spec.m);
      for (int j = 0; j < spec.m; ++j) {
        f.values[j] = wave_value(cls, u, grid[j]) + spec.noise_sd * rng.gaussian();
      }
      functions.push_back(std::move(f));
      labels.push_back(cls);
    }
  }
  return make_classification_dataset(std::move(functions), std::move(labels), 3, spec.domain);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, int row, int col) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    if (!std::isfinite(v)) {
      throw DataError("row " + std::to_string(row) + ": non-finite value in column " +
                      std::to_string(col + 1));
    }
    return v;
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError("row " + std::to_string(row) + ": cannot parse '" + s + "' in column " +
                    std::to_string(col + 1));
  }
}

constexpr int kSpectrumChannels = 100;
constexpr double kSpectrumLo = 850.0;
constexpr double kSpectrumHi = 1050.0;
constexpr double kSpectrumStep = 2.0;
constexpr double kFatThreshold = 20.0;

}  // namespace

LabeledDataset load_tecator(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open spectra file '" + path +
                    "' (expected CSV: header, abs_850..abs_1048, fat)");
  }
  return load_tecator(in, path);
}

LabeledDataset load_tecator(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(origin + ": empty file");
  const auto header = split_csv_line(line);
  if (static_cast<int>(header.size()) != kSpectrumChannels + 1) {
    throw DataError(origin + ": header has " + std::to_string(header.size()) +
                    " columns, expected " + std::to_string(kSpectrumChannels + 1) +
                    " (abs_850..abs_1048, fat)");
  }

  Eigen::VectorXd grid(kSpectrumChannels);
  for (int j = 0; j < kSpectrumChannels; ++j) grid[j] = kSpectrumLo + kSpectrumStep * j;

  std::vector<SampledFunction> functions;
  std::vector<int> labels;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != kSpectrumChannels + 1) {
      throw DataError("row " + std::to_string(row) + ": has " + std::to_string(fields.size()) +
                      " columns, expected " + std::to_string(kSpectrumChannels + 1));
    }
    SampledFunction f;
    f.points = grid;
    f.values.resize(kSpectrumChannels);
    for (int j = 0; j < kSpectrumChannels; ++j) f.values[j] = parse_double(fields[j], row, j);
    const double fat = parse_double(fields[kSpectrumChannels], row, kSpectrumChannels);
    functions.push_back(std::move(f));
    labels.push_back(fat < kFatThreshold ? 0 : 1);
  }
  if (functions.empty()) throw DataError(origin + ": no data rows");
  return make_classification_dataset(std::move(functions), std::move(labels), 2,
                                     Interval{kSpectrumLo, kSpectrumHi});
}

void save_dataset_csv(const LabeledDataset& ds, std::ostream& out) {
  ds.require_consistent();
  if (ds.size() == 0) throw std::invalid_argument("save: empty dataset");
  const auto& grid = ds.functions.front().points;
  out.precision(17);
  for (int j = 0; j < grid.size(); ++j) out << "x_" << grid[j] << ",";
  out << "label\n";
  for (int i = 0; i < ds.size(); ++i) {
    const auto& f = ds.functions[i];
    if (f.points.size() != grid.size()) {
      throw std::invalid_argument("save: curves do not share one observation grid");
    }
    for (int j = 0; j < f.values.size(); ++j) out << f.values[j] << ",";
    out << (ds.classification() ? ds.labels[i] : 0) << "\n";
  }
}

LabeledDataset second_derivative_preprocess(const LabeledDataset& ds, const BSplineBasis& basis) {
  ds.require_consistent();
  if (basis.order() < 3) {
    throw std::invalid_argument("second-derivative preprocessing needs basis order >= 3");
  }
  LabeledDataset out = ds;
  for (int i = 0; i < ds.size(); ++i) {
    const auto& f = ds.functions[i];
    const Eigen::VectorXd alpha = fit_coefficients(basis, f);
    SampledFunction g;
    g.points = f.points;
    g.values.resize(f.size());
    for (int j = 0; j < f.size(); ++j) {
      g.values[j] = basis.eval_derivative(f.points[j], 2).dot(alpha);
    }
    out.functions[i] = std::move(g);
  }
  return out;
}

LabeledDataset subset(const LabeledDataset& ds, const std::vector<int>& indices) {
  LabeledDataset out;
  out.domain = ds.domain;
  out.targets.resize(static_cast<int>(indices.size()), ds.targets.cols());
  out.functions.reserve(indices.size());
  int row = 0;
  for (int idx : indices) {
    if (idx < 0 || idx >= ds.size()) throw std::out_of_range("subset: index out of range");
    out.functions.push_back(ds.functions[idx]);
    out.targets.row(row++) = ds.targets.row(idx);
    if (ds.classification()) out.labels.push_back(ds.labels[idx]);
  }
  return out;
}

namespace {

std::vector<int> seeded_permutation(int n, Rng& rng) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[static_cast<int>(rng.below(i + 1))]);
  }
  return perm;
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds, int n_train,
                                                           std::uint64_t seed, bool stratified) {
  ds.require_consistent();
  const int n = ds.size();
  if (n_train >= n || n_train < 1) {
    throw std::invalid_argument("split: n_train must be in [1, n)");
  }

  Rng rng(seed);
  std::vector<int> train_idx, test_idx;
  if (!stratified || !ds.classification()) {
    const auto perm = seeded_permutation(n, rng);
    train_idx.assign(perm.begin(), perm.begin() + n_train);
    test_idx.assign(perm.begin() + n_train, perm.end());
  } else {
    const int n_classes = ds.output_dim();
    std::vector<std::vector<int>> by_class(n_classes);
    for (int i = 0; i < n; ++i) by_class[ds.labels[i]].push_back(i);

    // Largest-remainder apportionment of n_train across classes.
    std::vector<int> take(n_classes);
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (int c = 0; c < n_classes; ++c) {
      const double exact = static_cast<double>(n_train) * by_class[c].size() / n;
      take[c] = static_cast<int>(std::floor(exact));
      assigned += take[c];
      remainders.push_back({exact - take[c], c});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    for (int i = 0; i < n_train - assigned; ++i) take[remainders[i].second] += 1;

    for (int c = 0; c < n_classes; ++c) {
      auto& pool = by_class[c];
      for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) {
        std::swap(pool[i], pool[static_cast<int>(rng.below(i + 1))]);
      }
      for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
        (i < take[c] ? train_idx : test_idx).push_back(pool[i]);
      }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
  }
  return {subset(ds, train_idx), subset(ds, test_idx)};
}

SampledFunction sample_under_he(const std::function<double(double)>& g, int m, double noise_sd,
                                std::uint64_t seed, const Measure& mu) {
  if (m < 1) throw std::invalid_argument("sample: m must be >= 1");
  Rng rng(seed);
  SampledFunction f;
  f.points.resize(m);
  f.values.resize(m);
  for (int j = 0; j < m; ++j) {
    const double x = rng.uniform(mu.support.lo, mu.support.hi);
    f.points[j] = x;
    f.values[j] = g(x) + (noise_sd > 0.0 ? noise_sd * rng.gaussian() : 0.0);
  }
  return f;
}

}  // namespace fmlp
