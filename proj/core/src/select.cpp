#include "fmlp/select.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <numeric>
#include <ostream>
#include <thread>

#include "fmlp/rng.hpp"

namespace fmlp {

std::vector<std::vector<int>> kfold_split(int n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
  if (k > n) throw std::invalid_argument("kfold: k must not exceed n");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[static_cast<int>(rng.below(i + 1))]);

  std::vector<std::vector<int>> folds(k);
  for (int i = 0; i < n; ++i) folds[i % k].push_back(perm[i]);
  return folds;
}

std::vector<std::vector<int>> stratified_kfold_split(const std::vector<int>& labels, int k,
                                                     std::uint64_t seed) {
  const int n = static_cast<int>(labels.size());
  if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
  if (k > n) throw std::invalid_argument("kfold: k must not exceed n");

  const int n_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<int>> by_class(n_classes);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0) throw std::invalid_argument("kfold: negative label");
    by_class[labels[i]].push_back(i);
  }

  Rng rng(seed);
  std::vector<std::vector<int>> folds(k);
  int dealt = 0;  // round-robin cursor shared across classes keeps fold sizes even
  for (auto& pool : by_class) {
    for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) {
      std::swap(pool[i], pool[static_cast<int>(rng.below(i + 1))]);
    }
    for (int idx : pool) folds[dealt++ % k].push_back(idx);
  }
  return folds;
}

double evaluate(const Model& model, const LabeledDataset& test) {
  test.require_consistent();
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  if (!test.classification()) throw std::invalid_argument("evaluate: dataset has no labels");
  int wrong = 0;
  for (int i = 0; i < test.size(); ++i) {
    if (argmax_class(forward(model, test.functions[i])) != test.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / test.size();
}

namespace {

struct CellSpec {
  int hidden;
  int basis_size;  // 0 => naive
  double weight_decay;
};

// Misclassification of the feature-space net against integer labels.
double core_error(const MlpParams& net, const Eigen::MatrixXd& features,
                  const std::vector<int>& labels, const std::vector<int>& rows) {
  int wrong = 0;
  for (int r : rows) {
    const Eigen::VectorXd out = net.forward(features.row(r).transpose());
    if (argmax_class(out) != labels[r]) ++wrong;
  }
  return static_cast<double>(wrong) / rows.size();
}

}  // namespace

CVReport grid_search(Variant variant, const LabeledDataset& ds, const Grid& grid,
                     const SearchOptions& options, const TrainConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  ds.require_consistent();
  grid.require_valid();
  config.require_valid();
  if (!ds.classification()) throw std::invalid_argument("grid search: dataset has no labels");
  if (ds.size() < options.folds) {
    throw std::invalid_argument("grid search: dataset smaller than fold count");
  }

  // The naive variant has no basis axis.
  std::vector<int> basis_axis =
      (variant == Variant::naive) ? std::vector<int>{0} : grid.basis_sizes;

  std::vector<CellSpec> cells;
  for (int hidden : grid.hidden_widths) {
    for (int basis_size : basis_axis) {
      for (double decay : grid.weight_decays) cells.push_back({hidden, basis_size, decay});
    }
  }

  const auto folds = options.stratified
                         ? stratified_kfold_split(ds.labels, options.folds, config.seed)
                         : kfold_split(ds.size(), options.folds, config.seed);

  // Feature matrices are shared across every cell with the same basis size.
  std::vector<Eigen::MatrixXd> features_by_basis(basis_axis.size());
  std::vector<BSplineBasis> bases;
  for (size_t b = 0; b < basis_axis.size(); ++b) {
    const BSplineBasis* basis = nullptr;
    if (variant != Variant::naive) {
      bases.push_back(make_basis(basis_axis[b], options.spline_order, ds.domain));
      basis = &bases.back();
    }
    features_by_basis[b] = feature_matrix(variant, basis, ds);
  }
  const auto basis_index = [&](int basis_size) {
    return std::find(basis_axis.begin(), basis_axis.end(), basis_size) - basis_axis.begin();
  };

  struct Task {
    int cell;
    int fold;
  };
  std::vector<Task> tasks;
  for (int c = 0; c < static_cast<int>(cells.size()); ++c) {
    for (int f = 0; f < options.folds; ++f) tasks.push_back({c, f});
  }

  std::vector<double> errors(tasks.size(), 1.0);
  std::vector<char> task_failed(tasks.size(), 0);

  const auto run_task = [&](int t) {
    const auto [c, fold] = tasks[t];
    const auto& cell = cells[c];
    const Eigen::MatrixXd& all_features = features_by_basis[basis_index(cell.basis_size)];

    std::vector<int> train_rows;
    for (int f = 0; f < options.folds; ++f) {
      if (f != fold) train_rows.insert(train_rows.end(), folds[f].begin(), folds[f].end());
    }

    CorePreparation prep;
    prep.features = all_features(train_rows, Eigen::all);
    prep.targets = ds.targets(train_rows, Eigen::all);

    TrainConfig cell_config = config;
    cell_config.weight_decay = cell.weight_decay;
    // Common random numbers: every cell sees the same restart seeds within a
    // fold, so cell comparisons are paired rather than independently noisy.
    cell_config.seed = Rng::stream(config.seed, fold).next_u64();
    try {
      const MlpParams net = train_core(prep, cell.hidden, cell_config, nullptr, nullptr);
      errors[t] = core_error(net, all_features, ds.labels, folds[fold]);
    } catch (const std::exception&) {
      task_failed[t] = 1;  // scored as error 1.0
    }
  };

  int n_threads = options.threads == 0
                      ? static_cast<int>(std::thread::hardware_concurrency())
                      : options.threads;
  n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(tasks.size())));
  if (n_threads == 1) {
    for (size_t t = 0; t < tasks.size(); ++t) run_task(static_cast<int>(t));
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) {
      pool.emplace_back([&] {
        for (int t = next.fetch_add(1); t < static_cast<int>(tasks.size());
             t = next.fetch_add(1)) {
          run_task(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  CVReport report;
  report.folds = options.folds;
  report.cells.resize(cells.size());
  for (int c = 0; c < static_cast<int>(cells.size()); ++c) {
    CvCell& out = report.cells[c];
    out.hidden = cells[c].hidden;
    out.basis_size = cells[c].basis_size;
    out.weight_decay = cells[c].weight_decay;
    out.fold_errors.resize(options.folds);
    const int d = (variant == Variant::naive)
                      ? static_cast<int>(features_by_basis[0].cols())
                      : cells[c].basis_size;
    out.param_count = cells[c].hidden * (d + 1) + ds.output_dim() * (cells[c].hidden + 1);
  }
  for (size_t t = 0; t < tasks.size(); ++t) {
    report.cells[tasks[t].cell].fold_errors[tasks[t].fold] = errors[t];
    if (task_failed[t]) report.cells[tasks[t].cell].failed = true;
  }
  for (auto& cell : report.cells) {
    cell.mean_error = std::accumulate(cell.fold_errors.begin(), cell.fold_errors.end(), 0.0) /
                      cell.fold_errors.size();
  }

  // Winner: smallest mean fold error, ties by parsimony then regularization.
  report.selected = 0;
  for (int c = 1; c < static_cast<int>(report.cells.size()); ++c) {
    const CvCell& a = report.cells[c];
    const CvCell& b = report.cells[report.selected];
    const auto key = [](const CvCell& x) {
      return std::make_tuple(x.mean_error, x.param_count, x.weight_decay);
    };
    if (key(a) < key(b)) report.selected = c;
  }

  const CvCell& winner = report.cells[report.selected];
  VariantSpec spec;
  spec.variant = variant;
  spec.hidden = winner.hidden;
  if (variant != Variant::naive) {
    spec.basis = make_basis(winner.basis_size, options.spline_order, ds.domain);
  }
  TrainConfig final_config = config;
  final_config.weight_decay = winner.weight_decay;
  final_config.seed = Rng::stream(config.seed, 0xF1A71ULL).next_u64();
  report.model = train(spec, ds, final_config).model;
  report.param_count = param_count(report.model);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::string cv_report_to_json(const CVReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    cells.push_back({{"hidden", cell.hidden},
                     {"basis_size", cell.basis_size},
                     {"weight_decay", cell.weight_decay},
                     {"fold_errors", cell.fold_errors},
                     {"mean_error", cell.mean_error},
                     {"param_count", cell.param_count},
                     {"failed", cell.failed}});
  }
  nlohmann::json j{{"cells", std::move(cells)},
                   {"selected", report.selected},
                   {"folds", report.folds},
                   {"param_count", report.param_count},
                   {"wall_seconds", report.wall_seconds},
                   {"model", nlohmann::json::parse(model_to_json(report.model))}};
  return j.dump();
}

void write_cv_csv(const CVReport& report, std::ostream& out) {
  out << "hidden,basis,decay";
  for (int f = 0; f < report.folds; ++f) out << ",fold" << f;
  out << ",mean\n";
  out.precision(17);
  for (const auto& cell : report.cells) {
    out << cell.hidden << "," << cell.basis_size << "," << cell.weight_decay;
    for (double e : cell.fold_errors) out << "," << e;
    out << "," << cell.mean_error << "\n";
  }
}

}  // namespace fmlp
