#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fmlp/train.hpp"

namespace fmlp {

/// Seeded partition of {0..n-1} into k folds whose sizes differ by at most 1.
std::vector<std::vector<int>> kfold_split(int n, int k, std::uint64_t seed);

/// Stratified variant: each class is spread evenly across folds.
std::vector<std::vector<int>> stratified_kfold_split(const std::vector<int>& labels, int k,
                                                     std::uint64_t seed);

struct Grid {
  std::vector<int> hidden_widths{2, 3, 4};
  std::vector<int> basis_sizes{5, 7, 10, 15, 20};
  std::vector<double> weight_decays{1e-4, 1e-3, 1e-2, 1e-1};

  void require_valid() const {
    if (hidden_widths.empty() || basis_sizes.empty() || weight_decays.empty()) {
      throw std::invalid_argument("grid: all axes must be nonempty");
    }
  }
};

struct SearchOptions {
  int folds = 5;
  int spline_order = 4;
  bool stratified = true;
  int threads = 1;  // 0 = hardware concurrency
};

struct CvCell {
  int hidden = 0;
  int basis_size = 0;  // 0 for the naive variant
  double weight_decay = 0.0;
  std::vector<double> fold_errors;
  double mean_error = 0.0;
  int param_count = 0;
  bool failed = false;
};

struct CVReport {
  std::vector<CvCell> cells;
  int selected = -1;
  Model model;  // winner retrained on the full training set
  int param_count = 0;
  double wall_seconds = 0.0;
  int folds = 0;

  const CvCell& selected_cell() const { return cells.at(selected); }
};

/// Cross-validated grid search: every (hidden, basis, decay) cell is scored
/// by mean held-out misclassification over k folds; the winner (ties broken
/// by fewest parameters, then smallest decay) is retrained on all data.
CVReport grid_search(Variant variant, const LabeledDataset& ds, const Grid& grid,
                     const SearchOptions& options, const TrainConfig& config);

/// Misclassification rate of argmax decisions against the labels.
double evaluate(const Model& model, const LabeledDataset& test);

std::string cv_report_to_json(const CVReport& report);
void write_cv_csv(const CVReport& report, std::ostream& out);

}  // namespace fmlp
