#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fmlp/bspline.hpp"
#include "fmlp/sample.hpp"

namespace fmlp {

/// Problem with an input data file (missing, malformed, wrong schema).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Collection of sampled curves with numeric targets. For classification,
/// `labels` holds class indices and `targets` the matching one-hot rows; for
/// regression, `labels` is empty and `targets` holds the raw target vectors.
struct LabeledDataset {
  std::vector<SampledFunction> functions;
  Eigen::MatrixXd targets;  // n x o
  std::vector<int> labels;  // n entries, or empty for regression
  Interval domain;

  int size() const { return static_cast<int>(functions.size()); }
  int output_dim() const { return static_cast<int>(targets.cols()); }
  bool classification() const { return !labels.empty(); }

  void require_consistent() const;
};

/// One-hot classification dataset from curves and class indices.
LabeledDataset make_classification_dataset(std::vector<SampledFunction> functions,
                                           std::vector<int> labels, int n_classes,
                                           Interval domain);

/// Triangular generator waveforms: h1 peaks at 11, h2 at 15, h3 at 7.
double wave_h(double t, int which);

/// Mixture value u*h_a(t) + (1-u)*h_b(t) for the class's waveform pair
/// (class 0: h1/h2, class 1: h1/h3, class 2: h2/h3).
double wave_value(int cls, double u, double t);

struct WaveSpec {
  int n_per_class = 150;
  int m = 101;
  double noise_sd = 1.0;
  Interval domain{1.0, 21.0};
  std::uint64_t seed = 0;
};

/// Three-class waveform benchmark: per curve, a mixing weight u drawn
/// uniformly in (0,1), evaluated on the uniform m-point grid, i.i.d.
/// Gaussian noise added to every observation.
LabeledDataset gen_waveform(const WaveSpec& spec);

/// Spectrometric CSV: header row, 100 absorbance columns (abs_850 ... abs_1048,
/// 2 nm spacing) plus a final `fat` column. Class 0 below 20% fat, class 1
/// otherwise. Curves live on [850, 1050].
LabeledDataset load_tecator(const std::string& path);
LabeledDataset load_tecator(std::istream& in, const std::string& origin);

/// Writes a dataset in the same schema plus a trailing `label` column.
void save_dataset_csv(const LabeledDataset& ds, std::ostream& out);

/// Replaces each curve by the exact second derivative of its least-squares
/// spline representation, sampled on the original grid. Labels are unchanged.
LabeledDataset second_derivative_preprocess(const LabeledDataset& ds, const BSplineBasis& basis);

/// Seeded permutation split. With `stratified`, per-class proportions in the
/// train part are preserved within one example.
std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds, int n_train,
                                                           std::uint64_t seed, bool stratified);

LabeledDataset subset(const LabeledDataset& ds, const std::vector<int>& indices);

/// Observation model: m i.i.d. points from mu, values g(x) + Gaussian noise.
SampledFunction sample_under_he(const std::function<double(double)>& g, int m, double noise_sd,
                                std::uint64_t seed, const Measure& mu);

}  // namespace fmlp
