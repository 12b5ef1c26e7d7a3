#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>

#include "fmlp/bspline.hpp"
#include "fmlp/sample.hpp"

namespace fmlp {

/// One-hidden-layer perceptron parameters: tanh hidden layer, affine output.
/// The meaning of the input axis depends on the wrapping model.
struct MlpParams {
  Eigen::MatrixXd hidden_w;  // k x d
  Eigen::VectorXd hidden_b;  // k
  Eigen::MatrixXd output_w;  // o x k
  Eigen::VectorXd output_b;  // o

  int input_dim() const { return static_cast<int>(hidden_w.cols()); }
  int hidden_width() const { return static_cast<int>(hidden_w.rows()); }
  int output_dim() const { return static_cast<int>(output_w.rows()); }

  void require_consistent() const;

  /// Forward pass on a plain feature vector.
  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& u) const;
};

/// Standard MLP applied to raw sampled values; all inputs must share one
/// observation grid of size input_dim().
struct NaiveMLP {
  MlpParams net;
  std::uint64_t seed = 0;  // training provenance
};

/// MLP whose hidden-layer weights are functions: row i of net.hidden_w holds
/// the B-spline coefficients of the i-th weight function. The hidden
/// pre-activation integrates the weight function against the input curve.
struct FunctionalMLP {
  BSplineBasis basis;
  MlpParams net;
  std::uint64_t seed = 0;
};

/// Projection variant: the input curve is first represented by its
/// least-squares coefficients on the basis, then fed to a standard MLP.
struct ProjectionMLP {
  BSplineBasis basis;
  MlpParams net;
  std::uint64_t seed = 0;
};

using Model = std::variant<NaiveMLP, FunctionalMLP, ProjectionMLP>;

enum class Variant { naive, fmlp, fpmlp };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// Empirical-mean approximation of integral F(w,.) f dmu over the observed
/// points: (1/m) sum_j F(w, x_j) y_j with F(w,x) = sum_i w_i phi_i(x).
double approx_integral(const BSplineBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& w,
                       const SampledFunction& f);

/// Basis-projected input moments u_l = (1/m) sum_j phi_l(x_j) y_j; the
/// functional forward pass is the plain MLP forward on these features.
Eigen::VectorXd moment_features(const BSplineBasis& basis, const SampledFunction& f);

Eigen::VectorXd forward_fmlp(const FunctionalMLP& model, const SampledFunction& f);
Eigen::VectorXd forward_naive(const NaiveMLP& model, const SampledFunction& f);
Eigen::VectorXd forward_fpmlp(const ProjectionMLP& model, const SampledFunction& f);

Eigen::VectorXd forward(const Model& model, const SampledFunction& f);

/// Functional weight coefficients d with M d = c: the weight function with
/// coefficients d reproduces (approximately) the linear combination c of
/// projection coordinates (solved, never inverted explicitly).
Eigen::VectorXd equivalence_weights(const BSplineBasis& basis,
                                    const Eigen::Ref<const Eigen::VectorXd>& c, const Measure& mu);

int param_count(const MlpParams& net);
int param_count(const Model& model);

Variant variant_of(const Model& model);
const MlpParams& params_of(const Model& model);

/// Class decision: argmax over outputs, ties toward the lowest index.
int argmax_class(const Eigen::Ref<const Eigen::VectorXd>& out);

/// JSON serialization; binary64 values round-trip exactly.
std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);

}  // namespace fmlp
