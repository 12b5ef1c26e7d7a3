#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fmlp/data.hpp"
#include "fmlp/fmodel.hpp"

namespace fmlp {

struct TrainConfig {
  double weight_decay = 0.0;
  int restarts = 10;
  int max_iters = 500;
  double grad_tol = 1e-6;
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  void require_valid() const {
    if (restarts < 1) throw std::invalid_argument("train: restarts must be >= 1");
    if (max_iters < 1) throw std::invalid_argument("train: max_iters must be >= 1");
    if (weight_decay < 0.0) throw std::invalid_argument("train: weight decay must be >= 0");
    if (grad_tol < 0.0) throw std::invalid_argument("train: grad_tol must be >= 0");
    if (!(init_scale > 0.0)) throw std::invalid_argument("train: init_scale must be > 0");
  }
};

struct LossValue {
  double data_term = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

/// What to train: model variant, hidden width, and (for functional variants)
/// the weight-function basis.
struct VariantSpec {
  Variant variant = Variant::fmlp;
  int hidden = 2;
  std::optional<BSplineBasis> basis;

  void require_valid() const {
    if (hidden < 1) throw std::invalid_argument("variant: hidden width must be >= 1");
    if (variant != Variant::naive && !basis) {
      throw std::invalid_argument("variant: functional variants need a basis");
    }
  }
};

/// Numeric design matrix for a variant: raw values (naive, shared grid),
/// basis-projected moments (fmlp) or least-squares coefficients (fpmlp),
/// one row per example.
Eigen::MatrixXd feature_matrix(Variant variant, const BSplineBasis* basis,
                               const LabeledDataset& ds);

/// Mean squared Euclidean error over the dataset plus the weight-decay
/// penalty (biases excluded from the penalty).
LossValue empirical_error(const Model& model, const LabeledDataset& ds, double weight_decay);

/// Exact gradient of the total loss, laid out as flatten(model).
Eigen::VectorXd gradient(const Model& model, const LabeledDataset& ds, double weight_decay);

/// Row-major [hidden_w, hidden_b, output_w, output_b] layout.
Eigen::VectorXd flatten(const MlpParams& net);
MlpParams unflatten(int k, int d, int o, const Eigen::Ref<const Eigen::VectorXd>& x);

enum class CgStatus { converged, max_iters_reached, line_search_failed };

struct CgOptions {
  int max_iters = 500;
  double grad_tol = 1e-6;
};

struct CgResult {
  Eigen::VectorXd x;
  std::vector<double> trace;  // accepted-step objective values, nonincreasing
  CgStatus status = CgStatus::converged;
};

/// Objective: returns f(x) and writes the gradient.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Polak-Ribiere+ nonlinear conjugate gradient with strong Wolfe line search
/// (c1 = 1e-4, c2 = 0.1), restarting to steepest descent on negative PR
/// coefficients and every dim+1 iterations. Stops when the gradient max-norm
/// falls below grad_tol or after max_iters accepted steps. A failed line
/// search is retried once along steepest descent, then terminates.
CgResult minimize_cg(const Objective& objective, Eigen::VectorXd x0, const CgOptions& options);

struct TrainResult {
  Model model;
  LossValue loss;
  std::vector<double> restart_losses;  // final totals, one per restart
};

/// Multi-restart training: `restarts` independent seeded initializations
/// (uniform +-init_scale/sqrt(fan_in)), each minimized by CG; returns the
/// lowest-total model. Restart RNG streams are derived by counter, so the
/// result does not depend on evaluation order.
TrainResult train(const VariantSpec& spec, const LabeledDataset& ds, const TrainConfig& config);

/// Training kernel on a precomputed design matrix (exposed for the
/// cross-validation driver, which reuses feature matrices across grid cells).
struct CorePreparation {
  Eigen::MatrixXd features;  // n x d
  Eigen::MatrixXd targets;   // n x o
};
MlpParams train_core(const CorePreparation& prep, int hidden, const TrainConfig& config,
                     LossValue* best_loss, std::vector<double>* restart_losses);

/// Loss/gradient of the feature-space MLP; shared by training and tests.
double core_objective(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                      double weight_decay, int k, const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                      double* data_term = nullptr);

class Rng;

/// Flat starting point used by train(): layer weights uniform within
/// +-init_scale/sqrt(fan_in).
Eigen::VectorXd init_parameters(int k, int d, int o, double init_scale, Rng& rng);

}  // namespace fmlp
