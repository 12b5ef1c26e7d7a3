#include "fmlp/train.hpp"

#include <cmath>
#include <limits>

#include "fmlp/rng.hpp"

namespace fmlp {

Eigen::MatrixXd feature_matrix(Variant variant, const BSplineBasis* basis,
                               const LabeledDataset& ds) {
  ds.require_consistent();
  if (ds.size() == 0) throw std::invalid_argument("features: empty dataset");
  const int n = ds.size();

  if (variant == Variant::naive) {
    const int m = ds.functions.front().size();
    Eigen::MatrixXd features(n, m);
    for (int i = 0; i < n; ++i) {
      if (ds.functions[i].size() != m) {
        throw std::invalid_argument(
            "naive variant needs a shared observation grid; curve " + std::to_string(i) + " has " +
            std::to_string(ds.functions[i].size()) + " points, expected " + std::to_string(m));
      }
      features.row(i) = ds.functions[i].values;
    }
    return features;
  }

  if (basis == nullptr) throw std::invalid_argument("features: functional variant needs a basis");
  Eigen::MatrixXd features(n, basis->size());
  for (int i = 0; i < n; ++i) {
    features.row(i) = (variant == Variant::fmlp) ? moment_features(*basis, ds.functions[i])
                                                 : fit_coefficients(*basis, ds.functions[i]);
  }
  return features;
}

Eigen::VectorXd flatten(const MlpParams& net) {
  const int k = net.hidden_width(), d = net.input_dim(), o = net.output_dim();
  Eigen::VectorXd x(k * d + k + o * k + o);
  int at = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j) x[at++] = net.hidden_w(i, j);
  for (int i = 0; i < k; ++i) x[at++] = net.hidden_b[i];
  for (int i = 0; i < o; ++i)
    for (int j = 0; j < k; ++j) x[at++] = net.output_w(i, j);
  for (int i = 0; i < o; ++i) x[at++] = net.output_b[i];
  return x;
}

MlpParams unflatten(int k, int d, int o, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != k * d + k + o * k + o) {
    throw std::invalid_argument("unflatten: vector length does not match (k,d,o)");
  }
  MlpParams net;
  net.hidden_w.resize(k, d);
  net.hidden_b.resize(k);
  net.output_w.resize(o, k);
  net.output_b.resize(o);
  int at = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j) net.hidden_w(i, j) = x[at++];
  for (int i = 0; i < k; ++i) net.hidden_b[i] = x[at++];
  for (int i = 0; i < o; ++i)
    for (int j = 0; j < k; ++j) net.output_w(i, j) = x[at++];
  for (int i = 0; i < o; ++i) net.output_b[i] = x[at++];
  return net;
}

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutable =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Mean squared residual of the feature-space MLP and (optionally) its
// gradient, written into the caller's flat layout. Penalties are added by
// the callers.
double mlp_data_term(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, int k,
                     const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
  const int n = static_cast<int>(features.rows());
  const int d = static_cast<int>(features.cols());
  const int o = static_cast<int>(targets.cols());

  const RowMajorMap hidden_w(x.data(), k, d);
  const Eigen::Map<const Eigen::VectorXd> hidden_b(x.data() + k * d, k);
  const RowMajorMap output_w(x.data() + k * d + k, o, k);
  const Eigen::Map<const Eigen::VectorXd> output_b(x.data() + k * d + k + o * k, o);

  Eigen::MatrixXd act = features * hidden_w.transpose();  // n x k
  act.rowwise() += hidden_b.transpose();
  act = act.array().tanh().matrix();
  Eigen::MatrixXd residual = act * output_w.transpose();  // n x o
  residual.rowwise() += output_b.transpose();
  residual -= targets;

  const double data = residual.squaredNorm() / n;

  if (grad != nullptr) {
    grad->resize(x.size());
    RowMajorMutable g_hidden_w(grad->data(), k, d);
    Eigen::Map<Eigen::VectorXd> g_hidden_b(grad->data() + k * d, k);
    RowMajorMutable g_output_w(grad->data() + k * d + k, o, k);
    Eigen::Map<Eigen::VectorXd> g_output_b(grad->data() + k * d + k + o * k, o);

    residual *= 2.0 / n;                       // dL/dY
    g_output_w = residual.transpose() * act;   // o x k
    g_output_b = residual.colwise().sum();
    Eigen::MatrixXd dz = residual * output_w;  // n x k
    dz.array() *= 1.0 - act.array().square();
    g_hidden_w = dz.transpose() * features;    // k x d
    g_hidden_b = dz.colwise().sum();
  }
  return data;
}

}  // namespace

double core_objective(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                      double weight_decay, int k, const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                      double* data_term) {
  const int d = static_cast<int>(features.cols());
  const int o = static_cast<int>(targets.cols());
  const double data = mlp_data_term(features, targets, k, x, grad);
  if (data_term != nullptr) *data_term = data;

  const RowMajorMap hidden_w(x.data(), k, d);
  const RowMajorMap output_w(x.data() + k * d + k, o, k);
  const double penalty = weight_decay * (hidden_w.squaredNorm() + output_w.squaredNorm());
  if (grad != nullptr && weight_decay > 0.0) {
    RowMajorMutable g_hidden_w(grad->data(), k, d);
    RowMajorMutable g_output_w(grad->data() + k * d + k, o, k);
    g_hidden_w += 2.0 * weight_decay * hidden_w;
    g_output_w += 2.0 * weight_decay * output_w;
  }
  return data + penalty;
}

namespace {

Eigen::MatrixXd model_features(const Model& model, const LabeledDataset& ds) {
  const Variant v = variant_of(model);
  const BSplineBasis* basis = nullptr;
  if (const auto* m = std::get_if<FunctionalMLP>(&model)) basis = &m->basis;
  if (const auto* m = std::get_if<ProjectionMLP>(&model)) basis = &m->basis;
  return feature_matrix(v, basis, ds);
}

}  // namespace

LossValue empirical_error(const Model& model, const LabeledDataset& ds, double weight_decay) {
  if (ds.size() == 0) throw std::invalid_argument("empirical error: empty dataset");
  const MlpParams& net = params_of(model);
  net.require_consistent();
  if (ds.output_dim() != net.output_dim()) {
    throw std::invalid_argument("empirical error: target dimension mismatch");
  }
  const Eigen::MatrixXd features = model_features(model, ds);
  const Eigen::VectorXd x = flatten(net);
  LossValue loss;
  loss.total = core_objective(features, ds.targets, weight_decay, net.hidden_width(), x, nullptr,
                              &loss.data_term);
  loss.penalty = loss.total - loss.data_term;
  return loss;
}

Eigen::VectorXd gradient(const Model& model, const LabeledDataset& ds, double weight_decay) {
  if (ds.size() == 0) throw std::invalid_argument("gradient: empty dataset");
  const MlpParams& net = params_of(model);
  const Eigen::MatrixXd features = model_features(model, ds);
  const Eigen::VectorXd x = flatten(net);
  Eigen::VectorXd grad;
  core_objective(features, ds.targets, weight_decay, net.hidden_width(), x, &grad);
  return grad;
}

namespace {

constexpr double kWolfeC1 = 1e-4;
constexpr double kWolfeC2 = 0.1;

struct LinePoint {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative
};

struct LineSearchOutcome {
  bool ok = false;
  LinePoint point;
  Eigen::VectorXd x;
  Eigen::VectorXd grad;
};

// Minimizer of the cubic through (a.f, a.slope) and (b.f, b.slope); falls
// back to bisection when the interpolant is degenerate or outside the
// bracket.
double cubic_step(const LinePoint& a, const LinePoint& b) {
  const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  const double mid = 0.5 * (a.alpha + b.alpha);
  if (!(disc >= 0.0)) return mid;
  const double d2 = std::sqrt(disc) * (b.alpha > a.alpha ? 1.0 : -1.0);
  const double denom = b.slope - a.slope + 2.0 * d2;
  if (denom == 0.0 || !std::isfinite(denom)) return mid;
  double step = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
  const double lo = std::min(a.alpha, b.alpha), hi = std::max(a.alpha, b.alpha);
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(step) || step < lo + margin || step > hi - margin) return mid;
  return step;
}

// Strong Wolfe line search (bracket + zoom). On success the outcome holds
// the accepted point with its x and gradient.
LineSearchOutcome wolfe_line_search(const Objective& objective, const Eigen::VectorXd& x0,
                                    const Eigen::VectorXd& dir, const LinePoint& origin,
                                    double alpha_init) {
  constexpr int kMaxBracket = 30;
  constexpr int kMaxZoom = 40;

  LineSearchOutcome outcome;
  outcome.grad.resize(x0.size());

  // Evaluates along the ray; outcome.x/outcome.grad always hold the values
  // of the most recent evaluation, which is the accepted point whenever we
  // return immediately after a successful test.
  auto eval = [&](double alpha) -> LinePoint {
    outcome.x = x0 + alpha * dir;
    const double f = objective(outcome.x, outcome.grad);
    return {alpha, f, outcome.grad.dot(dir)};
  };

  auto armijo = [&](const LinePoint& p) {
    return p.f <= origin.f + kWolfeC1 * p.alpha * origin.slope;
  };
  auto curvature = [&](const LinePoint& p) {
    return std::abs(p.slope) <= kWolfeC2 * std::abs(origin.slope);
  };

  auto zoom = [&](LinePoint lo, LinePoint hi) {
    for (int i = 0; i < kMaxZoom; ++i) {
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
      LinePoint trial = eval(cubic_step(lo, hi));
      if (!std::isfinite(trial.f) || !armijo(trial) || trial.f >= lo.f) {
        hi = trial;
        continue;
      }
      if (curvature(trial)) {
        outcome.ok = true;
        outcome.point = trial;
        return;
      }
      if (trial.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = trial;
    }
    // The interval collapsed; accept lo if it happens to satisfy both
    // conditions (re-evaluated so x/grad match).
    if (lo.alpha > 0.0) {
      LinePoint best = eval(lo.alpha);
      if (armijo(best) && curvature(best)) {
        outcome.ok = true;
        outcome.point = best;
      }
    }
  };

  LinePoint prev = origin;
  double alpha = alpha_init;
  for (int i = 0; i < kMaxBracket; ++i) {
    LinePoint trial = eval(alpha);
    if (!std::isfinite(trial.f)) {
      // Overshot into a bad region; shrink toward the last good point.
      alpha = 0.5 * (prev.alpha + alpha);
      continue;
    }
    if (!armijo(trial) || (i > 0 && trial.f >= prev.f)) {
      zoom(prev, trial);
      return outcome;
    }
    if (curvature(trial)) {
      outcome.ok = true;
      outcome.point = trial;
      return outcome;
    }
    if (trial.slope >= 0.0) {
      zoom(trial, prev);
      return outcome;
    }
    prev = trial;
    alpha *= 2.0;
    if (alpha > 1e12) break;
  }
  return outcome;
}

}  // namespace

CgResult minimize_cg(const Objective& objective, Eigen::VectorXd x0, const CgOptions& options) {
  if (options.max_iters < 1) throw std::invalid_argument("cg: max_iters must be >= 1");
  const int dim = static_cast<int>(x0.size());

  Eigen::VectorXd grad(dim);
  double f = objective(x0, grad);
  if (!std::isfinite(f) || !grad.allFinite()) {
    throw std::invalid_argument("cg: objective not finite at the starting point");
  }

  CgResult result;
  result.x = std::move(x0);
  if (grad.lpNorm<Eigen::Infinity>() <= options.grad_tol) {
    result.status = CgStatus::converged;
    return result;
  }

  Eigen::VectorXd dir = -grad;
  double prev_f = f;
  double prev_alpha = 0.0;
  int since_restart = 0;

  for (int iter = 0; iter < options.max_iters; ++iter) {
    double slope = grad.dot(dir);
    bool steepest = since_restart == 0;
    if (slope >= 0.0) {
      // Not a descent direction; force a steepest-descent restart.
      dir = -grad;
      slope = grad.dot(dir);
      steepest = true;
      since_restart = 0;
    }

    // Initial trial step: unit step, or the scale suggested by the previous
    // decrease (Nocedal-Wright 3.60), whichever is smaller.
    double alpha_init = 1.0;
    if (iter > 0) {
      const double guess = 2.02 * (prev_f - f) / -slope;
      if (std::isfinite(guess) && guess > 0.0) alpha_init = std::min(1.0, guess);
      if (prev_alpha > 0.0) alpha_init = std::max(alpha_init, 0.1 * prev_alpha);
    }

    LineSearchOutcome outcome =
        wolfe_line_search(objective, result.x, dir, LinePoint{0.0, f, slope}, alpha_init);
    if (!outcome.ok && !steepest) {
      // One retry along steepest descent before giving up.
      dir = -grad;
      since_restart = 0;
      outcome = wolfe_line_search(objective, result.x, dir, LinePoint{0.0, f, grad.dot(dir)}, 1.0);
    }
    if (!outcome.ok) {
      result.status = CgStatus::line_search_failed;
      return result;
    }

    prev_f = f;
    prev_alpha = outcome.point.alpha;
    f = outcome.point.f;
    Eigen::VectorXd new_grad = std::move(outcome.grad);
    result.x = std::move(outcome.x);
    result.trace.push_back(f);

    if (new_grad.lpNorm<Eigen::Infinity>() <= options.grad_tol) {
      grad = std::move(new_grad);
      result.status = CgStatus::converged;
      return result;
    }

    // Polak-Ribiere+ update with periodic restart.
    ++since_restart;
    double beta = 0.0;
    if (since_restart < dim + 1) {
      beta = std::max(0.0, new_grad.dot(new_grad - grad) / grad.squaredNorm());
    } else {
      since_restart = 0;
    }
    dir = -new_grad + beta * dir;
    grad = std::move(new_grad);
    if (beta == 0.0) since_restart = 0;
  }
  result.status = CgStatus::max_iters_reached;
  return result;
}

Eigen::VectorXd init_parameters(int k, int d, int o, double init_scale, Rng& rng) {
  Eigen::VectorXd x(k * d + k + o * k + o);
  const double hidden_range = init_scale / std::sqrt(static_cast<double>(d));
  const double output_range = init_scale / std::sqrt(static_cast<double>(k));
  int at = 0;
  for (int i = 0; i < k * d + k; ++i) x[at++] = rng.uniform(-hidden_range, hidden_range);
  for (int i = 0; i < o * k + o; ++i) x[at++] = rng.uniform(-output_range, output_range);
  return x;
}

namespace {

// Whitening change of variables for the hidden layer. CG runs on
// standardized features (the raw feature covariances differ wildly between
// variants and condition the loss badly); hidden weights and biases map back
// exactly, so the trained model and the penalized objective are those of the
// original parameterization.
struct Whitening {
  Eigen::VectorXd mean;        // d
  Eigen::MatrixXd chol;        // lower Cholesky factor L of the feature covariance
  Eigen::MatrixXd features;    // standardized features S = (U - mean) L^{-T}
};

Whitening make_whitening(const Eigen::MatrixXd& raw) {
  const int n = static_cast<int>(raw.rows());
  const int d = static_cast<int>(raw.cols());
  Whitening wh;
  wh.mean = raw.colwise().mean();
  Eigen::MatrixXd centered = raw.rowwise() - wh.mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / std::max(1, n - 1);
  cov.diagonal().array() += 1e-8 * std::max(cov.trace() / d, 1e-12);
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    wh.chol = llt.matrixL();
  } else {
    wh.chol = cov.diagonal().cwiseMax(1e-12).cwiseSqrt().asDiagonal();
  }
  wh.features =
      wh.chol.triangularView<Eigen::Lower>().solve(centered.transpose()).transpose();
  return wh;
}

// Model space -> whitened space: v = L^T w, c = b + w.mean.
Eigen::VectorXd to_whitened(const Whitening& wh, int k, int o, const Eigen::VectorXd& x) {
  const int d = static_cast<int>(wh.mean.size());
  Eigen::VectorXd out = x;
  const RowMajorMap hidden_w(x.data(), k, d);
  const Eigen::Map<const Eigen::VectorXd> hidden_b(x.data() + k * d, k);
  RowMajorMutable v(out.data(), k, d);
  Eigen::Map<Eigen::VectorXd> c(out.data() + k * d, k);
  v = hidden_w * wh.chol;
  c = hidden_b + hidden_w * wh.mean;
  return out;
}

// Whitened space -> model space: w = L^{-T} v, b = c - w.mean.
Eigen::VectorXd from_whitened(const Whitening& wh, int k, int o, const Eigen::VectorXd& xv) {
  const int d = static_cast<int>(wh.mean.size());
  Eigen::VectorXd out = xv;
  const RowMajorMap v(xv.data(), k, d);
  const Eigen::Map<const Eigen::VectorXd> c(xv.data() + k * d, k);
  RowMajorMutable hidden_w(out.data(), k, d);
  Eigen::Map<Eigen::VectorXd> hidden_b(out.data() + k * d, k);
  hidden_w = wh.chol.transpose()
                 .triangularView<Eigen::Upper>()
                 .solve(v.transpose())
                 .transpose();
  hidden_b = c - hidden_w * wh.mean;
  return out;
}

// Total loss in the whitened coordinates; the weight-decay penalty is still
// taken on the original-space hidden weights.
double whitened_objective(const Whitening& wh, const Eigen::MatrixXd& targets,
                          double weight_decay, int k, const Eigen::VectorXd& xv,
                          Eigen::VectorXd& grad) {
  const int d = static_cast<int>(wh.mean.size());
  const int o = static_cast<int>(targets.cols());
  double total = mlp_data_term(wh.features, targets, k, xv, &grad);
  if (weight_decay > 0.0) {
    const RowMajorMap v(xv.data(), k, d);
    const RowMajorMap output_w(xv.data() + k * d + k, o, k);
    RowMajorMutable g_v(grad.data(), k, d);
    RowMajorMutable g_output_w(grad.data() + k * d + k, o, k);

    const Eigen::MatrixXd w_t =
        wh.chol.transpose().triangularView<Eigen::Upper>().solve(v.transpose());  // d x k
    total += weight_decay * (w_t.squaredNorm() + output_w.squaredNorm());
    g_v += 2.0 * weight_decay *
           wh.chol.triangularView<Eigen::Lower>().solve(w_t).transpose();
    g_output_w += 2.0 * weight_decay * output_w;
  }
  return total;
}

}  // namespace

MlpParams train_core(const CorePreparation& prep, int hidden, const TrainConfig& config,
                     LossValue* best_loss, std::vector<double>* restart_losses) {
  config.require_valid();
  if (prep.features.rows() != prep.targets.rows() || prep.features.rows() == 0) {
    throw std::invalid_argument("train: empty or inconsistent prepared data");
  }
  const int d = static_cast<int>(prep.features.cols());
  const int o = static_cast<int>(prep.targets.cols());
  const int k = hidden;
  if (k < 1) throw std::invalid_argument("train: hidden width must be >= 1");

  const Whitening wh = make_whitening(prep.features);
  const Objective objective = [&](const Eigen::VectorXd& xv, Eigen::VectorXd& grad) {
    return whitened_objective(wh, prep.targets, config.weight_decay, k, xv, grad);
  };
  const CgOptions cg{config.max_iters, config.grad_tol};

  Eigen::VectorXd best_x;
  double best_total = std::numeric_limits<double>::infinity();
  if (restart_losses != nullptr) restart_losses->assign(config.restarts, 0.0);
  int failures = 0;
  std::string first_error;

  for (int r = 0; r < config.restarts; ++r) {
    double total = std::numeric_limits<double>::infinity();
    try {
      Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(r));
      const Eigen::VectorXd x0 = init_parameters(k, d, o, config.init_scale, rng);
      CgResult res = minimize_cg(objective, to_whitened(wh, k, o, x0), cg);
      const Eigen::VectorXd x = from_whitened(wh, k, o, res.x);
      total = core_objective(prep.features, prep.targets, config.weight_decay, k, x, nullptr);
      if (std::isfinite(total) && total < best_total) {
        best_total = total;
        best_x = x;
      }
    } catch (const std::exception& e) {
      ++failures;
      if (first_error.empty()) first_error = e.what();
    }
    if (restart_losses != nullptr) (*restart_losses)[r] = total;
  }

  if (failures == config.restarts) {
    throw std::runtime_error("train: all " + std::to_string(config.restarts) +
                             " restarts failed (" + first_error + ")");
  }

  if (best_loss != nullptr) {
    best_loss->total = core_objective(prep.features, prep.targets, config.weight_decay, k, best_x,
                                      nullptr, &best_loss->data_term);
    best_loss->penalty = best_loss->total - best_loss->data_term;
  }
  return unflatten(k, d, o, best_x);
}

TrainResult train(const VariantSpec& spec, const LabeledDataset& ds, const TrainConfig& config) {
  spec.require_valid();
  config.require_valid();
  if (ds.size() == 0) throw std::invalid_argument("train: empty dataset");

  const BSplineBasis* basis = spec.basis ? &*spec.basis : nullptr;
  CorePreparation prep{feature_matrix(spec.variant, basis, ds), ds.targets};

  TrainResult result;
  MlpParams net = train_core(prep, spec.hidden, config, &result.loss, &result.restart_losses);
  switch (spec.variant) {
    case Variant::naive: result.model = NaiveMLP{std::move(net), config.seed}; break;
    case Variant::fmlp: result.model = FunctionalMLP{*spec.basis, std::move(net), config.seed}; break;
    case Variant::fpmlp:
      result.model = ProjectionMLP{*spec.basis, std::move(net), config.seed};
      break;
  }
  return result;
}

}  // namespace fmlp
