#include "fmlp/fmodel.hpp"

#include <json.hpp>

namespace fmlp {

void MlpParams::require_consistent() const {
  const int k = hidden_width();
  if (k < 1) throw std::invalid_argument("mlp: hidden width must be >= 1");
  if (input_dim() < 1) throw std::invalid_argument("mlp: input dimension must be >= 1");
  if (output_dim() < 1) throw std::invalid_argument("mlp: output dimension must be >= 1");
  if (hidden_b.size() != k || output_w.cols() != k || output_b.size() != output_dim()) {
    throw std::invalid_argument("mlp: inconsistent parameter shapes");
  }
  if (!hidden_w.allFinite() || !hidden_b.allFinite() || !output_w.allFinite() ||
      !output_b.allFinite()) {
    throw std::invalid_argument("mlp: non-finite parameters");
  }
}

Eigen::VectorXd MlpParams::forward(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  const Eigen::VectorXd hidden = ((hidden_w * u + hidden_b).array().tanh()).matrix();
  return output_b + output_w * hidden;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::naive: return "mlp";
    case Variant::fmlp: return "fmlp";
    case Variant::fpmlp: return "fpmlp";
  }
  throw std::logic_error("unreachable");
}

Variant variant_from_name(const std::string& name) {
  if (name == "mlp") return Variant::naive;
  if (name == "fmlp") return Variant::fmlp;
  if (name == "fpmlp") return Variant::fpmlp;
  throw std::invalid_argument("unknown variant '" + name + "' (expected mlp, fmlp or fpmlp)");
}

double approx_integral(const BSplineBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& w,
                       const SampledFunction& f) {
  f.require_consistent();
  if (w.size() != basis.size()) {
    throw std::invalid_argument("approx_integral: coefficient length != basis size");
  }
  const int m = f.size();
  const int k = basis.order();
  double local[BSplineBasis::kMaxOrder];
  double acc = 0.0;
  for (int j = 0; j < m; ++j) {
    const int s = basis.span(f.points[j]);
    basis.eval_local(f.points[j], s, local);
    double weight = 0.0;
    for (int i = 0; i < k; ++i) weight += w[s - k + 1 + i] * local[i];
    acc += weight * f.values[j];
  }
  return acc / m;
}

Eigen::VectorXd moment_features(const BSplineBasis& basis, const SampledFunction& f) {
  f.require_consistent();
  const int m = f.size();
  const int k = basis.order();
  double local[BSplineBasis::kMaxOrder];
  Eigen::VectorXd moments = Eigen::VectorXd::Zero(basis.size());
  for (int j = 0; j < m; ++j) {
    const int s = basis.span(f.points[j]);
    basis.eval_local(f.points[j], s, local);
    for (int i = 0; i < k; ++i) moments[s - k + 1 + i] += local[i] * f.values[j];
  }
  return moments / m;
}

Eigen::VectorXd forward_fmlp(const FunctionalMLP& model, const SampledFunction& f) {
  model.net.require_consistent();
  const int k = model.net.hidden_width();
  Eigen::VectorXd pre(k);
  for (int i = 0; i < k; ++i) {
    pre[i] = model.net.hidden_b[i] + approx_integral(model.basis, model.net.hidden_w.row(i), f);
  }
  return model.net.output_b + model.net.output_w * pre.array().tanh().matrix();
}

Eigen::VectorXd forward_naive(const NaiveMLP& model, const SampledFunction& f) {
  model.net.require_consistent();
  f.require_consistent();
  if (f.size() != model.net.input_dim()) {
    throw std::invalid_argument("naive forward: input has " + std::to_string(f.size()) +
                                " observations, model expects " +
                                std::to_string(model.net.input_dim()));
  }
  return model.net.forward(f.values);
}

Eigen::VectorXd forward_fpmlp(const ProjectionMLP& model, const SampledFunction& f) {
  model.net.require_consistent();
  if (model.net.input_dim() != model.basis.size()) {
    throw std::invalid_argument("fpmlp: net input dimension != basis size");
  }
  return model.net.forward(fit_coefficients(model.basis, f));
}

Eigen::VectorXd forward(const Model& model, const SampledFunction& f) {
  return std::visit(
      [&](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NaiveMLP>) return forward_naive(m, f);
        if constexpr (std::is_same_v<T, FunctionalMLP>) return forward_fmlp(m, f);
        if constexpr (std::is_same_v<T, ProjectionMLP>) return forward_fpmlp(m, f);
      },
      model);
}

Eigen::VectorXd equivalence_weights(const BSplineBasis& basis,
                                    const Eigen::Ref<const Eigen::VectorXd>& c,
                                    const Measure& mu) {
  if (c.size() != basis.size()) {
    throw std::invalid_argument("equivalence_weights: coefficient length != basis size");
  }
  const Eigen::MatrixXd gram = gram_matrix(basis, mu);
  return gram.ldlt().solve(c);
}

int param_count(const MlpParams& net) {
  net.require_consistent();
  const int k = net.hidden_width();
  const int d = net.input_dim();
  const int o = net.output_dim();
  return k * (d + 1) + o * (k + 1);
}

int param_count(const Model& model) { return param_count(params_of(model)); }

Variant variant_of(const Model& model) {
  return std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NaiveMLP>) return Variant::naive;
        if constexpr (std::is_same_v<T, FunctionalMLP>) return Variant::fmlp;
        if constexpr (std::is_same_v<T, ProjectionMLP>) return Variant::fpmlp;
      },
      model);
}

const MlpParams& params_of(const Model& model) {
  return std::visit([](const auto& m) -> const MlpParams& { return m.net; }, model);
}

int argmax_class(const Eigen::Ref<const Eigen::VectorXd>& out) {
  int best = 0;
  for (int i = 1; i < out.size(); ++i) {
    if (out[i] > out[best]) best = i;
  }
  return best;
}

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  const int r = static_cast<int>(rows.size());
  if (r == 0) throw std::invalid_argument("model json: empty matrix");
  const int c = static_cast<int>(rows[0].size());
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c) {
      throw std::invalid_argument("model json: ragged matrix");
    }
    for (int j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (int i = 0; i < static_cast<int>(arr.size()); ++i) v[i] = arr[i].get<double>();
  return v;
}

json net_to_json(const MlpParams& net) {
  return json{{"hidden_weights", matrix_to_json(net.hidden_w)},
              {"hidden_bias", vector_to_json(net.hidden_b)},
              {"output_weights", matrix_to_json(net.output_w)},
              {"output_bias", vector_to_json(net.output_b)}};
}

MlpParams net_from_json(const json& j) {
  MlpParams net;
  net.hidden_w = matrix_from_json(j.at("hidden_weights"));
  net.hidden_b = vector_from_json(j.at("hidden_bias"));
  net.output_w = matrix_from_json(j.at("output_weights"));
  net.output_b = vector_from_json(j.at("output_bias"));
  net.require_consistent();
  return net;
}

json basis_to_json(const BSplineBasis& basis) {
  return json{{"order", basis.order()},
              {"p", basis.size()},
              {"domain", {basis.domain().lo, basis.domain().hi}}};
}

BSplineBasis basis_from_json(const json& j) {
  return make_basis(j.at("p").get<int>(), j.at("order").get<int>(),
                    Interval{j.at("domain")[0].get<double>(), j.at("domain")[1].get<double>()});
}

}  // namespace

std::string model_to_json(const Model& model) {
  const MlpParams& net = params_of(model);
  json j{{"variant", variant_name(variant_of(model))},
         {"k", net.hidden_width()},
         {"o", net.output_dim()},
         {"net", net_to_json(net)}};
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        j["seed"] = m.seed;
        if constexpr (std::is_same_v<T, NaiveMLP>) {
          j["m"] = m.net.input_dim();
        } else {
          j["basis"] = basis_to_json(m.basis);
        }
      },
      model);
  return j.dump();
}

Model model_from_json(const std::string& text) {
  const json j = json::parse(text);
  const Variant v = variant_from_name(j.at("variant").get<std::string>());
  MlpParams net = net_from_json(j.at("net"));
  const std::uint64_t seed = j.value("seed", std::uint64_t{0});
  switch (v) {
    case Variant::naive: return NaiveMLP{std::move(net), seed};
    case Variant::fmlp: return FunctionalMLP{basis_from_json(j.at("basis")), std::move(net), seed};
    case Variant::fpmlp:
      return ProjectionMLP{basis_from_json(j.at("basis")), std::move(net), seed};
  }
  throw std::logic_error("unreachable");
}

}  // namespace fmlp
