#include "fmlp/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "fmlp/oracle.hpp"
#include "fmlp/rng.hpp"

namespace fmlp {

namespace {

using nlohmann::json;

constexpr std::uint64_t kTrainDataStream = 0x11;
constexpr std::uint64_t kTestDataStream = 0x22;
constexpr std::uint64_t kCvStream = 0x33;
constexpr std::uint64_t kSplitStream = 0x44;

double now_ms(const std::chrono::steady_clock::time_point& from) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - from)
      .count();
}

void require_known_keys(const json& j, const std::set<std::string>& known,
                        const std::string& where) {
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

}  // namespace

void ExperimentConfig::require_valid() const {
  static const std::set<std::string> kExperiments{"waveform", "tecator", "tecator-d2",
                                                  "teacher-student"};
  if (!kExperiments.count(experiment)) {
    throw ConfigError("config: unknown experiment '" + experiment +
                      "' (expected waveform, tecator, tecator-d2 or teacher-student)");
  }
  if (replications < 1) throw ConfigError("config: replications must be >= 1");
  if (variants.empty()) throw ConfigError("config: variants must be nonempty");
  if (folds < 2) throw ConfigError("config: folds must be >= 2");
  try {
    grid.require_valid();
    train.require_valid();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }

  ExperimentConfig config;
  try {
    require_known_keys(j, {"experiment", "replications", "variants", "grid", "master_seed",
                           "output", "folds", "threads", "record_timing", "train", "waveform",
                           "tecator", "teacher_student"},
                       "top level");
    config.experiment = j.at("experiment").get<std::string>();
    config.replications = j.value("replications", config.replications);
    config.master_seed = j.value("master_seed", config.master_seed);
    config.output_path = j.value("output", config.output_path);
    config.folds = j.value("folds", config.folds);
    config.threads = j.value("threads", config.threads);
    config.record_timing = j.value("record_timing", config.record_timing);

    if (j.contains("variants")) {
      config.variants.clear();
      for (const auto& name : j.at("variants")) {
        config.variants.push_back(variant_from_name(name.get<std::string>()));
      }
    }

    // Spectra grids default to the larger bases.
    if (config.experiment == "tecator" || config.experiment == "tecator-d2") {
      config.grid.basis_sizes = {15, 20};
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      require_known_keys(g, {"hidden", "basis", "weight_decay"}, "grid");
      if (g.contains("hidden")) config.grid.hidden_widths = g.at("hidden").get<std::vector<int>>();
      if (g.contains("basis")) config.grid.basis_sizes = g.at("basis").get<std::vector<int>>();
      if (g.contains("weight_decay")) {
        config.grid.weight_decays = g.at("weight_decay").get<std::vector<double>>();
      }
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      require_known_keys(t, {"restarts", "max_iters", "grad_tol", "init_scale", "weight_decay"},
                         "train");
      config.train.restarts = t.value("restarts", config.train.restarts);
      config.train.max_iters = t.value("max_iters", config.train.max_iters);
      config.train.grad_tol = t.value("grad_tol", config.train.grad_tol);
      config.train.init_scale = t.value("init_scale", config.train.init_scale);
      config.train.weight_decay = t.value("weight_decay", config.train.weight_decay);
    }
    if (j.contains("waveform")) {
      const json& w = j.at("waveform");
      require_known_keys(w, {"train_per_class", "test_per_class", "m", "noise_sd"}, "waveform");
      config.waveform.train_per_class = w.value("train_per_class", config.waveform.train_per_class);
      config.waveform.test_per_class = w.value("test_per_class", config.waveform.test_per_class);
      config.waveform.m = w.value("m", config.waveform.m);
      config.waveform.noise_sd = w.value("noise_sd", config.waveform.noise_sd);
    }
    if (j.contains("tecator")) {
      const json& t = j.at("tecator");
      require_known_keys(t, {"path", "n_train", "d2_basis_size"}, "tecator");
      config.tecator.path = t.value("path", config.tecator.path);
      config.tecator.n_train = t.value("n_train", config.tecator.n_train);
      config.tecator.d2_basis_size = t.value("d2_basis_size", config.tecator.d2_basis_size);
    }
    if (j.contains("teacher_student")) {
      const json& t = j.at("teacher_student");
      require_known_keys(t, {"stages", "noise_sd", "test_functions"}, "teacher_student");
      if (t.contains("stages")) {
        config.teacher_student.stages.clear();
        for (const auto& stage : t.at("stages")) {
          config.teacher_student.stages.push_back(
              {stage.at(0).get<int>(), stage.at(1).get<int>()});
        }
      }
      config.teacher_student.noise_sd = t.value("noise_sd", config.teacher_student.noise_sd);
      config.teacher_student.test_functions =
          t.value("test_functions", config.teacher_student.test_functions);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  config.require_valid();
  return config;
}

namespace {

// One classification replication shared by the waveform and tecator
// protocols: cross-validated selection per variant on the train part, test
// error on the held-out part.
std::vector<RunRecord> classification_replication(const ExperimentConfig& config, int replication,
                                                  const LabeledDataset& train_ds,
                                                  const LabeledDataset& test_ds, bool stratified,
                                                  int grid_threads) {
  const std::uint64_t rep_seed = config.master_seed + static_cast<std::uint64_t>(replication);
  std::vector<RunRecord> records;
  for (Variant variant : config.variants) {
    const auto started = std::chrono::steady_clock::now();
    SearchOptions options;
    options.folds = config.folds;
    options.stratified = stratified;
    options.threads = grid_threads;
    TrainConfig train_config = config.train;
    train_config.seed = Rng::stream(rep_seed, kCvStream).next_u64();

    const CVReport report = grid_search(variant, train_ds, config.grid, options, train_config);
    const double error = evaluate(report.model, test_ds);
    const CvCell& winner = report.selected_cell();

    RunRecord record;
    record.experiment = config.experiment;
    record.replication = replication;
    record.variant = variant_name(variant);
    record.seed = rep_seed;
    record.error = error;
    record.hidden = winner.hidden;
    record.basis_size = winner.basis_size;
    record.weight_decay = winner.weight_decay;
    record.param_count = report.param_count;
    record.wall_ms = config.record_timing ? now_ms(started) : 0.0;
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<RunRecord> run_waveform(const ExperimentConfig& config, std::ostream* progress) {
  std::vector<std::vector<RunRecord>> per_replication(config.replications);

  const auto run_one = [&](int r, int grid_threads) {
    const std::uint64_t rep_seed = config.master_seed + static_cast<std::uint64_t>(r);
    WaveSpec train_spec{config.waveform.train_per_class, config.waveform.m,
                        config.waveform.noise_sd, Interval{1.0, 21.0},
                        Rng::stream(rep_seed, kTrainDataStream).next_u64()};
    WaveSpec test_spec{config.waveform.test_per_class, config.waveform.m,
                       config.waveform.noise_sd, Interval{1.0, 21.0},
                       Rng::stream(rep_seed, kTestDataStream).next_u64()};
    per_replication[r] = classification_replication(config, r, gen_waveform(train_spec),
                                                    gen_waveform(test_spec), true, grid_threads);
  };

  int workers = config.threads == 0 ? static_cast<int>(std::thread::hardware_concurrency())
                                    : config.threads;
  workers = std::max(1, std::min(workers, config.replications));
  if (workers == 1) {
    for (int r = 0; r < config.replications; ++r) {
      run_one(r, config.threads);
      if (progress) *progress << "replication " << r + 1 << "/" << config.replications << " done\n";
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < config.replications; r = next.fetch_add(1)) {
          run_one(r, 1);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<RunRecord> records;
  for (auto& group : per_replication) {
    for (auto& record : group) records.push_back(std::move(record));
  }
  return records;
}

std::vector<RunRecord> run_tecator(const ExperimentConfig& config, bool second_derivative,
                                   std::ostream* progress) {
  LabeledDataset full = load_tecator(config.tecator.path);
  if (second_derivative) {
    const BSplineBasis basis = make_basis(config.tecator.d2_basis_size, 4, full.domain);
    full = second_derivative_preprocess(full, basis);
  }

  std::vector<RunRecord> records;
  for (int r = 0; r < config.replications; ++r) {
    const std::uint64_t rep_seed = config.master_seed + static_cast<std::uint64_t>(r);
    // Plain random 160/55 selection, repeated per replication.
    const auto [train_ds, test_ds] = split_train_test(
        full, config.tecator.n_train, Rng::stream(rep_seed, kSplitStream).next_u64(), false);
    auto group = classification_replication(config, r, train_ds, test_ds, true, config.threads);
    for (auto& record : group) records.push_back(std::move(record));
    if (progress) *progress << "replication " << r + 1 << "/" << config.replications << " done\n";
  }
  return records;
}

FunctionalMLP make_teacher(std::uint64_t seed) {
  const BSplineBasis basis = make_basis(5, 4, Interval{0.0, 1.0});
  Rng rng = Rng::stream(seed, 0x7EAC4E8ULL);
  MlpParams net;
  net.hidden_w.resize(2, 5);
  net.hidden_b.resize(2);
  net.output_w.resize(1, 2);
  net.output_b.resize(1);
  for (int i = 0; i < 2; ++i) {
    for (int l = 0; l < 5; ++l) net.hidden_w(i, l) = rng.uniform(-3.0, 3.0);
    net.hidden_b[i] = rng.uniform(-0.5, 0.5);
    net.output_w(0, i) = rng.uniform(-2.0, 2.0);
  }
  net.output_b[0] = rng.uniform(-0.5, 0.5);
  return FunctionalMLP{basis, std::move(net), seed};
}

std::vector<RunRecord> run_teacher_student(const ExperimentConfig& config,
                                           std::ostream* progress) {
  const FunctionalMLP teacher = make_teacher(config.master_seed);
  const BSplineBasis& basis = teacher.basis;
  const Measure mu = Measure::uniform(basis.domain());
  constexpr int kTargetResolution = 801;

  const auto random_curve = [&](Rng& rng) {
    Eigen::VectorXd alpha(basis.size());
    for (int l = 0; l < alpha.size(); ++l) alpha[l] = rng.uniform(-1.0, 1.0);
    return [alpha, &basis](double x) { return basis.eval(x).dot(alpha); };
  };

  std::vector<RunRecord> records;
  for (int r = 0; r < config.replications; ++r) {
    const std::uint64_t rep_seed = config.master_seed + static_cast<std::uint64_t>(r);
    for (size_t stage = 0; stage < config.teacher_student.stages.size(); ++stage) {
      const auto [n, m] = config.teacher_student.stages[stage];
      const auto started = std::chrono::steady_clock::now();
      Rng rng = Rng::stream(rep_seed, 0x515000ULL + stage);

      LabeledDataset train_ds;
      train_ds.domain = basis.domain();
      train_ds.targets.resize(n, 1);
      for (int i = 0; i < n; ++i) {
        const auto g = random_curve(rng);
        train_ds.functions.push_back(
            sample_under_he(g, m, config.teacher_student.noise_sd, rng.next_u64(), mu));
        train_ds.targets(i, 0) = oracle::dense_forward(teacher, g, kTargetResolution)[0];
      }

      VariantSpec spec;
      spec.variant = Variant::fmlp;
      spec.hidden = teacher.net.hidden_width();
      spec.basis = basis;
      TrainConfig train_config = config.train;
      train_config.seed = Rng::stream(rep_seed, 0x57A9E0ULL + stage).next_u64();
      const TrainResult result = train(spec, train_ds, train_config);

      // Test MSE against the teacher's true outputs on fresh dense noiseless
      // curves.
      Rng test_rng = Rng::stream(config.master_seed, 0x7E57ULL + 31 * r + stage);
      constexpr int kTestPoints = 1001;
      double mse = 0.0;
      for (int i = 0; i < config.teacher_student.test_functions; ++i) {
        const auto g = random_curve(test_rng);
        SampledFunction f;
        f.points.resize(kTestPoints);
        f.values.resize(kTestPoints);
        for (int j = 0; j < kTestPoints; ++j) {
          f.points[j] = grid_point(basis.domain(), kTestPoints, j);
          f.values[j] = g(f.points[j]);
        }
        const double truth = oracle::dense_forward(teacher, g, kTargetResolution)[0];
        const double predicted = forward(result.model, f)[0];
        mse += (predicted - truth) * (predicted - truth);
      }
      mse /= config.teacher_student.test_functions;

      RunRecord record;
      record.experiment = config.experiment;
      record.replication = r;
      record.variant = variant_name(Variant::fmlp);
      record.seed = rep_seed;
      record.error = mse;
      record.hidden = spec.hidden;
      record.basis_size = basis.size();
      record.weight_decay = train_config.weight_decay;
      record.param_count = param_count(result.model);
      record.wall_ms = config.record_timing ? now_ms(started) : 0.0;
      record.n_functions = n;
      record.m_points = m;
      records.push_back(std::move(record));
    }
    if (progress) *progress << "replication " << r + 1 << "/" << config.replications << " done\n";
  }
  return records;
}

}  // namespace

std::vector<RunRecord> run_experiment(const ExperimentConfig& config, std::ostream* progress) {
  config.require_valid();
  std::vector<RunRecord> records;
  if (config.experiment == "waveform") {
    records = run_waveform(config, progress);
  } else if (config.experiment == "tecator") {
    records = run_tecator(config, false, progress);
  } else if (config.experiment == "tecator-d2") {
    records = run_tecator(config, true, progress);
  } else {
    records = run_teacher_student(config, progress);
  }

  if (!config.output_path.empty()) {
    write_jsonl(records, config.output_path);
    std::filesystem::path summary(config.output_path);
    summary.replace_filename(summary.stem().string() + "_summary.csv");
    std::ofstream out(summary);
    if (!out) throw DataError("cannot write summary file '" + summary.string() + "'");
    write_summary_csv(records, out);
  }
  return records;
}

std::string record_to_json_line(const RunRecord& record) {
  json j{{"experiment", record.experiment}, {"replication", record.replication},
         {"variant", record.variant},       {"seed", record.seed},
         {"error", record.error},           {"hidden", record.hidden},
         {"basis_size", record.basis_size}, {"weight_decay", record.weight_decay},
         {"param_count", record.param_count}, {"wall_ms", record.wall_ms}};
  if (record.n_functions > 0) {
    j["n_functions"] = record.n_functions;
    j["m_points"] = record.m_points;
  }
  return j.dump();
}

void write_jsonl(const std::vector<RunRecord>& records, const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write results file '" + path + "'");
  for (const auto& record : records) out << record_to_json_line(record) << "\n";
}

std::vector<RunRecord> parse_jsonl(std::istream& in) {
  std::vector<RunRecord> records;
  std::string line;
  int index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      RunRecord record;
      record.experiment = j.at("experiment").get<std::string>();
      record.replication = j.at("replication").get<int>();
      record.variant = j.at("variant").get<std::string>();
      record.seed = j.at("seed").get<std::uint64_t>();
      record.error = j.at("error").get<double>();
      record.hidden = j.at("hidden").get<int>();
      record.basis_size = j.at("basis_size").get<int>();
      record.weight_decay = j.at("weight_decay").get<double>();
      record.param_count = j.at("param_count").get<int>();
      record.wall_ms = j.at("wall_ms").get<double>();
      record.n_functions = j.value("n_functions", 0);
      record.m_points = j.value("m_points", 0);
      records.push_back(std::move(record));
    } catch (const json::exception& e) {
      throw DataError("results record " + std::to_string(index) + ": " + e.what());
    }
    ++index;
  }
  if (records.empty()) throw DataError("results stream holds no records");
  return records;
}

std::vector<RunRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open results file '" + path + "'");
  return parse_jsonl(in);
}

namespace {

struct Quartiles {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

Quartiles quartiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto at = [&](double q) {
    const double h = q * (v.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(h));
    const double frac = h - lo;
    return (lo + 1 < v.size()) ? v[lo] + frac * (v[lo + 1] - v[lo]) : v[lo];
  };
  return {at(0.25), at(0.5), at(0.75)};
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / v.size();
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / (v.size() - 1));
}

// Group label: the variant, annotated with the stage for teacher-student
// records so different (n, m) settings are not pooled.
std::string group_of(const RunRecord& record) {
  if (record.n_functions > 0) {
    return record.variant + "@n" + std::to_string(record.n_functions) + "m" +
           std::to_string(record.m_points);
  }
  return record.variant;
}

}  // namespace

void write_summary_csv(const std::vector<RunRecord>& records, std::ostream& out) {
  if (records.empty()) throw DataError("summary: no records");

  std::map<std::string, std::map<std::string, std::vector<const RunRecord*>>> by_exp_group;
  for (const auto& record : records) {
    by_exp_group[record.experiment][group_of(record)].push_back(&record);
  }

  out << "kind,experiment,variant,versus,count,mean_error,sd_error,q1,median,q3,"
         "mean_params,mean_wall_ms,wins,ties,losses\n";
  out.precision(10);
  for (const auto& [experiment, groups] : by_exp_group) {
    for (const auto& [group, rows] : groups) {
      std::vector<double> errors, params, wall;
      for (const auto* r : rows) {
        errors.push_back(r->error);
        params.push_back(r->param_count);
        wall.push_back(r->wall_ms);
      }
      const Quartiles q = quartiles(errors);
      out << "stats," << experiment << "," << group << ",," << rows.size() << ","
          << mean_of(errors) << "," << sd_of(errors) << "," << q.q1 << "," << q.median << ","
          << q.q3 << "," << mean_of(params) << "," << mean_of(wall) << ",,,\n";
    }
    // Pairwise comparisons over replications shared by both variants.
    std::vector<std::string> names;
    for (const auto& [group, rows] : groups) names.push_back(group);
    for (size_t a = 0; a < names.size(); ++a) {
      for (size_t b = 0; b < names.size(); ++b) {
        if (a == b) continue;
        std::map<int, double> err_a, err_b;
        for (const auto* r : groups.at(names[a])) err_a[r->replication] = r->error;
        for (const auto* r : groups.at(names[b])) err_b[r->replication] = r->error;
        int wins = 0, ties = 0, losses = 0, count = 0;
        for (const auto& [rep, ea] : err_a) {
          const auto it = err_b.find(rep);
          if (it == err_b.end()) continue;
          ++count;
          if (ea < it->second) ++wins;
          else if (ea == it->second) ++ties;
          else ++losses;
        }
        if (count == 0) continue;
        out << "pairwise," << experiment << "," << names[a] << "," << names[b] << "," << count
            << ",,,,,,,," << wins << "," << ties << "," << losses << "\n";
      }
    }
  }
}

std::string render_report(const std::vector<RunRecord>& records) {
  if (records.empty()) throw DataError("report: no records");

  std::ostringstream out;
  out << std::fixed;
  std::map<std::string, std::vector<const RunRecord*>> by_exp;
  for (const auto& record : records) by_exp[record.experiment].push_back(&record);

  for (const auto& [experiment, rows] : by_exp) {
    std::map<std::string, std::vector<const RunRecord*>> groups;
    for (const auto* r : rows) groups[group_of(*r)].push_back(r);

    out << "== " << experiment << " ==\n\n";
    out << "Test error rate:\n";
    out << "  " << std::setw(16) << std::left << "variant" << std::right << std::setw(6) << "n"
        << std::setw(10) << "mean" << std::setw(10) << "sd" << std::setw(10) << "q1"
        << std::setw(10) << "median" << std::setw(10) << "q3" << "\n";
    for (const auto& [group, members] : groups) {
      std::vector<double> errors;
      for (const auto* r : members) errors.push_back(r->error);
      const Quartiles q = quartiles(errors);
      out << "  " << std::setw(16) << std::left << group << std::right << std::setw(6)
          << errors.size() << std::setprecision(4) << std::setw(10) << mean_of(errors)
          << std::setw(10) << sd_of(errors) << std::setw(10) << q.q1 << std::setw(10) << q.median
          << std::setw(10) << q.q3 << "\n";
    }

    std::set<int> hidden_values, basis_values;
    for (const auto* r : rows) {
      hidden_values.insert(r->hidden);
      if (r->basis_size > 0) basis_values.insert(r->basis_size);
    }

    out << "\nHidden-width selection counts:\n  " << std::setw(16) << std::left << "variant"
        << std::right;
    for (int h : hidden_values) out << std::setw(6) << h;
    out << "\n";
    for (const auto& [group, members] : groups) {
      out << "  " << std::setw(16) << std::left << group << std::right;
      for (int h : hidden_values) {
        const auto count = std::count_if(members.begin(), members.end(),
                                         [&](const RunRecord* r) { return r->hidden == h; });
        out << std::setw(6) << count;
      }
      out << "\n";
    }

    if (!basis_values.empty()) {
      out << "\nBasis-size selection counts:\n  " << std::setw(16) << std::left << "variant"
          << std::right;
      for (int b : basis_values) out << std::setw(6) << b;
      out << "\n";
      for (const auto& [group, members] : groups) {
        if (members.front()->basis_size == 0) continue;
        out << "  " << std::setw(16) << std::left << group << std::right;
        for (int b : basis_values) {
          const auto count = std::count_if(members.begin(), members.end(),
                                           [&](const RunRecord* r) { return r->basis_size == b; });
          out << std::setw(6) << count;
        }
        out << "\n";
      }
    }

    out << "\nParameter counts:\n  " << std::setw(16) << std::left << "variant" << std::right
        << std::setw(8) << "min" << std::setw(10) << "mean" << std::setw(8) << "max" << "\n";
    for (const auto& [group, members] : groups) {
      std::vector<double> params;
      for (const auto* r : members) params.push_back(r->param_count);
      out << "  " << std::setw(16) << std::left << group << std::right << std::setw(8)
          << static_cast<int>(*std::min_element(params.begin(), params.end()))
          << std::setprecision(1) << std::setw(10) << mean_of(params) << std::setw(8)
          << static_cast<int>(*std::max_element(params.begin(), params.end())) << "\n";
    }

    if (groups.size() > 1) {
      out << "\nPaired comparisons (wins/ties/losses over shared replications):\n";
      std::vector<std::string> names;
      for (const auto& [group, members] : groups) names.push_back(group);
      for (size_t a = 0; a < names.size(); ++a) {
        for (size_t b = a + 1; b < names.size(); ++b) {
          std::map<int, double> err_a, err_b;
          for (const auto* r : groups.at(names[a])) err_a[r->replication] = r->error;
          for (const auto* r : groups.at(names[b])) err_b[r->replication] = r->error;
          int wins = 0, ties = 0, losses = 0;
          for (const auto& [rep, ea] : err_a) {
            const auto it = err_b.find(rep);
            if (it == err_b.end()) continue;
            if (ea < it->second) ++wins;
            else if (ea == it->second) ++ties;
            else ++losses;
          }
          out << "  " << names[a] << " vs " << names[b] << ": " << wins << "/" << ties << "/"
              << losses << "\n";
        }
      }
    }
    out << "\n";
  }
  return out.str();
}

namespace {

bool check(std::ostream& out, const std::string& name, bool ok, const std::string& detail) {
  out << (ok ? "[ok]   " : "[FAIL] ") << name << " (" << detail << ")\n";
  return ok;
}

std::string compact(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

}  // namespace

bool selfcheck(std::ostream& out) {
  bool all_ok = true;
  Rng rng(20240607);

  // Partition of unity and local support on the grid-search basis family.
  {
    double worst = 0.0;
    int worst_support = 0;
    for (int p : {5, 7, 10, 15, 20}) {
      const BSplineBasis basis = make_basis(p, 4, Interval{1.0, 21.0});
      for (int t = 0; t < 200; ++t) {
        const double x = rng.uniform(1.0, 21.0);
        const Eigen::VectorXd values = basis.eval(x);
        worst = std::max(worst, std::abs(values.sum() - 1.0));
        worst_support = std::max(
            worst_support, static_cast<int>((values.array() != 0.0).count()));
      }
    }
    all_ok &= check(out, "partition of unity", worst < 1e-12,
                    "max |sum-1| = " + compact(worst));
    all_ok &= check(out, "local support", worst_support <= 4,
                    "max nonzero count = " + std::to_string(worst_support));
  }

  // Main evaluation path against the naive recursion.
  {
    double worst = 0.0;
    for (int p : {4, 6, 11}) {
      const BSplineBasis basis = make_basis(p, 4, Interval{0.0, 1.0});
      for (int t = 0; t < 200; ++t) {
        const double x = rng.uniform01();
        const Eigen::VectorXd values = basis.eval(x);
        for (int l = 0; l < p; ++l) {
          const double ref = oracle::bspline_value_recursive(basis.knots(), 4, l, x);
          worst = std::max(worst, std::abs(values[l] - ref));
        }
      }
    }
    all_ok &= check(out, "recursive evaluation agreement", worst < 1e-12,
                    "max deviation = " + compact(worst));
  }

  // Gauss-Legendre Gram rows against Simpson integrals of single functions.
  {
    const BSplineBasis basis = make_basis(5, 4, Interval{1.0, 21.0});
    const Measure mu = Measure::uniform(basis.domain());
    const Eigen::MatrixXd gram = gram_matrix(basis, mu);
    double worst = 0.0;
    for (int i = 0; i < basis.size(); ++i) {
      const double row_sum = gram.row(i).sum();
      const double simpson = oracle::quadrature_integral(
          [&](double x) { return oracle::bspline_value_recursive(basis.knots(), 4, i, x); }, mu,
          20001);
      worst = std::max(worst, std::abs(row_sum - simpson));
    }
    all_ok &= check(out, "quadrature cross-check", worst < 1e-10,
                    "max |GL - Simpson| = " + compact(worst));
  }

  // Analytic gradients against central differences.
  {
    const BSplineBasis basis = make_basis(5, 4, Interval{0.0, 1.0});
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      LabeledDataset ds;
      ds.domain = basis.domain();
      ds.targets.resize(8, 2);
      for (int i = 0; i < 8; ++i) {
        SampledFunction f;
        f.points.resize(30);
        f.values.resize(30);
        for (int j = 0; j < 30; ++j) {
          f.points[j] = rng.uniform01();
          f.values[j] = rng.uniform(-1.0, 1.0);
        }
        ds.functions.push_back(std::move(f));
        ds.targets(i, 0) = rng.uniform(-1.0, 1.0);
        ds.targets(i, 1) = rng.uniform(-1.0, 1.0);
      }
      MlpParams net;
      net.hidden_w.resize(3, 5);
      net.hidden_b.resize(3);
      net.output_w.resize(2, 3);
      net.output_b.resize(2);
      for (int i = 0; i < net.hidden_w.size(); ++i) net.hidden_w.data()[i] = rng.uniform(-1, 1);
      for (int i = 0; i < 3; ++i) net.hidden_b[i] = rng.uniform(-1, 1);
      for (int i = 0; i < net.output_w.size(); ++i) net.output_w.data()[i] = rng.uniform(-1, 1);
      for (int i = 0; i < 2; ++i) net.output_b[i] = rng.uniform(-1, 1);
      const Model model = FunctionalMLP{basis, net, 0};

      const Eigen::VectorXd analytic = gradient(model, ds, 1e-3);
      const Eigen::VectorXd numeric = oracle::fd_gradient(
          [&](const Eigen::VectorXd& x) {
            const Model probe = FunctionalMLP{basis, unflatten(3, 5, 2, x), 0};
            return empirical_error(probe, ds, 1e-3).total;
          },
          flatten(net), 1e-5);
      const double scale = std::max(1e-8, numeric.lpNorm<Eigen::Infinity>());
      worst = std::max(worst, (analytic - numeric).lpNorm<Eigen::Infinity>() / scale);
    }
    all_ok &= check(out, "gradient vs central differences", worst < 1e-4,
                    "max relative deviation = " + compact(worst));
  }

  // Dense-quadrature forward against the empirical-mean forward.
  {
    const BSplineBasis basis = make_basis(5, 4, Interval{0.0, 1.0});
    MlpParams net;
    net.hidden_w.resize(3, 5);
    net.hidden_b.resize(3);
    net.output_w.resize(1, 3);
    net.output_b.resize(1);
    for (int i = 0; i < net.hidden_w.size(); ++i) net.hidden_w.data()[i] = rng.uniform(-2, 2);
    for (int i = 0; i < 3; ++i) net.hidden_b[i] = rng.uniform(-1, 1);
    for (int i = 0; i < net.output_w.size(); ++i) net.output_w.data()[i] = rng.uniform(-2, 2);
    net.output_b[0] = rng.uniform(-1, 1);
    const FunctionalMLP model{basis, net, 0};

    const auto g = [](double x) { return std::sin(3.0 * x) + 0.5 * x * x; };
    constexpr int kPoints = 10001;
    SampledFunction f;
    f.points.resize(kPoints);
    f.values.resize(kPoints);
    for (int j = 0; j < kPoints; ++j) {
      f.points[j] = grid_point(basis.domain(), kPoints, j);
      f.values[j] = g(f.points[j]);
    }
    const double dense = oracle::dense_forward(model, g, 4001)[0];
    const double empirical = forward_fmlp(model, f)[0];
    const double rel = std::abs(dense - empirical) / std::max(1e-8, std::abs(dense));
    all_ok &= check(out, "dense forward agreement", rel < 1e-3,
                    "relative deviation = " + compact(rel));
  }

  out << (all_ok ? "selfcheck passed" : "selfcheck FAILED") << "\n";
  return all_ok;
}

}  // namespace fmlp
