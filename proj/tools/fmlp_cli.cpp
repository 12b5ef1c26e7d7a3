#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fmlp/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;

int cmd_gen_waves(int n_per_class, int m, double noise_sd, std::uint64_t seed,
                  const std::string& out_path) {
  fmlp::WaveSpec spec;
  spec.n_per_class = n_per_class;
  spec.m = m;
  spec.noise_sd = noise_sd;
  spec.seed = seed;
  const fmlp::LabeledDataset ds = fmlp::gen_waveform(spec);
  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "error: cannot write '" << out_path << "'\n";
    return kExitDataError;
  }
  fmlp::save_dataset_csv(ds, out);
  std::cout << "wrote " << ds.size() << " curves (" << m << " points each) to " << out_path
            << "\n";
  return kExitOk;
}

int cmd_run(const std::string& config_path) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot open config file '" << config_path << "'\n";
    return kExitConfigError;
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  const fmlp::ExperimentConfig config = fmlp::parse_experiment_config(buffer.str());
  const auto records = fmlp::run_experiment(config, &std::cout);
  if (config.output_path.empty()) {
    for (const auto& record : records) std::cout << fmlp::record_to_json_line(record) << "\n";
  } else {
    std::cout << "wrote " << records.size() << " records to " << config.output_path << "\n";
  }
  return kExitOk;
}

int cmd_report(const std::string& in_path) {
  const auto records = fmlp::read_jsonl(in_path);
  std::cout << fmlp::render_report(records);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional multi-layer perceptron experiment runner"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-waves", "Generate a waveform benchmark CSV");
  int n_per_class = 150, m = 101;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
  std::string out_path = "waves.csv";
  gen->add_option("--n-per-class", n_per_class, "Curves per class")->check(CLI::PositiveNumber);
  gen->add_option("--m", m, "Observation points per curve")->check(CLI::Range(2, 1 << 20));
  gen->add_option("--noise-sd", noise_sd, "Observation noise standard deviation");
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--out", out_path, "Output CSV path")->required();

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  std::string config_path;
  run->add_option("--config", config_path, "JSON configuration file")->required();

  auto* report = app.add_subcommand("report", "Render comparison tables from a results file");
  std::string in_path;
  report->add_option("--in", in_path, "JSON-lines results file")->required();

  auto* self = app.add_subcommand("selfcheck", "Run the oracle cross-check battery");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen_waves(n_per_class, m, noise_sd, seed, out_path);
    if (run->parsed()) return cmd_run(config_path);
    if (report->parsed()) return cmd_report(in_path);
    if (self->parsed()) return fmlp::selfcheck(std::cout) ? kExitOk : kExitFailure;
  } catch (const fmlp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const fmlp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
