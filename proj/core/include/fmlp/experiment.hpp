#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fmlp/select.hpp"

namespace fmlp {

/// Problem with an experiment configuration (unknown fields, bad values).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct WaveformProtocol {
  int train_per_class = 150;
  int test_per_class = 250;
  int m = 101;
  double noise_sd = 1.0;
};

struct TecatorProtocol {
  std::string path = "data/tecator.csv";
  int n_train = 160;
  int d2_basis_size = 20;  // basis for the second-derivative preprocessing
};

struct TeacherStudentProtocol {
  std::vector<std::pair<int, int>> stages{{50, 20}, {200, 80}, {800, 320}};
  double noise_sd = 0.25;
  int test_functions = 200;
};

struct ExperimentConfig {
  std::string experiment;  // waveform | tecator | tecator-d2 | teacher-student
  int replications = 10;
  std::vector<Variant> variants{Variant::naive, Variant::fmlp, Variant::fpmlp};
  Grid grid;
  std::uint64_t master_seed = 0;
  std::string output_path;  // JSON-lines; summary CSV derived from it
  int folds = 5;
  int threads = 1;  // 0 = hardware concurrency
  bool record_timing = true;
  TrainConfig train{.restarts = 10, .max_iters = 500, .grad_tol = 1e-6};
  WaveformProtocol waveform;
  TecatorProtocol tecator;
  TeacherStudentProtocol teacher_student;

  void require_valid() const;
};

/// Parses the JSON configuration document; unknown keys are errors.
ExperimentConfig parse_experiment_config(const std::string& json_text);

/// One result line: a (replication, variant) outcome.
struct RunRecord {
  std::string experiment;
  int replication = 0;
  std::string variant;
  std::uint64_t seed = 0;
  double error = 0.0;
  int hidden = 0;
  int basis_size = 0;
  double weight_decay = 0.0;
  int param_count = 0;
  double wall_ms = 0.0;
  // teacher-student stage annotation; 0 when not applicable
  int n_functions = 0;
  int m_points = 0;
};

/// Runs the configured experiment; records are ordered by (replication,
/// variant). When output_path is set, writes the JSON-lines records and a
/// CSV summary next to them.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config,
                                      std::ostream* progress = nullptr);

std::string record_to_json_line(const RunRecord& record);
void write_jsonl(const std::vector<RunRecord>& records, const std::string& path);
std::vector<RunRecord> read_jsonl(const std::string& path);
std::vector<RunRecord> parse_jsonl(std::istream& in);

void write_summary_csv(const std::vector<RunRecord>& records, std::ostream& out);

/// Comparison tables (error rates, architecture counts, parameter counts,
/// pairwise wins) rendered as text.
std::string render_report(const std::vector<RunRecord>& records);

/// Runs the oracle cross-check battery, printing one line per check.
bool selfcheck(std::ostream& out);

}  // namespace fmlp
