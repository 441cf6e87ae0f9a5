#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bregopt/io.hpp"
#include "bregopt/problem.hpp"
#include "bregopt/solver.hpp"
#include "bregopt/synthetic.hpp"

namespace bregopt {

/// Invalid or inconsistent configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumerical = 2, kExitPartial = 3 };

struct DataSource {
  enum class Kind { Synthetic, File };
  Kind kind = Kind::Synthetic;
  SyntheticSpec synthetic;
  std::filesystem::path path;
  std::optional<MatrixFormat> format;
  /// Optional ground-truth labels (one per row of M) for clustering accuracy.
  std::filesystem::path labels_path;
};

struct ProblemConfig {
  ProblemKind kind = ProblemKind::GNMF;
  DataSource data;
  std::size_t rank = 5;
  double mu0 = 0.1;
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  std::size_t s1 = 1;
  std::size_t s2 = 1;
  LaplacianOptions laplacian;
};

struct EmitSet {
  bool trace_csv = true;
  bool summary_json = true;
  bool basis_pgm = false;
  /// One trace CSV per trial next to the averaged one.
  bool trial_csv = false;
};

struct ExperimentConfig {
  ProblemConfig problem;
  SolverConfig solver;
  /// Fraction of samples per minibatch; overrides solver.batch_size when > 0.
  double batch_ratio = 0.0;
  std::size_t trials = 10;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
  EmitSet emit;
  /// 0 = number of distinct true labels.
  std::size_t cluster_k = 0;
  std::size_t kmeans_restarts = 10;
  std::size_t image_height = 0;
  std::size_t image_width = 0;
  /// 0 = hardware concurrency.
  std::size_t threads = 0;
  std::vector<Algorithm> compare_algorithms{Algorithm::BPG, Algorithm::BPGE, Algorithm::BPSG, Algorithm::BPSGE};
  std::vector<EstimatorKind> compare_estimators{EstimatorKind::SAGA};

  /// Throws ConfigError.
  void validate() const;
};

/// Parses a JSON document, applying `key.path=value` overrides first (values
/// are parsed as JSON, falling back to a plain string). Relative data paths
/// are resolved against `base_dir`. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {},
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
std::string config_to_json(const ExperimentConfig& cfg);

struct LoadedProblem {
  ProblemSpec spec;
  std::optional<std::vector<std::size_t>> labels;
};

/// Builds the data matrix (generated or loaded), the Laplacian and the ProblemSpec.
LoadedProblem load_problem(const ProblemConfig& cfg);

/// Initial point of trial t; depends only on (seed, t), so every algorithm in
/// a comparison starts from the same point.
FactorPair trial_initial_point(const ProblemSpec& p, std::uint64_t seed, std::size_t trial);
std::uint64_t trial_solver_seed(std::uint64_t seed, std::size_t trial);

struct TrialResult {
  std::size_t trial = 0;
  RunResult run;
  bool failed = false;
  std::string error;
  std::optional<double> accuracy;
  std::uint64_t init_fingerprint = 0;
};

struct AggregateRow {
  std::size_t epoch = 0;
  double objective_mean = 0.0;
  double objective_std = 0.0;
  double bregman_mean = 0.0;
  double bregman_std = 0.0;
  /// NaN when no trial recorded a value for this epoch.
  double stationarity_mean = 0.0;
  double stationarity_std = 0.0;
  double eta_mean = 0.0;
  double beta_mean = 0.0;
};

struct ExperimentSummary {
  std::vector<TrialResult> trials;
  std::vector<AggregateRow> rows;
  std::size_t failed_trials = 0;
  double initial_objective = 0.0;
  double final_objective_mean = 0.0;
  double final_objective_std = 0.0;
  std::optional<double> accuracy_mean;
  std::optional<double> accuracy_std;
  double wall_ms = 0.0;
  std::vector<std::string> warnings;
  ExitCode status = kExitOk;
};

/// Runs cfg.trials independent trials in parallel, aggregates them in trial
/// order and writes the requested artifacts to cfg.output_dir.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);
/// Same, on an already loaded problem, without writing anything.
ExperimentSummary run_trials(const ExperimentConfig& cfg, const LoadedProblem& problem);

/// Per-epoch pointwise mean/std over successful trials. Early-stopped runs are
/// padded with their last record so every trial contributes max_epochs + 1 rows.
std::vector<AggregateRow> aggregate_traces(const std::vector<TrialResult>& trials, std::size_t max_epochs);
std::string format_trace_csv(const std::vector<AggregateRow>& rows);
std::string format_trial_csv(const RunResult& run, std::size_t max_epochs);
std::string format_summary_json(const ExperimentConfig& cfg, const ExperimentSummary& summary);

struct CompareEntry {
  Algorithm algorithm = Algorithm::BPSGE;
  EstimatorKind estimator = EstimatorKind::SAGA;
  ExperimentSummary summary;
};

struct CompareResult {
  std::vector<CompareEntry> entries;
  /// Every entry's trial t started from the same point.
  bool shared_initial_points = true;
  ExitCode status = kExitOk;
};

/// Algorithm x estimator grid; deterministic algorithms appear once (Full estimator).
CompareResult run_compare(const ExperimentConfig& cfg);

struct AuditReport {
  std::string json;
  bool passed = true;
  ExitCode status = kExitOk;
};

/// Theory-check mode: Lyapunov monotonicity (deterministic runs), rate bound,
/// geometric decay of the estimator error, stationarity witnesses.
AuditReport run_audit(const ExperimentConfig& cfg);

/// max_i ||grad f_i(b) - grad f_i(a)|| / ||b - a||; 0 when a == b. Maximized
/// over consecutive iterates it gives a path-local estimate of M1.
double secant_sample_lipschitz(const ProblemSpec& p, const FactorPair& a, const FactorPair& b);

}  // namespace bregopt
