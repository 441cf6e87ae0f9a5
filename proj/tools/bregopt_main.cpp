// bregopt: command-line front end for the Bregman proximal solvers.
//
//   bregopt <verb> --config <path> [--set key=value ...] [--seed N] [--out DIR]
//
// Exit codes: 0 success, 1 config error, 2 numerical failure, 3 partial-trial failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bregopt/experiment.hpp"
#include "bregopt/io.hpp"
#include "bregopt/selftest.hpp"

using namespace bregopt;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* c = cmd->add_option("--config,-c", o.config, "experiment configuration (JSON)");
  if (config_required) c->required();
  cmd->add_option("--set", o.sets, "override a config field, e.g. --set solver.max_epochs=100")->take_all();
  cmd->add_option("--seed", o.seed, "experiment seed");
  cmd->add_option("--out,-o", o.out, "output directory");
}

ExperimentConfig resolve(const CommonOptions& o) {
  std::vector<std::string> overrides = o.sets;
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  if (!o.out.empty()) overrides.push_back("output_dir=\"" + o.out + "\"");
  if (o.config.empty()) return parse_config("{}", overrides);
  return load_config(o.config, overrides);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_run(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const ExperimentSummary s = run_experiment(cfg);
  print_warnings(s.warnings);
  std::printf("%s %s-%s: %zu/%zu trials ok, objective %.6g -> %.6g", std::string(to_string(cfg.problem.kind)).c_str(),
              std::string(to_string(cfg.solver.algorithm)).c_str(),
              std::string(to_string(cfg.solver.effective_estimator())).c_str(), cfg.trials - s.failed_trials,
              cfg.trials, s.initial_objective, s.final_objective_mean);
  if (s.accuracy_mean) std::printf(", accuracy %.4f", *s.accuracy_mean);
  std::printf("\nartifacts in %s\n", cfg.output_dir.string().c_str());
  return s.status;
}

int cmd_compare(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const CompareResult r = run_compare(cfg);
  for (const auto& e : r.entries) {
    print_warnings(e.summary.warnings);
    std::printf("%-6s %-6s final objective %.6g", std::string(to_string(e.algorithm)).c_str(),
                std::string(to_string(e.estimator)).c_str(), e.summary.final_objective_mean);
    if (e.summary.accuracy_mean) std::printf("  accuracy %.4f", *e.summary.accuracy_mean);
    std::printf("\n");
  }
  if (!r.shared_initial_points) {
    std::cerr << "error: algorithms did not share initial points\n";
    return kExitNumerical;
  }
  std::printf("table in %s\n", (cfg.output_dir / "compare.csv").string().c_str());
  return r.status;
}

int cmd_audit(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const AuditReport r = run_audit(cfg);
  std::fputs(r.json.c_str(), stdout);
  if (r.status != kExitOk) return r.status;
  return r.passed ? kExitOk : kExitNumerical;
}

int cmd_gen(const CommonOptions& o, const std::string& format) {
  const ExperimentConfig cfg = resolve(o);
  if (cfg.problem.data.kind != DataSource::Kind::Synthetic) throw ConfigError("gen needs problem.data.source=synthetic");
  const SyntheticData data = generate_synthetic(cfg.problem.data.synthetic);
  std::filesystem::create_directories(cfg.output_dir);
  const MatrixFormat fmt = parse_matrix_format(format);
  const auto matrix_path = cfg.output_dir / (fmt == MatrixFormat::Csv ? "data.csv" : "data.mtx");
  save_matrix(matrix_path, data.m, fmt);
  save_labels(cfg.output_dir / "labels.txt", data.labels);
  std::printf("wrote %s (%zu x %zu) and labels.txt\n", matrix_path.string().c_str(), data.m.rows(), data.m.cols());
  return kExitOk;
}

int cmd_selftest(const CommonOptions& o) {
  const std::uint64_t seed = o.seed.value_or(1);
  bool ok = true;
  for (const auto& c : run_selftest(seed)) {
    std::printf("%s  %s%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.empty() ? "" : "  ",
                c.detail.c_str());
    ok = ok && c.passed;
  }
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bregopt: Bregman proximal stochastic gradient solvers for matrix factorization"};
  app.require_subcommand(1);

  CommonOptions run_o, cmp_o, audit_o, gen_o, self_o;
  std::string gen_format = "csv";
  add_common(app.add_subcommand("run", "run one experiment"), run_o, true);
  add_common(app.add_subcommand("compare", "algorithm x estimator grid on shared initial points"), cmp_o, true);
  add_common(app.add_subcommand("audit", "theory checks: Lyapunov, rate, decay, stationarity"), audit_o, true);
  auto* gen = app.add_subcommand("gen", "write synthetic data and labels");
  add_common(gen, gen_o, true);
  gen->add_option("--format", gen_format, "csv or mtx");
  add_common(app.add_subcommand("selftest", "run the built-in oracle suite"), self_o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const std::string verb = app.get_subcommands().front()->get_name();
    if (verb == "run") return cmd_run(run_o);
    if (verb == "compare") return cmd_compare(cmp_o);
    if (verb == "audit") return cmd_audit(audit_o);
    if (verb == "gen") return cmd_gen(gen_o, gen_format);
    return cmd_selftest(self_o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
