#include "bregopt/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "bregopt/clustering.hpp"
#include "json.hpp"

namespace bregopt {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kInitStream = 0x494E495400000000ULL;
constexpr std::uint64_t kTrialStream = 0x5452494C00000000ULL;
constexpr std::uint64_t kKMeansStream = 0x4B4D454100000000ULL;

// ---- JSON helpers -------------------------------------------------------

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class E, class Parse>
void read_enum(const json& obj, const char* key, E& out, Parse parse, const std::string& where) {
  if (!obj.contains(key)) return;
  std::string s;
  read(obj, key, s, where);
  try {
    out = parse(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void set_path(json& root, std::string_view path, json value) {
  json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string key(path.substr(start, dot == std::string_view::npos ? path.npos : dot - start));
    if (key.empty()) throw ConfigError("override: empty key in '" + std::string(path) + "'");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override: '" + std::string(path) + "' crosses a non-object value");
      *node = json::object();
    }
    if (dot == std::string_view::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

void apply_override(json& root, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_path(root, path, std::move(value));
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

void parse_data(const json& j, DataSource& data, std::uint64_t default_seed, const std::filesystem::path& base_dir) {
  const std::string where = "problem.data";
  std::string source = "synthetic";
  read(j, "source", source, where);
  source = lowercase(source);
  if (source == "synthetic") {
    check_keys(j, {"source", "m", "d", "r_true", "noise_sigma", "cluster_count", "seed"}, where);
    data.kind = DataSource::Kind::Synthetic;
    SyntheticSpec& s = data.synthetic;
    s.seed = default_seed;
    read(j, "m", s.m, where);
    read(j, "d", s.d, where);
    read(j, "r_true", s.r_true, where);
    read(j, "noise_sigma", s.noise_sigma, where);
    read(j, "cluster_count", s.cluster_count, where);
    read(j, "seed", s.seed, where);
  } else if (source == "file") {
    check_keys(j, {"source", "path", "format", "labels"}, where);
    data.kind = DataSource::Kind::File;
    std::string path, labels, format;
    read(j, "path", path, where);
    read(j, "labels", labels, where);
    read(j, "format", format, where);
    if (path.empty()) throw ConfigError(where + ".path is required for file data");
    data.path = base_dir.empty() ? std::filesystem::path(path) : base_dir / path;
    if (!labels.empty()) data.labels_path = base_dir.empty() ? std::filesystem::path(labels) : base_dir / labels;
    if (!format.empty()) {
      try {
        data.format = parse_matrix_format(format);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ".format: " + e.what());
      }
    }
  } else {
    throw ConfigError(where + ".source must be 'synthetic' or 'file'");
  }
}

void parse_solver(const json& j, SolverConfig& s, double& batch_ratio) {
  const std::string where = "solver";
  check_keys(j,
             {"algorithm", "estimator", "batch_size", "batch_ratio", "sarah_restart_probability", "max_epochs",
              "beta_mode", "beta_scale", "delta", "epsilon", "eta0", "l_bar", "l_under_mode", "audit_every",
              "phi_lower_bound", "strict_theory_stepsize", "lipschitz_m1", "stop_tolerance", "stop_patience",
              "eta_floor"},
             where);
  read_enum(j, "algorithm", s.algorithm, parse_algorithm, where);
  read_enum(j, "estimator", s.estimator, parse_estimator_kind, where);
  read(j, "batch_size", s.batch_size, where);
  read(j, "batch_ratio", batch_ratio, where);
  read(j, "sarah_restart_probability", s.sarah_restart_probability, where);
  read(j, "max_epochs", s.max_epochs, where);
  read_enum(j, "beta_mode", s.beta_mode, parse_beta_mode, where);
  read(j, "beta_scale", s.beta_scale, where);
  read(j, "delta", s.delta, where);
  read(j, "epsilon", s.epsilon, where);
  read(j, "eta0", s.eta0, where);
  read(j, "l_bar", s.l_bar, where);
  read_enum(j, "l_under_mode", s.l_under_mode, parse_lower_smoothness_mode, where);
  read(j, "audit_every", s.audit_every, where);
  read(j, "phi_lower_bound", s.phi_lower_bound, where);
  read(j, "strict_theory_stepsize", s.strict_theory_stepsize, where);
  read(j, "lipschitz_m1", s.lipschitz_m1, where);
  read(j, "stop_tolerance", s.stop_tolerance, where);
  read(j, "stop_patience", s.stop_patience, where);
  read(j, "eta_floor", s.eta_floor, where);
}

// ---- statistics ---------------------------------------------------------

struct MeanStd {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  out.std = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
  return out;
}

template <class F>
void parallel_for(std::size_t count, std::size_t threads, F&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  for (auto& th : pool) th.join();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string csv_real(double x) { return std::isnan(x) ? "nan" : format_real(x); }

json optional_number(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::size_t distinct_count(const std::vector<std::size_t>& labels) {
  return std::set<std::size_t>(labels.begin(), labels.end()).size();
}

}  // namespace

// ---- configuration -------------------------------------------------------

void ExperimentConfig::validate() const {
  if (trials == 0) throw ConfigError("trials must be >= 1");
  if (problem.rank == 0) throw ConfigError("problem.rank must be >= 1");
  if (batch_ratio < 0.0 || batch_ratio > 1.0) throw ConfigError("solver.batch_ratio must lie in [0, 1]");
  if (problem.data.kind == DataSource::Kind::File) {
    if (!std::filesystem::exists(problem.data.path))
      throw ConfigError("data file does not exist: " + problem.data.path.string());
    if (!problem.data.labels_path.empty() && !std::filesystem::exists(problem.data.labels_path))
      throw ConfigError("labels file does not exist: " + problem.data.labels_path.string());
  } else {
    try {
      problem.data.synthetic.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (emit.basis_pgm && (image_height == 0 || image_width == 0))
    throw ConfigError("emit basis_pgm needs image.height and image.width");
  if (compare_algorithms.empty()) throw ConfigError("compare.algorithms must not be empty");
  if (compare_estimators.empty()) throw ConfigError("compare.estimators must not be empty");
  try {
    SolverConfig probe = solver;
    if (batch_ratio > 0.0) probe.batch_size = 1;
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides,
                              const std::filesystem::path& base_dir) {
  json root = json::parse(json_text, nullptr, false, true);
  if (root.is_discarded()) throw ConfigError("config is not valid JSON");
  if (root.is_null()) root = json::object();
  for (const auto& o : overrides) apply_override(root, o);

  ExperimentConfig cfg;
  check_keys(root,
             {"problem", "solver", "trials", "seed", "output_dir", "emit", "clustering", "image", "threads", "compare"},
             "config");
  read(root, "trials", cfg.trials, "config");
  read(root, "seed", cfg.seed, "config");
  read(root, "threads", cfg.threads, "config");
  if (root.contains("output_dir")) {
    std::string dir;
    read(root, "output_dir", dir, "config");
    cfg.output_dir = dir;
  }

  const json problem = root.value("problem", json::object());
  check_keys(problem, {"kind", "data", "rank", "mu0", "lambda1", "lambda2", "s1", "s2", "laplacian"}, "problem");
  read_enum(problem, "kind", cfg.problem.kind, parse_problem_kind, "problem");
  read(problem, "rank", cfg.problem.rank, "problem");
  read(problem, "mu0", cfg.problem.mu0, "problem");
  read(problem, "lambda1", cfg.problem.lambda1, "problem");
  read(problem, "lambda2", cfg.problem.lambda2, "problem");
  read(problem, "s1", cfg.problem.s1, "problem");
  read(problem, "s2", cfg.problem.s2, "problem");
  parse_data(problem.value("data", json::object()), cfg.problem.data, cfg.seed, base_dir);
  if (problem.contains("laplacian")) {
    const json& lap = problem.at("laplacian");
    check_keys(lap, {"neighbors", "weighting", "sigma"}, "problem.laplacian");
    read(lap, "neighbors", cfg.problem.laplacian.neighbors, "problem.laplacian");
    read(lap, "sigma", cfg.problem.laplacian.sigma, "problem.laplacian");
    std::string weighting = "binary";
    read(lap, "weighting", weighting, "problem.laplacian");
    weighting = lowercase(weighting);
    if (weighting == "binary") cfg.problem.laplacian.weighting = EdgeWeighting::Binary;
    else if (weighting == "heat") cfg.problem.laplacian.weighting = EdgeWeighting::Heat;
    else throw ConfigError("problem.laplacian.weighting must be 'binary' or 'heat'");
  }

  if (root.contains("solver")) parse_solver(root.at("solver"), cfg.solver, cfg.batch_ratio);

  if (root.contains("emit")) {
    std::vector<std::string> items;
    read(root, "emit", items, "config");
    cfg.emit = EmitSet{false, false, false, false};
    for (const auto& it : items) {
      if (it == "trace_csv") cfg.emit.trace_csv = true;
      else if (it == "summary_json") cfg.emit.summary_json = true;
      else if (it == "basis_pgm") cfg.emit.basis_pgm = true;
      else if (it == "trial_csv") cfg.emit.trial_csv = true;
      else throw ConfigError("emit: unknown artifact '" + it + "'");
    }
  }
  if (root.contains("clustering")) {
    const json& c = root.at("clustering");
    check_keys(c, {"k", "restarts"}, "clustering");
    read(c, "k", cfg.cluster_k, "clustering");
    read(c, "restarts", cfg.kmeans_restarts, "clustering");
  }
  if (root.contains("image")) {
    const json& im = root.at("image");
    check_keys(im, {"height", "width"}, "image");
    read(im, "height", cfg.image_height, "image");
    read(im, "width", cfg.image_width, "image");
  }
  if (root.contains("compare")) {
    const json& c = root.at("compare");
    check_keys(c, {"algorithms", "estimators"}, "compare");
    if (c.contains("algorithms")) {
      std::vector<std::string> names;
      read(c, "algorithms", names, "compare");
      cfg.compare_algorithms.clear();
      for (const auto& n : names) {
        try {
          cfg.compare_algorithms.push_back(parse_algorithm(n));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("compare.algorithms: ") + e.what());
        }
      }
    }
    if (c.contains("estimators")) {
      std::vector<std::string> names;
      read(c, "estimators", names, "compare");
      cfg.compare_estimators.clear();
      for (const auto& n : names) {
        try {
          cfg.compare_estimators.push_back(parse_estimator_kind(n));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("compare.estimators: ") + e.what());
        }
      }
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, path.parent_path());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.string();
  j["threads"] = cfg.threads;
  json& p = j["problem"];
  p["kind"] = std::string(to_string(cfg.problem.kind));
  p["rank"] = cfg.problem.rank;
  p["mu0"] = cfg.problem.mu0;
  p["lambda1"] = cfg.problem.lambda1;
  p["lambda2"] = cfg.problem.lambda2;
  p["s1"] = cfg.problem.s1;
  p["s2"] = cfg.problem.s2;
  const DataSource& d = cfg.problem.data;
  if (d.kind == DataSource::Kind::Synthetic) {
    p["data"] = {{"source", "synthetic"},
                 {"m", d.synthetic.m},
                 {"d", d.synthetic.d},
                 {"r_true", d.synthetic.r_true},
                 {"noise_sigma", d.synthetic.noise_sigma},
                 {"cluster_count", d.synthetic.cluster_count},
                 {"seed", d.synthetic.seed}};
  } else {
    p["data"] = {{"source", "file"}, {"path", d.path.string()}};
    if (d.format) p["data"]["format"] = *d.format == MatrixFormat::Csv ? "csv" : "mtx";
    if (!d.labels_path.empty()) p["data"]["labels"] = d.labels_path.string();
  }
  p["laplacian"] = {{"neighbors", cfg.problem.laplacian.neighbors},
                    {"weighting", cfg.problem.laplacian.weighting == EdgeWeighting::Heat ? "heat" : "binary"},
                    {"sigma", cfg.problem.laplacian.sigma}};
  const SolverConfig& s = cfg.solver;
  j["solver"] = {{"algorithm", std::string(to_string(s.algorithm))},
                 {"estimator", std::string(to_string(s.estimator))},
                 {"batch_size", s.batch_size},
                 {"batch_ratio", cfg.batch_ratio},
                 {"sarah_restart_probability", s.sarah_restart_probability},
                 {"max_epochs", s.max_epochs},
                 {"beta_mode", std::string(to_string(s.beta_mode))},
                 {"beta_scale", s.beta_scale},
                 {"delta", s.delta},
                 {"epsilon", s.epsilon},
                 {"eta0", s.eta0},
                 {"l_bar", s.l_bar},
                 {"l_under_mode", std::string(to_string(s.l_under_mode))},
                 {"audit_every", s.audit_every},
                 {"phi_lower_bound", s.phi_lower_bound},
                 {"strict_theory_stepsize", s.strict_theory_stepsize},
                 {"lipschitz_m1", s.lipschitz_m1},
                 {"stop_tolerance", s.stop_tolerance},
                 {"stop_patience", s.stop_patience},
                 {"eta_floor", s.eta_floor}};
  json emit = json::array();
  if (cfg.emit.trace_csv) emit.push_back("trace_csv");
  if (cfg.emit.summary_json) emit.push_back("summary_json");
  if (cfg.emit.basis_pgm) emit.push_back("basis_pgm");
  if (cfg.emit.trial_csv) emit.push_back("trial_csv");
  j["emit"] = emit;
  j["clustering"] = {{"k", cfg.cluster_k}, {"restarts", cfg.kmeans_restarts}};
  j["image"] = {{"height", cfg.image_height}, {"width", cfg.image_width}};
  json algs = json::array(), ests = json::array();
  for (Algorithm a : cfg.compare_algorithms) algs.push_back(std::string(to_string(a)));
  for (EstimatorKind e : cfg.compare_estimators) ests.push_back(std::string(to_string(e)));
  j["compare"] = {{"algorithms", algs}, {"estimators", ests}};
  return j.dump(2) + "\n";
}

// ---- problem construction ------------------------------------------------

LoadedProblem load_problem(const ProblemConfig& cfg) {
  DenseMatrix m;
  std::optional<std::vector<std::size_t>> labels;
  if (cfg.data.kind == DataSource::Kind::Synthetic) {
    SyntheticData data = generate_synthetic(cfg.data.synthetic);
    m = std::move(data.m);
    labels = std::move(data.labels);
  } else {
    m = load_matrix(cfg.data.path, cfg.data.format.value_or(format_from_extension(cfg.data.path)));
    if (!cfg.data.labels_path.empty()) {
      labels = load_labels(cfg.data.labels_path);
      if (labels->size() != m.rows())
        throw ConfigError("labels file has " + std::to_string(labels->size()) + " entries, data has " +
                          std::to_string(m.rows()) + " rows");
    }
  }
  try {
    switch (cfg.kind) {
      case ProblemKind::GNMF: {
        DenseMatrix lap = build_knn_laplacian(m, cfg.laplacian);
        return {ProblemSpec::gnmf(std::move(m), cfg.rank, cfg.mu0, std::move(lap)), std::move(labels)};
      }
      case ProblemKind::WCMF:
        return {ProblemSpec::wcmf(std::move(m), cfg.rank, cfg.lambda1, cfg.lambda2), std::move(labels)};
      case ProblemKind::SSNMF:
        return {ProblemSpec::ssnmf(std::move(m), cfg.rank, cfg.s1, cfg.s2), std::move(labels)};
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown problem kind");
}

FactorPair trial_initial_point(const ProblemSpec& p, std::uint64_t seed, std::size_t trial) {
  Prng rng = Prng::stream(seed, kInitStream + trial);
  return init_point(p.rows(), p.rank(), p.samples(), rng);
}

std::uint64_t trial_solver_seed(std::uint64_t seed, std::size_t trial) {
  return Prng::stream(seed, kTrialStream + trial).next_u64();
}

double secant_sample_lipschitz(const ProblemSpec& p, const FactorPair& a, const FactorPair& b) {
  const double dx = norm(b - a);
  if (dx == 0.0) return 0.0;
  double best = 0.0;
  for (std::size_t i = 0; i < p.samples(); ++i) {
    const std::size_t batch[1] = {i};
    best = std::max(best, norm(sample_gradient(p, b, batch) - sample_gradient(p, a, batch)) / dx);
  }
  return best;
}

// ---- trials --------------------------------------------------------------

namespace {

SolverConfig trial_solver_config(const ExperimentConfig& cfg, const ProblemSpec& p, std::size_t trial) {
  SolverConfig s = cfg.solver;
  if (cfg.batch_ratio > 0.0)
    s.batch_size = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.batch_ratio * static_cast<double>(p.samples()))));
  s.batch_size = std::min(s.batch_size, p.samples());
  s.seed = trial_solver_seed(cfg.seed, trial);
  return s;
}

TrialResult run_one_trial(const ExperimentConfig& cfg, const LoadedProblem& problem, std::size_t trial,
                          const IterateObserver& observer = {}) {
  TrialResult tr;
  tr.trial = trial;
  const FactorPair x0 = trial_initial_point(problem.spec, cfg.seed, trial);
  tr.init_fingerprint = fingerprint(x0);
  try {
    tr.run = run(problem.spec, trial_solver_config(cfg, problem.spec, trial), x0, observer);
    if (tr.run.status != RunStatus::Ok) {
      tr.failed = true;
      tr.error = tr.run.message;
      return tr;
    }
    if (problem.labels) {
      const std::size_t k = cfg.cluster_k ? cfg.cluster_k : distinct_count(*problem.labels);
      Prng rng = Prng::stream(cfg.seed, kKMeansStream + trial);
      try {
        tr.accuracy = kmeans_accuracy(tr.run.x_final.u, *problem.labels, k, cfg.kmeans_restarts, rng);
      } catch (const std::invalid_argument& e) {
        tr.error = std::string("accuracy skipped: ") + e.what();
      }
    }
  } catch (const std::exception& e) {
    tr.failed = true;
    tr.error = e.what();
  }
  return tr;
}

ExitCode status_for(std::size_t failed, std::size_t trials) {
  if (failed == 0) return kExitOk;
  return 2 * failed > trials ? kExitNumerical : kExitPartial;
}

std::vector<IterationTrace> padded_trace(const RunResult& run, std::size_t max_epochs) {
  std::vector<IterationTrace> rows;
  rows.reserve(max_epochs + 1);
  rows.push_back(run.initial);
  for (const auto& t : run.traces) rows.push_back(t);
  while (rows.size() < max_epochs + 1) {
    IterationTrace t = rows.back();
    t.epoch = rows.size();
    rows.push_back(t);
  }
  return rows;
}

}  // namespace

std::vector<AggregateRow> aggregate_traces(const std::vector<TrialResult>& trials, std::size_t max_epochs) {
  std::vector<std::vector<IterationTrace>> padded;
  for (const auto& t : trials)
    if (!t.failed) padded.push_back(padded_trace(t.run, max_epochs));
  std::vector<AggregateRow> rows;
  if (padded.empty()) return rows;
  for (std::size_t e = 0; e <= max_epochs; ++e) {
    std::vector<double> obj, step, stat, eta, beta;
    for (const auto& p : padded) {
      const IterationTrace& t = p[e];
      obj.push_back(t.objective);
      step.push_back(t.bregman_step);
      if (t.stationarity) stat.push_back(*t.stationarity);
      eta.push_back(t.eta);
      beta.push_back(t.beta);
    }
    AggregateRow row;
    row.epoch = e;
    const MeanStd o = mean_std(obj), s = mean_std(step), st = mean_std(stat);
    row.objective_mean = o.mean;
    row.objective_std = o.std;
    row.bregman_mean = s.mean;
    row.bregman_std = s.std;
    row.stationarity_mean = st.mean;
    row.stationarity_std = st.std;
    row.eta_mean = mean_std(eta).mean;
    row.beta_mean = mean_std(beta).mean;
    rows.push_back(row);
  }
  return rows;
}

std::string format_trace_csv(const std::vector<AggregateRow>& rows) {
  std::string out =
      "epoch,objective_mean,objective_std,bregman_step_mean,bregman_step_std,stationarity_mean,stationarity_std,eta,"
      "beta\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch);
    for (double v : {r.objective_mean, r.objective_std, r.bregman_mean, r.bregman_std, r.stationarity_mean,
                     r.stationarity_std, r.eta_mean, r.beta_mean})
      out += "," + csv_real(v);
    out += "\n";
  }
  return out;
}

std::string format_trial_csv(const RunResult& run, std::size_t max_epochs) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::string out = "epoch,objective,feasible,bregman_step,lyapunov,stationarity,eta,beta,gamma_audit\n";
  for (const auto& t : padded_trace(run, max_epochs)) {
    out += std::to_string(t.epoch) + "," + csv_real(t.objective) + "," + (t.feasible ? "1" : "0") + "," +
           csv_real(t.bregman_step) + "," + csv_real(t.lyapunov.value_or(nan)) + "," +
           csv_real(t.stationarity.value_or(nan)) + "," + csv_real(t.eta) + "," + csv_real(t.beta) + "," +
           csv_real(t.gamma_audit.value_or(nan)) + "\n";
  }
  return out;
}

ExperimentSummary run_trials(const ExperimentConfig& cfg, const LoadedProblem& problem) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentSummary summary;
  summary.trials.resize(cfg.trials);
  parallel_for(cfg.trials, cfg.threads,
               [&](std::size_t t) { summary.trials[t] = run_one_trial(cfg, problem, t); });

  summary.warnings = problem.spec.warnings();
  if (prescribed_kernel(problem.spec, cfg.solver.eta0).lacks_strong_convexity())
    summary.warnings.push_back("kernel has no quadratic part: Bregman distance is not strongly convex");
  std::vector<double> finals, accs, initials;
  for (const auto& t : summary.trials) {
    if (t.failed) {
      ++summary.failed_trials;
      summary.warnings.push_back("trial " + std::to_string(t.trial) + " failed: " + t.error);
      continue;
    }
    if (!t.error.empty()) summary.warnings.push_back("trial " + std::to_string(t.trial) + ": " + t.error);
    if (t.run.eta_floor_hit) summary.warnings.push_back("trial " + std::to_string(t.trial) + " hit the step-size floor");
    initials.push_back(t.run.initial.objective);
    finals.push_back(t.run.traces.empty() ? t.run.initial.objective : t.run.traces.back().objective);
    if (t.accuracy) accs.push_back(*t.accuracy);
  }
  summary.initial_objective = mean_std(initials).mean;
  const MeanStd f = mean_std(finals);
  summary.final_objective_mean = f.mean;
  summary.final_objective_std = f.std;
  if (!accs.empty()) {
    const MeanStd a = mean_std(accs);
    summary.accuracy_mean = a.mean;
    summary.accuracy_std = a.std;
  }
  summary.rows = aggregate_traces(summary.trials, cfg.solver.max_epochs);
  summary.status = status_for(summary.failed_trials, cfg.trials);
  summary.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

std::string format_summary_json(const ExperimentConfig& cfg, const ExperimentSummary& s) {
  json j;
  j["problem"] = std::string(to_string(cfg.problem.kind));
  j["algorithm"] = std::string(to_string(cfg.solver.algorithm));
  j["estimator"] = std::string(to_string(cfg.solver.effective_estimator()));
  j["trials"] = cfg.trials;
  j["failed_trials"] = s.failed_trials;
  j["max_epochs"] = cfg.solver.max_epochs;
  j["seed"] = cfg.seed;
  j["initial_objective"] = finite_or_null(s.initial_objective);
  j["final_objective"] = {{"mean", finite_or_null(s.final_objective_mean)},
                          {"std", finite_or_null(s.final_objective_std)}};
  if (s.accuracy_mean) j["accuracy"] = {{"mean", *s.accuracy_mean}, {"std", *s.accuracy_std}};
  j["wall_ms"] = s.wall_ms;
  j["status"] = static_cast<int>(s.status);
  j["warnings"] = s.warnings;
  json detail = json::array();
  for (const auto& t : s.trials) {
    json d;
    d["trial"] = t.trial;
    d["solver_seed"] = trial_solver_seed(cfg.seed, t.trial);
    d["init_fingerprint"] = t.init_fingerprint;
    d["failed"] = t.failed;
    if (!t.error.empty()) d["message"] = t.error;
    d["iterations"] = t.run.iterations;
    d["epochs_run"] = t.run.traces.size();
    d["stopped_early"] = t.run.stopped_early;
    d["feasible"] = t.run.feasibility_maintained;
    d["eta_floor_hit"] = t.run.eta_floor_hit;
    d["final_objective"] =
        finite_or_null(t.run.traces.empty() ? t.run.initial.objective : t.run.traces.back().objective);
    d["accuracy"] = optional_number(t.accuracy);
    detail.push_back(d);
  }
  j["trial_results"] = detail;
  return j.dump(2) + "\n";
}

namespace {

void write_artifacts(const ExperimentConfig& cfg, const LoadedProblem& problem, const ExperimentSummary& s,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (cfg.emit.trace_csv && !s.rows.empty()) write_text(dir / "trace.csv", format_trace_csv(s.rows));
  if (cfg.emit.summary_json) write_text(dir / "summary.json", format_summary_json(cfg, s));
  if (cfg.emit.trial_csv)
    for (const auto& t : s.trials)
      if (!t.failed)
        write_text(dir / ("trace_trial_" + std::to_string(t.trial) + ".csv"),
                   format_trial_csv(t.run, cfg.solver.max_epochs));
  if (cfg.emit.basis_pgm) {
    if (cfg.image_height * cfg.image_width != problem.spec.rows())
      throw ConfigError("image height*width must equal the number of rows of M");
    const auto it = std::find_if(s.trials.begin(), s.trials.end(), [](const TrialResult& t) { return !t.failed; });
    if (it != s.trials.end()) {
      const DenseMatrix& u = it->run.x_final.u;
      for (std::size_t c = 0; c < u.cols(); ++c) {
        const std::vector<double> column = u.column(c);
        write_pgm(dir / ("basis_" + std::to_string(c) + ".pgm"), column, cfg.image_height, cfg.image_width);
      }
    }
  }
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const LoadedProblem problem = load_problem(cfg.problem);
  ExperimentSummary summary = run_trials(cfg, problem);
  write_artifacts(cfg, problem, summary, cfg.output_dir);
  return summary;
}

CompareResult run_compare(const ExperimentConfig& cfg) {
  cfg.validate();
  const LoadedProblem problem = load_problem(cfg.problem);
  CompareResult result;
  std::set<std::pair<Algorithm, EstimatorKind>> seen;
  for (Algorithm a : cfg.compare_algorithms) {
    const bool deterministic = a == Algorithm::BPG || a == Algorithm::BPGE;
    for (EstimatorKind e : cfg.compare_estimators) {
      const EstimatorKind effective = deterministic ? EstimatorKind::Full : e;
      if (!seen.insert({a, effective}).second) continue;
      ExperimentConfig sub = cfg;
      sub.solver.algorithm = a;
      sub.solver.estimator = effective == EstimatorKind::Full ? cfg.solver.estimator : effective;
      CompareEntry entry{a, effective, run_trials(sub, problem)};
      write_artifacts(sub, problem, entry.summary,
                      cfg.output_dir / (std::string(to_string(a)) + "-" + std::string(to_string(effective))));
      result.entries.push_back(std::move(entry));
    }
  }
  std::string table = "algorithm,estimator,final_objective_mean,final_objective_std,accuracy_mean,failed_trials\n";
  for (const auto& e : result.entries) {
    table += std::string(to_string(e.algorithm)) + "," + std::string(to_string(e.estimator)) + "," +
             csv_real(e.summary.final_objective_mean) + "," + csv_real(e.summary.final_objective_std) + "," +
             csv_real(e.summary.accuracy_mean.value_or(std::numeric_limits<double>::quiet_NaN())) + "," +
             std::to_string(e.summary.failed_trials) + "\n";
    for (std::size_t t = 0; t < cfg.trials; ++t)
      if (e.summary.trials[t].init_fingerprint != result.entries.front().summary.trials[t].init_fingerprint)
        result.shared_initial_points = false;
    if (static_cast<int>(e.summary.status) > static_cast<int>(result.status)) result.status = e.summary.status;
  }
  std::filesystem::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "compare.csv", table);
  return result;
}

// ---- audit ---------------------------------------------------------------

AuditReport run_audit(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  if (cfg.solver.audit_every == 0) cfg.solver.audit_every = 1;
  cfg.validate();
  const LoadedProblem problem = load_problem(cfg.problem);
  const ProblemSpec& p = problem.spec;
  const EstimatorKind est = cfg.solver.effective_estimator();
  const bool deterministic = est == EstimatorKind::Full;

  std::vector<TrialResult> trials(cfg.trials);
  std::vector<double> m1s(cfg.trials, 0.0);
  parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
    FactorPair prev = trial_initial_point(p, cfg.seed, t);
    IterateObserver obs = [&, t](std::size_t, const FactorPair& x) {
      m1s[t] = std::max(m1s[t], secant_sample_lipschitz(p, prev, x));
      prev = x;
    };
    trials[t] = run_one_trial(cfg, problem, t, obs);
  });

  json j;
  j["problem"] = std::string(to_string(p.kind()));
  j["algorithm"] = std::string(to_string(cfg.solver.algorithm));
  j["estimator"] = std::string(to_string(est));
  j["trials"] = cfg.trials;
  j["heuristic"] = p.kind() == ProblemKind::SSNMF;
  bool passed = true;
  std::size_t failed = 0;

  std::vector<std::vector<IterationTrace>> traces;
  double m1 = cfg.solver.lipschitz_m1;
  const bool m1_from_path = !(m1 > 0.0);
  json per_trial = json::array();
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const TrialResult& tr = trials[t];
    json d{{"trial", t}, {"failed", tr.failed}};
    if (tr.failed) {
      ++failed;
      d["message"] = tr.error;
      per_trial.push_back(d);
      continue;
    }
    if (m1_from_path) m1 = std::max(m1, m1s[t]);
    traces.push_back(tr.run.traces);
    d["feasible"] = tr.run.feasibility_maintained;
    if (deterministic) {
      std::size_t violations = 0;
      double step_sum = 0.0;
      for (std::size_t k = 0; k < tr.run.traces.size(); ++k) {
        step_sum += tr.run.traces[k].bregman_step;
        if (k == 0) continue;
        const double a = tr.run.traces[k - 1].lyapunov.value_or(0.0);
        const double b = tr.run.traces[k].lyapunov.value_or(0.0);
        if (b - a > 1e-9 * (1.0 + std::abs(a))) ++violations;
      }
      const double psi1 = tr.run.traces.empty() ? 0.0 : tr.run.traces.front().lyapunov.value_or(0.0);
      const bool sum_ok = step_sum <= 3.0 * psi1 / cfg.solver.epsilon;
      d["lyapunov_violations"] = violations;
      d["bregman_step_sum"] = step_sum;
      d["bregman_step_sum_bound"] = 3.0 * psi1 / cfg.solver.epsilon;
      d["bregman_step_sum_ok"] = sum_ok;
      passed = passed && violations == 0 && sum_ok;
    }
    if (!tr.run.traces.empty()) d["final_stationarity"] = optional_number(tr.run.traces.back().stationarity);
    passed = passed && tr.run.feasibility_maintained;
    per_trial.push_back(d);
  }
  j["per_trial"] = per_trial;

  if (!traces.empty() && traces.front().size() > 0 && traces.front().front().lyapunov) {
    const RateReport rate = rate_check(traces, cfg.solver.epsilon);
    j["rate"] = {{"checked", rate.checked}, {"failures", rate.failures}, {"passed", rate.passed}};
    if (rate.first_failure) j["rate"]["first_failure"] = *rate.first_failure;
    passed = passed && rate.passed;
  }

  if (est == EstimatorKind::SAGA || est == EstimatorKind::SARAH) {
    std::vector<std::vector<DecaySample>> runs;
    for (const auto& tr : trials) {
      if (tr.failed) continue;
      std::vector<DecaySample> samples;
      const auto& a = tr.run.audits;
      for (std::size_t k = 1; k < a.size(); ++k)
        if (a[k].iteration == a[k - 1].iteration + 1)
          samples.push_back({a[k].variance.gamma, a[k - 1].variance.gamma, a[k].step_sq, a[k].prev_step_sq});
      runs.push_back(std::move(samples));
    }
    const SolverConfig s = trial_solver_config(cfg, p, 0);
    const VarianceConstants vc = est == EstimatorKind::SAGA ? saga_constants(p.samples(), s.batch_size, m1)
                                                            : sarah_constants(s.sarah_restart_probability, m1);
    const DecayReport decay = check_geometric_decay(runs, vc.tau, vc.v_gamma);
    j["decay"] = {{"m1", m1},
                  {"m1_source", m1_from_path ? "secant along iterates" : "config"},
                  {"tau", vc.tau},
                  {"v_gamma", vc.v_gamma},
                  {"iterations", decay.iterations},
                  {"violations", decay.violations},
                  {"violation_fraction", decay.violation_fraction},
                  {"passed", decay.passed}};
    passed = passed && decay.passed;
  }

  AuditReport report;
  report.status = status_for(failed, cfg.trials);
  report.passed = passed && report.status == kExitOk;
  j["passed"] = report.passed;
  report.json = j.dump(2) + "\n";
  std::filesystem::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "audit.json", report.json);
  return report;
}

}  // namespace bregopt
