#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "bregopt/clustering.hpp"
#include "bregopt/experiment.hpp"
#include "bregopt/io.hpp"
#include "bregopt/synthetic.hpp"
#include "oracles.hpp"

using namespace bregopt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("bregopt_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---- io ----------------------------------------------------------------------

TEST(Io, CsvExample) {
  const DenseMatrix m = parse_matrix("1,2,3\n4,5,6\n", MatrixFormat::Csv);
  EXPECT_EQ(m, (DenseMatrix{{1, 2, 3}, {4, 5, 6}}));
  EXPECT_THROW(parse_matrix("1,2\n3\n", MatrixFormat::Csv), ParseError);
  EXPECT_THROW(parse_matrix("1,x\n", MatrixFormat::Csv), ParseError);
  EXPECT_THROW(parse_matrix("1,nan\n", MatrixFormat::Csv), ParseError);
}

TEST(Io, MatrixMarketColumnMajorAndErrors) {
  const std::string ok = "%%MatrixMarket matrix array real general\n% c\n2 2\n1\n2\n3\n4\n";
  EXPECT_EQ(parse_matrix(ok, MatrixFormat::MatrixMarketArray), (DenseMatrix{{1, 3}, {2, 4}}));
  const std::string short_body = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n";
  EXPECT_THROW(parse_matrix(short_body, MatrixFormat::MatrixMarketArray), ParseError);
  EXPECT_THROW(parse_matrix("2 2\n1\n2\n3\n4\n", MatrixFormat::MatrixMarketArray), ParseError);
}

TEST(Io, RoundTripIsExact) {
  Prng rng(91);
  const DenseMatrix m = oracle::random_matrix(5, 3, rng, -1e3, 1e3);
  const fs::path d = temp_dir("io");
  for (auto fmt : {MatrixFormat::Csv, MatrixFormat::MatrixMarketArray}) {
    const fs::path p = d / (fmt == MatrixFormat::Csv ? "m.csv" : "m.mtx");
    save_matrix(p, m, fmt);
    EXPECT_EQ(format_from_extension(p), fmt);
    EXPECT_EQ(load_matrix(p, fmt), m);
  }
  const std::vector<std::size_t> labels{0, 2, 1, 1};
  save_labels(d / "l.txt", labels);
  EXPECT_EQ(load_labels(d / "l.txt"), labels);
  EXPECT_THROW(load_matrix(d / "missing.csv", MatrixFormat::Csv), std::exception);
}

TEST(Io, PgmHeaderAndScaling) {
  const std::vector<double> px{0.0, 0.5, 1.0, 0.25, 0.75, 1.0};
  const std::string pgm = encode_pgm(px, 2, 3);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(pgm.substr(0, header.size()), header);
  ASSERT_EQ(pgm.size(), header.size() + 6);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size()]), 0);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 2]), 255);
  const std::string flat = encode_pgm(std::vector<double>(4, 3.0), 2, 2);
  EXPECT_TRUE(std::all_of(flat.end() - 4, flat.end(), [](char c) { return c == 0; }));
  EXPECT_THROW(encode_pgm(px, 4, 4), std::invalid_argument);
}

TEST(Io, FormatNames) {
  EXPECT_EQ(parse_matrix_format("csv"), MatrixFormat::Csv);
  EXPECT_EQ(parse_matrix_format("mtx"), MatrixFormat::MatrixMarketArray);
  EXPECT_THROW(parse_matrix_format("xls"), std::invalid_argument);
}

// ---- synthetic data ----------------------------------------------------------

TEST(Synthetic, ShapesLabelsAndStructure) {
  SyntheticSpec s;
  s.m = 12;
  s.d = 7;
  s.r_true = 3;
  s.cluster_count = 3;
  s.noise_sigma = 0.0;
  const auto data = generate_synthetic(s);
  EXPECT_EQ(data.m.rows(), 12u);
  EXPECT_EQ(data.m.cols(), 7u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(data.labels[i], i % 3);
    for (std::size_t k = 0; k < 3; ++k) {
      const double u = data.u_true(i, k);
      if (k == i % 3) EXPECT_TRUE(u >= 0.8 && u < 1.2);
      else EXPECT_TRUE(u >= 0.0 && u < 0.1);
    }
  }
  EXPECT_LT(max_abs_diff(data.m, matmul(data.u_true, data.v_true)), 1e-15);
}

TEST(Synthetic, DeterministicAndValidated) {
  SyntheticSpec s;
  EXPECT_EQ(generate_synthetic(s).m, generate_synthetic(s).m);
  SyntheticSpec t = s;
  t.seed = 2;
  EXPECT_NE(generate_synthetic(s).m, generate_synthetic(t).m);
  SyntheticSpec bad = s;
  bad.r_true = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = s;
  bad.noise_sigma = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Synthetic, InitialPointRangeAndFingerprint) {
  Prng a(5), b(5);
  const FactorPair x = init_point(6, 2, 4, a), y = init_point(6, 2, 4, b);
  EXPECT_EQ(x, y);
  EXPECT_EQ(fingerprint(x), fingerprint(y));
  for (double v : x.u.data()) EXPECT_TRUE(v >= 0 && v < 0.1);
  for (double v : x.v.data()) EXPECT_TRUE(v >= 0 && v < 0.1);
  FactorPair z = x;
  z.v(0, 0) += 1e-3;
  EXPECT_NE(fingerprint(x), fingerprint(z));
}

// ---- clustering ----------------------------------------------------------------

TEST(Clustering, AccuracyExamples) {
  EXPECT_DOUBLE_EQ(clustering_accuracy({1, 1, 0, 0}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(clustering_accuracy({0, 0, 0, 0}, {0, 0, 1, 2}), 0.5);
  EXPECT_DOUBLE_EQ(clustering_accuracy({0, 1, 2, 3}, {0, 0, 0, 0}), 0.25);
  EXPECT_THROW(clustering_accuracy({0}, {0, 1}), std::invalid_argument);
}

TEST(Clustering, HungarianAgainstPermutationEnumeration) {
  Prng rng(93);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.below(6);
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (auto& row : cost)
      for (auto& c : row) c = rng.uniform(-5, 5);
    const auto a = hungarian_min_cost(cost);
    ASSERT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), n);
    double got = 0;
    for (std::size_t i = 0; i < n; ++i) got += cost[i][a[i]];
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double c = 0;
      for (std::size_t i = 0; i < n; ++i) c += cost[i][perm[i]];
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    ASSERT_NEAR(got, best, 1e-12);
  }
}

TEST(Clustering, KMeansOneHotAndSingleCluster) {
  Prng rng(95);
  DenseMatrix onehot(9, 3);
  std::vector<std::size_t> labels(9);
  for (std::size_t i = 0; i < 9; ++i) onehot(i, i % 3) = 1.0, labels[i] = i % 3;
  EXPECT_DOUBLE_EQ(kmeans_accuracy(onehot, labels, 3, 5, rng), 1.0);
  // k = 1: accuracy is the largest class share
  const std::vector<std::size_t> skew{0, 0, 0, 1, 1, 2, 0, 0, 1};
  EXPECT_DOUBLE_EQ(kmeans_accuracy(onehot, skew, 1, 3, rng), 5.0 / 9.0);
  EXPECT_THROW(kmeans(DenseMatrix{{1}, {1}}, 2, 1, rng), std::invalid_argument);
  EXPECT_THROW(kmeans(onehot, 0, 1, rng), std::invalid_argument);
}

TEST(Clustering, KMeansMatchesBruteForcePartition) {
  // 6 points on a line, k = 2: enumerate all 2-partitions for the optimal inertia
  const DenseMatrix pts{{0.0}, {0.4}, {1.1}, {5.0}, {5.3}, {9.0}};
  double best = 1e300;
  for (unsigned mask = 1; mask < (1u << 6) - 1; ++mask) {
    double inertia = 0;
    for (unsigned side = 0; side < 2; ++side) {
      double sum = 0, cnt = 0;
      for (unsigned i = 0; i < 6; ++i)
        if (((mask >> i) & 1u) == side) sum += pts(i, 0), cnt += 1;
      const double mean = sum / cnt;
      for (unsigned i = 0; i < 6; ++i)
        if (((mask >> i) & 1u) == side) inertia += (pts(i, 0) - mean) * (pts(i, 0) - mean);
    }
    best = std::min(best, inertia);
  }
  Prng rng(97);
  EXPECT_NEAR(kmeans(pts, 2, 10, rng).inertia, best, 1e-12);
}

// ---- configuration -------------------------------------------------------------

TEST(Config, DefaultsOverridesAndRoundTrip) {
  const auto cfg = parse_config(R"({"problem": {"kind": "SSNMF", "s1": 2}, "trials": 3})",
                                {"solver.max_epochs=7", "seed=11", "solver.algorithm=BPG"});
  EXPECT_EQ(cfg.problem.kind, ProblemKind::SSNMF);
  EXPECT_EQ(cfg.problem.s1, 2u);
  EXPECT_EQ(cfg.trials, 3u);
  EXPECT_EQ(cfg.solver.max_epochs, 7u);
  EXPECT_EQ(cfg.solver.algorithm, Algorithm::BPG);
  EXPECT_EQ(cfg.seed, 11u);
  EXPECT_EQ(cfg.problem.data.synthetic.seed, 11u);
  const auto again = parse_config(config_to_json(cfg));
  EXPECT_EQ(config_to_json(again), config_to_json(cfg));
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"problem": {"kind": "XYZ"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"trials": 0})"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  EXPECT_THROW(parse_config("{}", {"novalue"}), ConfigError);
  EXPECT_THROW(parse_config(R"({"solver": {"batch_size": 0}})"), ConfigError);
}

// ---- experiments ---------------------------------------------------------------

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
  auto cfg = parse_config(R"({
    "problem": {"kind": "GNMF", "rank": 2,
                "data": {"source": "synthetic", "m": 12, "d": 8, "r_true": 2, "cluster_count": 2},
                "laplacian": {"neighbors": 2}},
    "solver": {"algorithm": "BPSGE", "estimator": "SAGA", "batch_size": 2, "max_epochs": 5},
    "trials": 3, "threads": 2})");
  cfg.output_dir = out;
  return cfg;
}

}  // namespace

TEST(Experiment, ZeroEpochsEchoesInitialObjective) {
  auto cfg = tiny_config(temp_dir("zero"));
  cfg.trials = 1;
  cfg.solver.max_epochs = 0;
  const auto s = run_experiment(cfg);
  const auto lp = load_problem(cfg.problem);
  const double f0 = objective(lp.spec, trial_initial_point(lp.spec, cfg.seed, 0)).value;
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(s.rows[0].objective_mean, f0);
  EXPECT_DOUBLE_EQ(s.final_objective_mean, f0);
  EXPECT_EQ(s.status, kExitOk);
}

TEST(Experiment, ArtifactsAreReproducible) {
  const fs::path a = temp_dir("rep_a"), b = temp_dir("rep_b");
  auto ca = tiny_config(a), cb = tiny_config(b);
  cb.threads = 1;
  const auto sa = run_experiment(ca);
  run_experiment(cb);
  const std::string csv = slurp(a / "trace.csv");
  EXPECT_EQ(csv, slurp(b / "trace.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,objective_mean,objective_std,bregman_step_mean,bregman_step_std,stationarity_mean,"
            "stationarity_std,eta,beta");
  EXPECT_TRUE(fs::exists(a / "summary.json"));
  EXPECT_EQ(sa.trials.size(), 3u);
  EXPECT_TRUE(sa.accuracy_mean.has_value());
}

TEST(Experiment, TrialsUseDistinctStartsSharedAcrossAlgorithms) {
  auto cfg = tiny_config(temp_dir("cmp"));
  cfg.solver.max_epochs = 2;
  const auto lp = load_problem(cfg.problem);
  EXPECT_NE(fingerprint(trial_initial_point(lp.spec, 1, 0)), fingerprint(trial_initial_point(lp.spec, 1, 1)));
  EXPECT_NE(trial_solver_seed(1, 0), trial_solver_seed(1, 1));
  const auto r = run_compare(cfg);
  EXPECT_TRUE(r.shared_initial_points);
  EXPECT_EQ(r.entries.size(), 4u);
  EXPECT_TRUE(fs::exists(cfg.output_dir / "compare.csv"));
}

TEST(Experiment, AggregationPadsEarlyStops) {
  TrialResult t;
  t.run.initial.objective = 4.0;
  IterationTrace e1;
  e1.epoch = 1;
  e1.objective = 2.0;
  t.run.traces = {e1};
  TrialResult u = t;
  u.run.traces[0].objective = 4.0;
  const auto rows = aggregate_traces({t, u}, 3);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_DOUBLE_EQ(rows[3].objective_mean, 3.0);
  EXPECT_NEAR(rows[3].objective_std, std::sqrt(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(rows[0].objective_mean, 4.0);
}

TEST(Experiment, SecantEstimateOfSampleLipschitz) {
  // 1x1: grad f_1 = (-(m - uv) v, -(m - uv) u); along a U-only move with v = 1, the
  // U-component changes by du exactly
  const auto p = ProblemSpec::ssnmf(DenseMatrix{{0}}, 1, 1, 1);
  const FactorPair a{DenseMatrix{{0.0}}, DenseMatrix{{1.0}}}, b{DenseMatrix{{0.5}}, DenseMatrix{{1.0}}};
  // grad at a: (0, 0); at b: (0.5, 0.25)
  EXPECT_NEAR(secant_sample_lipschitz(p, a, b), std::hypot(0.5, 0.25) / 0.5, 1e-15);
  EXPECT_EQ(secant_sample_lipschitz(p, a, a), 0.0);
}
