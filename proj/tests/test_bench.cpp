#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace dtarget;
using nlohmann::json;

namespace {

BenchConfig small_config(std::size_t length = 1500) {
  BenchConfig c = default_bench_config();
  GenParams g;
  g.length = length;
  set_synthetic_datasets(c, 4, 50, g);
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Config, Defaults) {
  const auto c = default_bench_config();
  EXPECT_EQ(c.datasets.size(), 20u);
  EXPECT_EQ(c.train.size(), 10u);
  EXPECT_EQ(c.test.front(), 10u);
  EXPECT_EQ(c.datasets[0].synthetic->seed, 1000u);
  EXPECT_EQ(c.datasets[0].synthetic->length, kDeskScaleLength);
  EXPECT_EQ(c.roster, known_policies());
  EXPECT_NO_THROW(c.validate());
  auto full = c;
  set_full_scale(full);
  EXPECT_EQ(full.datasets[3].synthetic->length, kFullScaleLength);
}

TEST(Config, ParsesKnownKeys) {
  const auto j = json::parse(R"({
    "scenario": "storm_hunting",
    "soc0": 80,
    "rewards": {"high": 50},
    "datasets": {"synthetic": {"count": 4, "seed": 9, "length": 300}},
    "roster": ["random", "dp"],
    "qlearn": {"sweeps": 2},
    "bc": {"mode": "stochastic", "demo_tie": "off", "max_epochs": 3},
    "window_reserve": {"mid": 20},
    "dp_memory_cap_mb": 2
  })");
  const auto c = parse_bench_config(j);
  EXPECT_EQ(c.scenario, Scenario::StormHunting);
  EXPECT_EQ(c.soc0, 80);
  EXPECT_EQ(c.rewards.reward_high, 50.0);
  EXPECT_EQ(c.datasets.size(), 4u);
  EXPECT_EQ(c.datasets[1].synthetic->seed, 10u);
  EXPECT_EQ(c.datasets[1].synthetic->length, 300u);
  EXPECT_EQ(c.train, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(c.roster, (std::vector<std::string>{"random", "dp"}));
  EXPECT_EQ(c.qlearn.sweeps, 2);
  EXPECT_EQ(c.bc.mode, BcMode::Stochastic);
  EXPECT_EQ(c.bc.demo_tie, TieBreak::Off);
  EXPECT_EQ(c.window_reserve.need_mid, 20);
  EXPECT_EQ(c.dp_memory_cap_bytes, 2u * 1024 * 1024);
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_bench_config(json::parse(R"({"sco0": 3})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"({"qlearn": {"alpah": 0.1}})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"({"soc0": "full"})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"({"roster": ["oracle"]})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"({"split": {"train": [0, 1], "test": [1, 2]}})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"({"split": {"train": [0], "test": [99]}})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"({"split": {"train": [], "test": [3]}})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"({"bc": {"mode": "greedy"}})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"({"qlearn": {"gamma": 1.5}})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"({"dp_memory_cap_mb": 0})")), ConfigError);
  EXPECT_THROW(parse_bench_config(json::parse(R"([1, 2])")), ConfigError);

  testutil::TempDir dir("cfg");
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(load_bench_config(dir / "broken.json"), ConfigError);
  EXPECT_THROW(load_bench_config(dir / "absent.json"), ConfigError);
}

TEST(Config, ReseedTouchesEverySeed) {
  auto c = small_config();
  reseed(c, 500);
  EXPECT_EQ(c.datasets[0].synthetic->seed, 500u);
  EXPECT_EQ(c.datasets[3].synthetic->seed, 503u);
  EXPECT_EQ(c.qlearn.seed, 500u);
  EXPECT_EQ(c.bc.train.seed, 500u);
  EXPECT_NE(c.random_seed, 1u);
}

TEST(Datasets, MissingFileNamesPath) {
  auto c = small_config();
  c.datasets.push_back({"ghost", std::filesystem::path("/nonexistent/ghost.dtg"), std::nullopt});
  c.test.push_back(4);
  try {
    resolve_datasets(c);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/ghost.dtg"), std::string::npos);
  }
}

TEST(Datasets, FilesLoadRelativeToConfig) {
  testutil::TempDir dir("ds");
  GenParams g;
  g.length = 200;
  g.seed = 4;
  save_dataset(generate_synthetic(g), dir / "a.dtg", {});
  g.seed = 5;
  save_dataset(generate_synthetic(g), dir / "b.dtg", {});
  std::ofstream(dir / "cfg.json") << R"({"datasets": {"paths": ["a.dtg", "b.dtg"]}, "roster": ["greedy_radar", "dp"]})";
  const auto c = load_bench_config(dir / "cfg.json");
  ASSERT_EQ(c.datasets.size(), 2u);
  EXPECT_EQ(c.datasets[0].name, "a");
  EXPECT_EQ(c.train, std::vector<std::size_t>{0});
  EXPECT_EQ(c.test, std::vector<std::size_t>{1});
  const auto strips = resolve_datasets(c);
  EXPECT_EQ(strips[1], generate_synthetic(g));
}

TEST(DpCache, MemoryCapNamesDataset) {
  auto c = small_config();
  c.roster = {"dp"};
  c.dp_memory_cap_bytes = 1000;
  try {
    run_benchmark(c);
    FAIL();
  } catch (const ResourceError& e) {
    EXPECT_NE(std::string(e.what()).find("syn52"), std::string::npos);
  }
}

TEST(DpCache, DiskRoundTrip) {
  testutil::TempDir dir("cache");
  GenParams g;
  g.length = 300;
  const auto strip = generate_synthetic(g);
  const SimModel model;
  DpCache a(model, dir.path(), std::size_t{1} << 30);
  const auto table = a.get(strip, "s");
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) files += e.path().extension() == ".dtd";
  EXPECT_EQ(files, 1u);
  DpCache b(model, dir.path(), 1);  // a cache hit never rebuilds, so the tiny cap is not hit
  EXPECT_EQ(b.get(strip, "s"), table);
  auto other = model;
  other.rewards.reward_high = 99.0;
  DpCache c(other, dir.path(), 1);
  EXPECT_THROW(c.get(strip, "s"), ResourceError);
}

TEST(Benchmark, RandomAndDpOnly) {
  auto c = small_config(800);
  c.roster = {"random", "dp"};
  const auto report = run_benchmark(c);
  ASSERT_EQ(report.rows.size(), 4u);
  for (const auto& r : report.rows) {
    if (r.policy == "dp") {
      EXPECT_EQ(r.total_reward, r.dp_reward);
      EXPECT_EQ(r.percent_of_dp, 100.0);
    }
    EXPECT_LE(r.percent_of_dp, 100.0);
    EXPECT_NEAR(r.class_fraction[0] + r.class_fraction[1] + r.class_fraction[2] + r.off_fraction, 1.0, 1e-12);
    EXPECT_EQ(r.violations, 0u);
  }
  EXPECT_LT(report.find("random")->mean_percent, 100.0);
  EXPECT_FALSE(report.find("bc"));
}

TEST(Benchmark, FullRosterIsBoundedByDp) {
  const auto report = run_benchmark(small_config());
  EXPECT_EQ(report.rows.size(), 2u * known_policies().size());
  for (const auto& r : report.rows) {
    EXPECT_LE(r.total_reward, r.dp_reward) << r.policy;
    EXPECT_EQ(r.violations, 0u) << r.policy;
  }
  const auto summary = report.summary();
  ASSERT_EQ(summary.size(), known_policies().size());
  EXPECT_EQ(report.find("dp")->mean_percent, 100.0);
  EXPECT_GT(report.find("greedy_radar")->mean_percent, report.find("random")->mean_percent);
}

TEST(Report, EmptyRosterWritesHeaders) {
  testutil::TempDir dir("empty");
  BenchReport report;
  const auto files = emit_report(report, ReportFormat::Csv, dir.path());
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(slurp(dir / "report.csv"),
            "policy,dataset,total_reward,dp_reward,percent_of_dp,frac_low,frac_mid,frac_high,off_fraction,violations\n");
  EXPECT_EQ(slurp(dir / "latency.csv"), "policy,dataset,mean_decide_us\n");
  emit_report(report, ReportFormat::Markdown, dir.path());
  EXPECT_NE(slurp(dir / "report.md").find("Average percent of total possible reward"), std::string::npos);
}

TEST(Report, CsvIsExactAndStable) {
  auto c = small_config(600);
  c.roster = {"greedy_nadir", "greedy_window", "dp"};
  const auto report = run_benchmark(c);
  testutil::TempDir dir("rep");
  emit_report(report, ReportFormat::Csv, dir / "a");
  emit_report(run_benchmark(c), ReportFormat::Csv, dir / "b");
  EXPECT_EQ(slurp(dir / "a" / "report.csv"), slurp(dir / "b" / "report.csv"));

  auto rows = parse_report_csv(report_csv(report));
  ASSERT_EQ(rows.size(), report.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].latency_us = report.rows[i].latency_us;
    EXPECT_EQ(rows[i], report.rows[i]);
  }
  EXPECT_THROW(parse_report_csv("nope\n"), DataError);
}

TEST(Report, UnwritableDirectory) {
  testutil::TempDir dir("ro");
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(emit_report(BenchReport{}, ReportFormat::Csv, dir / "file"), IoError);
}

TEST(Curve, FullFractionMatchesBenchmark) {
  auto c = small_config(800);
  c.roster = {"qlearn", "bc"};
  const std::vector<double> fractions{1.0};
  const auto curve = training_curve(c, fractions, 1);
  const auto report = run_benchmark(c);
  ASSERT_EQ(curve.points.size(), 2u);
  for (const auto& pt : curve.points) {
    EXPECT_EQ(pt.horizon, 800u);
    EXPECT_DOUBLE_EQ(pt.mean_percent, report.find(pt.learner)->mean_percent) << pt.learner;
    EXPECT_LE(pt.min_percent, pt.mean_percent);
    EXPECT_GE(pt.max_percent, pt.mean_percent);
  }
  EXPECT_NE(curve_csv(curve).find("qlearn,1,800,"), std::string::npos);
}

TEST(Curve, Validation) {
  auto c = small_config(300);
  c.roster = {"qlearn"};
  const std::vector<double> zero{0.0}, above{1.5};
  EXPECT_THROW(training_curve(c, zero), ParameterError);
  EXPECT_THROW(training_curve(c, above), ParameterError);
  const std::vector<double> ok{0.5};
  EXPECT_THROW(training_curve(c, ok, 0), ParameterError);
  const auto curve = training_curve(c, ok, 1);
  ASSERT_EQ(curve.points.size(), 1u);
  EXPECT_EQ(curve.points[0].horizon, 150u);
}

TEST(Latency, StatsAndGuards) {
  std::mt19937_64 rng(3);
  const auto strip = testutil::random_strip(31, 100, rng);
  GreedyRadar radar;
  EXPECT_THROW(measure_latency(radar, strip, SimModel{}, 0), ParameterError);
  const auto s = measure_latency(radar, strip, SimModel{}, 1000);
  EXPECT_EQ(s.steps, 1000u);
  EXPECT_GT(s.mean_us, 0.0);
  EXPECT_LE(s.p50_us, s.p99_us);
}

TEST(Policies, FactoryCoversRoster) {
  auto c = small_config(300);
  const auto strips = resolve_datasets(c);
  DpCache cache(c.model(), std::nullopt, c.dp_memory_cap_bytes);
  const std::vector<EnvStrip> train{strips[0], strips[1]};
  const std::vector<std::string> names{"a", "b"};
  const auto learners = train_learners(c, train, names, cache);
  ASSERT_TRUE(learners.q);
  ASSERT_TRUE(learners.bc);
  EXPECT_GT(learners.demonstrations, 0u);
  const auto& table = cache.get(strips[2], "c");
  for (const auto& name : known_policies()) {
    auto p = make_policy(name, c, learners, &table, &strips[2]);
    ASSERT_TRUE(p) << name;
  }
  EXPECT_THROW(make_policy("dp", c, learners, nullptr, nullptr), Error);
}
