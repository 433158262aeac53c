// Command-line front end: dataset generation, DP dumps, learner training, evaluation, curves, latency.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dtarget/dtarget.hpp"

namespace {

using namespace dtarget;

enum Exit { kOk = 0, kConfig = 2, kData = 3, kResource = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool full_scale = false;
};

BenchConfig resolve_config(const Common& c) {
  BenchConfig cfg = c.config.empty() ? default_bench_config() : load_bench_config(c.config);
  if (c.seed) reseed(cfg, *c.seed);
  if (c.full_scale) set_full_scale(cfg);
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file");
  app->add_option("--seed", c.seed, "Override every seed in the config");
  app->add_option("--out", c.out, "Output directory");
  app->add_flag("--full-scale", c.full_scale, "Synthetic datasets at 86400 columns");
}

std::vector<EnvStrip> training_strips(const BenchConfig& cfg, const std::vector<EnvStrip>& all) {
  std::vector<EnvStrip> out;
  for (auto i : cfg.train) out.push_back(all[i]);
  return out;
}

std::vector<std::string> training_names(const BenchConfig& cfg) {
  std::vector<std::string> out;
  for (auto i : cfg.train) out.push_back(cfg.datasets[i].name);
  return out;
}

int cmd_gen(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto strips = resolve_datasets(cfg);
  const auto dir = cfg.out_dir / "datasets";
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < strips.size(); ++i) {
    const auto& d = cfg.datasets[i];
    DatasetManifest m;
    m.scenario = cfg.scenario;
    if (d.synthetic) {
      m.seed = d.synthetic->seed;
      m.prevalence = d.synthetic->prevalence;
    }
    const auto path = dir / (d.name + ".dtg");
    save_dataset(strips[i], path, m);
    std::cout << path.string() << "\n";
  }
  return kOk;
}

int cmd_dp(const Common& c, const std::string& dataset, std::string out) {
  const auto cfg = resolve_config(c);
  const auto strip = load_dataset(dataset);
  const auto table = build_dp_table(strip, cfg.model(), {cfg.dp_memory_cap_bytes});
  if (out.empty()) out = (cfg.out_dir / (std::filesystem::path(dataset).stem().string() + ".dtd")).string();
  if (std::filesystem::path(out).has_parent_path()) std::filesystem::create_directories(std::filesystem::path(out).parent_path());
  save_dp_table(table, out);
  std::printf("%s value(1,%d)=%.1f\n", out.c_str(), cfg.soc0, static_cast<double>(table.value(1, cfg.soc0)));
  return kOk;
}

int cmd_train_q(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto all = resolve_datasets(cfg);
  const auto train = training_strips(cfg, all);
  if (train.empty()) throw ConfigError("no training datasets");
  const auto table = train_dp_sweep(train, cfg.model(), cfg.qlearn);
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = cfg.out_dir / "qtable.dtq";
  save_qtable(table, path, cfg.qlearn);
  std::printf("%s visited_states=%zu\n", path.string().c_str(), table.visited_states());
  return kOk;
}

int cmd_train_bc(const Common& c) {
  auto cfg = resolve_config(c);
  cfg.roster = {"bc"};
  const auto all = resolve_datasets(cfg);
  const auto train = training_strips(cfg, all);
  DpCache cache(cfg.model(), cfg.cache_dir, cfg.dp_memory_cap_bytes);
  const auto learners = train_learners(cfg, train, training_names(cfg), cache);
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = cfg.out_dir / "bc.dtm";
  save_mlp(*learners.bc, path);
  std::printf("%s demonstrations=%zu\n", path.string().c_str(), learners.demonstrations);
  return kOk;
}

int cmd_eval(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto report = run_benchmark(cfg);
  emit_report(report, ReportFormat::Csv, cfg.out_dir);
  emit_report(report, ReportFormat::Markdown, cfg.out_dir);
  for (const auto& s : report.summary())
    std::printf("%-15s %7.2f%% off %.4f violations %zu\n", s.policy.c_str(), s.mean_percent, s.off_fraction,
                s.violations);
  return kOk;
}

int cmd_curve(const Common& c, const std::vector<double>& fractions, std::size_t repeats) {
  const auto cfg = resolve_config(c);
  const auto curve = training_curve(cfg, fractions, repeats);
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = cfg.out_dir / "curve.csv";
  std::ofstream(path, std::ios::binary) << curve_csv(curve);
  std::cout << curve_csv(curve);
  return kOk;
}

int cmd_latency(const Common& c, std::size_t steps) {
  auto cfg = resolve_config(c);
  const auto all = resolve_datasets(cfg);
  if (cfg.test.empty()) throw ConfigError("no test datasets");
  const auto& strip = all[cfg.test.front()];
  const auto model = cfg.model();
  DpCache cache(model, cfg.cache_dir, cfg.dp_memory_cap_bytes);
  const auto learners = train_learners(cfg, training_strips(cfg, all), training_names(cfg), cache);
  std::string csv = "policy,steps,mean_us,p50_us,p99_us\n";
  for (const auto& name : cfg.roster) {
    if (name == "dp") continue;
    auto policy = make_policy(name, cfg, learners, nullptr, nullptr);
    const auto s = measure_latency(*policy, strip, model, steps, cfg.soc0);
    char line[160];
    std::snprintf(line, sizeof line, "%s,%zu,%.4f,%.4f,%.4f\n", name.c_str(), s.steps, s.mean_us, s.p50_us, s.p99_us);
    csv += line;
  }
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream(cfg.out_dir / "decide_latency.csv", std::ios::binary) << csv;
  std::cout << csv;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic targeting simulator and benchmark"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen", "Synthesize the configured datasets");
  add_common(gen, common);

  std::string dataset, dp_out;
  auto* dp = app.add_subcommand("dp", "Build and dump the DP table of one dataset");
  add_common(dp, common);
  dp->add_option("dataset", dataset, "Dataset file")->required();
  dp->add_option("--table", dp_out, "Output table path");

  auto* tq = app.add_subcommand("train-q", "Train the Q-table on the training split");
  add_common(tq, common);
  auto* tb = app.add_subcommand("train-bc", "Train the behavioural cloning network on the training split");
  add_common(tb, common);
  auto* ev = app.add_subcommand("eval", "Run the benchmark and write reports");
  add_common(ev, common);

  std::vector<double> fractions{0.003, 0.01, 0.03, 0.1, 0.3, 1.0};
  std::size_t repeats = 5;
  auto* cv = app.add_subcommand("curve", "Training-size curves for the learners");
  add_common(cv, common);
  cv->add_option("--fractions", fractions, "Training fractions");
  cv->add_option("--repeats", repeats, "Behavioural cloning retrains per fraction");

  std::size_t steps = 10000;
  auto* lat = app.add_subcommand("latency", "Per-decision wall time of each policy");
  add_common(lat, common);
  lat->add_option("--steps", steps, "Decisions to time");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen(common);
    if (*dp) return cmd_dp(common, dataset, dp_out);
    if (*tq) return cmd_train_q(common);
    if (*tb) return cmd_train_bc(common);
    if (*ev) return cmd_eval(common);
    if (*cv) return cmd_curve(common, fractions, repeats);
    if (*lat) return cmd_latency(common, steps);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Config:
      case ErrorKind::Parameter: return kConfig;
      case ErrorKind::Resource: return kResource;
      default: return kData;
    }
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
