// eocs — extreme operating condition search from the command line.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eocs/config.hpp"
#include "eocs/eval.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Collects inputs, options and outputs of one command and writes manifest.json
// next to the outputs it lists.
class Run {
 public:
  Run(std::string command, fs::path out_dir) : command_(std::move(command)), dir_(std::move(out_dir)) {
    options_ = json::object();
    fs::create_directories(dir_);
  }

  void option(const std::string& key, json value) { options_[key] = std::move(value); }

  void input(const std::string& role, const std::string& path) {
    inputs_.push_back({{"role", role}, {"path", path}, {"fnv1a64", hex64(fnv1a(eocs::read_text_file(path)))}});
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << content;
    if (!f) throw std::runtime_error("write failed: " + p.string());
    outputs_.push_back(name);
  }

  void finish() {
    json m;
    m["tool"] = "eocs";
    m["version"] = kVersion;
    m["command"] = command_;
    m["options"] = options_;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream f(dir_ / "manifest.json", std::ios::binary);
    f << m.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write manifest in " + dir_.string());
  }

 private:
  std::string command_;
  fs::path dir_;
  json options_;
  json inputs_ = json::array();
  json outputs_ = json::array();
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int default_workers() {
  if (const char* env = std::getenv("EOCS_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w >= 1) return w;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("EOCS_WORKERS must be a positive integer, got '") + env + "'");
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::string relay_text(const eocs::RelayPoint& r) {
  return std::to_string(r.line_id) + ":" + std::string(eocs::to_string(r.terminal));
}

eocs::EnvConfig env_for(const eocs::nn::QNetworkParams& p, int k) {
  eocs::EnvConfig env;
  env.k_max = k;
  env.budget_feature = p.features == eocs::feature_width(p.n, {.budget_feature = true});
  return env;
}

eocs::nn::QNetworkParams load_model(const std::string& path, const eocs::GridCase& c) {
  auto p = eocs::nn::load_params(eocs::read_text_file(path));
  eocs::nn::check_compatible(p, c);
  return p;
}

eocs::RunConfig load_config(const std::string& path) {
  try {
    return eocs::parse_config(eocs::read_text_file(path));
  } catch (const eocs::ConfigError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::string search_text(const eocs::SearchResult& r, eocs::Method m) {
  std::ostringstream os;
  os << "method:      " << eocs::to_string(m) << "\n";
  os << "trips:      ";
  if (r.trips.empty()) os << " (none)";
  for (auto l : r.trips) os << ' ' << l;
  os << "\nstatus:      " << r.eoc_status.to_string() << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", r.i_max);
  os << "current_pu:  " << buf << "\n";
  os << "evaluations: " << r.evaluated_count << "\n";
  std::snprintf(buf, sizeof buf, "%.6g", r.wall_time_s);
  os << "wall_time_s: " << buf << "\n";
  if (!r.feasible) os << "feasible:    no\n";
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extreme operating condition search for relay setting calculation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "Worker threads (default: EOCS_WORKERS, else hardware threads)")
      ->check(CLI::PositiveNumber);

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "Label random initial conditions with global enumeration");
  std::string case_path, out_dir, config_path, model_path, guide_path, dataset_path;
  int samples = 0, k = 3, outages = 3;
  std::uint64_t seed = 1;
  gen->add_option("case", case_path, "Case file")->required()->check(CLI::ExistingFile);
  gen->add_option("--samples", samples, "Number of samples")->required();
  gen->add_option("--k", k, "Trip budget");
  gen->add_option("--initial-outages", outages, "Maximum initial outages");
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--out", out_dir, "Output directory")->required();

  // train-guide / train-value
  auto* tg = app.add_subcommand("train-guide", "Supervised pretraining of the guide network");
  tg->add_option("case", case_path, "Case file")->required()->check(CLI::ExistingFile);
  tg->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  tg->add_option("--dataset", dataset_path, "Labelled dataset; generated from the config when omitted")
      ->check(CLI::ExistingFile);
  tg->add_option("--out", out_dir, "Output directory")->required();

  auto* tv = app.add_subcommand("train-value", "Guided learning and free exploration of the value network");
  tv->add_option("case", case_path, "Case file")->required()->check(CLI::ExistingFile);
  tv->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  tv->add_option("--guide", guide_path, "Pretrained guide network")->check(CLI::ExistingFile);
  bool no_guide = false, no_dueling = false, no_double = false;
  tv->add_flag("--no-guide", no_guide, "Ablation: no guided episodes");
  tv->add_flag("--no-dueling", no_dueling, "Ablation: plain Q head");
  tv->add_flag("--no-double", no_double, "Ablation: target network = prediction network");
  tv->add_option("--out", out_dir, "Output directory")->required();

  // search
  auto* se = app.add_subcommand("search", "Find the extreme operating condition for one relay");
  std::string status_bits, relay_str, method_name = "model";
  int radius = 2;
  bool as_json = false;
  eocs::GAConfig ga;
  se->add_option("case", case_path, "Case file")->required()->check(CLI::ExistingFile);
  se->add_option("--model", model_path, "Value network (for --method model)")->check(CLI::ExistingFile);
  se->add_option("--status", status_bits, "Initial status bitstring, 1 = in service (default: all in service)");
  se->add_option("--relay", relay_str, "Relay as LINE:from|to")->required();
  se->add_option("--k", k, "Trip budget");
  se->add_option("--method", method_name, "model|global|local|ga")
      ->check(CLI::IsMember({"model", "global", "local", "ga"}));
  se->add_option("--radius", radius, "Search radius for local enumeration");
  se->add_option("--seed", ga.seed, "GA seed");
  se->add_flag("--json", as_json, "Machine-readable output");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Scenario 1/2 accuracy against global enumeration");
  eocs::EvalConfig ecfg;
  ev->add_option("case", case_path, "Case file")->required()->check(CLI::ExistingFile);
  ev->add_option("--model", model_path, "Value network")->required()->check(CLI::ExistingFile);
  ev->add_option("--scenario", ecfg.scenario, "1 or 2")->check(CLI::IsMember({1, 2}));
  ev->add_option("--n1", ecfg.n1, "Scenario 1 sample count");
  ev->add_option("--n2", ecfg.n2, "Scenario 2 status count");
  ev->add_option("--e-levels", ecfg.e_levels, "e-accuracy levels (fractions)")->delimiter(',');
  ev->add_option("--k", ecfg.k, "Trip budget");
  ev->add_option("--initial-outages", ecfg.initial_outages, "Maximum initial outages");
  ev->add_option("--tolerance", ecfg.equality_tolerance, "Relative tolerance for equal currents");
  ev->add_option("--seed", ecfg.seed, "Sampling seed");
  std::vector<std::string> relay_list;
  ev->add_option("--relays", relay_list, "Scenario 2 relay subset (LINE:from|to, comma separated)")->delimiter(',');
  ev->add_option("--out", out_dir, "Output directory")->required();

  // benchmark
  auto* be = app.add_subcommand("benchmark", "Timing and accuracy of search methods on one sample set");
  std::vector<std::string> methods{"model", "global", "local", "ga"};
  int bench_samples = 100;
  be->add_option("case", case_path, "Case file")->required()->check(CLI::ExistingFile);
  be->add_option("--model", model_path, "Value network (needed when 'model' is listed)")->check(CLI::ExistingFile);
  be->add_option("--methods", methods, "Methods to compare")
      ->delimiter(',')
      ->check(CLI::IsMember({"model", "global", "local", "ga"}));
  be->add_option("--samples", bench_samples, "Number of sampled initial conditions")->check(CLI::PositiveNumber);
  be->add_option("--k", k, "Trip budget");
  be->add_option("--initial-outages", outages, "Maximum initial outages");
  be->add_option("--radius", radius, "Search radius for local enumeration");
  be->add_option("--seed", seed, "Sampling seed");
  be->add_option("--out", out_dir, "Output directory")->required();

  // selectivity
  auto* sl = app.add_subcommand("selectivity", "Check K * I_model > I_max over outage conditions");
  double K = 1.2;
  int sel_relays = 5, sel_outages = 2;
  sl->add_option("case", case_path, "Case file")->required()->check(CLI::ExistingFile);
  sl->add_option("--model", model_path, "Value network")->required()->check(CLI::ExistingFile);
  sl->add_option("--K", K, "Reliability coefficient");
  sl->add_option("--relay", relay_list, "Relays to check (LINE:from|to); sampled when omitted")->delimiter(',');
  sl->add_option("--relays", sel_relays, "Number of relays to sample when --relay is omitted")
      ->check(CLI::PositiveNumber);
  sl->add_option("--k", k, "Trip budget");
  sl->add_option("--outages", sel_outages, "Outage depth of the enumerated conditions");
  sl->add_option("--seed", seed, "Relay sampling seed");
  sl->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (workers == 0) workers = default_workers();
    const auto grid = eocs::load_case(case_path);
    std::ostringstream argv_text;
    for (int i = 1; i < argc; ++i) argv_text << (i > 1 ? " " : "") << argv[i];

    if (gen->parsed()) {
      if (samples < 1) throw UsageError("--samples must be >= 1");
      if (k < 0 || outages < 0) throw UsageError("--k and --initial-outages must be >= 0");
      Run run("gen-dataset", out_dir);
      run.input("case", case_path);
      run.option("samples", samples);
      run.option("k", k);
      run.option("initial_outages", outages);
      run.option("seed", seed);
      const auto ds = eocs::gen_dataset(grid, samples, outages, k, seed, workers);
      std::ostringstream os;
      eocs::write_dataset(os, ds);
      run.write("dataset.jsonl", os.str());
      run.finish();
      std::cout << "wrote " << ds.size() << " samples to " << (fs::path(out_dir) / "dataset.jsonl").string() << "\n";
      return 0;
    }

    if (tg->parsed()) {
      const auto cfg = load_config(config_path);
      Run run("train-guide", out_dir);
      run.input("case", case_path);
      run.input("config", config_path);
      run.option("config", eocs::config_to_json(cfg));
      std::vector<eocs::DatasetSample> ds;
      const auto& g = cfg.train.guide;
      if (!dataset_path.empty()) {
        run.input("dataset", dataset_path);
        ds = eocs::parse_dataset(eocs::read_text_file(dataset_path), grid);
      } else {
        const int total = g.train_size + g.verify_size + g.test_size;
        ds = eocs::gen_dataset(grid, total, cfg.train.initial_outages, cfg.train.k_max, cfg.train.seed, workers);
      }
      const auto res = eocs::pretrain_guide(grid, ds, cfg.train);
      run.write("guide.json", eocs::nn::save_params(res.params));
      run.write("guide_report.csv", eocs::guide_report_csv(res));
      json summary;
      summary["test_accuracy"] = res.test_accuracy;
      summary["evaluated_samples"] = res.evaluated_samples;
      run.write("guide_summary.json", summary.dump(2) + "\n");
      run.finish();
      std::printf("guide accuracy %.4f on %zu samples\n", res.test_accuracy, res.evaluated_samples);
      return 0;
    }

    if (tv->parsed()) {
      auto cfg = load_config(config_path);
      cfg.train.ablation = {no_guide, no_dueling, no_double};
      if (!no_guide && guide_path.empty()) throw UsageError("--guide is required unless --no-guide is given");
      Run run("train-value", out_dir);
      run.input("case", case_path);
      run.input("config", config_path);
      std::optional<eocs::nn::QNetworkParams> guide;
      if (!no_guide) {
        run.input("guide", guide_path);
        guide = load_model(guide_path, grid);
      }
      run.option("config", eocs::config_to_json(cfg));
      run.option("ablation", {{"no_guide", no_guide}, {"no_dueling", no_dueling}, {"no_double", no_double}});
      const int every = cfg.checkpoint_every;
      auto on_round = [&](const eocs::RoundRow& row, const eocs::nn::QNetworkParams& p) {
        if (every > 0 && (row.round + 1) % every == 0) {
          char name[64];
          std::snprintf(name, sizeof name, "checkpoints/value_round_%04d.json", row.round + 1);
          run.write(name, eocs::nn::save_params(p));
        }
        std::fprintf(stderr, "round %d guided=%.3f loss=%.6g acc=%.4f lr=%.3g\n", row.round, row.guided_fraction,
                     row.loss, row.accuracy, row.learning_rate);
      };
      const auto res = eocs::train_value(grid, guide ? &*guide : nullptr, cfg.train, on_round);
      run.write("value.json", eocs::nn::save_params(res.params));
      run.write("train_report.csv", eocs::report_csv(res.report));
      json summary;
      summary["rounds"] = res.report.rounds.size();
      summary["total_transitions"] = res.report.total_transitions;
      summary["best_round"] = res.report.best_round;
      summary["final_snapshot_accuracy"] = res.report.rounds.empty() ? -1.0 : res.report.rounds.back().accuracy;
      run.write("train_summary.json", summary.dump(2) + "\n");
      run.finish();
      std::printf("trained %zu rounds\n", res.report.rounds.size());
      return 0;
    }

    if (se->parsed()) {
      const auto method = eocs::parse_method(method_name);
      const auto relay = eocs::parse_relay(relay_str, grid);
      auto status = status_bits.empty() ? eocs::TopologyState::all_in_service(grid.line_count())
                                        : eocs::TopologyState::from_bits(status_bits);
      if (status.size() != grid.line_count())
        throw UsageError("--status has " + std::to_string(status.size()) + " entries, case has " +
                         std::to_string(grid.line_count()) + " lines");
      if (!status.in_service(relay.line_id))
        throw UsageError("protected line " + std::to_string(relay.line_id) + " is out of service in --status");
      if (k < 0) throw UsageError("--k must be >= 0");
      std::optional<eocs::nn::QNetworkParams> model;
      eocs::SearchOptions opt;
      opt.radius = radius;
      opt.ga = ga;
      if (method == eocs::Method::model) {
        if (model_path.empty()) throw UsageError("--model is required for --method model");
        model = load_model(model_path, grid);
        opt.env = env_for(*model, k);
      }
      eocs::SearchResult r;
      if (k == 0) {
        r.eoc_status = status;
        r.i_max = eocs::tail_fault_current(grid, status, relay);
        r.evaluated_count = 1;
      } else {
        r = eocs::run_method(method, model ? &*model : nullptr, grid, status, relay, k, opt);
      }
      if (as_json) {
        json j;
        j["method"] = std::string(eocs::to_string(method));
        j["relay"] = relay_text(relay);
        j["k"] = k;
        j["initial_status"] = status.to_string();
        j["trips"] = r.trips;
        j["status"] = r.eoc_status.to_string();
        j["current_pu"] = r.i_max;
        j["evaluated_count"] = r.evaluated_count;
        j["feasible"] = r.feasible;
        j["wall_time_s"] = r.wall_time_s;
        std::cout << j.dump() << "\n";
      } else {
        std::cout << search_text(r, method);
      }
      return 0;
    }

    if (ev->parsed()) {
      const auto model = load_model(model_path, grid);
      for (const auto& s : relay_list) ecfg.relays.push_back(eocs::parse_relay(s, grid));
      ecfg.workers = workers;
      const auto errs = ecfg.validate(grid);
      if (!errs.empty()) throw UsageError(errs.front());
      Run run("evaluate", out_dir);
      run.input("case", case_path);
      run.input("model", model_path);
      run.option("scenario", ecfg.scenario);
      run.option("n1", ecfg.n1);
      run.option("n2", ecfg.n2);
      run.option("e_levels", ecfg.e_levels);
      run.option("k", ecfg.k);
      run.option("initial_outages", ecfg.initial_outages);
      run.option("tolerance", ecfg.equality_tolerance);
      run.option("seed", ecfg.seed);
      run.option("relays", relay_list);
      const auto rep = eocs::run_scenario(model, grid, ecfg, env_for(model, ecfg.k));
      run.write("samples.csv", eocs::eval_records_csv(rep));
      run.write("samples.timing.csv", eocs::eval_timing_csv(rep));
      run.write("summary.json", eocs::eval_summary_json(rep).dump(2) + "\n");
      run.finish();
      std::printf("samples %zu  accuracy %.4f", rep.records.size(), rep.accuracy);
      for (std::size_t i = 0; i < rep.e_levels.size(); ++i)
        std::printf("  %s-accuracy %.4f", eocs::level_name(rep.e_levels[i]).c_str(), rep.e_accuracy[i]);
      std::printf("\nmean time: model %.3g s, enumeration %.3g s\n", rep.mean_model_time_s, rep.mean_oracle_time_s);
      return 0;
    }

    if (be->parsed()) {
      std::vector<eocs::Method> ms;
      for (const auto& m : methods) ms.push_back(eocs::parse_method(m));
      std::optional<eocs::nn::QNetworkParams> model;
      eocs::SearchOptions opt;
      opt.radius = radius;
      if (std::find(ms.begin(), ms.end(), eocs::Method::model) != ms.end()) {
        if (model_path.empty()) throw UsageError("--model is required when benchmarking the model");
        model = load_model(model_path, grid);
        opt.env = env_for(*model, k);
      }
      if (k < 0 || outages < 0) throw UsageError("--k and --initial-outages must be >= 0");
      Run run("benchmark", out_dir);
      run.input("case", case_path);
      if (model) run.input("model", model_path);
      run.option("methods", methods);
      run.option("samples", bench_samples);
      run.option("k", k);
      run.option("initial_outages", outages);
      run.option("radius", radius);
      run.option("seed", seed);
      std::mt19937_64 rng(seed);
      std::vector<eocs::InitialCondition> set;
      for (int i = 0; i < bench_samples; ++i) set.push_back(eocs::sample_initial_condition(grid, outages, rng));
      const auto rows = eocs::benchmark(ms, model ? &*model : nullptr, grid, set, k, opt);
      run.write("benchmark.csv", eocs::benchmark_csv(rows, false));
      run.write("benchmark.timing.csv", eocs::benchmark_csv(rows, true));
      run.finish();
      std::cout << eocs::benchmark_csv(rows, true);
      return 0;
    }

    if (sl->parsed()) {
      if (!(K > 1.0)) throw UsageError("--K must be > 1");
      if (k < 0 || sel_outages < 0) throw UsageError("--k and --outages must be >= 0");
      const auto model = load_model(model_path, grid);
      std::vector<eocs::RelayPoint> relays;
      for (const auto& s : relay_list) relays.push_back(eocs::parse_relay(s, grid));
      if (relays.empty()) relays = eocs::sample_relays(grid, sel_relays, seed);
      Run run("selectivity", out_dir);
      run.input("case", case_path);
      run.input("model", model_path);
      run.option("K", K);
      run.option("k", k);
      run.option("outages", sel_outages);
      run.option("seed", seed);
      json relay_names = json::array();
      for (const auto& r : relays) relay_names.push_back(relay_text(r));
      run.option("relays", relay_names);
      std::vector<eocs::SelectivityReport> reps;
      std::size_t total = 0, ok = 0;
      json per = json::array();
      for (const auto& r : relays) {
        reps.push_back(eocs::selectivity_check(model, grid, r, K, k, sel_outages, workers, env_for(model, k)));
        total += reps.back().conditions.size();
        ok += reps.back().satisfied;
        per.push_back({{"relay", relay_text(r)},
                       {"conditions", reps.back().conditions.size()},
                       {"satisfied", reps.back().satisfied}});
      }
      json summary;
      summary["K"] = K;
      summary["conditions"] = total;
      summary["satisfied"] = ok;
      summary["satisfaction"] = total ? static_cast<double>(ok) / static_cast<double>(total) : 1.0;
      summary["relays"] = per;
      run.write("selectivity.csv", eocs::selectivity_csv(reps));
      run.write("summary.json", summary.dump(2) + "\n");
      run.finish();
      std::printf("satisfied %zu of %zu conditions (%.2f%%)\n", ok, total,
                  total ? 100.0 * static_cast<double>(ok) / static_cast<double>(total) : 100.0);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const eocs::CaseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
