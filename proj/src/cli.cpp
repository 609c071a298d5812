#include "demix/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "demix/metrics.hpp"
#include "demix/serialize.hpp"

namespace demix::cli {

namespace {

using nlohmann::json;

struct ExperimentName {
  Experiment value;
  const char* name;
};

constexpr ExperimentName kExperiments[] = {
    {Experiment::kConvergence, "convergence"},
    {Experiment::kConditionNumber, "condition_number"},
    {Experiment::kNoiseSweep, "noise_sweep"},
    {Experiment::kIncoherence, "incoherence"},
    {Experiment::kVerifyRsc, "verify_rsc"},
    {Experiment::kVerifyLoo, "verify_loo"},
    {Experiment::kVerifySpectral, "verify_spectral"},
};

// Usage problems (bad config, bad flags) map to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

Dimensions parse_dims(const json& j) {
  if (!j.is_object()) throw ArgumentError("dims entries must be objects {s, m, K}");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "s" && it.key() != "m" && it.key() != "K")
      throw ArgumentError("unknown dims key '" + it.key() + "'");
  Dimensions d;
  d.s = j.at("s").get<int>();
  d.m = j.at("m").get<int>();
  d.K = j.at("K").get<int>();
  return d;
}

template <typename T>
std::vector<T> scalar_or_list(const json& j) {
  if (j.is_array()) return j.get<std::vector<T>>();
  return {j.get<T>()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

SolverConfig solver_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  SolverConfig sc;
  sc.eta = cfg.eta;
  sc.max_iters = cfg.max_iters;
  sc.stop_tol = cfg.stop_tol;
  sc.record_every = cfg.record_every;
  sc.seed = seed;
  return sc;
}

// Runs fn(k) for k in [0, n) on the worker pool. The first exception is
// rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) {
        try {
          fn(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

ProblemInstance make_instance(const ExperimentConfig& cfg, const Job& job) {
  if (cfg.instance) return read_instance_file(*cfg.instance);
  return generate_instance(job.dims, job.kappa, job.sigma, job.seed);
}

struct JobResult {
  bool diverged = false;
  int iters = 0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double final_relative_error = std::numeric_limits<double>::quiet_NaN();
  double snr = std::numeric_limits<double>::infinity();
  std::string status = "ok";
};

JobResult run_job(const ExperimentConfig& cfg, const Job& job,
                  const std::filesystem::path& out_dir) {
  const ProblemInstance inst = make_instance(cfg, job);
  JobResult res;
  if (inst.e.size() > 0 && inst.e.norm() > 0.0) res.snr = snr_db(inst.y, inst.e);
  const SolverConfig sc = solver_config(cfg, job.seed);
  std::string csv;
  try {
    const RunResult rr = run(inst, sc);
    csv = trajectory_csv(rr.trajectory);
    const auto& last = rr.trajectory.back();
    res.iters = last.iter;
    res.final_loss = last.loss;
    res.final_relative_error = last.relative_error;
  } catch (const DivergenceError& e) {
    csv = trajectory_csv(e.partial(), std::string(e.what()), e.iteration());
    res.diverged = true;
    res.iters = e.iteration();
    res.status = "diverged";
  } catch (const DegenerateIterateError& e) {
    csv = trajectory_csv({}, std::string(e.what()), 0);
    res.diverged = true;
    res.status = "degenerate";
  }
  write_text(out_dir / ("traj_" + job.tag() + ".csv"), csv);
  return res;
}

int cmd_generate(const ExperimentConfig& cfg) {
  const auto jobs = expand_jobs(cfg);
  parallel_for(jobs.size(), [&](std::size_t k) {
    const ProblemInstance inst = make_instance(cfg, jobs[k]);
    const auto stem = cfg.output_dir / ("inst_" + jobs[k].tag());
    write_instance_file(stem.string() + ".bin", inst);
    write_text(stem.string() + ".json", dump(instance_metadata(inst)));
  });
  return 0;
}

int cmd_run(const ExperimentConfig& cfg, bool summary) {
  const auto jobs = expand_jobs(cfg);
  std::vector<JobResult> results(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    results[k] = run_job(cfg, jobs[k], cfg.output_dir);
  });
  bool failed = false;
  std::ostringstream table;
  table << kSummaryHeader << "\n";
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const auto& j = jobs[k];
    const auto& r = results[k];
    failed = failed || r.diverged;
    table << j.tag() << ',' << j.dims.K << ',' << j.dims.s << ',' << j.dims.m << ','
          << format_double(j.kappa) << ',' << format_double(j.sigma) << ',' << j.seed
          << ',' << format_double(r.snr) << ',' << r.iters << ','
          << format_double(r.final_loss) << ',' << format_double(r.final_relative_error)
          << ',' << r.status << "\n";
  }
  if (summary) write_text(cfg.output_dir / "summary.csv", table.str());
  for (std::size_t k = 0; k < jobs.size(); ++k)
    if (results[k].diverged)
      std::cerr << "demix: job " << jobs[k].tag() << " " << results[k].status << "\n";
  return failed ? 1 : 0;
}

RscOptions rsc_options(const ExperimentConfig& cfg) {
  RscOptions o;
  o.n_points = cfg.verify.n_points;
  o.n_dirs = cfg.verify.n_dirs;
  o.delta = cfg.verify.delta;
  return o;
}

int cmd_verify(const ExperimentConfig& cfg) {
  if (!is_verify(cfg.experiment))
    throw UsageError("verify needs experiment verify_rsc, verify_loo or verify_spectral, got '" +
                     to_string(cfg.experiment) + "'");
  const auto jobs = expand_jobs(cfg);
  std::vector<int> passed(jobs.size(), 0);

  switch (cfg.experiment) {
    case Experiment::kVerifyRsc:
      parallel_for(jobs.size(), [&](std::size_t k) {
        const auto inst = make_instance(cfg, jobs[k]);
        const auto opts = rsc_options(cfg);
        const auto rep = check_rsc(inst, opts, jobs[k].seed);
        json j = to_json(rep, opts, jobs[k].seed);
        j["params"]["dims"] = {{"s", jobs[k].dims.s}, {"m", jobs[k].dims.m}, {"K", jobs[k].dims.K}};
        write_text(cfg.output_dir / ("verify_rsc_" + jobs[k].tag() + ".json"), dump(j));
        passed[k] = rep.pass;
      });
      break;
    case Experiment::kVerifyLoo:
      parallel_for(jobs.size(), [&](std::size_t k) {
        const auto inst = make_instance(cfg, jobs[k]);
        const auto sc = solver_config(cfg, jobs[k].seed);
        const auto l_set = sample_loo_indices(inst.dims.m, cfg.verify.n_loo, jobs[k].seed);
        json j;
        try {
          const auto rep = leave_one_out_trajectories(inst, sc, l_set);
          j = to_json(rep, sc, jobs[k].seed, cfg.verify.loo_threshold);
        } catch (const DivergenceError& e) {
          j = {{"check", "loo"},
               {"params", {{"eta", sc.eta}, {"max_iters", sc.max_iters}}},
               {"seed", jobs[k].seed},
               {"metrics", {{"error", e.what()}}},
               {"pass", false},
               {"notes", json::array({kNoiseModelNote})}};
        }
        j["params"]["dims"] = {{"s", jobs[k].dims.s}, {"m", jobs[k].dims.m}, {"K", jobs[k].dims.K}};
        write_text(cfg.output_dir / ("verify_loo_" + jobs[k].tag() + ".json"), dump(j));
        passed[k] = j["pass"].get<bool>();
      });
      break;
    case Experiment::kVerifySpectral: {
      std::vector<SpectralReport> reports(jobs.size());
      parallel_for(jobs.size(), [&](std::size_t k) {
        reports[k] = spectral_concentration(jobs[k].dims, jobs[k].sigma,
                                            cfg.verify.n_trials, jobs[k].seed);
        write_text(cfg.output_dir / ("verify_spectral_" + jobs[k].tag() + ".json"),
                   dump(to_json(reports[k], jobs[k].seed)));
        passed[k] = reports[k].max_abs_zscore <= reports[k].zscore_bound;
      });
      // Deviation table across the dims sweep, one per (sigma, seed).
      for (double sigma : cfg.sigma)
        for (auto seed : cfg.seeds) {
          json rows = json::array();
          bool monotone = true;
          double prev = std::numeric_limits<double>::infinity();
          for (std::size_t k = 0; k < jobs.size(); ++k) {
            if (jobs[k].sigma != sigma || jobs[k].seed != seed) continue;
            const auto& r = reports[k];
            rows.push_back({{"s", r.dims.s}, {"m", r.dims.m}, {"K", r.dims.K},
                            {"mean_deviation", r.mean_deviation},
                            {"max_deviation", r.max_deviation}});
            monotone = monotone && r.mean_deviation < prev;
            prev = r.mean_deviation;
          }
          json table = {{"check", "spectral_sweep"},
                        {"params", {{"sigma", sigma}, {"n_trials", cfg.verify.n_trials}}},
                        {"seed", seed},
                        {"metrics", {{"rows", rows}, {"monotone", monotone}}},
                        {"pass", monotone},
                        {"notes", json::array({kNoiseModelNote})}};
          write_text(cfg.output_dir / ("verify_spectral_sweep_sigma" + format_double(sigma) +
                                       "_seed" + std::to_string(seed) + ".json"),
                     dump(table));
          if (!monotone) passed.assign(passed.size(), 0);
        }
      break;
    }
    default:
      break;
  }
  for (int p : passed)
    if (!p) return 1;
  return 0;
}

}  // namespace

std::string to_string(Experiment e) {
  for (const auto& x : kExperiments)
    if (x.value == e) return x.name;
  return "unknown";
}

Experiment parse_experiment(const std::string& name) {
  for (const auto& x : kExperiments)
    if (name == x.name) return x.value;
  throw ArgumentError("unknown experiment '" + name + "'");
}

bool is_verify(Experiment e) {
  return e == Experiment::kVerifyRsc || e == Experiment::kVerifyLoo ||
         e == Experiment::kVerifySpectral;
}

void ExperimentConfig::validate() const {
  if (dims.empty()) throw ArgumentError("dims must be nonempty");
  for (const auto& d : dims) d.validate();
  if (kappa.empty() || sigma.empty()) throw ArgumentError("kappa and sigma lists must be nonempty");
  for (double k : kappa)
    if (!(k >= 1.0)) throw ArgumentError("kappa must be >= 1");
  for (double s : sigma)
    if (!(s >= 0.0)) throw ArgumentError("sigma must be >= 0");
  if (seeds.empty()) throw ArgumentError("seeds must be nonempty");
  SolverConfig sc;
  sc.eta = eta;
  sc.max_iters = max_iters;
  sc.stop_tol = stop_tol;
  sc.record_every = record_every;
  sc.validate();
  if (verify.n_points < 1 || verify.n_dirs < 1 || verify.n_trials < 2 || verify.n_loo < 1)
    throw ArgumentError("verify counts must be positive (n_trials >= 2)");
  if (!(verify.delta > 0.0)) throw ArgumentError("verify.delta must be > 0");
  if (output_dir.empty()) throw ArgumentError("output_dir must be set");
}

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ArgumentError("config must be a JSON object");
  static const std::vector<std::string> known = {
      "schema_version", "experiment", "dims",   "eta",        "kappa",
      "sigma",          "max_iters",  "stop_tol", "record_every", "seeds",
      "output_dir",     "instance",   "verify"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ArgumentError("unknown config key '" + it.key() + "'");

  if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kConfigSchemaVersion)
    throw ArgumentError("config schema_version must be " + std::to_string(kConfigSchemaVersion));

  ExperimentConfig cfg;
  try {
    cfg.experiment = parse_experiment(j.at("experiment").get<std::string>());
    const json& d = j.at("dims");
    if (d.is_array()) {
      for (const auto& e : d) cfg.dims.push_back(parse_dims(e));
    } else {
      cfg.dims.push_back(parse_dims(d));
    }
    if (j.contains("eta")) cfg.eta = j.at("eta").get<double>();
    if (j.contains("kappa")) cfg.kappa = scalar_or_list<double>(j.at("kappa"));
    if (j.contains("sigma")) cfg.sigma = scalar_or_list<double>(j.at("sigma"));
    if (j.contains("max_iters")) cfg.max_iters = j.at("max_iters").get<int>();
    if (j.contains("stop_tol")) cfg.stop_tol = j.at("stop_tol").get<double>();
    if (j.contains("record_every")) cfg.record_every = j.at("record_every").get<int>();
    if (j.contains("seeds")) cfg.seeds = scalar_or_list<std::uint64_t>(j.at("seeds"));
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("instance")) cfg.instance = j.at("instance").get<std::string>();
    if (j.contains("verify")) {
      const json& v = j.at("verify");
      for (auto it = v.begin(); it != v.end(); ++it) {
        const auto& k = it.key();
        if (k == "n_points") cfg.verify.n_points = it->get<int>();
        else if (k == "n_dirs") cfg.verify.n_dirs = it->get<int>();
        else if (k == "delta") cfg.verify.delta = it->get<double>();
        else if (k == "n_trials") cfg.verify.n_trials = it->get<int>();
        else if (k == "n_loo") cfg.verify.n_loo = it->get<int>();
        else if (k == "loo_threshold") cfg.verify.loo_threshold = it->get<double>();
        else throw ArgumentError("unknown verify key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ArgumentError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

std::string Job::tag() const {
  std::ostringstream t;
  t << "K" << dims.K << "_s" << dims.s << "_m" << dims.m << "_kappa"
    << format_double(kappa) << "_sigma" << format_double(sigma) << "_seed" << seed;
  return t.str();
}

std::vector<Job> expand_jobs(const ExperimentConfig& cfg) {
  std::vector<Job> jobs;
  for (const auto& d : cfg.dims)
    for (double k : cfg.kappa)
      for (double s : cfg.sigma)
        for (auto seed : cfg.seeds) jobs.push_back({d, k, s, seed});
  return jobs;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trajectory_csv(const Trajectory& traj,
                           const std::optional<std::string>& error,
                           int error_iter) {
  std::ostringstream out;
  out << kTrajectoryHeader << "\n";
  for (const auto& r : traj)
    out << r.iter << ',' << format_double(r.loss) << ',' << format_double(r.relative_error)
        << ',' << format_double(r.dist) << ',' << format_double(r.inc_a) << ','
        << format_double(r.inc_b) << ',' << format_double(r.max_alignment_ratio())
        << ",\n";
  if (error) {
    std::string msg = *error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << error_iter << ",nan,nan,nan,nan,nan,nan," << msg << "\n";
  }
  return out.str();
}

int worker_count() {
  const char* env = std::getenv("DEMIX_THREADS");
  int n = 0;
  if (env && *env) {
    const std::string text(env);
    auto res = std::from_chars(text.data(), text.data() + text.size(), n);
    if (res.ec != std::errc() || n < 0) n = 0;
  }
  if (n == 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(n, 1);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Blind demixing by Wirtinger flow: instances, runs, sweeps, checks"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment JSON config")->required();
    sub->add_option("--seed", seed, "run only this seed");
    sub->add_option("--out", out_dir, "output directory");
  };
  auto* gen = app.add_subcommand("generate", "write instance files and metadata");
  auto* run_cmd = app.add_subcommand("run", "solver trajectories, one CSV per job");
  auto* sweep = app.add_subcommand("sweep", "like run, plus summary.csv");
  auto* ver = app.add_subcommand("verify", "verification reports (JSON)");
  for (auto* sub : {gen, run_cmd, sweep, ver}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
    if (seed) cfg.seeds = {*seed};
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    cfg.validate();
    if (ver->parsed() && !is_verify(cfg.experiment))
      throw UsageError("verify needs a verify_* experiment, got '" + to_string(cfg.experiment) + "'");
    if ((run_cmd->parsed() || sweep->parsed()) && is_verify(cfg.experiment))
      throw UsageError("experiment '" + to_string(cfg.experiment) + "' belongs to the verify command");
  } catch (const Error& e) {
    std::cerr << "demix: " << e.what() << "\n";
    return 2;
  }

  try {
    std::filesystem::create_directories(cfg.output_dir);
    if (gen->parsed()) return cmd_generate(cfg);
    if (run_cmd->parsed()) return cmd_run(cfg, false);
    if (sweep->parsed()) return cmd_run(cfg, true);
    return cmd_verify(cfg);
  } catch (const UsageError& e) {
    std::cerr << "demix: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "demix: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace demix::cli
