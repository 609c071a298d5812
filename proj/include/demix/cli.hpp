#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "demix/solver.hpp"
#include "demix/verify.hpp"

namespace demix::cli {

inline constexpr int kConfigSchemaVersion = 1;

enum class Experiment {
  kConvergence,
  kConditionNumber,
  kNoiseSweep,
  kIncoherence,
  kVerifyRsc,
  kVerifyLoo,
  kVerifySpectral,
};

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& name);  // throws ArgumentError
bool is_verify(Experiment e);

struct VerifyParams {
  int n_points = 50;
  int n_dirs = 20;
  double delta = 0.05;
  int n_trials = 200;
  int n_loo = 8;
  double loo_threshold = 0.1;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::kConvergence;
  std::vector<Dimensions> dims;  // one entry, or a sweep list
  double eta = 0.1;
  std::vector<double> kappa{1.0};
  std::vector<double> sigma{0.0};
  int max_iters = 500;
  double stop_tol = 0.0;
  int record_every = 1;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = "out";
  std::optional<std::filesystem::path> instance;  // load instead of generate
  VerifyParams verify;

  // Throws ArgumentError / DimensionError.
  void validate() const;
};

// Parses and validates. Unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Job {
  Dimensions dims;
  double kappa = 1.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  // File stem, e.g. "K50_s10_m2500_kappa1_sigma0_seed1".
  std::string tag() const;
};

// Cartesian product dims x kappa x sigma x seeds, in that nesting order.
std::vector<Job> expand_jobs(const ExperimentConfig& cfg);

inline constexpr const char* kTrajectoryHeader =
    "iter,loss,relative_error,dist,inc_a,inc_b,max_alignment_ratio,errors";
inline constexpr const char* kSummaryHeader =
    "job,K,s,m,kappa,sigma,seed,snr_db,iters,final_loss,final_relative_error,"
    "status";

// Shortest decimal text that reads back to the same double ("nan", "inf").
std::string format_double(double v);

std::string trajectory_csv(const Trajectory& traj,
                           const std::optional<std::string>& error = {},
                           int error_iter = -1);

// Worker count from DEMIX_THREADS (unset or 0 = hardware concurrency).
int worker_count();

// Entry point: demix generate|run|sweep|verify --config <file> [--seed N]
// [--out DIR]. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace demix::cli
