#ifndef UACESD_HARNESS_HPP
#define UACESD_HARNESS_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uacesd/receiver.hpp"
#include "uacesd/txchain.hpp"
#include "uacesd/types.hpp"

namespace uacesd {

struct AlgoConfig {
  int max_iters = 100;
  double tol = 1e-6;
  double epsilon_init = 0.1;
  double nu = 1.0;
  bool nu_em = true;
  Index N_max = 0;  // 0 = auto: ceil(0.3 U) capped at min(M, L) - 1
  double damping = 1.0;
  double variance_floor = 1e-12;
  int warmup_iters = 5;
  double bootstrap_snr = 100.0;
  double g_damping = 0.5;
};

struct Activity {
  std::optional<Index> fixed_n;
  std::optional<double> prob;
};

struct ExperimentConfig {
  int schema_version = 1;
  Index M = 64;
  Index K = 96;
  Index U = 100;
  Index L = 200;
  Activity activity;
  std::vector<double> snr_db_list;
  std::vector<std::string> modes;  // blind-uacesd | blind-cesd | cesd | sd
  bool coding = false;
  int trials = 100;
  uint64_t seed = 1;
  Index paths_per_user = 10;
  int workers = 1;
  AlgoConfig algo;

  void validate() const;
  Index resolved_n_max() const;
};

/// Parses the JSON config document; throws ContractError with a message on
/// schema violations.
ExperimentConfig parse_config_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct MetricsRecord {
  std::string mode;
  double snr_db = 0.0;
  int trials = 0;
  double ber = 0.0;
  double fer = 0.0;
  double aer = 0.0;
  double nmse_h_db = -120.0;
  double lambda_rel_err = 0.0;  // median over trials
  double n_hat_accuracy = 1.0;
  double mean_iterations = 0.0;
  int diverged_count = 0;
};

/// Per-trial metric contributions, aggregated order-insensitively.
struct TrialMetrics {
  double bit_errors = 0.0;
  double bits = 0.0;
  double frame_errors = 0.0;
  double frames = 0.0;
  double missed_users = 0.0;
  double active_users = 0.0;
  double nmse_num = 0.0;
  double nmse_den = 0.0;
  double lambda_rel_err = 0.0;
  bool n_hat_correct = true;
  int iterations = 0;
  bool diverged = false;
};

struct TrialTruth {
  const ChannelRealization* chan = nullptr;
  const Frame* frame = nullptr;
  const NoiseModel* noise = nullptr;
  Index total_users = 0;
  bool coded = false;
};

/// Assignment matching, per-user differential demodulation (plus Viterbi when
/// coded) and the error-rate bookkeeping for one trial.
TrialMetrics compute_metrics(const TrialTruth& truth, const ReceiverOutput& output);

/// Greedy maximum-|correlation| assignment between demodulated bit streams;
/// returns pairs (estimated stream, truth row).
std::vector<std::pair<Index, Index>> match_streams_by_correlation(
    const std::vector<std::vector<uint8_t>>& est, const std::vector<std::vector<uint8_t>>& truth);

MetricsRecord aggregate_metrics(const std::string& mode, double snr_db,
                                std::vector<TrialMetrics> trials);

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  bool majority_divergence = false;  // >50% diverged trials at some SNR point
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// results.csv plus one plot_<metric>.csv per metric (x = SNR, one column per
/// mode). Floats carry 9 significant digits; identical runs emit identical bytes.
void emit_results(const std::vector<MetricsRecord>& records,
                  const std::filesystem::path& out_dir);

std::string results_csv_string(const std::vector<MetricsRecord>& records);

/// Seed derivation shared by all trial workers: substream `purpose` of trial
/// `trial` under the master seed.
Rng trial_rng(uint64_t master_seed, int trial, uint64_t purpose);

}  // namespace uacesd

#endif
