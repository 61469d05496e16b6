#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "uacesd/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo link-level simulator for the blind grant-free receiver"};

  std::string config_path;
  std::string out_dir = "results";
  std::string mode_override;
  std::string snr_override;
  uint64_t seed_override = 0;
  bool seed_given = false;
  int workers_override = 0;

  app.add_option("--config", config_path, "JSON experiment config")->required();
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed_override, "Override the master seed")
      ->each([&](const std::string&) { seed_given = true; });
  app.add_option("--workers", workers_override, "Override the worker count");
  app.add_option("--mode", mode_override,
                 "Override the mode list (blind-uacesd|blind-cesd|cesd|sd)");
  app.add_option("--snr-list", snr_override, "Override SNR points, comma separated (dB)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    uacesd::ExperimentConfig cfg = uacesd::load_config(config_path);
    if (seed_given) cfg.seed = seed_override;
    if (workers_override > 0) cfg.workers = workers_override;
    if (!mode_override.empty()) cfg.modes = {mode_override};
    if (!snr_override.empty()) {
      std::vector<double> snrs;
      std::string tok;
      for (char c : snr_override + ",") {
        if (c == ',' || c == ' ') {
          if (!tok.empty()) {
            snrs.push_back(std::stod(tok));
            tok.clear();
          }
        } else {
          tok += c;
        }
      }
      cfg.snr_db_list = snrs;
    }
    cfg.validate();

    uacesd::ExperimentResult result = uacesd::run_experiment(cfg);
    uacesd::emit_results(result.records, out_dir);
    for (const auto& r : result.records) {
      std::printf("%-14s snr=%5.1f dB  ber=%.3e fer=%.3e aer=%.3e nmse=%7.2f dB  "
                  "lam_err=%.3f  iters=%.1f  div=%d/%d\n",
                  r.mode.c_str(), r.snr_db, r.ber, r.fer, r.aer, r.nmse_h_db,
                  r.lambda_rel_err, r.mean_iterations, r.diverged_count, r.trials);
    }
    if (result.majority_divergence) {
      std::fprintf(stderr, "aborted: more than half the trials diverged at an SNR point\n");
      return 3;
    }
    return 0;
  } catch (const uacesd::ContractError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
