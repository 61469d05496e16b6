#include "uacesd/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace uacesd {

namespace {

enum RngPurpose : uint64_t {
  kActivity = 1,
  kChannel = 2,
  kFrame = 3,
  kNoise = 4,
  kReceiver = 5,
  kPilotFrame = 6,
  kPilotNoise = 7,
};

const char* kCsvHeader =
    "mode,snr_db,trials,ber,fer,aer,nmse_h_db,lambda_rel_err,n_hat_acc,mean_iters,"
    "diverged";

std::string fmt_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

Rng trial_rng(uint64_t master_seed, int trial, uint64_t purpose) {
  return Rng(master_seed).derive(static_cast<uint64_t>(trial) + 1).derive(purpose);
}

void ExperimentConfig::validate() const {
  if (schema_version != 1) throw ContractError("config: unsupported schema_version");
  if (M < 1 || K < 1 || U < 2 || L < 2) throw ContractError("config: bad dimensions");
  if (K <= M) throw ContractError("config: K must exceed M");
  if (paths_per_user < 1 || paths_per_user > K) {
    throw ContractError("config: paths_per_user must be in [1, K]");
  }
  const bool has_fixed = activity.fixed_n.has_value();
  const bool has_prob = activity.prob.has_value();
  if (has_fixed == has_prob) {
    throw ContractError("config: activity needs exactly one of fixed_n or prob");
  }
  if (has_fixed) {
    if (*activity.fixed_n < 1 || *activity.fixed_n > std::min(M, L) ||
        *activity.fixed_n > U) {
      throw ContractError("config: fixed_n must satisfy 1 <= N <= min(M, L) and N <= U");
    }
  } else if (!(*activity.prob > 0.0 && *activity.prob < 1.0)) {
    throw ContractError("config: activity prob must be in (0,1)");
  }
  if (snr_db_list.empty()) throw ContractError("config: snr_db_list is empty");
  if (modes.empty()) throw ContractError("config: no modes given");
  for (const auto& m : modes) {
    if (m != "blind-uacesd" && m != "blind-cesd" && m != "cesd" && m != "sd") {
      throw ContractError("config: unknown mode '" + m + "'");
    }
  }
  if (trials < 1) throw ContractError("config: trials must be >= 1");
  if (workers < 1) throw ContractError("config: workers must be >= 1");
  if (algo.max_iters < 1) throw ContractError("config: algo.max_iters must be >= 1");
  if (!(algo.tol > 0.0)) throw ContractError("config: algo.tol must be > 0");
  if (!(algo.epsilon_init > 0.0 && algo.epsilon_init < 1.0)) {
    throw ContractError("config: algo.epsilon_init must be in (0,1)");
  }
  if (!(algo.nu > 0.0)) throw ContractError("config: algo.nu must be > 0");
  if (!(algo.damping > 0.0 && algo.damping <= 1.0)) {
    throw ContractError("config: algo.damping must be in (0,1]");
  }
  if (!(algo.variance_floor > 0.0)) {
    throw ContractError("config: algo.variance_floor must be > 0");
  }
  if (algo.N_max < 0) throw ContractError("config: algo.N_max must be >= 0");
}

Index ExperimentConfig::resolved_n_max() const {
  Index n = algo.N_max;
  if (n == 0) {
    n = static_cast<Index>(std::ceil(0.3 * static_cast<double>(U)));
  }
  return std::min(n, std::min(M, L) - 1);
}

ExperimentConfig parse_config_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("config: JSON parse failure: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.schema_version = j.value("schema_version", 1);
    cfg.M = j.at("M").get<Index>();
    cfg.K = j.at("K").get<Index>();
    cfg.U = j.at("U").get<Index>();
    cfg.L = j.at("L").get<Index>();
    const auto& act = j.at("activity");
    if (act.is_number()) {
      cfg.activity.fixed_n = act.get<Index>();
    } else {
      if (act.contains("fixed_n")) cfg.activity.fixed_n = act["fixed_n"].get<Index>();
      if (act.contains("prob")) cfg.activity.prob = act["prob"].get<double>();
    }
    cfg.snr_db_list = j.at("snr_db_list").get<std::vector<double>>();
    if (j.contains("modes")) {
      cfg.modes = j["modes"].get<std::vector<std::string>>();
    } else if (j.contains("mode")) {
      cfg.modes = {j["mode"].get<std::string>()};
    }
    cfg.coding = j.value("coding", false);
    cfg.trials = j.value("trials", 100);
    cfg.seed = j.value("seed", uint64_t{1});
    cfg.paths_per_user = j.value("paths_per_user", Index{10});
    cfg.workers = j.value("workers", 1);
    if (j.contains("algo")) {
      const auto& a = j["algo"];
      cfg.algo.max_iters = a.value("max_iters", cfg.algo.max_iters);
      cfg.algo.tol = a.value("tol", cfg.algo.tol);
      cfg.algo.epsilon_init = a.value("epsilon_init", cfg.algo.epsilon_init);
      cfg.algo.nu = a.value("nu", cfg.algo.nu);
      cfg.algo.nu_em = a.value("nu_em", cfg.algo.nu_em);
      cfg.algo.N_max = a.value("N_max", cfg.algo.N_max);
      cfg.algo.damping = a.value("damping", cfg.algo.damping);
      cfg.algo.variance_floor = a.value("variance_floor", cfg.algo.variance_floor);
      cfg.algo.warmup_iters = a.value("warmup_iters", cfg.algo.warmup_iters);
      cfg.algo.bootstrap_snr = a.value("bootstrap_snr", cfg.algo.bootstrap_snr);
      cfg.algo.g_damping = a.value("g_damping", cfg.algo.g_damping);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str());
}

std::vector<std::pair<Index, Index>> match_streams_by_correlation(
    const std::vector<std::vector<uint8_t>>& est,
    const std::vector<std::vector<uint8_t>>& truth) {
  const Index ne = static_cast<Index>(est.size());
  const Index nt = static_cast<Index>(truth.size());
  RealMatrix corr = RealMatrix::Constant(std::max<Index>(ne, 1),
                                         std::max<Index>(nt, 1), -1.0);
  for (Index i = 0; i < ne; ++i) {
    for (Index n = 0; n < nt; ++n) {
      const size_t len = std::min(est[i].size(), truth[n].size());
      if (len == 0) continue;
      double acc = 0.0;
      for (size_t b = 0; b < len; ++b) {
        acc += (est[i][b] == truth[n][b]) ? 1.0 : -1.0;
      }
      corr(i, n) = std::abs(acc) / static_cast<double>(len);
    }
  }
  std::vector<std::pair<Index, Index>> pairs;
  std::vector<bool> used_e(ne, false), used_t(nt, false);
  const Index rounds = std::min(ne, nt);
  for (Index r = 0; r < rounds; ++r) {
    double best = -2.0;
    Index bi = -1, bn = -1;
    for (Index i = 0; i < ne; ++i) {
      if (used_e[i]) continue;
      for (Index n = 0; n < nt; ++n) {
        if (used_t[n]) continue;
        if (corr(i, n) > best) {
          best = corr(i, n);
          bi = i;
          bn = n;
        }
      }
    }
    if (bi < 0) break;
    used_e[bi] = true;
    used_t[bn] = true;
    pairs.emplace_back(bi, bn);
  }
  return pairs;
}

namespace {

// Hard per-symbol decisions from the posterior stack, as alphabet indices.
std::vector<int> hard_symbol_indices(const std::vector<RealMatrix>& beta, Index row) {
  const Index L = beta.empty() ? 0 : beta[0].cols();
  std::vector<int> idx(static_cast<size_t>(L), 0);
  for (Index l = 0; l < L; ++l) {
    double best = -1.0;
    for (size_t a = 0; a < beta.size(); ++a) {
      if (beta[a](row, l) > best) {
        best = beta[a](row, l);
        idx[static_cast<size_t>(l)] = static_cast<int>(a);
      }
    }
  }
  return idx;
}

// Differential demodulation straight from alphabet indices (alphabet is
// {j^0, j^1, j^2, j^3}, so the increment is an index difference mod 4).
std::vector<uint8_t> demod_bits_from_indices(const std::vector<int>& idx) {
  std::vector<uint8_t> bits;
  if (idx.size() < 2) return bits;
  bits.reserve(2 * (idx.size() - 1));
  for (size_t l = 1; l < idx.size(); ++l) {
    int k = (idx[l] - idx[l - 1] + 4) & 3;
    uint8_t b0, b1;
    gray_increment_to_pair(k, b0, b1);
    bits.push_back(b0);
    bits.push_back(b1);
  }
  return bits;
}

std::vector<std::array<double, 4>> posterior_rows(const std::vector<RealMatrix>& beta,
                                                  Index row) {
  const Index L = beta.empty() ? 0 : beta[0].cols();
  std::vector<std::array<double, 4>> out(static_cast<size_t>(L));
  for (Index l = 0; l < L; ++l) {
    for (size_t a = 0; a < 4 && a < beta.size(); ++a) {
      out[static_cast<size_t>(l)][a] = beta[a](row, l);
    }
  }
  return out;
}

double phase_aligned_column_error(const ComplexVector& h_hat, const ComplexVector& h) {
  // min over unit-modulus phi of |h_hat*phi - h|^2
  double e = h_hat.squaredNorm() + h.squaredNorm() - 2.0 * std::abs(h_hat.dot(h));
  return std::max(e, 0.0);
}

}  // namespace

TrialMetrics compute_metrics(const TrialTruth& truth, const ReceiverOutput& output) {
  const ChannelRealization& chan = *truth.chan;
  const Frame& frame = *truth.frame;
  const Index N = static_cast<Index>(chan.active_users.size());
  const Index id_bits = user_id_bits(truth.total_users);
  const Index Nh = output.N_hat;

  TrialMetrics m;
  m.active_users = static_cast<double>(N);
  m.frames = static_cast<double>(N);
  m.iterations = output.iterations;
  m.diverged = output.diverged;
  m.n_hat_correct = (output.N_hat == N);
  if (truth.noise->sigma2 > 0.0 && output.lambda_hat > 0.0) {
    double sigma2_hat = 1.0 / output.lambda_hat;
    m.lambda_rel_err = std::abs(sigma2_hat - truth.noise->sigma2) / truth.noise->sigma2;
  }

  // matched[n] = estimated stream assigned to truth row n, -1 when missed.
  std::vector<Index> matched(static_cast<size_t>(N), -1);
  std::vector<std::vector<uint8_t>> est_info(static_cast<size_t>(Nh));

  if (!truth.coded) {
    for (Index i = 0; i < Nh; ++i) {
      est_info[static_cast<size_t>(i)] =
          demod_bits_from_indices(hard_symbol_indices(output.symbol_posteriors, i));
    }
    auto pairs = match_streams_by_correlation(est_info, frame.info_bits);
    for (const auto& [i, n] : pairs) matched[static_cast<size_t>(n)] = i;
  } else {
    for (Index i = 0; i < Nh; ++i) {
      auto llrs = dqpsk_soft_llrs(posterior_rows(output.symbol_posteriors, i));
      est_info[static_cast<size_t>(i)] = viterbi_decode(llrs);
    }
    for (Index n = 0; n < N; ++n) {
      const Index uid = chan.active_users[static_cast<size_t>(n)];
      for (Index i = 0; i < Nh; ++i) {
        Index decoded_id = 0;
        const auto& bits = est_info[static_cast<size_t>(i)];
        if (static_cast<Index>(bits.size()) < id_bits) continue;
        for (Index b = 0; b < id_bits; ++b) {
          decoded_id = (decoded_id << 1) | bits[static_cast<size_t>(b)];
        }
        if (decoded_id == uid) {
          matched[static_cast<size_t>(n)] = i;
          break;
        }
      }
    }
    // A stream may identify at most one user.
    std::vector<bool> taken(static_cast<size_t>(Nh), false);
    for (Index n = 0; n < N; ++n) {
      Index i = matched[static_cast<size_t>(n)];
      if (i < 0) continue;
      if (taken[static_cast<size_t>(i)]) {
        matched[static_cast<size_t>(n)] = -1;
      } else {
        taken[static_cast<size_t>(i)] = true;
      }
    }
  }

  for (Index n = 0; n < N; ++n) {
    const auto& info = frame.info_bits[static_cast<size_t>(n)];
    const Index i = matched[static_cast<size_t>(n)];
    if (i < 0) {
      m.missed_users += 1.0;
      m.frame_errors += 1.0;
      continue;
    }
    const auto& est = est_info[static_cast<size_t>(i)];
    const size_t len = std::min(est.size(), info.size());
    size_t total_errs = 0;
    size_t payload_errs = 0;
    for (size_t b = 0; b < len; ++b) {
      if (est[b] != info[b]) {
        ++total_errs;
        if (b >= static_cast<size_t>(id_bits)) ++payload_errs;
      }
    }
    const size_t payload_len = len > static_cast<size_t>(id_bits)
                                   ? len - static_cast<size_t>(id_bits)
                                   : 0;
    m.bit_errors += static_cast<double>(payload_errs);
    m.bits += static_cast<double>(payload_len);
    const bool frame_err = truth.coded ? (payload_errs > 0) : (total_errs > 0);
    if (frame_err) m.frame_errors += 1.0;
  }

  // NMSE after column assignment and per-column phase alignment.
  m.nmse_den = chan.H.squaredNorm();
  for (Index n = 0; n < N; ++n) {
    const Index i = matched[static_cast<size_t>(n)];
    if (i < 0 || i >= output.H_hat.cols()) {
      m.nmse_num += chan.H.col(n).squaredNorm();
    } else {
      m.nmse_num += phase_aligned_column_error(output.H_hat.col(i), chan.H.col(n));
    }
  }
  return m;
}

MetricsRecord aggregate_metrics(const std::string& mode, double snr_db,
                                std::vector<TrialMetrics> trials) {
  MetricsRecord r;
  r.mode = mode;
  r.snr_db = snr_db;
  r.trials = static_cast<int>(trials.size());
  double bits = 0, bit_errors = 0, frames = 0, frame_errors = 0;
  double active = 0, missed = 0, nmse_num = 0, nmse_den = 0, iters = 0;
  double n_correct = 0;
  std::vector<double> lambda_errs;
  lambda_errs.reserve(trials.size());
  for (const auto& t : trials) {
    bits += t.bits;
    bit_errors += t.bit_errors;
    frames += t.frames;
    frame_errors += t.frame_errors;
    active += t.active_users;
    missed += t.missed_users;
    nmse_num += t.nmse_num;
    nmse_den += t.nmse_den;
    iters += t.iterations;
    n_correct += t.n_hat_correct ? 1.0 : 0.0;
    lambda_errs.push_back(t.lambda_rel_err);
    r.diverged_count += t.diverged ? 1 : 0;
  }
  r.ber = bits > 0 ? bit_errors / bits : 0.0;
  r.fer = frames > 0 ? frame_errors / frames : 0.0;
  r.aer = active > 0 ? missed / active : 0.0;
  double nmse = (nmse_den > 0 && nmse_num > 0) ? nmse_num / nmse_den : 0.0;
  r.nmse_h_db = nmse > 0 ? std::max(10.0 * std::log10(nmse), -120.0) : -120.0;
  std::sort(lambda_errs.begin(), lambda_errs.end());
  if (!lambda_errs.empty()) {
    size_t mid = lambda_errs.size() / 2;
    r.lambda_rel_err = lambda_errs.size() % 2 == 1
                           ? lambda_errs[mid]
                           : 0.5 * (lambda_errs[mid - 1] + lambda_errs[mid]);
  }
  r.n_hat_accuracy = trials.empty() ? 1.0 : n_correct / static_cast<double>(trials.size());
  r.mean_iterations = trials.empty() ? 0.0 : iters / static_cast<double>(trials.size());
  return r;
}

namespace {

struct TrialContext {
  const ExperimentConfig* cfg;
  const BeamspaceOperator* op;
  std::string mode;
  double snr_db;
};

TrialMetrics run_one_trial(const TrialContext& ctx, int trial) {
  const ExperimentConfig& cfg = *ctx.cfg;

  Index n_active;
  if (cfg.activity.fixed_n) {
    n_active = *cfg.activity.fixed_n;
  } else {
    Rng rng_act = trial_rng(cfg.seed, trial, kActivity);
    Index n = 0;
    for (Index u = 0; u < cfg.U; ++u) {
      if (rng_act.uniform() < *cfg.activity.prob) ++n;
    }
    n_active = std::clamp<Index>(n, 1, std::min(cfg.M, cfg.L));
  }

  ChannelConfig ccfg;
  ccfg.M = cfg.M;
  ccfg.K = cfg.K;
  ccfg.U = cfg.U;
  ccfg.n_active = n_active;
  ccfg.paths_per_user = cfg.paths_per_user;
  Rng rng_chan = trial_rng(cfg.seed, trial, kChannel);
  ChannelRealization chan = gen_channel(ccfg, rng_chan);

  Rng rng_frame = trial_rng(cfg.seed, trial, kFrame);
  Frame frame = gen_frame(chan.active_users, cfg.L, cfg.coding, cfg.U, rng_frame);

  ComplexMatrix HX = chan.H * frame.X;
  NoiseModel noise = make_noise_model(HX, ctx.snr_db, n_active);
  Rng rng_noise = trial_rng(cfg.seed, trial, kNoise);
  ComplexMatrix Y = apply_awgn(HX, noise, rng_noise);

  ReceiverOptions ropts;
  ropts.max_iters = cfg.algo.max_iters;
  ropts.tol = cfg.algo.tol;
  ropts.epsilon_init = cfg.algo.epsilon_init;
  ropts.nu_init = cfg.algo.nu;
  ropts.nu_em = cfg.algo.nu_em;
  ropts.N_max = cfg.resolved_n_max();
  ropts.damping = cfg.algo.damping;
  ropts.variance_floor = cfg.algo.variance_floor;
  ropts.warmup_iters = cfg.algo.warmup_iters;
  ropts.bootstrap_snr = cfg.algo.bootstrap_snr;
  ropts.g_damping = cfg.algo.g_damping;

  DiscreteAlphabetPrior alphabet = DiscreteAlphabetPrior::qpsk();
  BernoulliGaussianPrior bg{cfg.algo.epsilon_init, cfg.algo.nu};
  Rng rng_rx = trial_rng(cfg.seed, trial, kReceiver);

  ReceiverOutput out;
  if (ctx.mode == "blind-uacesd") {
    out = run_blind_uacesd(Y, *ctx.op, alphabet, bg, ropts, rng_rx);
  } else if (ctx.mode == "blind-cesd") {
    GenieData genie;
    genie.N = n_active;
    out = run_baseline(Y, BaselineMode::blind_cesd, genie, *ctx.op, alphabet, bg, ropts,
                       rng_rx);
  } else if (ctx.mode == "cesd") {
    Rng rng_pframe = trial_rng(cfg.seed, trial, kPilotFrame);
    Frame pilot = gen_frame(chan.active_users, cfg.L, false, cfg.U, rng_pframe);
    ComplexMatrix HXp = chan.H * pilot.X;
    Rng rng_pnoise = trial_rng(cfg.seed, trial, kPilotNoise);
    NoiseModel pnoise = noise;  // same sigma2 on the pilot frame
    ComplexMatrix Yp = apply_awgn(HXp, pnoise, rng_pnoise);
    GenieData genie;
    genie.N = n_active;
    genie.X_pilot = pilot.X;
    genie.Y_pilot = Yp;
    out = run_baseline(Y, BaselineMode::cesd, genie, *ctx.op, alphabet, bg, ropts, rng_rx);
  } else if (ctx.mode == "sd") {
    GenieData genie;
    genie.N = n_active;
    genie.H = chan.H;
    out = run_baseline(Y, BaselineMode::sd, genie, *ctx.op, alphabet, bg, ropts, rng_rx);
  } else {
    throw ContractError("run_experiment: unknown mode '" + ctx.mode + "'");
  }

  TrialTruth truth;
  truth.chan = &chan;
  truth.frame = &frame;
  truth.noise = &noise;
  truth.total_users = cfg.U;
  truth.coded = cfg.coding;
  return compute_metrics(truth, out);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ComplexMatrix F = partial_dft(cfg.M, cfg.K);
  BeamspaceOperator op = make_beamspace_operator(F);

  ExperimentResult result;
  for (const auto& mode : cfg.modes) {
    for (double snr : cfg.snr_db_list) {
      TrialContext ctx{&cfg, &op, mode, snr};
      std::vector<TrialMetrics> tm(static_cast<size_t>(cfg.trials));
      std::atomic<int> next{0};
      auto worker = [&]() {
        for (;;) {
          int t = next.fetch_add(1);
          if (t >= cfg.trials) break;
          tm[static_cast<size_t>(t)] = run_one_trial(ctx, t);
        }
      };
      if (cfg.workers <= 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
      }
      MetricsRecord rec = aggregate_metrics(mode, snr, tm);
      result.records.push_back(rec);
      if (rec.diverged_count * 2 > rec.trials) {
        result.majority_divergence = true;
        return result;
      }
    }
  }
  return result;
}

std::string results_csv_string(const std::vector<MetricsRecord>& records) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += r.mode;
    out += ',';
    out += fmt_g9(r.snr_db);
    out += ',';
    out += std::to_string(r.trials);
    out += ',';
    out += fmt_g9(r.ber);
    out += ',';
    out += fmt_g9(r.fer);
    out += ',';
    out += fmt_g9(r.aer);
    out += ',';
    out += fmt_g9(r.nmse_h_db);
    out += ',';
    out += fmt_g9(r.lambda_rel_err);
    out += ',';
    out += fmt_g9(r.n_hat_accuracy);
    out += ',';
    out += fmt_g9(r.mean_iterations);
    out += ',';
    out += std::to_string(r.diverged_count);
    out += '\n';
  }
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("emit_results: cannot open " + path.string());
  f << content;
  if (!f) throw std::runtime_error("emit_results: write failed for " + path.string());
}

}  // namespace

void emit_results(const std::vector<MetricsRecord>& records,
                  const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw std::runtime_error("emit_results: cannot create " + out_dir.string() + ": " +
                             ec.message());
  }
  write_file(out_dir / "results.csv", results_csv_string(records));

  std::vector<std::string> modes;
  std::vector<double> snrs;
  for (const auto& r : records) {
    if (std::find(modes.begin(), modes.end(), r.mode) == modes.end()) {
      modes.push_back(r.mode);
    }
    if (std::find(snrs.begin(), snrs.end(), r.snr_db) == snrs.end()) {
      snrs.push_back(r.snr_db);
    }
  }
  auto lookup = [&](const std::string& mode, double snr) -> const MetricsRecord* {
    for (const auto& r : records) {
      if (r.mode == mode && r.snr_db == snr) return &r;
    }
    return nullptr;
  };

  struct MetricColumn {
    const char* name;
    double MetricsRecord::*field;
  };
  const MetricColumn columns[] = {
      {"ber", &MetricsRecord::ber},
      {"fer", &MetricsRecord::fer},
      {"aer", &MetricsRecord::aer},
      {"nmse_h_db", &MetricsRecord::nmse_h_db},
      {"lambda_rel_err", &MetricsRecord::lambda_rel_err},
  };
  for (const auto& col : columns) {
    std::string text = "snr_db";
    for (const auto& m : modes) {
      text += ',';
      text += m;
    }
    text += '\n';
    for (double snr : snrs) {
      text += fmt_g9(snr);
      for (const auto& m : modes) {
        text += ',';
        const MetricsRecord* r = lookup(m, snr);
        text += r ? fmt_g9(r->*(col.field)) : "";
      }
      text += '\n';
    }
    write_file(out_dir / (std::string("plot_") + col.name + ".csv"), text);
  }
}

}  // namespace uacesd
