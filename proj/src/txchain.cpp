#include "uacesd/txchain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace uacesd {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// QPSK point j^k, exact in floating point.
cdouble qpsk_point(int k) {
  switch (k & 3) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

int nearest_increment(cdouble w) {
  int best = 0;
  double best_metric = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 4; ++k) {
    double metric = (w * std::conj(qpsk_point(k))).real();
    if (metric > best_metric) {
      best_metric = metric;
      best = k;
    }
  }
  return best;
}

}  // namespace

ComplexVector steering_vector(double theta_norm, Index M) {
  if (M < 1) throw ContractError("steering_vector: M must be >= 1");
  ComplexVector a(M);
  for (Index m = 0; m < M; ++m) {
    double phase = -kTwoPi * theta_norm * static_cast<double>(m);
    a(m) = cdouble(std::cos(phase), std::sin(phase));
  }
  return a;
}

ComplexMatrix partial_dft(Index M, Index K) {
  if (K <= M) throw ContractError("partial_dft: K must exceed M");
  ComplexMatrix F(M, K);
  const double scale = 1.0 / std::sqrt(static_cast<double>(K));
  for (Index k = 0; k < K; ++k) {
    for (Index m = 0; m < M; ++m) {
      double phase = -kTwoPi * static_cast<double>(m) * static_cast<double>(k) /
                     static_cast<double>(K);
      F(m, k) = scale * cdouble(std::cos(phase), std::sin(phase));
    }
  }
  return F;
}

ChannelRealization gen_channel(const ChannelConfig& cfg, Rng& rng) {
  if (cfg.K <= cfg.M) throw ContractError("gen_channel: K must exceed M");
  if (cfg.paths_per_user < 1 || cfg.paths_per_user > cfg.K) {
    throw ContractError("gen_channel: paths_per_user must be in [1, K]");
  }
  if (cfg.n_active < 1 || cfg.n_active > cfg.U) {
    throw ContractError("gen_channel: n_active must be in [1, U]");
  }

  ChannelRealization ch;
  ch.F = partial_dft(cfg.M, cfg.K);

  // Active-user subset: partial Fisher-Yates over the user indices.
  std::vector<Index> users(cfg.U);
  std::iota(users.begin(), users.end(), Index{0});
  for (Index i = 0; i < cfg.n_active; ++i) {
    Index j = i + static_cast<Index>(rng.next_u64() % static_cast<uint64_t>(cfg.U - i));
    std::swap(users[i], users[j]);
  }
  ch.active_users.assign(users.begin(), users.begin() + cfg.n_active);
  std::sort(ch.active_users.begin(), ch.active_users.end());

  ch.G = ComplexMatrix::Zero(cfg.K, cfg.n_active);
  ch.paths.resize(cfg.n_active);
  std::vector<Index> grid(cfg.K);
  for (Index n = 0; n < cfg.n_active; ++n) {
    std::iota(grid.begin(), grid.end(), Index{0});
    for (Index p = 0; p < cfg.paths_per_user; ++p) {
      Index j = p + static_cast<Index>(rng.next_u64() % static_cast<uint64_t>(cfg.K - p));
      std::swap(grid[p], grid[j]);
    }
    for (Index p = 0; p < cfg.paths_per_user; ++p) {
      ChannelPath path;
      path.gain = rng.complex_gaussian(0.0, 1.0);
      if (cfg.on_grid) {
        path.grid_index = grid[p];
        path.theta_norm = static_cast<double>(grid[p]) / static_cast<double>(cfg.K);
        ch.G(path.grid_index, n) += path.gain;
      } else {
        path.grid_index = -1;
        path.theta_norm = rng.uniform();
      }
      ch.paths[n].push_back(path);
    }
  }

  if (cfg.on_grid) {
    ch.H = ch.F * ch.G;
  } else {
    ch.H = ComplexMatrix::Zero(cfg.M, cfg.n_active);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.K));
    for (Index n = 0; n < cfg.n_active; ++n) {
      for (const auto& path : ch.paths[n]) {
        ch.H.col(n) += path.gain * scale * steering_vector(path.theta_norm, cfg.M);
      }
    }
    ch.G = ch.F.adjoint() * ch.H;  // minimum-norm coefficients, F F^H = I
  }

  // Column scaling to average entry energy 1; G scales with H so H = F G holds.
  for (Index n = 0; n < cfg.n_active; ++n) {
    double e = ch.H.col(n).squaredNorm();
    if (!(e > 0.0)) throw ContractError("gen_channel: zero-energy channel column");
    double c = std::sqrt(static_cast<double>(cfg.M) / e);
    ch.H.col(n) *= c;
    ch.G.col(n) *= c;
    for (auto& path : ch.paths[n]) path.gain *= c;
  }
  return ch;
}

std::vector<uint8_t> conv_encode(const std::vector<uint8_t>& bits, bool terminate) {
  if (bits.empty()) throw ContractError("conv_encode: empty input");
  std::vector<uint8_t> out;
  out.reserve(2 * (bits.size() + (terminate ? 2 : 0)));
  uint8_t d1 = 0, d2 = 0;
  auto push = [&](uint8_t u) {
    out.push_back(static_cast<uint8_t>(u ^ d2));       // 1 + D^2
    out.push_back(static_cast<uint8_t>(u ^ d1 ^ d2));  // 1 + D + D^2
    d2 = d1;
    d1 = u;
  };
  for (uint8_t b : bits) push(b & 1u);
  if (terminate) {
    push(0);
    push(0);
  }
  return out;
}

namespace {

std::vector<uint8_t> viterbi_core(const std::vector<double>& llrs) {
  if (llrs.size() % 2 != 0) throw ContractError("viterbi_decode: odd input length");
  const size_t steps = llrs.size() / 2;
  if (steps < 3) throw ContractError("viterbi_decode: need at least 3 coded pairs");

  // state = (d1<<1)|d2; input u: outputs (u^d2, u^d1^d2), next (u<<1)|d1.
  constexpr int kStates = 4;
  std::array<double, kStates> metric;
  metric.fill(std::numeric_limits<double>::infinity());
  metric[0] = 0.0;
  std::vector<std::array<uint8_t, kStates>> prev_state(steps);
  std::vector<std::array<uint8_t, kStates>> prev_bit(steps);

  for (size_t t = 0; t < steps; ++t) {
    const double l0 = llrs[2 * t];
    const double l1 = llrs[2 * t + 1];
    std::array<double, kStates> next;
    next.fill(std::numeric_limits<double>::infinity());
    for (int s = 0; s < kStates; ++s) {
      if (!std::isfinite(metric[s])) continue;
      int d1 = (s >> 1) & 1, d2 = s & 1;
      for (int u = 0; u <= 1; ++u) {
        int c0 = u ^ d2;
        int c1 = u ^ d1 ^ d2;
        // Path cost contribution c*llr: minimizing it is ML for
        // llr = log(P(0)/P(1)).
        double m = metric[s] + (c0 ? l0 : 0.0) + (c1 ? l1 : 0.0);
        int ns = (u << 1) | d1;
        if (m < next[ns]) {
          next[ns] = m;
          prev_state[t][ns] = static_cast<uint8_t>(s);
          prev_bit[t][ns] = static_cast<uint8_t>(u);
        }
      }
    }
    metric = next;
  }

  // Terminated trellis: trace back from state 0.
  std::vector<uint8_t> decoded(steps);
  int s = 0;
  for (size_t t = steps; t-- > 0;) {
    decoded[t] = prev_bit[t][s];
    s = prev_state[t][s];
  }
  decoded.resize(steps - 2);  // strip tail
  return decoded;
}

}  // namespace

std::vector<uint8_t> viterbi_decode(const std::vector<uint8_t>& coded) {
  std::vector<double> llrs(coded.size());
  for (size_t i = 0; i < coded.size(); ++i) llrs[i] = (coded[i] & 1u) ? -1.0 : 1.0;
  return viterbi_core(llrs);
}

std::vector<uint8_t> viterbi_decode(const std::vector<double>& llrs) {
  return viterbi_core(llrs);
}

int gray_pair_to_increment(uint8_t b0, uint8_t b1) {
  static constexpr int map[4] = {0, 1, 3, 2};  // (b0<<1)|b1 -> k
  return map[((b0 & 1u) << 1) | (b1 & 1u)];
}

void gray_increment_to_pair(int k, uint8_t& b0, uint8_t& b1) {
  static constexpr uint8_t demap[4][2] = {{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  b0 = demap[k & 3][0];
  b1 = demap[k & 3][1];
}

ComplexVector dqpsk_modulate(const std::vector<uint8_t>& bits, cdouble reference) {
  if (bits.size() % 2 != 0) throw ContractError("dqpsk_modulate: odd bit count");
  const Index L = static_cast<Index>(bits.size() / 2) + 1;
  ComplexVector x(L);
  x(0) = reference;
  for (Index l = 1; l < L; ++l) {
    int k = gray_pair_to_increment(bits[2 * (l - 1)], bits[2 * (l - 1) + 1]);
    x(l) = x(l - 1) * qpsk_point(k);
  }
  return x;
}

std::vector<uint8_t> dqpsk_demodulate(const ComplexVector& symbols) {
  if (symbols.size() < 2) throw ContractError("dqpsk_demodulate: need >= 2 symbols");
  std::vector<uint8_t> bits;
  bits.reserve(2 * (symbols.size() - 1));
  for (Index l = 1; l < symbols.size(); ++l) {
    int k = nearest_increment(symbols(l) * std::conj(symbols(l - 1)));
    uint8_t b0, b1;
    gray_increment_to_pair(k, b0, b1);
    bits.push_back(b0);
    bits.push_back(b1);
  }
  return bits;
}

std::vector<double> dqpsk_soft_llrs(const std::vector<std::array<double, 4>>& beta) {
  if (beta.size() < 2) throw ContractError("dqpsk_soft_llrs: need >= 2 symbols");
  constexpr double kEps = 1e-300;
  std::vector<double> llrs;
  llrs.reserve(2 * (beta.size() - 1));
  for (size_t l = 1; l < beta.size(); ++l) {
    // P(d = j^k) = sum_a beta_l[a] * beta_{l-1}[(a-k) mod 4].
    std::array<double, 4> pd{};
    for (int k = 0; k < 4; ++k) {
      for (int a = 0; a < 4; ++a) {
        pd[k] += beta[l][a] * beta[l - 1][(a - k + 4) & 3];
      }
    }
    uint8_t b0, b1;
    std::array<double, 2> p0{}, p1{};  // per bit position: P(bit=0), P(bit=1)
    for (int k = 0; k < 4; ++k) {
      gray_increment_to_pair(k, b0, b1);
      (b0 ? p1[0] : p0[0]) += pd[k];
      (b1 ? p1[1] : p0[1]) += pd[k];
    }
    llrs.push_back(std::log((p0[0] + kEps) / (p1[0] + kEps)));
    llrs.push_back(std::log((p0[1] + kEps) / (p1[1] + kEps)));
  }
  return llrs;
}

NoiseModel make_noise_model(const ComplexMatrix& HX, double snr_db, Index n_active) {
  if (n_active < 1) throw ContractError("make_noise_model: n_active must be >= 1");
  NoiseModel noise;
  noise.snr_db = snr_db;
  double signal_power = HX.squaredNorm() /
                        (static_cast<double>(HX.rows()) * static_cast<double>(n_active) *
                         static_cast<double>(HX.cols()));
  if (std::isinf(snr_db)) {
    noise.sigma2 = 0.0;
    noise.lambda_true = std::numeric_limits<double>::infinity();
    return noise;
  }
  noise.sigma2 = signal_power / std::pow(10.0, snr_db / 10.0);
  noise.lambda_true = 1.0 / noise.sigma2;
  return noise;
}

ComplexMatrix apply_awgn(const ComplexMatrix& HX, const NoiseModel& noise, Rng& rng) {
  if (noise.sigma2 == 0.0) return HX;
  return HX + sample_complex_gaussian(HX.rows(), HX.cols(), 0.0, noise.sigma2, rng);
}

Index user_id_bits(Index total_users) {
  Index bits = 1;
  while ((Index{1} << bits) < total_users) ++bits;
  return bits;
}

Frame gen_frame(const std::vector<Index>& active_users, Index L, bool coding,
                Index total_users, Rng& rng) {
  if (active_users.empty()) throw ContractError("gen_frame: no active users");
  if (L < 2) throw ContractError("gen_frame: frame length must be >= 2");
  const Index id_bits = user_id_bits(total_users);
  const Index n_info = coding ? (L - 3) : 2 * (L - 1);
  if (n_info < id_bits) {
    throw ContractError("gen_frame: frame too short for the user-ID field");
  }

  Frame frame;
  const Index N = static_cast<Index>(active_users.size());
  frame.X.resize(N, L);
  for (Index n = 0; n < N; ++n) {
    std::vector<uint8_t> info(static_cast<size_t>(n_info));
    for (Index b = 0; b < id_bits; ++b) {
      info[b] = static_cast<uint8_t>((active_users[n] >> (id_bits - 1 - b)) & 1);
    }
    for (Index b = id_bits; b < n_info; ++b) {
      info[b] = static_cast<uint8_t>(rng.next_u64() & 1u);
    }
    const cdouble ref(1.0, 0.0);
    ComplexVector row;
    if (coding) {
      std::vector<uint8_t> coded = conv_encode(info, true);
      frame.coded_bits.push_back(coded);
      row = dqpsk_modulate(coded, ref);
    } else {
      row = dqpsk_modulate(info, ref);
    }
    frame.info_bits.push_back(std::move(info));
    frame.reference_symbol.push_back(ref);
    frame.X.row(n) = row.transpose();
  }
  return frame;
}

}  // namespace uacesd
