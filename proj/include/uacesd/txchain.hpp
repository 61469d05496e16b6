#ifndef UACESD_TXCHAIN_HPP
#define UACESD_TXCHAIN_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "uacesd/linalg.hpp"
#include "uacesd/types.hpp"

namespace uacesd {

/// Uniform-linear-array steering vector, entry m = exp(-j 2 pi theta m).
ComplexVector steering_vector(double theta_norm, Index M);

/// First M rows of the K-point DFT matrix scaled by 1/sqrt(K), so F F^H = I_M.
ComplexMatrix partial_dft(Index M, Index K);

struct ChannelPath {
  Index grid_index;   // beamspace grid bin (on-grid model)
  double theta_norm;  // spatial angle in [0,1)
  cdouble gain;
};

struct ChannelRealization {
  ComplexMatrix F;  // M×K
  ComplexMatrix G;  // K×N, sparse columns (on-grid model)
  ComplexMatrix H;  // M×N = F G, columns scaled to average entry energy 1
  std::vector<Index> active_users;
  std::vector<std::vector<ChannelPath>> paths;  // per active user
};

struct ChannelConfig {
  Index M = 64;
  Index K = 96;
  Index U = 100;           // total users in the cell
  Index n_active = 8;      // number of active users this frame
  Index paths_per_user = 10;
  bool on_grid = true;     // off-grid: uniform angles, G = F^H H only approx sparse
};

ChannelRealization gen_channel(const ChannelConfig& cfg, Rng& rng);

/// Rate-1/2 convolutional encoder, generators 1+D^2 and 1+D+D^2 (octal 5,7),
/// zero state start, optionally terminated with two tail zeros. Output is
/// interleaved (g0 bit, g1 bit) per input bit.
std::vector<uint8_t> conv_encode(const std::vector<uint8_t>& bits, bool terminate = true);

/// Viterbi decoding over the terminated 4-state trellis. Hard input uses the
/// Hamming metric; soft input takes per-bit LLRs log(P(c=0)/P(c=1)).
/// Returns the information bits with the two tail bits stripped.
std::vector<uint8_t> viterbi_decode(const std::vector<uint8_t>& coded);
std::vector<uint8_t> viterbi_decode(const std::vector<double>& llrs);

/// Gray map between bit pairs and the phase-increment index k (d = j^k):
/// 00->0, 01->1, 11->2, 10->3.
int gray_pair_to_increment(uint8_t b0, uint8_t b1);
void gray_increment_to_pair(int k, uint8_t& b0, uint8_t& b1);

/// Differential QPSK over the alphabet {1, j, -1, -j}: x_0 = reference,
/// x_l = x_{l-1} * d_l. A frame of length L carries 2(L-1) bits.
ComplexVector dqpsk_modulate(const std::vector<uint8_t>& bits, cdouble reference);
std::vector<uint8_t> dqpsk_demodulate(const ComplexVector& symbols);

/// Soft differential demodulation from per-symbol posterior probabilities
/// beta (size-4 rows, beta[l][a] = P(x_l = j^a)); returns one LLR per bit.
std::vector<double> dqpsk_soft_llrs(const std::vector<std::array<double, 4>>& beta);

struct NoiseModel {
  double snr_db = 0.0;
  double sigma2 = 1.0;
  double lambda_true = 1.0;
};

/// sigma^2 = (|HX|_F^2 / (M N L)) / 10^(snr/10), the received power per
/// antenna per user over the noise power.
NoiseModel make_noise_model(const ComplexMatrix& HX, double snr_db, Index n_active);

ComplexMatrix apply_awgn(const ComplexMatrix& HX, const NoiseModel& noise, Rng& rng);

struct Frame {
  std::vector<std::vector<uint8_t>> info_bits;   // per active user
  std::vector<std::vector<uint8_t>> coded_bits;  // empty when uncoded
  ComplexMatrix X;                               // N×L
  std::vector<cdouble> reference_symbol;         // per active user
};

/// Number of bits reserved at the head of the info stream for the user ID.
Index user_id_bits(Index total_users);

/// Builds the per-user bit streams (ID field then random payload), applies
/// the optional convolutional code and differential modulation.
Frame gen_frame(const std::vector<Index>& active_users, Index L, bool coding,
                Index total_users, Rng& rng);

}  // namespace uacesd

#endif
