#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "uacesd/denoisers.hpp"
#include "uacesd/txchain.hpp"

using namespace uacesd;

namespace {

std::vector<uint8_t> random_bits(size_t n, Rng& rng) {
  std::vector<uint8_t> bits(n);
  for (auto& b : bits) b = static_cast<uint8_t>(rng.next_u64() & 1u);
  return bits;
}

}  // namespace

TEST_SUITE("txchain") {

TEST_CASE("steering vector basics") {
  ComplexVector a0 = steering_vector(0.0, 5);
  CHECK((a0 - ComplexVector::Ones(5)).norm() < 1e-14);

  ComplexVector ah = steering_vector(0.5, 2);
  CHECK(std::abs(ah(0) - cdouble(1, 0)) < 1e-14);
  CHECK(std::abs(ah(1) - cdouble(-1, 0)) < 1e-12);

  ComplexVector ar = steering_vector(0.2371, 16);
  for (Index m = 0; m < 16; ++m) CHECK(std::abs(ar(m)) == doctest::Approx(1.0));
  CHECK(ar.squaredNorm() == doctest::Approx(16.0));
}

TEST_CASE("partial DFT has orthonormal rows") {
  ComplexMatrix F = partial_dft(16, 24);
  CHECK((F * F.adjoint() - ComplexMatrix::Identity(16, 16)).cwiseAbs().maxCoeff() <=
        1e-10);
}

TEST_CASE("single-path channels are scaled dictionary columns") {
  ChannelConfig cfg;
  cfg.M = 16;
  cfg.K = 24;
  cfg.U = 10;
  cfg.n_active = 3;
  cfg.paths_per_user = 1;
  Rng rng(31);
  ChannelRealization ch = gen_channel(cfg, rng);
  for (Index n = 0; n < 3; ++n) {
    Index k = ch.paths[n][0].grid_index;
    // column n of H is a complex multiple of F column k
    cdouble ratio = ch.H(0, n) / ch.F(0, k);
    CHECK((ch.H.col(n) - ratio * ch.F.col(k)).norm() < 1e-10);
  }
}

TEST_CASE("paper-scale channel: sparsity, factorization, normalization") {
  ChannelConfig cfg;
  cfg.M = 100;
  cfg.K = 150;
  cfg.U = 300;
  cfg.n_active = 5;
  cfg.paths_per_user = 10;
  Rng rng(32);
  ChannelRealization ch = gen_channel(cfg, rng);
  CHECK((ch.H - ch.F * ch.G).norm() <= 1e-10 * ch.H.norm());
  for (Index n = 0; n < 5; ++n) {
    Index nnz = 0;
    for (Index k = 0; k < cfg.K; ++k) {
      if (std::abs(ch.G(k, n)) > 0.0) ++nnz;
    }
    CHECK(nnz == 10);
    CHECK(ch.H.col(n).squaredNorm() == doctest::Approx(100.0).epsilon(1e-10));
  }

  // dense boundary case
  ChannelConfig dense = cfg;
  dense.M = 12;
  dense.K = 16;
  dense.paths_per_user = 16;
  Rng rng2(33);
  ChannelRealization chd = gen_channel(dense, rng2);
  for (Index k = 0; k < 16; ++k) CHECK(std::abs(chd.G(k, 0)) > 0.0);
}

TEST_CASE("grid-on beamspace compaction is exact") {
  ChannelConfig cfg;
  cfg.M = 32;
  cfg.K = 48;
  cfg.U = 10;
  cfg.n_active = 2;
  cfg.paths_per_user = 6;
  Rng rng(34);
  ChannelRealization ch = gen_channel(cfg, rng);
  // keeping only the top-paths beamspace coefficients reconstructs h exactly
  for (Index n = 0; n < 2; ++n) {
    std::vector<std::pair<double, Index>> mags;
    for (Index k = 0; k < cfg.K; ++k) mags.push_back({std::abs(ch.G(k, n)), k});
    std::sort(mags.rbegin(), mags.rend());
    ComplexMatrix g = ComplexMatrix::Zero(cfg.K, 1);
    for (Index p = 0; p < cfg.paths_per_user; ++p) {
      g(mags[static_cast<size_t>(p)].second, 0) = ch.G(mags[static_cast<size_t>(p)].second, n);
    }
    CHECK((ch.F * g - ch.H.col(n)).norm() <= 1e-10 * ch.H.col(n).norm());
  }
}

TEST_CASE("off-grid channels remain consistent") {
  ChannelConfig cfg;
  cfg.M = 16;
  cfg.K = 24;
  cfg.U = 10;
  cfg.n_active = 2;
  cfg.paths_per_user = 3;
  cfg.on_grid = false;
  Rng rng(35);
  ChannelRealization ch = gen_channel(cfg, rng);
  CHECK((ch.H - ch.F * ch.G).norm() <= 1e-10 * ch.H.norm());
  CHECK(ch.H.col(0).squaredNorm() == doctest::Approx(16.0).epsilon(1e-10));
}

TEST_CASE("convolutional encoder basics") {
  std::vector<uint8_t> zeros(8, 0);
  auto coded = conv_encode(zeros);
  CHECK(std::all_of(coded.begin(), coded.end(), [](uint8_t b) { return b == 0; }));
  CHECK(coded.size() == 2 * (8 + 2));

  // impulse response, checked against a hand-run shift register
  auto impulse = conv_encode({1, 0, 0}, false);
  CHECK(impulse == std::vector<uint8_t>{1, 1, 0, 1, 1, 1});
  auto impulse_t = conv_encode({1, 0, 0}, true);
  CHECK(std::vector<uint8_t>(impulse_t.begin(), impulse_t.begin() + 6) ==
        std::vector<uint8_t>{1, 1, 0, 1, 1, 1});
  CHECK(std::all_of(impulse_t.begin() + 6, impulse_t.end(),
                    [](uint8_t b) { return b == 0; }));
}

TEST_CASE("viterbi round trip and single-error correction") {
  Rng rng(36);
  auto info = random_bits(128, rng);
  auto coded = conv_encode(info);
  CHECK(viterbi_decode(coded) == info);

  // any single flipped bit in a 50-pair stream is corrected (d_free = 5)
  auto info48 = random_bits(48, rng);
  auto coded48 = conv_encode(info48);
  REQUIRE(coded48.size() == 100);
  for (size_t flip = 0; flip < coded48.size(); ++flip) {
    auto corrupted = coded48;
    corrupted[flip] ^= 1u;
    CHECK(viterbi_decode(corrupted) == info48);
  }
}

TEST_CASE("soft and hard viterbi agree at saturated LLRs") {
  Rng rng(37);
  auto info = random_bits(40, rng);
  auto coded = conv_encode(info);
  std::vector<double> llrs(coded.size());
  for (size_t i = 0; i < coded.size(); ++i) llrs[i] = coded[i] ? -1e9 : 1e9;
  CHECK(viterbi_decode(llrs) == viterbi_decode(coded));
  CHECK(viterbi_decode(llrs) == info);
}

TEST_CASE("dqpsk round trip for any reference phase") {
  Rng rng(38);
  auto bits = random_bits(60, rng);
  for (double phase : {0.0, 0.7, 2.2, -1.3}) {
    cdouble ref(std::cos(phase), std::sin(phase));
    ComplexVector x = dqpsk_modulate(bits, ref);
    CHECK(x.size() == 31);
    for (Index l = 0; l < x.size(); ++l) CHECK(std::abs(x(l)) == doctest::Approx(1.0));
    CHECK(dqpsk_demodulate(x) == bits);
  }
}

TEST_CASE("dqpsk is invariant to a common rotation") {
  Rng rng(39);
  auto bits = random_bits(50, rng);
  ComplexVector x = dqpsk_modulate(bits, cdouble(1, 0));
  for (double phi : {0.1, 0.5, 1.0, 2.7, 4.4}) {
    ComplexVector rotated = x * cdouble(std::cos(phi), std::sin(phi));
    CHECK(dqpsk_demodulate(rotated) == bits);
  }
}

TEST_CASE("hard-symbol and posterior demodulation agree at 30 dB") {
  Rng rng(40);
  DiscreteAlphabetPrior qpsk = DiscreteAlphabetPrior::qpsk();
  int mismatches = 0;
  for (int frame = 0; frame < 100; ++frame) {
    auto bits = random_bits(64, rng);
    ComplexVector x = dqpsk_modulate(bits, cdouble(1, 0));
    const double sigma2 = 1e-3;  // 30 dB
    ComplexVector y = x;
    for (Index l = 0; l < y.size(); ++l) y(l) += rng.complex_gaussian(0.0, sigma2);

    // hard path
    auto hard = dqpsk_demodulate(y);

    // posterior path via the discrete denoiser
    ComplexMatrix Q = y.transpose();
    RealMatrix Vq = RealMatrix::Constant(1, y.size(), sigma2);
    DiscreteDenoiseFull post = denoise_discrete_full(Q, Vq, qpsk);
    std::vector<std::array<double, 4>> beta(static_cast<size_t>(y.size()));
    for (Index l = 0; l < y.size(); ++l) {
      for (int a = 0; a < 4; ++a) beta[static_cast<size_t>(l)][a] = post.beta[a](0, l);
    }
    auto llrs = dqpsk_soft_llrs(beta);
    std::vector<uint8_t> soft_bits(llrs.size());
    for (size_t i = 0; i < llrs.size(); ++i) soft_bits[i] = llrs[i] < 0.0 ? 1 : 0;

    if (soft_bits != hard) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("awgn calibration") {
  Rng rng(41);
  ComplexMatrix HX = sample_complex_gaussian(100, 100, 0.0, 3.0, rng);
  NoiseModel inf_snr = make_noise_model(HX, std::numeric_limits<double>::infinity(), 4);
  CHECK(inf_snr.sigma2 == 0.0);
  CHECK((apply_awgn(HX, inf_snr, rng) - HX).norm() == 0.0);

  // unit-energy case: |HX|^2 = M*N*L at 0 dB gives sigma2 = 1
  const Index M = 20, N = 5, L = 50;
  ComplexMatrix A = sample_complex_gaussian(M, L, 0.0, 1.0, rng);
  A *= std::sqrt(static_cast<double>(M * N * L) / A.squaredNorm());
  NoiseModel unit = make_noise_model(A, 0.0, N);
  CHECK(unit.sigma2 == doctest::Approx(1.0).epsilon(1e-12));

  NoiseModel nm = make_noise_model(HX, 7.0, 4);
  ComplexMatrix Y = apply_awgn(HX, nm, rng);
  double noise_power = (Y - HX).squaredNorm() / static_cast<double>(HX.size());
  double measured_snr =
      10.0 * std::log10(HX.squaredNorm() / (static_cast<double>(HX.rows() * 4) *
                                            static_cast<double>(HX.cols())) /
                        noise_power);
  CHECK(measured_snr == doctest::Approx(7.0).epsilon(0.03));  // within 0.2 dB
}

TEST_CASE("frame construction carries IDs and differential structure") {
  Rng rng(42);
  std::vector<Index> users = {5, 17, 42};
  const Index L = 32, U = 100;
  Frame f = gen_frame(users, L, false, U, rng);
  CHECK(f.X.rows() == 3);
  CHECK(f.X.cols() == L);
  CHECK(user_id_bits(U) == 7);
  for (size_t n = 0; n < users.size(); ++n) {
    const auto& bits = f.info_bits[n];
    CHECK(static_cast<Index>(bits.size()) == 2 * (L - 1));
    Index id = 0;
    for (Index b = 0; b < 7; ++b) id = (id << 1) | bits[static_cast<size_t>(b)];
    CHECK(id == users[n]);
    // unit average row energy and increments from the alphabet
    CHECK(f.X.row(n).squaredNorm() == doctest::Approx(static_cast<double>(L)));
    for (Index l = 1; l < L; ++l) {
      cdouble d = f.X(n, l) / f.X(n, l - 1);
      bool in_alphabet = std::abs(d - cdouble(1, 0)) < 1e-12 ||
                         std::abs(d - cdouble(0, 1)) < 1e-12 ||
                         std::abs(d - cdouble(-1, 0)) < 1e-12 ||
                         std::abs(d - cdouble(0, -1)) < 1e-12;
      CHECK(in_alphabet);
    }
    // demodulating the clean row returns the transmitted bits
    CHECK(dqpsk_demodulate(f.X.row(n).transpose()) == bits);
  }

  Frame fc = gen_frame(users, L, true, U, rng);
  CHECK(static_cast<Index>(fc.info_bits[0].size()) == L - 3);
  CHECK(static_cast<Index>(fc.coded_bits[0].size()) == 2 * (L - 1));
  CHECK(viterbi_decode(fc.coded_bits[1]) == fc.info_bits[1]);
}

TEST_CASE("contract checks") {
  Rng rng(43);
  ChannelConfig bad;
  bad.M = 16;
  bad.K = 12;
  CHECK_THROWS_AS(gen_channel(bad, rng), ContractError);
  CHECK_THROWS_AS(conv_encode({}), ContractError);
  CHECK_THROWS_AS(viterbi_decode(std::vector<uint8_t>{1, 0, 1}), ContractError);
  CHECK_THROWS_AS(dqpsk_modulate({1}, cdouble(1, 0)), ContractError);
}

}  // TEST_SUITE
