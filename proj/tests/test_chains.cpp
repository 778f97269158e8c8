#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>

#include "badge/chains.hpp"
#include "badge/rng.hpp"

using namespace badge;
using namespace badge::chains;

namespace {

BinaryChainPotentials random_binary(Eigen::Index n, Rng& rng, double scale = 2.0) {
  BinaryChainPotentials pot;
  pot.node_logpot.resize(n, 2);
  pot.edge_logpot.resize(n - 1);
  for (Eigen::Index t = 0; t < n; ++t)
    for (int s = 0; s < 2; ++s) pot.node_logpot(t, s) = rng.uniform(-scale, scale);
  for (Eigen::Index t = 0; t + 1 < n; ++t)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) pot.edge_logpot[t](a, b) = rng.uniform(-scale, scale);
  return pot;
}

// exhaustive enumeration over all 2^N states
struct EnumResult {
  Eigen::MatrixX2d marginals;
  std::vector<Eigen::Matrix2d> pairwise;
  double log_z;
  double entropy;
};

EnumResult enumerate_chain(const BinaryChainPotentials& pot) {
  const Eigen::Index n = pot.length();
  const int states = 1 << n;
  std::vector<double> logw(states);
  double max_lw = -1e300;
  for (int s = 0; s < states; ++s) {
    double lw = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) lw += pot.node_logpot(t, (s >> t) & 1);
    for (Eigen::Index t = 1; t < n; ++t) lw += pot.edge_logpot[t - 1]((s >> (t - 1)) & 1, (s >> t) & 1);
    logw[s] = lw;
    max_lw = std::max(max_lw, lw);
  }
  double z = 0.0;
  for (int s = 0; s < states; ++s) z += std::exp(logw[s] - max_lw);
  EnumResult out;
  out.log_z = max_lw + std::log(z);
  out.marginals = Eigen::MatrixX2d::Zero(n, 2);
  out.pairwise.assign(n - 1, Eigen::Matrix2d::Zero());
  out.entropy = 0.0;
  for (int s = 0; s < states; ++s) {
    const double p = std::exp(logw[s] - out.log_z);
    if (p > 0) out.entropy -= p * std::log(p);
    for (Eigen::Index t = 0; t < n; ++t) out.marginals(t, (s >> t) & 1) += p;
    for (Eigen::Index t = 1; t < n; ++t) out.pairwise[t - 1]((s >> (t - 1)) & 1, (s >> t) & 1) += p;
  }
  return out;
}

GaussChainParams random_gauss(Eigen::Index n, Rng& rng) {
  GaussChainParams params;
  params.omega_diag.resize(n);
  params.omega_off.resize(n - 1);
  params.potential.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    params.omega_diag(t) = rng.uniform(1.5, 3.0);
    params.potential(t) = rng.uniform(-2.0, 2.0);
  }
  for (Eigen::Index t = 0; t + 1 < n; ++t) params.omega_off(t) = rng.uniform(-0.7, 0.7);
  return params;
}

Eigen::MatrixXd dense_precision(const GaussChainParams& params) {
  const Eigen::Index n = params.length();
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index t = 0; t < n; ++t) omega(t, t) = params.omega_diag(t);
  for (Eigen::Index t = 0; t + 1 < n; ++t) {
    omega(t, t + 1) = params.omega_off(t);
    omega(t + 1, t) = params.omega_off(t);
  }
  return omega;
}

}  // namespace

TEST_CASE("binary chain trivial examples", "[chains]") {
  SECTION("single symmetric node") {
    BinaryChainPotentials pot;
    pot.node_logpot = Eigen::MatrixX2d::Zero(1, 2);
    const auto b = binary_chain_infer(pot);
    CHECK(b.marginals(0, 0) == Catch::Approx(0.5).margin(1e-14));
    CHECK(b.marginals(0, 1) == Catch::Approx(0.5).margin(1e-14));
  }
  SECTION("uniform three-node chain") {
    BinaryChainPotentials pot;
    pot.node_logpot = Eigen::MatrixX2d::Zero(3, 2);
    pot.edge_logpot.assign(2, Eigen::Matrix2d::Zero());
    const auto b = binary_chain_infer(pot);
    for (int t = 0; t < 3; ++t) {
      CHECK(b.marginals(t, 0) == Catch::Approx(0.5).margin(1e-13));
      CHECK(b.marginals(t, 1) == Catch::Approx(0.5).margin(1e-13));
    }
    for (const auto& q : b.pairwise)
      for (int a = 0; a < 2; ++a)
        for (int c = 0; c < 2; ++c) CHECK(q(a, c) == Catch::Approx(0.25).margin(1e-13));
    CHECK(b.log_partition == Catch::Approx(3.0 * std::log(2.0)).margin(1e-12));
  }
}

TEST_CASE("binary chain matches enumeration for N <= 4", "[chains]") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(4));
    const auto pot = random_binary(n, rng);
    const auto got = binary_chain_infer(pot);
    const auto want = enumerate_chain(pot);
    CHECK(got.log_partition == Catch::Approx(want.log_z).margin(1e-10));
    for (Eigen::Index t = 0; t < n; ++t)
      for (int s = 0; s < 2; ++s)
        CHECK(got.marginals(t, s) == Catch::Approx(want.marginals(t, s)).margin(1e-10));
    for (Eigen::Index t = 0; t + 1 < n; ++t)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          CHECK(got.pairwise[t](a, b) == Catch::Approx(want.pairwise[t](a, b)).margin(1e-10));
  }
}

TEST_CASE("binary chain invariants", "[chains]") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(30));
    const auto pot = random_binary(n, rng, 4.0);
    const auto b = binary_chain_infer(pot);
    for (Eigen::Index t = 0; t < n; ++t)
      CHECK(b.marginals.row(t).sum() == Catch::Approx(1.0).margin(1e-12));
    for (Eigen::Index t = 1; t < n; ++t) {
      const auto& q = b.pairwise[t - 1];
      CHECK(q.sum() == Catch::Approx(1.0).margin(1e-12));
      // pairwise marginalizes to the adjacent marginals
      CHECK(q.colwise().sum()(0) == Catch::Approx(b.marginals(t, 0)).margin(1e-10));
      CHECK(q.colwise().sum()(1) == Catch::Approx(b.marginals(t, 1)).margin(1e-10));
      CHECK(q.rowwise().sum()(0) == Catch::Approx(b.marginals(t - 1, 0)).margin(1e-10));
      CHECK(q.rowwise().sum()(1) == Catch::Approx(b.marginals(t - 1, 1)).margin(1e-10));
    }
  }
}

TEST_CASE("binary chain rejects non-finite potentials", "[chains]") {
  BinaryChainPotentials pot;
  pot.node_logpot = Eigen::MatrixX2d::Zero(2, 2);
  pot.node_logpot(1, 0) = std::numeric_limits<double>::infinity();
  pot.edge_logpot.assign(1, Eigen::Matrix2d::Zero());
  CHECK_THROWS_AS(binary_chain_infer(pot), invalid_input);
}

TEST_CASE("binary chain entropy", "[chains]") {
  SECTION("uniform chain: 3 log 2") {
    BinaryChainPotentials pot;
    pot.node_logpot = Eigen::MatrixX2d::Zero(3, 2);
    pot.edge_logpot.assign(2, Eigen::Matrix2d::Zero());
    const auto b = binary_chain_infer(pot);
    CHECK(binary_chain_entropy(b, pot) == Catch::Approx(3.0 * std::log(2.0)).margin(1e-12));
  }
  SECTION("degenerate single node") {
    BinaryChainPotentials pot;
    pot.node_logpot.resize(1, 2);
    pot.node_logpot << 0.0, -1e9;
    const auto b = binary_chain_infer(pot);
    CHECK(std::abs(binary_chain_entropy(b, pot)) < 1e-8);
  }
  SECTION("seeded three-node chain vs enumeration") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const auto pot = random_binary(3, rng);
      const auto b = binary_chain_infer(pot);
      const auto want = enumerate_chain(pot);
      CHECK(binary_chain_entropy(b, pot) == Catch::Approx(want.entropy).margin(1e-8));
      // the moments-only (tree) form agrees with the log-partition form
      CHECK(binary_chain_entropy(b) == Catch::Approx(want.entropy).margin(1e-8));
    }
  }
}

TEST_CASE("gauss chain trivial examples", "[chains]") {
  SECTION("identity precision") {
    GaussChainParams p;
    p.omega_diag = Eigen::VectorXd::Ones(4);
    p.omega_off = Eigen::VectorXd::Zero(3);
    p.potential = Eigen::VectorXd::Zero(4);
    const auto b = gauss_chain_infer(p);
    CHECK(b.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK((b.variance.array() - 1.0).abs().maxCoeff() < 1e-14);
    CHECK(b.lag_cov.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(b.logdet_precision == Catch::Approx(0.0).margin(1e-14));
  }
  SECTION("two-node chain solved by hand") {
    GaussChainParams p;
    p.omega_diag = Eigen::VectorXd::Constant(2, 2.0);
    p.omega_off = Eigen::VectorXd::Constant(1, -1.0);
    p.potential = Eigen::VectorXd::Ones(2);
    const auto b = gauss_chain_infer(p);
    CHECK(b.mean(0) == Catch::Approx(1.0).margin(1e-14));
    CHECK(b.mean(1) == Catch::Approx(1.0).margin(1e-14));
    CHECK(b.variance(0) == Catch::Approx(2.0 / 3.0).margin(1e-14));
    CHECK(b.variance(1) == Catch::Approx(2.0 / 3.0).margin(1e-14));
    CHECK(b.lag_cov(0) == Catch::Approx(1.0 / 3.0).margin(1e-14));
    CHECK(gauss_chain_entropy(b) ==
          Catch::Approx(std::log(2.0 * M_PI * std::exp(1.0)) - 0.5 * std::log(3.0)).margin(1e-12));
  }
}

TEST_CASE("gauss chain matches dense inverse for N <= 8", "[chains]") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(7));
    const auto params = random_gauss(n, rng);
    const auto b = gauss_chain_infer(params);
    const Eigen::MatrixXd omega = dense_precision(params);
    const Eigen::MatrixXd sigma = omega.inverse();
    const Eigen::VectorXd mean = sigma * params.potential;
    for (Eigen::Index t = 0; t < n; ++t) {
      CHECK(b.mean(t) == Catch::Approx(mean(t)).margin(1e-10));
      CHECK(b.variance(t) == Catch::Approx(sigma(t, t)).margin(1e-10));
      CHECK(b.variance(t) > 0.0);
    }
    for (Eigen::Index t = 0; t + 1 < n; ++t) {
      CHECK(b.lag_cov(t) == Catch::Approx(sigma(t, t + 1)).margin(1e-10));
      CHECK(std::abs(b.lag_cov(t)) < std::sqrt(b.variance(t) * b.variance(t + 1)));
    }
    CHECK(b.logdet_precision == Catch::Approx(std::log(omega.determinant())).margin(1e-9));
    CHECK(gauss_chain_entropy(b) ==
          Catch::Approx(0.5 * n * std::log(2.0 * M_PI * std::exp(1.0)) -
                        0.5 * std::log(omega.determinant()))
              .margin(1e-9));
    // second potential vector through the shared-precision mean solve
    Eigen::VectorXd h2(n), mean2;
    for (Eigen::Index t = 0; t < n; ++t) h2(t) = rng.uniform(-1.0, 1.0);
    REQUIRE(gauss_chain_try_mean(params, h2, mean2));
    const Eigen::VectorXd want2 = sigma * h2;
    for (Eigen::Index t = 0; t < n; ++t) CHECK(mean2(t) == Catch::Approx(want2(t)).margin(1e-10));
  }
}

TEST_CASE("gauss chain rejects indefinite precision", "[chains]") {
  GaussChainParams p;
  p.omega_diag = Eigen::VectorXd::Ones(3);
  p.omega_off = Eigen::VectorXd::Constant(2, 1.5);  // dominated off-diagonal
  p.potential = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(gauss_chain_infer(p), not_positive_definite);
}

TEST_CASE("squared difference sum expands moments", "[chains]") {
  GaussChainParams p;
  p.omega_diag = Eigen::VectorXd::Constant(2, 2.0);
  p.omega_off = Eigen::VectorXd::Constant(1, -1.0);
  p.potential.resize(2);
  p.potential << 0.0, 1.0;
  const auto b = gauss_chain_infer(p);
  const double want = std::pow(b.mean(1) - b.mean(0), 2) + b.variance(0) + b.variance(1) -
                      2.0 * b.lag_cov(0);
  CHECK(squared_difference_sum(b) == Catch::Approx(want).margin(1e-14));
}

TEST_CASE("chain inference scales linearly", "[chains][timing]") {
  Rng rng(7);
  const auto time_gauss = [&](Eigen::Index n) {
    const auto params = random_gauss(n, rng);
    GaussChainBeliefs b;
    double best = 1e300;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < 20; ++i) gauss_chain_infer(params, b);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double t1 = time_gauss(100000);
  const double t2 = time_gauss(200000);
  CHECK(t2 / t1 < 3.5);  // doubling N should roughly double the cost
}
