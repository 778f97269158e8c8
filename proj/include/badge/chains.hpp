#ifndef BADGE_CHAINS_HPP
#define BADGE_CHAINS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

// Exact message passing on length-N chains: forward-backward for binary
// Markov chains and information-form belief propagation for tridiagonal
// Gauss-Markov chains. Both run in O(N) and return the quantities the
// variational updates consume (marginals, pairwise beliefs, lag-one
// covariances, log-partition / log-determinant).

namespace badge::chains {

struct invalid_input : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct not_positive_definite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// binary chains

struct BinaryChainPotentials {
  // node_logpot(t, s) for s in {0,1}; edge_logpot[t-1](a, b) couples
  // state a at t-1 with state b at t.
  Eigen::MatrixX2d node_logpot;
  std::vector<Eigen::Matrix2d> edge_logpot;

  Eigen::Index length() const { return node_logpot.rows(); }
};

struct BinaryChainBeliefs {
  Eigen::MatrixX2d marginals;             // q(s_t)
  std::vector<Eigen::Matrix2d> pairwise;  // q(s_{t-1}, s_t)
  double log_partition = 0.0;

  Eigen::Index length() const { return marginals.rows(); }
};

// Exact marginals, pairwise beliefs and log-partition of the distribution
// proportional to exp(sum node_logpot + sum edge_logpot). Runs in scaled
// probability space: node weights are shifted by their per-step maximum
// before exponentiation and the forward/backward vectors renormalized every
// step, so arbitrarily large potential ranges stay representable while each
// step costs only a couple of transcendentals.
inline void binary_chain_infer(const BinaryChainPotentials& pot, BinaryChainBeliefs& out) {
  const Eigen::Index n = pot.length();
  if (n < 1) throw invalid_input("binary_chain_infer: empty chain");
  if (static_cast<Eigen::Index>(pot.edge_logpot.size()) != n - 1)
    throw invalid_input("binary_chain_infer: edge potential count must be N-1");
  if (!pot.node_logpot.allFinite()) throw invalid_input("binary_chain_infer: non-finite node potential");
  for (const auto& e : pot.edge_logpot)
    if (!e.allFinite()) throw invalid_input("binary_chain_infer: non-finite edge potential");

  out.marginals.resize(n, 2);
  out.pairwise.resize(n - 1);

  // shifted node weights b_t(s) = exp(node(t,s) - max_s node(t,s))
  Eigen::MatrixX2d weight(n, 2);
  double log_z = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double shift = std::max(pot.node_logpot(t, 0), pot.node_logpot(t, 1));
    weight(t, 0) = std::exp(pot.node_logpot(t, 0) - shift);
    weight(t, 1) = std::exp(pot.node_logpot(t, 1) - shift);
    log_z += shift;
  }

  Eigen::MatrixX2d fwd(n, 2);
  {
    const double norm = weight(0, 0) + weight(0, 1);
    fwd(0, 0) = weight(0, 0) / norm;
    fwd(0, 1) = weight(0, 1) / norm;
    log_z += std::log(norm);
  }
  std::vector<Eigen::Matrix2d> trans(n - 1);
  double shift = 0.0;
  for (Eigen::Index t = 1; t < n; ++t) {
    const Eigen::Matrix2d& e = pot.edge_logpot[t - 1];
    Eigen::Matrix2d& m = trans[t - 1];
    if (t > 1 && e == pot.edge_logpot[t - 2]) {
      m = trans[t - 2];  // unchanged transition block, reuse the weights
    } else {
      shift = e.maxCoeff();
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) m(a, b) = std::exp(e(a, b) - shift);
    }
    const double a0 = (fwd(t - 1, 0) * m(0, 0) + fwd(t - 1, 1) * m(1, 0)) * weight(t, 0);
    const double a1 = (fwd(t - 1, 0) * m(0, 1) + fwd(t - 1, 1) * m(1, 1)) * weight(t, 1);
    const double norm = a0 + a1;
    fwd(t, 0) = a0 / norm;
    fwd(t, 1) = a1 / norm;
    log_z += std::log(norm) + shift;
  }

  double bwd0 = 1.0, bwd1 = 1.0;  // scaled backward messages at t+1
  out.marginals(n - 1, 0) = fwd(n - 1, 0);
  out.marginals(n - 1, 1) = fwd(n - 1, 1);
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    const Eigen::Matrix2d& m = trans[t];
    const double wb0 = weight(t + 1, 0) * bwd0, wb1 = weight(t + 1, 1) * bwd1;
    Eigen::Matrix2d& q = out.pairwise[t];
    q(0, 0) = fwd(t, 0) * m(0, 0) * wb0;
    q(0, 1) = fwd(t, 0) * m(0, 1) * wb1;
    q(1, 0) = fwd(t, 1) * m(1, 0) * wb0;
    q(1, 1) = fwd(t, 1) * m(1, 1) * wb1;
    const double norm = q(0, 0) + q(0, 1) + q(1, 0) + q(1, 1);
    q /= norm;
    const double b0 = m(0, 0) * wb0 + m(0, 1) * wb1;
    const double b1 = m(1, 0) * wb0 + m(1, 1) * wb1;
    const double p0 = fwd(t, 0) * b0, p1 = fwd(t, 1) * b1;
    const double pnorm = p0 + p1;
    out.marginals(t, 0) = p0 / pnorm;
    out.marginals(t, 1) = p1 / pnorm;
    const double bnorm = std::max(b0, b1);
    bwd0 = b0 / bnorm;
    bwd1 = b1 / bnorm;
  }
  out.log_partition = log_z;
}

inline BinaryChainBeliefs binary_chain_infer(const BinaryChainPotentials& pot) {
  BinaryChainBeliefs out;
  binary_chain_infer(pot, out);
  return out;
}

// Entropy of the chain distribution: log-partition minus the expected total
// potential under the beliefs.
inline double binary_chain_entropy(const BinaryChainBeliefs& beliefs, const BinaryChainPotentials& pot) {
  const Eigen::Index n = beliefs.length();
  double expected = 0.0;
  for (Eigen::Index t = 0; t < n; ++t)
    expected += beliefs.marginals(t, 0) * pot.node_logpot(t, 0) +
                beliefs.marginals(t, 1) * pot.node_logpot(t, 1);
  for (Eigen::Index t = 1; t < n; ++t)
    expected += (beliefs.pairwise[t - 1].array() * pot.edge_logpot[t - 1].array()).sum();
  return beliefs.log_partition - expected;
}

// Entropy from beliefs alone, using the chain (tree) factorization
// H = sum_t H(s_{t-1}, s_t) - sum over interior nodes of H(s_t).
inline double binary_chain_entropy(const BinaryChainBeliefs& beliefs) {
  const Eigen::Index n = beliefs.length();
  auto plogp = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
  double h = 0.0;
  if (n == 1) return -plogp(beliefs.marginals(0, 0)) - plogp(beliefs.marginals(0, 1));
  for (Eigen::Index t = 1; t < n; ++t) {
    const Eigen::Matrix2d& q = beliefs.pairwise[t - 1];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) h -= plogp(q(a, b));
  }
  for (Eigen::Index t = 1; t < n - 1; ++t)
    h += plogp(beliefs.marginals(t, 0)) + plogp(beliefs.marginals(t, 1));
  return h;
}

// ---------------------------------------------------------------------------
// tridiagonal Gauss-Markov chains

struct GaussChainParams {
  Eigen::VectorXd omega_diag;  // diagonal of the tridiagonal precision
  Eigen::VectorXd omega_off;   // sub/super-diagonal (actual signed values)
  Eigen::VectorXd potential;   // h

  Eigen::Index length() const { return omega_diag.size(); }
};

struct GaussChainBeliefs {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::VectorXd lag_cov;  // Cov(z_t, z_{t+1})
  double logdet_precision = 0.0;

  Eigen::Index length() const { return mean.size(); }
};

inline constexpr double kSpdPivotFloor = 1e-12;

// Information-form forward/backward sweeps. The forward pivots are the LDL^T
// pivots of the tridiagonal precision, so their product gives the determinant
// and any pivot <= kSpdPivotFloor signals a non-SPD matrix. Returns false in
// that case (out is then unspecified).
inline bool gauss_chain_try_infer(const GaussChainParams& params, GaussChainBeliefs& out) {
  const Eigen::Index n = params.length();
  if (n < 1) return false;
  if (params.omega_off.size() != n - 1 || params.potential.size() != n) return false;

  Eigen::VectorXd jf(n), hf(n);
  double logdet = 0.0;
  jf(0) = params.omega_diag(0);
  hf(0) = params.potential(0);
  if (!(jf(0) > kSpdPivotFloor)) return false;
  logdet += std::log(jf(0));
  for (Eigen::Index t = 1; t < n; ++t) {
    const double o = params.omega_off(t - 1);
    jf(t) = params.omega_diag(t) - o * o / jf(t - 1);
    hf(t) = params.potential(t) - o * hf(t - 1) / jf(t - 1);
    if (!(jf(t) > kSpdPivotFloor)) return false;
    logdet += std::log(jf(t));
  }

  out.mean.resize(n);
  out.variance.resize(n);
  out.lag_cov.resize(n - 1);
  out.logdet_precision = logdet;

  out.variance(n - 1) = 1.0 / jf(n - 1);
  out.mean(n - 1) = hf(n - 1) * out.variance(n - 1);
  double jb = params.omega_diag(n - 1);
  double hb = params.potential(n - 1);
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    const double o = params.omega_off(t);
    const double jb_msg = -o * o / jb;
    const double hb_msg = -o * hb / jb;
    const double jm = jf(t) + jb_msg;
    out.variance(t) = 1.0 / jm;
    out.mean(t) = (hf(t) + hb_msg) / jm;
    out.lag_cov(t) = -o / jf(t) * out.variance(t + 1);
    if (t > 0) {
      jb = params.omega_diag(t) + jb_msg;
      hb = params.potential(t) + hb_msg;
    }
  }
  return true;
}

// mean = Omega^{-1} h, variance_t = (Omega^{-1})_{tt}, lag_cov_t = (Omega^{-1})_{t,t+1}
inline void gauss_chain_infer(const GaussChainParams& params, GaussChainBeliefs& out) {
  if (!gauss_chain_try_infer(params, out))
    throw not_positive_definite("gauss_chain_infer: tridiagonal precision is not positive definite");
}

inline GaussChainBeliefs gauss_chain_infer(const GaussChainParams& params) {
  GaussChainBeliefs out;
  gauss_chain_infer(params, out);
  return out;
}

// Mean-only solve for a second potential vector sharing the same precision.
// Used by the frequency-domain slab chains, whose real and imaginary parts
// see one tridiagonal precision with two right-hand sides.
inline bool gauss_chain_try_mean(const GaussChainParams& params, const Eigen::VectorXd& potential,
                                 Eigen::VectorXd& mean) {
  const Eigen::Index n = params.length();
  Eigen::VectorXd jf(n), hf(n);
  jf(0) = params.omega_diag(0);
  hf(0) = potential(0);
  if (!(jf(0) > kSpdPivotFloor)) return false;
  for (Eigen::Index t = 1; t < n; ++t) {
    const double o = params.omega_off(t - 1);
    jf(t) = params.omega_diag(t) - o * o / jf(t - 1);
    hf(t) = potential(t) - o * hf(t - 1) / jf(t - 1);
    if (!(jf(t) > kSpdPivotFloor)) return false;
  }
  mean.resize(n);
  mean(n - 1) = hf(n - 1) / jf(n - 1);
  for (Eigen::Index t = n - 2; t >= 0; --t)
    mean(t) = (hf(t) - params.omega_off(t) * mean(t + 1)) / jf(t);
  return true;
}

// (N/2) log(2*pi*e) - (1/2) logdet(Omega)
inline double gauss_chain_entropy(const GaussChainBeliefs& beliefs) {
  if (!std::isfinite(beliefs.logdet_precision))
    throw invalid_input("gauss_chain_entropy: non-finite log-determinant");
  constexpr double log_2pi_e = 2.8378770664093454835606594728112;
  return 0.5 * static_cast<double>(beliefs.length()) * log_2pi_e - 0.5 * beliefs.logdet_precision;
}

// sum_t <(z_t - z_{t-1})^2> expanded through means, variances and lag
// covariances; the thin-membrane sufficient statistic.
inline double squared_difference_sum(const GaussChainBeliefs& b) {
  double s = 0.0;
  for (Eigen::Index t = 1; t < b.length(); ++t) {
    const double dm = b.mean(t) - b.mean(t - 1);
    s += dm * dm + b.variance(t) + b.variance(t - 1) - 2.0 * b.lag_cov(t - 1);
  }
  return s;
}

}  // namespace badge::chains

#endif  // BADGE_CHAINS_HPP
