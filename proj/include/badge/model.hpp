#ifndef BADGE_MODEL_HPP
#define BADGE_MODEL_HPP

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <vector>

#include "badge/chains.hpp"

// Variational state for the dynamic graphical model: per-edge spike and slab
// chains, per-variable log-diagonal chains, and the shared Beta/Gamma
// hyperposteriors, together with the closed-form moment helpers the update
// rules rely on.

namespace badge {

enum class Domain { time, frequency };

// The time-domain model carries one real slab chain per edge; the
// frequency-domain model carries a complex slab whose real and imaginary
// parts share a single tridiagonal precision. data_weight is the exponent
// weight of the Gaussian vs. complex-Gaussian pseudo-likelihood (1/2 vs. 1).
template <class Scalar>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
  static constexpr int components = 1;
  static constexpr double data_weight = 0.5;
  static double conj(double x) { return x; }
  static double real(double x) { return x; }
  static double abs2(double x) { return x * x; }
};

template <>
struct ScalarTraits<std::complex<double>> {
  static constexpr int components = 2;
  static constexpr double data_weight = 1.0;
  static std::complex<double> conj(const std::complex<double>& x) { return std::conj(x); }
  static double real(const std::complex<double>& x) { return x.real(); }
  static double abs2(const std::complex<double>& x) { return std::norm(x); }
};

struct LogNormalMoments {
  double exp_pos = 1.0;  // <exp(z)>
  double exp_neg = 1.0;  // <exp(-z)>
  bool overflowed = false;
};

// Gaussian moment generating function: <exp(+-z)> = exp(+-mean + variance/2).
// Saturates instead of producing inf so downstream code can flag the event.
inline LogNormalMoments lognormal_moments(double mean, double variance) {
  if (!(variance >= 0.0)) throw std::invalid_argument("lognormal_moments: variance must be >= 0");
  LogNormalMoments m;
  const double cap = 700.0;  // exp(709) is the double limit
  const double ep = mean + 0.5 * variance;
  const double en = -mean + 0.5 * variance;
  if (ep > cap || en > cap) {
    m.overflowed = true;
    m.exp_pos = std::exp(std::min(ep, cap));
    m.exp_neg = std::exp(std::min(en, cap));
  } else {
    m.exp_pos = std::exp(ep);
    m.exp_neg = std::exp(en);
  }
  return m;
}

// ---------------------------------------------------------------------------

// Per-pair state over the covariate axis. s_pairwise rows hold the four
// transition beliefs (00, 01, 10, 11) for t-1 -> t.
template <class Scalar>
struct EdgeState {
  Eigen::VectorXd s_marginal;                             // <s^(t)>
  Eigen::Matrix<double, Eigen::Dynamic, 4> s_pairwise;    // q(s^(t-1), s^(t))
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> j_mean;        // <J^(t)>
  Eigen::VectorXd j_var;                                  // per-component variance
  Eigen::VectorXd j_lag_cov;                              // per-component Cov(J^(t), J^(t+1))
  double j_logdet = 0.0;  // log-determinant of the slab chain precision
  double alpha_shape = 1.0;
  double alpha_rate = 1.0;

  Eigen::Index length() const { return s_marginal.size(); }

  double alpha_mean() const { return alpha_shape / alpha_rate; }

  // <J^2> summed over components
  double slab_second_moment(Eigen::Index t) const {
    return ScalarTraits<Scalar>::abs2(j_mean(t)) + ScalarTraits<Scalar>::components * j_var(t);
  }

  // sum_t <(J^(t) - J^(t-1))^2> over components
  double slab_squared_diff_sum() const {
    double s = 0.0;
    for (Eigen::Index t = 1; t < length(); ++t) {
      s += ScalarTraits<Scalar>::abs2(j_mean(t) - j_mean(t - 1)) +
           ScalarTraits<Scalar>::components *
               (j_var(t) + j_var(t - 1) - 2.0 * j_lag_cov(t - 1));
    }
    return s;
  }
};

// <K> = <s><J> and <K^2> = <s>(<J>^2 + Var J); s is binary so s^2 = s, and s
// and J are independent factors.
template <class Scalar>
inline std::pair<Scalar, double> edge_k_moments(const EdgeState<Scalar>& e, Eigen::Index t) {
  const double s = e.s_marginal(t);
  return {Scalar(s * e.j_mean(t)), s * e.slab_second_moment(t)};
}

// Per-variable state for the log-diagonal chain kappa_j.
struct DiagState {
  chains::GaussChainParams chain;
  chains::GaussChainBeliefs beliefs;
  Eigen::VectorXd exp_pos;  // <exp(kappa)>
  Eigen::VectorXd exp_neg;  // <exp(-kappa)>
  bool moment_overflow = false;

  void refresh_exp() {
    const Eigen::Index n = beliefs.length();
    exp_pos.resize(n);
    exp_neg.resize(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      const LogNormalMoments m = lognormal_moments(beliefs.mean(t), beliefs.variance(t));
      exp_pos(t) = m.exp_pos;
      exp_neg(t) = m.exp_neg;
      moment_overflow = moment_overflow || m.overflowed;
    }
  }
};

// Shared Beta posteriors for the spike chain hyperparameters and the Gamma
// posterior for the diagonal smoothness, with cached log-expectations.
struct HyperState {
  double pi1_a = 1.0, pi1_b = 1.0;
  double a00_c = 1.0, a00_d = 1.0;
  double a11_c = 1.0, a11_d = 1.0;
  double beta_shape = 1.0, beta_rate = 1.0;

  double log_pi1 = 0.0, log_1m_pi1 = 0.0;
  double log_a00 = 0.0, log_1m_a00 = 0.0;
  double log_a11 = 0.0, log_1m_a11 = 0.0;
  double beta_mean = 1.0;
};

// Digamma-based refresh of the cached expectations.
inline HyperState& hyper_expectations(HyperState& h) {
  using boost::math::digamma;
  if (!(h.pi1_a > 0 && h.pi1_b > 0 && h.a00_c > 0 && h.a00_d > 0 && h.a11_c > 0 &&
        h.a11_d > 0 && h.beta_shape > 0 && h.beta_rate > 0))
    throw std::invalid_argument("hyper_expectations: shape/rate parameters must be positive");
  h.log_pi1 = digamma(h.pi1_a) - digamma(h.pi1_a + h.pi1_b);
  h.log_1m_pi1 = digamma(h.pi1_b) - digamma(h.pi1_a + h.pi1_b);
  h.log_a00 = digamma(h.a00_c) - digamma(h.a00_c + h.a00_d);
  h.log_1m_a00 = digamma(h.a00_d) - digamma(h.a00_c + h.a00_d);
  h.log_a11 = digamma(h.a11_c) - digamma(h.a11_c + h.a11_d);
  h.log_1m_a11 = digamma(h.a11_d) - digamma(h.a11_c + h.a11_d);
  h.beta_mean = h.beta_shape / h.beta_rate;
  return h;
}

// ---------------------------------------------------------------------------

template <class Scalar>
struct VariationalModel {
  int p = 0;
  int n = 0;
  Domain domain_tag = Domain::time;
  std::vector<EdgeState<Scalar>> edges;  // (j,k), j < k, lexicographic
  std::vector<DiagState> diags;
  HyperState hypers;
  Eigen::VectorXd freqs;  // covariate grid in frequency mode, empty otherwise

  int edge_count() const { return p * (p - 1) / 2; }

  // index of unordered pair (j,k) in the lexicographic upper triangle
  int edge_index(int j, int k) const {
    if (j > k) std::swap(j, k);
    return j * (2 * p - j - 1) / 2 + (k - j - 1);
  }

  EdgeState<Scalar>& edge(int j, int k) { return edges[edge_index(j, k)]; }
  const EdgeState<Scalar>& edge(int j, int k) const { return edges[edge_index(j, k)]; }
};

using TimeModel = VariationalModel<double>;
using FrequencyModel = VariationalModel<std::complex<double>>;

// Neutral starting point: undecided spikes, zero-mean unit-variance slabs,
// diagonals matched to the per-variable sample scale, unit-mean smoothness
// posteriors, and near-uniform Beta posteriors. The smoothness priors need at
// least two covariate points; N = 1 is rejected here.
template <class Scalar>
inline VariationalModel<Scalar> make_initial_model(int p, int n, Domain domain,
                                                   const Eigen::VectorXd& column_variance) {
  if (n < 2) throw std::invalid_argument("make_initial_model: at least two covariate points required");
  if (p < 1) throw std::invalid_argument("make_initial_model: p must be >= 1");
  if (column_variance.size() != p)
    throw std::invalid_argument("make_initial_model: column_variance must have length p");

  constexpr int comps = ScalarTraits<Scalar>::components;
  VariationalModel<Scalar> m;
  m.p = p;
  m.n = n;
  m.domain_tag = domain;

  m.edges.resize(m.edge_count());
  const double alpha_shape = 0.5 * comps * (n - 1);
  for (auto& e : m.edges) {
    e.s_marginal = Eigen::VectorXd::Constant(n, 0.5);
    e.s_pairwise = Eigen::Matrix<double, Eigen::Dynamic, 4>::Constant(n - 1, 4, 0.25);
    e.j_mean = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
    e.j_var = Eigen::VectorXd::Ones(n);
    e.j_lag_cov = Eigen::VectorXd::Zero(n - 1);
    e.alpha_shape = alpha_shape;
    e.alpha_rate = alpha_shape;  // <alpha> = 1
  }

  m.diags.resize(p);
  const double init_var = 0.1;
  for (int j = 0; j < p; ++j) {
    DiagState& d = m.diags[j];
    const double cv = std::max(column_variance(j), 1e-12);
    const double mean = -std::log(cv);
    d.chain.omega_diag = Eigen::VectorXd::Constant(n, 1.0 / init_var);
    d.chain.omega_off = Eigen::VectorXd::Zero(n - 1);
    d.chain.potential = Eigen::VectorXd::Constant(n, mean / init_var);
    chains::gauss_chain_infer(d.chain, d.beliefs);
    d.refresh_exp();
  }

  const double eps = 1e-3;
  m.hypers.pi1_a = 1.0 + eps;
  m.hypers.pi1_b = 1.0 + eps;
  m.hypers.a00_c = 1.0 + eps;
  m.hypers.a00_d = 1.0 + eps;
  m.hypers.a11_c = 1.0 + eps;
  m.hypers.a11_d = 1.0 + eps;
  m.hypers.beta_shape = 0.5 * p * (n - 1);
  m.hypers.beta_rate = m.hypers.beta_shape;  // <beta> = 1
  hyper_expectations(m.hypers);
  return m;
}

}  // namespace badge

#endif  // BADGE_MODEL_HPP
