#ifndef BADGE_ENGINE_HPP
#define BADGE_ENGINE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "badge/anneal.hpp"
#include "badge/chains.hpp"
#include "badge/data.hpp"
#include "badge/model.hpp"

// The coordinate-ascent loop: ELBO evaluation, the edge/diagonal/hyper
// update rules, the O(N P^2) incremental predictor cache, backtracking line
// search for the non-conjugate diagonal chains, missing-data imputation and
// convergence control. Everything is templated on the data scalar so the
// same machinery drives the time-domain (real) and frequency-domain
// (complex pseudo-likelihood) fits.

namespace badge {

struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitConfig {
  int max_iters = 1000;
  int anneal_iters = 500;
  double elbo_rel_tol = 1e-6;
  double graph_threshold = 0.5;
  double line_search_shrink = 0.5;
  int line_search_max_steps = 20;
  std::uint64_t rng_seed = 0;
};

// Observation expectations the updates consume. Observed slots carry the
// datum with zero variance; masked slots carry the moments of their Gaussian
// variational factor, refreshed by update_missing_values.
template <class Scalar>
struct DataMoments {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> xbar;  // <x>
  Eigen::MatrixXd x2bar;                                       // <|x|^2>
  Eigen::MatrixXd xvar;                                        // Var(x), 0 when observed
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> missing_slots;  // (t, j)
  std::vector<Eigen::Index> fully_missing_rows;

  Eigen::Index rows() const { return xbar.rows(); }
  Eigen::Index cols() const { return xbar.cols(); }
  bool has_missing() const { return !missing_slots.empty(); }
};

// Missing slots start at the standard normal factor; rows with no observed
// entry at all stay pinned there.
inline DataMoments<double> make_data_moments(const ObservationSet& data) {
  data.require_consistent();
  DataMoments<double> m;
  const Eigen::Index n = data.rows(), p = data.cols();
  m.xbar = data.values;
  m.xvar = Eigen::MatrixXd::Zero(n, p);
  m.mask = data.mask;
  for (Eigen::Index t = 0; t < n; ++t) {
    const bool row_empty = !data.mask.row(t).any();
    if (row_empty) m.fully_missing_rows.push_back(t);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!data.mask(t, j)) {
        m.xbar(t, j) = 0.0;
        m.xvar(t, j) = 1.0;
        if (!row_empty) m.missing_slots.emplace_back(t, j);
      }
    }
  }
  m.x2bar = m.xbar.cwiseAbs2() + m.xvar;
  return m;
}

// Row-wise gather for the bootstrap sweeps.
template <class Scalar>
inline DataMoments<Scalar> gather_rows(const DataMoments<Scalar>& src,
                                       const std::vector<Eigen::Index>& idx) {
  DataMoments<Scalar> out;
  const Eigen::Index n = src.rows(), p = src.cols();
  out.xbar.resize(n, p);
  out.x2bar.resize(n, p);
  out.xvar.resize(n, p);
  out.mask.resize(n, p);
  for (Eigen::Index t = 0; t < n; ++t) {
    out.xbar.row(t) = src.xbar.row(idx[t]);
    out.x2bar.row(t) = src.x2bar.row(idx[t]);
    out.xvar.row(t) = src.xvar.row(idx[t]);
    out.mask.row(t) = src.mask.row(idx[t]);
  }
  return out;
}

// r_j^(t) = sum_{k != j} <K_jk^(t)> <x_k^(t)>, maintained incrementally by
// the edge updates so each exclusion product costs O(1).
template <class Scalar>
struct PredictorCache {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> r;  // N x P

  double max_abs_diff(const PredictorCache& other) const {
    return (r - other.r).cwiseAbs().maxCoeff();
  }
};

template <class Scalar>
inline PredictorCache<Scalar> rebuild_cache(const VariationalModel<Scalar>& model,
                                            const DataMoments<Scalar>& data) {
  PredictorCache<Scalar> cache;
  const Eigen::Index n = data.rows(), p = data.cols();
  cache.r.setZero(n, p);
  for (int j = 0; j < model.p; ++j)
    for (int k = j + 1; k < model.p; ++k) {
      const EdgeState<Scalar>& e = model.edge(j, k);
      for (Eigen::Index t = 0; t < n; ++t) {
        const Scalar km = Scalar(e.s_marginal(t) * e.j_mean(t));
        cache.r(t, j) += km * data.xbar(t, k);
        cache.r(t, k) += ScalarTraits<Scalar>::conj(km) * data.xbar(t, j);
      }
    }
  (void)p;
  return cache;
}

// ---------------------------------------------------------------------------
// sweep context: the quantities a sweep reads, optionally perturbed by the
// annealing driver (bootstrapped data moments, blended hyperparameter terms)

template <class Scalar>
struct SweepContext {
  const DataMoments<Scalar>* data = nullptr;
  double log_pi1 = 0, log_1m_pi1 = 0;
  double log_a00 = 0, log_1m_a00 = 0;
  double log_a11 = 0, log_1m_a11 = 0;
  double beta_mean = 1.0;
  Eigen::VectorXd alpha_means;  // per edge, resolved at sweep start

  double alpha_for(int edge_idx) const { return alpha_means(edge_idx); }
};

template <class Scalar>
inline SweepContext<Scalar> make_context(const VariationalModel<Scalar>& model,
                                         const DataMoments<Scalar>& data) {
  SweepContext<Scalar> ctx;
  ctx.data = &data;
  const HyperState& h = model.hypers;
  ctx.log_pi1 = h.log_pi1;
  ctx.log_1m_pi1 = h.log_1m_pi1;
  ctx.log_a00 = h.log_a00;
  ctx.log_1m_a00 = h.log_1m_a00;
  ctx.log_a11 = h.log_a11;
  ctx.log_1m_a11 = h.log_1m_a11;
  ctx.beta_mean = h.beta_mean;
  ctx.alpha_means.resize(static_cast<Eigen::Index>(model.edges.size()));
  for (std::size_t e = 0; e < model.edges.size(); ++e)
    ctx.alpha_means(static_cast<Eigen::Index>(e)) = model.edges[e].alpha_mean();
  return ctx;
}

// Blend R * posterior-mean term + (1 - R) * term at the sampled point.
template <class Scalar>
inline SweepContext<Scalar> make_perturbed_context(const VariationalModel<Scalar>& model,
                                                   const DataMoments<Scalar>& bootstrapped,
                                                   const HyperSample& sample, double rate) {
  SweepContext<Scalar> ctx = make_context(model, bootstrapped);
  ctx.data = &bootstrapped;
  const double r = rate, q = 1.0 - rate;
  auto blend = [&](double mean_term, double sampled) { return r * mean_term + q * sampled; };
  ctx.log_pi1 = blend(model.hypers.log_pi1, std::log(sample.pi1));
  ctx.log_1m_pi1 = blend(model.hypers.log_1m_pi1, std::log1p(-sample.pi1));
  ctx.log_a00 = blend(model.hypers.log_a00, std::log(sample.a00));
  ctx.log_1m_a00 = blend(model.hypers.log_1m_a00, std::log1p(-sample.a00));
  ctx.log_a11 = blend(model.hypers.log_a11, std::log(sample.a11));
  ctx.log_1m_a11 = blend(model.hypers.log_1m_a11, std::log1p(-sample.a11));
  ctx.beta_mean = r * model.hypers.beta_mean + q * sample.beta;
  for (Eigen::Index e = 0; e < ctx.alpha_means.size(); ++e)
    ctx.alpha_means(e) = r * ctx.alpha_means(e) + q * sample.alphas(e);
  return ctx;
}

// ---------------------------------------------------------------------------
// gradients

// (dL1/d<K_jk^(t)>, dL1/d<|K_jk^(t)|^2>) with the own-edge contribution
// removed from the cached predictor products.
template <class Scalar>
inline std::pair<Scalar, double> edge_gradients(const VariationalModel<Scalar>& model,
                                                const PredictorCache<Scalar>& cache,
                                                const DataMoments<Scalar>& data, int j, int k,
                                                Eigen::Index t) {
  using T = ScalarTraits<Scalar>;
  const EdgeState<Scalar>& e = model.edge(j, k);
  const double w = T::data_weight;
  const Scalar km = Scalar(e.s_marginal(t) * e.j_mean(t));
  const Scalar xj = data.xbar(t, j), xk = data.xbar(t, k);
  const double enj = model.diags[j].exp_neg(t), enk = model.diags[k].exp_neg(t);
  const Scalar excl_j = cache.r(t, j) - km * xk;
  const Scalar excl_k = cache.r(t, k) - T::conj(km) * xj;
  const Scalar grad_k = Scalar(-4.0 * w) * xj * T::conj(xk) -
                        Scalar(2.0 * w) * (Scalar(enj) * T::conj(xk) * excl_j +
                                           Scalar(enk) * xj * T::conj(excl_k));
  const double grad_k2 = -w * (enj * data.x2bar(t, k) + enk * data.x2bar(t, j));
  return {grad_k, grad_k2};
}

namespace detail {

struct SweepStats {
  long spd_jitter_events = 0;
  long stalled_coordinates = 0;
  bool moment_overflow = false;
};

// Adds escalating diagonal jitter 1e-8 * (1 + |Omega_tt|) until the
// tridiagonal solve succeeds.
inline bool solve_with_jitter(chains::GaussChainParams& params, chains::GaussChainBeliefs& out,
                              SweepStats& stats) {
  if (chains::gauss_chain_try_infer(params, out)) return true;
  double scale = 1.0;
  for (int attempt = 0; attempt < 60; ++attempt) {
    ++stats.spd_jitter_events;
    params.omega_diag.array() += scale * 1e-8 * (1.0 + params.omega_diag.array().abs());
    if (chains::gauss_chain_try_infer(params, out)) return true;
    scale *= 2.0;
  }
  return false;
}

// Entropy of the spike chain from its beliefs via the tree factorization
// H = sum_t H(s_{t-1}, s_t) - sum over interior t of H(s_t).
inline double binary_chain_entropy_from_moments(
    const Eigen::VectorXd& marginal, const Eigen::Matrix<double, Eigen::Dynamic, 4>& pairwise) {
  const Eigen::Index n = marginal.size();
  auto plogp = [](double p) { return p > 1e-300 ? p * std::log(p) : 0.0; };
  if (n == 1) return -plogp(marginal(0)) - plogp(1.0 - marginal(0));
  double h = 0.0;
  for (Eigen::Index t = 0; t < n - 1; ++t)
    for (int c = 0; c < 4; ++c) h -= plogp(pairwise(t, c));
  for (Eigen::Index t = 1; t < n - 1; ++t) h += plogp(marginal(t)) + plogp(1.0 - marginal(t));
  return h;
}

template <class Scalar>
struct EdgeWorkspace {
  chains::BinaryChainPotentials spike_pot;
  chains::BinaryChainBeliefs spike_bel;
  chains::GaussChainParams slab_params;
  chains::GaussChainBeliefs slab_bel;
  Eigen::VectorXd slab_pot_im;
  Eigen::VectorXd slab_mean_im;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad_k;
  Eigen::VectorXd grad_k2;
};

// The smoothness posteriors diverge on signal-free chains (flat slab, Gamma
// mean growing without bound); capping their means far above the informative
// scale ~N^2 keeps the chain precisions inside the representable range.
constexpr double kSmoothnessMeanCap = 1e8;

inline double capped_rate(double rate, double shape) {
  return std::max(rate, shape / kSmoothnessMeanCap);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// edge update: refresh q(s), then q(J), then q(alpha) for one pair, and
// restore the cache rows with the new <K>.

template <class Scalar>
inline void update_edge_chain_ctx(VariationalModel<Scalar>& model, PredictorCache<Scalar>& cache,
                                  const SweepContext<Scalar>& ctx, int j, int k,
                                  detail::EdgeWorkspace<Scalar>& ws, detail::SweepStats& stats) {
  using T = ScalarTraits<Scalar>;
  constexpr int comps = T::components;
  const DataMoments<Scalar>& data = *ctx.data;
  const Eigen::Index n = data.rows();
  const double w = T::data_weight;
  EdgeState<Scalar>& e = model.edge(j, k);
  const int eidx = model.edge_index(j, k);
  const Eigen::VectorXd& enj = model.diags[j].exp_neg;
  const Eigen::VectorXd& enk = model.diags[k].exp_neg;

  // exclude this edge from the cached products, then form the gradients
  ws.grad_k.resize(n);
  ws.grad_k2.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Scalar km = Scalar(e.s_marginal(t) * e.j_mean(t));
    const Scalar xj = data.xbar(t, j), xk = data.xbar(t, k);
    cache.r(t, j) -= km * xk;
    cache.r(t, k) -= T::conj(km) * xj;
    ws.grad_k(t) = Scalar(-4.0 * w) * xj * T::conj(xk) -
                   Scalar(2.0 * w) * (Scalar(enj(t)) * T::conj(xk) * cache.r(t, j) +
                                      Scalar(enk(t)) * xj * T::conj(cache.r(t, k)));
    ws.grad_k2(t) = -w * (enj(t) * data.x2bar(t, k) + enk(t) * data.x2bar(t, j));
  }

  // spike chain: gradient-weighted slab moments on s = 1, transition log
  // expectations on the edges, initial-state terms at t = 1
  ws.spike_pot.node_logpot.resize(n, 2);
  ws.spike_pot.edge_logpot.resize(n - 1);
  for (Eigen::Index t = 0; t < n; ++t) {
    ws.spike_pot.node_logpot(t, 0) = 0.0;
    ws.spike_pot.node_logpot(t, 1) =
        T::real(T::conj(ws.grad_k(t)) * e.j_mean(t)) + ws.grad_k2(t) * e.slab_second_moment(t);
  }
  ws.spike_pot.node_logpot(0, 0) += ctx.log_1m_pi1;
  ws.spike_pot.node_logpot(0, 1) += ctx.log_pi1;
  for (Eigen::Index t = 0; t < n - 1; ++t) {
    Eigen::Matrix2d& ep = ws.spike_pot.edge_logpot[t];
    ep(0, 0) = ctx.log_a00;
    ep(0, 1) = ctx.log_1m_a00;
    ep(1, 0) = ctx.log_1m_a11;
    ep(1, 1) = ctx.log_a11;
  }
  chains::binary_chain_infer(ws.spike_pot, ws.spike_bel);
  e.s_marginal = ws.spike_bel.marginals.col(1);
  for (Eigen::Index t = 0; t < n - 1; ++t) {
    const Eigen::Matrix2d& q = ws.spike_bel.pairwise[t];
    e.s_pairwise(t, 0) = q(0, 0);
    e.s_pairwise(t, 1) = q(0, 1);
    e.s_pairwise(t, 2) = q(1, 0);
    e.s_pairwise(t, 3) = q(1, 1);
  }

  // slab chain(s): thin-membrane prior plus the gradient terms scaled by the
  // fresh spike marginals; real and imaginary parts share the precision
  const double alpha = ctx.alpha_for(eidx);
  ws.slab_params.omega_diag.resize(n);
  ws.slab_params.omega_off = Eigen::VectorXd::Constant(n - 1, -alpha);
  ws.slab_params.potential.resize(n);
  if constexpr (comps == 2) ws.slab_pot_im.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double neighbors = (t == 0 || t == n - 1) ? 1.0 : 2.0;
    ws.slab_params.omega_diag(t) = -2.0 * ws.grad_k2(t) * e.s_marginal(t) + alpha * neighbors;
    const Scalar h = ws.grad_k(t) * Scalar(e.s_marginal(t));
    ws.slab_params.potential(t) = T::real(h);
    if constexpr (comps == 2) ws.slab_pot_im(t) = h.imag();
  }
  if (!detail::solve_with_jitter(ws.slab_params, ws.slab_bel, stats))
    throw numerical_error("update_edge_chain: slab chain precision not positive definite");
  if constexpr (comps == 2) {
    if (!chains::gauss_chain_try_mean(ws.slab_params, ws.slab_pot_im, ws.slab_mean_im))
      throw numerical_error("update_edge_chain: slab chain precision not positive definite");
    for (Eigen::Index t = 0; t < n; ++t)
      e.j_mean(t) = Scalar(ws.slab_bel.mean(t), ws.slab_mean_im(t));
  } else {
    e.j_mean = ws.slab_bel.mean;
  }
  e.j_var = ws.slab_bel.variance;
  e.j_lag_cov = ws.slab_bel.lag_cov;
  e.j_logdet = ws.slab_bel.logdet_precision;

  // smoothness posterior for this pair
  e.alpha_shape = 0.5 * comps * (n - 1);
  e.alpha_rate = detail::capped_rate(0.5 * e.slab_squared_diff_sum(), e.alpha_shape);

  // restore the cache rows with the updated <K>
  for (Eigen::Index t = 0; t < n; ++t) {
    const Scalar km = Scalar(e.s_marginal(t) * e.j_mean(t));
    cache.r(t, j) += km * data.xbar(t, k);
    cache.r(t, k) += T::conj(km) * data.xbar(t, j);
  }
}

template <class Scalar>
inline void update_edge_chain(VariationalModel<Scalar>& model, PredictorCache<Scalar>& cache,
                              const DataMoments<Scalar>& data, int j, int k) {
  detail::EdgeWorkspace<Scalar> ws;
  detail::SweepStats stats;
  const SweepContext<Scalar> ctx = make_context(model, data);
  update_edge_chain_ctx(model, cache, ctx, j, k, ws, stats);
}

namespace detail {

// Coordinate objective for q(s) at fixed q(J): gradient-weighted K moments,
// spike prior expectations, chain entropy.
template <class Scalar>
inline double spike_coordinate_elbo(const Eigen::VectorXd& marginal,
                                    const Eigen::Matrix<double, Eigen::Dynamic, 4>& pairwise,
                                    const EdgeWorkspace<Scalar>& ws,
                                    const EdgeState<Scalar>& e, const SweepContext<Scalar>& ctx) {
  using T = ScalarTraits<Scalar>;
  const Eigen::Index n = marginal.size();
  double f = marginal(0) * ctx.log_pi1 + (1.0 - marginal(0)) * ctx.log_1m_pi1;
  for (Eigen::Index t = 0; t < n; ++t)
    f += marginal(t) *
         (T::real(T::conj(ws.grad_k(t)) * e.j_mean(t)) + ws.grad_k2(t) * e.slab_second_moment(t));
  for (Eigen::Index t = 0; t + 1 < n; ++t)
    f += pairwise(t, 0) * ctx.log_a00 + pairwise(t, 1) * ctx.log_1m_a00 +
         pairwise(t, 2) * ctx.log_1m_a11 + pairwise(t, 3) * ctx.log_a11;
  return f + binary_chain_entropy_from_moments(marginal, pairwise);
}

// Coordinate objective for q(J) at fixed q(s) and q(alpha).
template <class Scalar>
inline double slab_coordinate_elbo(const Eigen::VectorXd& s_marginal,
                                   const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& j_mean,
                                   const Eigen::VectorXd& j_var, const Eigen::VectorXd& j_lag_cov,
                                   double j_logdet, const EdgeWorkspace<Scalar>& ws, double alpha) {
  using T = ScalarTraits<Scalar>;
  constexpr int comps = T::components;
  constexpr double log_2pi_e = 2.8378770664093454835606594728112;
  const Eigen::Index n = s_marginal.size();
  double f = 0.0, diff = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double m2 = T::abs2(j_mean(t)) + comps * j_var(t);
    f += s_marginal(t) * (T::real(T::conj(ws.grad_k(t)) * j_mean(t)) + ws.grad_k2(t) * m2);
  }
  for (Eigen::Index t = 1; t < n; ++t)
    diff += T::abs2(j_mean(t) - j_mean(t - 1)) +
            comps * (j_var(t) + j_var(t - 1) - 2.0 * j_lag_cov(t - 1));
  f -= 0.5 * alpha * diff;
  return f + comps * 0.5 * n * log_2pi_e - 0.5 * comps * j_logdet;
}

}  // namespace detail

// Annealed edge update: the proposals are the conjugate updates driven by
// bootstrapped data and sampled hyperparameters; each chain proposal is then
// accepted or rejected by a Metropolis test of its exact coordinate
// objective on the true data at the current inverse temperature.
template <class Scalar>
inline void update_edge_chain_annealed(VariationalModel<Scalar>& model,
                                       PredictorCache<Scalar>& cache,
                                       PredictorCache<Scalar>& noisy_cache,
                                       const SweepContext<Scalar>& ctx_true,
                                       const SweepContext<Scalar>& ctx_noisy, int j, int k,
                                       double rate, AnnealDriver& driver,
                                       detail::EdgeWorkspace<Scalar>& ws,
                                       detail::EdgeWorkspace<Scalar>& ws_noisy,
                                       detail::SweepStats& stats) {
  using T = ScalarTraits<Scalar>;
  constexpr int comps = T::components;
  const DataMoments<Scalar>& data = *ctx_true.data;
  const DataMoments<Scalar>& booted = *ctx_noisy.data;
  const Eigen::Index n = data.rows();
  const double w = T::data_weight;
  EdgeState<Scalar>& e = model.edge(j, k);
  const int eidx = model.edge_index(j, k);

  // exclude this edge from both caches and form both gradient series
  ws.grad_k.resize(n);
  ws.grad_k2.resize(n);
  ws_noisy.grad_k.resize(n);
  ws_noisy.grad_k2.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Scalar km = Scalar(e.s_marginal(t) * e.j_mean(t));
    const double enj = model.diags[j].exp_neg(t), enk = model.diags[k].exp_neg(t);
    {
      const Scalar xj = data.xbar(t, j), xk = data.xbar(t, k);
      cache.r(t, j) -= km * xk;
      cache.r(t, k) -= T::conj(km) * xj;
      ws.grad_k(t) = Scalar(-4.0 * w) * xj * T::conj(xk) -
                     Scalar(2.0 * w) * (Scalar(enj) * T::conj(xk) * cache.r(t, j) +
                                        Scalar(enk) * xj * T::conj(cache.r(t, k)));
      ws.grad_k2(t) = -w * (enj * data.x2bar(t, k) + enk * data.x2bar(t, j));
    }
    {
      const Scalar xj = booted.xbar(t, j), xk = booted.xbar(t, k);
      noisy_cache.r(t, j) -= km * xk;
      noisy_cache.r(t, k) -= T::conj(km) * xj;
      ws_noisy.grad_k(t) = Scalar(-4.0 * w) * xj * T::conj(xk) -
                           Scalar(2.0 * w) * (Scalar(enj) * T::conj(xk) * noisy_cache.r(t, j) +
                                              Scalar(enk) * xj * T::conj(noisy_cache.r(t, k)));
      ws_noisy.grad_k2(t) = -w * (enj * booted.x2bar(t, k) + enk * booted.x2bar(t, j));
    }
  }

  // spike proposal from the perturbed potentials
  ws.spike_pot.node_logpot.resize(n, 2);
  ws.spike_pot.edge_logpot.resize(n - 1);
  for (Eigen::Index t = 0; t < n; ++t) {
    ws.spike_pot.node_logpot(t, 0) = 0.0;
    ws.spike_pot.node_logpot(t, 1) = T::real(T::conj(ws_noisy.grad_k(t)) * e.j_mean(t)) +
                                     ws_noisy.grad_k2(t) * e.slab_second_moment(t);
  }
  ws.spike_pot.node_logpot(0, 0) += ctx_noisy.log_1m_pi1;
  ws.spike_pot.node_logpot(0, 1) += ctx_noisy.log_pi1;
  for (Eigen::Index t = 0; t < n - 1; ++t) {
    Eigen::Matrix2d& ep = ws.spike_pot.edge_logpot[t];
    ep(0, 0) = ctx_noisy.log_a00;
    ep(0, 1) = ctx_noisy.log_1m_a00;
    ep(1, 0) = ctx_noisy.log_1m_a11;
    ep(1, 1) = ctx_noisy.log_a11;
  }
  chains::binary_chain_infer(ws.spike_pot, ws.spike_bel);
  {
    Eigen::VectorXd marginal = ws.spike_bel.marginals.col(1);
    Eigen::Matrix<double, Eigen::Dynamic, 4> pairwise(n - 1, 4);
    for (Eigen::Index t = 0; t < n - 1; ++t) {
      const Eigen::Matrix2d& q = ws.spike_bel.pairwise[t];
      pairwise(t, 0) = q(0, 0);
      pairwise(t, 1) = q(0, 1);
      pairwise(t, 2) = q(1, 0);
      pairwise(t, 3) = q(1, 1);
    }
    const double f_old = detail::spike_coordinate_elbo(e.s_marginal, e.s_pairwise, ws, e, ctx_true);
    const double f_new = detail::spike_coordinate_elbo(marginal, pairwise, ws, e, ctx_true);
    const bool accepted = metropolis_accept(f_new, f_old, rate, driver.rng);
    driver.record(accepted);
    if (accepted) {
      e.s_marginal = std::move(marginal);
      e.s_pairwise = std::move(pairwise);
    }
  }

  // slab proposal from the perturbed potentials at the committed spikes
  const double alpha_noisy = ctx_noisy.alpha_for(eidx);
  ws.slab_params.omega_diag.resize(n);
  ws.slab_params.omega_off = Eigen::VectorXd::Constant(n - 1, -alpha_noisy);
  ws.slab_params.potential.resize(n);
  if constexpr (comps == 2) ws.slab_pot_im.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double neighbors = (t == 0 || t == n - 1) ? 1.0 : 2.0;
    ws.slab_params.omega_diag(t) =
        -2.0 * ws_noisy.grad_k2(t) * e.s_marginal(t) + alpha_noisy * neighbors;
    const Scalar h = ws_noisy.grad_k(t) * Scalar(e.s_marginal(t));
    ws.slab_params.potential(t) = T::real(h);
    if constexpr (comps == 2) ws.slab_pot_im(t) = h.imag();
  }
  if (detail::solve_with_jitter(ws.slab_params, ws.slab_bel, stats)) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> j_mean;
    bool solved = true;
    if constexpr (comps == 2) {
      if (chains::gauss_chain_try_mean(ws.slab_params, ws.slab_pot_im, ws.slab_mean_im)) {
        j_mean.resize(n);
        for (Eigen::Index t = 0; t < n; ++t)
          j_mean(t) = Scalar(ws.slab_bel.mean(t), ws.slab_mean_im(t));
      } else {
        solved = false;
      }
    } else {
      j_mean = ws.slab_bel.mean;
    }
    if (solved) {
      const double alpha_true = ctx_true.alpha_for(eidx);
      const double f_old = detail::slab_coordinate_elbo(e.s_marginal, e.j_mean, e.j_var,
                                                        e.j_lag_cov, e.j_logdet, ws, alpha_true);
      const double f_new = detail::slab_coordinate_elbo(
          e.s_marginal, j_mean, ws.slab_bel.variance, ws.slab_bel.lag_cov,
          ws.slab_bel.logdet_precision, ws, alpha_true);
      const bool accepted = metropolis_accept(f_new, f_old, rate, driver.rng);
      driver.record(accepted);
      if (accepted) {
        e.j_mean = std::move(j_mean);
        e.j_var = ws.slab_bel.variance;
        e.j_lag_cov = ws.slab_bel.lag_cov;
        e.j_logdet = ws.slab_bel.logdet_precision;
        e.alpha_shape = 0.5 * comps * (n - 1);
        e.alpha_rate = detail::capped_rate(0.5 * e.slab_squared_diff_sum(), e.alpha_shape);
      }
    }
  }

  // restore both caches with the committed <K>
  for (Eigen::Index t = 0; t < n; ++t) {
    const Scalar km = Scalar(e.s_marginal(t) * e.j_mean(t));
    cache.r(t, j) += km * data.xbar(t, k);
    cache.r(t, k) += T::conj(km) * data.xbar(t, j);
    noisy_cache.r(t, j) += km * booted.xbar(t, k);
    noisy_cache.r(t, k) += T::conj(km) * booted.xbar(t, j);
  }
}

// ---------------------------------------------------------------------------
// diagonal update: natural-gradient step on the kappa_j chain with
// backtracking line search on the coordinate objective.

// dL1/d<exp(-kappa_j^(t))>: minus half the expected squared predictor row,
// expanded through the edge variances (and imputation variances when
// present).
template <class Scalar>
inline double diag_quadratic_gradient(const VariationalModel<Scalar>& model,
                                      const PredictorCache<Scalar>& cache,
                                      const DataMoments<Scalar>& data, int j, Eigen::Index t) {
  using T = ScalarTraits<Scalar>;
  double varsum = 0.0;
  for (int k = 0; k < model.p; ++k) {
    if (k == j) continue;
    const EdgeState<Scalar>& e = model.edge(j, k);
    const double s = e.s_marginal(t);
    const double m2 = s * e.slab_second_moment(t);
    const double mk2 = s * s * T::abs2(e.j_mean(t));
    varsum += (m2 - mk2) * T::abs2(data.xbar(t, k)) + m2 * data.xvar(t, k);
  }
  return -T::data_weight * (T::abs2(cache.r(t, j)) + varsum);
}

enum class DiagUpdateStatus { stepped, unchanged, stalled };

template <class Scalar>
inline DiagUpdateStatus update_diag_chain_ctx(VariationalModel<Scalar>& model,
                                              const PredictorCache<Scalar>& cache,
                                              const SweepContext<Scalar>& ctx, int j,
                                              std::optional<double> rho, double shrink,
                                              int max_steps, detail::SweepStats& stats) {
  using T = ScalarTraits<Scalar>;
  const DataMoments<Scalar>& data = *ctx.data;
  const Eigen::Index n = data.rows();
  const double w = T::data_weight;
  const double beta = ctx.beta_mean;
  DiagState& d = model.diags[j];

  Eigen::VectorXd quad_grad(n);
  for (Eigen::Index t = 0; t < n; ++t) quad_grad(t) = diag_quadratic_gradient(model, cache, data, j, t);

  // natural-gradient target in (h, Omega)
  chains::GaussChainParams target;
  target.omega_diag.resize(n);
  target.omega_off = Eigen::VectorXd::Constant(n - 1, -beta);
  target.potential.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double neighbors = (n == 1) ? 0.0 : ((t == 0 || t == n - 1) ? 1.0 : 2.0);
    const double m = d.beliefs.mean(t);
    const double x2 = data.x2bar(t, j);
    target.potential(t) =
        w - w * x2 * d.exp_pos(t) * (1.0 - m) - quad_grad(t) * d.exp_neg(t) * (1.0 + m);
    target.omega_diag(t) = beta * neighbors + w * x2 * d.exp_pos(t) - quad_grad(t) * d.exp_neg(t);
  }
  {
    chains::GaussChainBeliefs probe;
    if (!detail::solve_with_jitter(target, probe, stats))
      throw numerical_error("update_diag_chain: target precision not positive definite");
  }

  // coordinate objective: data terms + thin-membrane penalty + entropy
  const auto objective = [&](const chains::GaussChainBeliefs& b, const Eigen::VectorXd& ep,
                             const Eigen::VectorXd& en) {
    double f = 0.0;
    for (Eigen::Index t = 0; t < n; ++t)
      f += w * b.mean(t) - w * data.x2bar(t, j) * ep(t) + quad_grad(t) * en(t);
    f -= 0.5 * beta * chains::squared_difference_sum(b);
    f += chains::gauss_chain_entropy(b);
    return f;
  };
  const double f_old = objective(d.beliefs, d.exp_pos, d.exp_neg);

  chains::GaussChainParams blend;
  chains::GaussChainBeliefs bel;
  Eigen::VectorXd ep(n), en(n);
  const auto apply_step = [&](double step) -> bool {
    blend.omega_diag = (1.0 - step) * d.chain.omega_diag + step * target.omega_diag;
    blend.omega_off = (1.0 - step) * d.chain.omega_off + step * target.omega_off;
    blend.potential = (1.0 - step) * d.chain.potential + step * target.potential;
    if (!chains::gauss_chain_try_infer(blend, bel)) return false;
    for (Eigen::Index t = 0; t < n; ++t) {
      const LogNormalMoments lm = lognormal_moments(bel.mean(t), bel.variance(t));
      ep(t) = lm.exp_pos;
      en(t) = lm.exp_neg;
      stats.moment_overflow = stats.moment_overflow || lm.overflowed;
    }
    return true;
  };
  const auto commit = [&]() {
    d.chain = blend;
    d.beliefs = bel;
    d.exp_pos = ep;
    d.exp_neg = en;
  };

  if (rho.has_value()) {
    if (*rho == 0.0) return DiagUpdateStatus::unchanged;
    if (!apply_step(*rho)) {
      ++stats.stalled_coordinates;
      return DiagUpdateStatus::stalled;
    }
    commit();
    return DiagUpdateStatus::stepped;
  }

  double step = 1.0;
  const double slack = 1e-12 * (1.0 + std::abs(f_old));
  for (int i = 0; i < max_steps; ++i, step *= shrink) {
    if (!apply_step(step)) continue;
    if (objective(bel, ep, en) >= f_old - slack) {
      commit();
      return DiagUpdateStatus::stepped;
    }
  }
  ++stats.stalled_coordinates;
  return DiagUpdateStatus::stalled;
}

template <class Scalar>
inline DiagUpdateStatus update_diag_chain(VariationalModel<Scalar>& model,
                                          const PredictorCache<Scalar>& cache,
                                          const DataMoments<Scalar>& data, int j,
                                          std::optional<double> rho = std::nullopt,
                                          double shrink = 0.5, int max_steps = 20) {
  detail::SweepStats stats;
  const SweepContext<Scalar> ctx = make_context(model, data);
  return update_diag_chain_ctx(model, cache, ctx, j, rho, shrink, max_steps, stats);
}

// Annealed diagonal update: the natural-gradient target is built from the
// bootstrapped data and blended hyperparameters, the step size is chosen by
// line search on the perturbed coordinate objective, and the resulting
// proposal faces a Metropolis test on the true coordinate objective.
template <class Scalar>
inline void update_diag_chain_annealed(VariationalModel<Scalar>& model,
                                       const PredictorCache<Scalar>& cache,
                                       const PredictorCache<Scalar>& noisy_cache,
                                       const SweepContext<Scalar>& ctx_true,
                                       const SweepContext<Scalar>& ctx_noisy, int j, double rate,
                                       AnnealDriver& driver, double shrink, int max_steps,
                                       detail::SweepStats& stats) {
  using T = ScalarTraits<Scalar>;
  const DataMoments<Scalar>& data = *ctx_true.data;
  const DataMoments<Scalar>& booted = *ctx_noisy.data;
  const Eigen::Index n = data.rows();
  const double w = T::data_weight;
  DiagState& d = model.diags[j];

  Eigen::VectorXd quad_true(n), quad_noisy(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    quad_true(t) = diag_quadratic_gradient(model, cache, data, j, t);
    quad_noisy(t) = diag_quadratic_gradient(model, noisy_cache, booted, j, t);
  }

  const double beta_noisy = ctx_noisy.beta_mean;
  chains::GaussChainParams target;
  target.omega_diag.resize(n);
  target.omega_off = Eigen::VectorXd::Constant(n - 1, -beta_noisy);
  target.potential.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double neighbors = (t == 0 || t == n - 1) ? 1.0 : 2.0;
    const double m = d.beliefs.mean(t);
    const double x2 = booted.x2bar(t, j);
    target.potential(t) =
        w - w * x2 * d.exp_pos(t) * (1.0 - m) - quad_noisy(t) * d.exp_neg(t) * (1.0 + m);
    target.omega_diag(t) =
        beta_noisy * neighbors + w * x2 * d.exp_pos(t) - quad_noisy(t) * d.exp_neg(t);
  }
  {
    chains::GaussChainBeliefs probe;
    if (!detail::solve_with_jitter(target, probe, stats)) {
      driver.record(false);
      return;
    }
  }

  const auto objective = [&](const chains::GaussChainBeliefs& b, const Eigen::VectorXd& ep,
                             const Eigen::VectorXd& en, const Eigen::VectorXd& quad,
                             const Eigen::MatrixXd& x2bar, double beta) {
    double f = 0.0;
    for (Eigen::Index t = 0; t < n; ++t)
      f += w * b.mean(t) - w * x2bar(t, j) * ep(t) + quad(t) * en(t);
    f -= 0.5 * beta * chains::squared_difference_sum(b);
    f += chains::gauss_chain_entropy(b);
    return f;
  };

  const double f_noisy_old =
      objective(d.beliefs, d.exp_pos, d.exp_neg, quad_noisy, booted.x2bar, beta_noisy);
  chains::GaussChainParams blend;
  chains::GaussChainBeliefs bel;
  Eigen::VectorXd ep(n), en(n);
  double step = 1.0;
  bool found = false;
  const double slack = 1e-12 * (1.0 + std::abs(f_noisy_old));
  for (int i = 0; i < max_steps; ++i, step *= shrink) {
    blend.omega_diag = (1.0 - step) * d.chain.omega_diag + step * target.omega_diag;
    blend.omega_off = (1.0 - step) * d.chain.omega_off + step * target.omega_off;
    blend.potential = (1.0 - step) * d.chain.potential + step * target.potential;
    if (!chains::gauss_chain_try_infer(blend, bel)) continue;
    for (Eigen::Index t = 0; t < n; ++t) {
      const LogNormalMoments lm = lognormal_moments(bel.mean(t), bel.variance(t));
      ep(t) = lm.exp_pos;
      en(t) = lm.exp_neg;
      stats.moment_overflow = stats.moment_overflow || lm.overflowed;
    }
    if (objective(bel, ep, en, quad_noisy, booted.x2bar, beta_noisy) >= f_noisy_old - slack) {
      found = true;
      break;
    }
  }
  if (!found) {
    ++stats.stalled_coordinates;
    driver.record(false);
    return;
  }

  const double beta_true = ctx_true.beta_mean;
  const double f_true_old =
      objective(d.beliefs, d.exp_pos, d.exp_neg, quad_true, data.x2bar, beta_true);
  const double f_true_new = objective(bel, ep, en, quad_true, data.x2bar, beta_true);
  const bool accepted = metropolis_accept(f_true_new, f_true_old, rate, driver.rng);
  driver.record(accepted);
  if (accepted) {
    d.chain = blend;
    d.beliefs = bel;
    d.exp_pos = ep;
    d.exp_neg = en;
  }
}

// ---------------------------------------------------------------------------
// shared hyperparameters

// Conjugate Beta updates from the first-state and pooled pairwise beliefs,
// the Gamma update for the diagonal smoothness, and a refresh of every
// per-edge smoothness posterior and cached expectation.
template <class Scalar>
inline void update_hyperparameters(VariationalModel<Scalar>& model) {
  constexpr int comps = ScalarTraits<Scalar>::components;
  HyperState& h = model.hypers;
  const Eigen::Index n = model.n;
  double s1 = 0.0, p00 = 0.0, p01 = 0.0, p10 = 0.0, p11 = 0.0;
  for (auto& e : model.edges) {
    s1 += e.s_marginal(0);
    p00 += e.s_pairwise.col(0).sum();
    p01 += e.s_pairwise.col(1).sum();
    p10 += e.s_pairwise.col(2).sum();
    p11 += e.s_pairwise.col(3).sum();
    e.alpha_shape = 0.5 * comps * (n - 1);
    e.alpha_rate = detail::capped_rate(0.5 * e.slab_squared_diff_sum(), e.alpha_shape);
  }
  h.pi1_a = 1.0 + s1;
  h.pi1_b = 1.0 + (static_cast<double>(model.edges.size()) - s1);
  h.a00_c = 1.0 + p00;
  h.a00_d = 1.0 + p01;
  h.a11_c = 1.0 + p11;
  h.a11_d = 1.0 + p10;

  double kappa_diff = 0.0;
  for (const auto& d : model.diags) kappa_diff += chains::squared_difference_sum(d.beliefs);
  h.beta_shape = 0.5 * model.p * (n - 1);
  h.beta_rate = detail::capped_rate(0.5 * kappa_diff, h.beta_shape);
  hyper_expectations(h);
}

// ---------------------------------------------------------------------------
// missing data

// Mean-field Gaussian coordinate update for one masked slot: collect from
// the data terms everything quadratic/linear in x_j^(t) with all other
// quantities at their expectations.
template <class Scalar>
inline void update_missing_values(VariationalModel<Scalar>& model, PredictorCache<Scalar>& cache,
                                  DataMoments<Scalar>& data) {
  static_assert(ScalarTraits<Scalar>::components == 1,
                "missing-data imputation is defined for the time-domain model");
  for (const auto& [t, j] : data.missing_slots) {
    const DiagState& dj = model.diags[j];
    double omega = dj.exp_pos(t);
    double eta = -2.0 * cache.r(t, j);
    for (int k = 0; k < model.p; ++k) {
      if (k == j) continue;
      const EdgeState<Scalar>& e = model.edge(j, k);
      const double mk = e.s_marginal(t) * ScalarTraits<Scalar>::real(e.j_mean(t));
      const double m2k = e.s_marginal(t) * e.slab_second_moment(t);
      const double enk = model.diags[k].exp_neg(t);
      omega += enk * m2k;
      eta -= enk * mk * (ScalarTraits<Scalar>::real(cache.r(t, k)) - mk * data.xbar(t, j));
    }
    const double mean = eta / omega;
    const double var = 1.0 / omega;
    const double delta = mean - data.xbar(t, j);
    data.xbar(t, j) = mean;
    data.xvar(t, j) = var;
    data.x2bar(t, j) = mean * mean + var;
    for (int k = 0; k < model.p; ++k) {
      if (k == j) continue;
      const EdgeState<Scalar>& e = model.edge(j, k);
      cache.r(t, k) += e.s_marginal(t) * ScalarTraits<Scalar>::real(e.j_mean(t)) * delta;
    }
  }
}

// ---------------------------------------------------------------------------
// ELBO

struct ElboTerms {
  double data_terms = 0.0;
  double spike_terms = 0.0;
  double smoothness_terms = 0.0;
  double gamma_log_terms = 0.0;
  double entropy_terms = 0.0;
  double missing_entropy = 0.0;

  double total() const {
    return data_terms + spike_terms + smoothness_terms + gamma_log_terms + entropy_terms +
           missing_entropy;
  }
};

namespace detail {

inline double gamma_entropy(double shape, double rate) {
  return shape - std::log(rate) + std::lgamma(shape) + (1.0 - shape) * boost::math::digamma(shape);
}

inline double beta_entropy(double a, double b) {
  using boost::math::digamma;
  const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return log_beta - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) +
         (a + b - 2.0) * digamma(a + b);
}

inline double gamma_log_expectation(double shape, double rate) {
  return boost::math::digamma(shape) - std::log(rate);
}

inline void require_finite(double value, const char* term) {
  if (!std::isfinite(value))
    throw numerical_error(std::string("compute_elbo: non-finite ") + term + " term");
}

}  // namespace detail

// Full variational objective up to a model-independent additive constant:
// pseudo-likelihood data terms, spike prior terms, thin-membrane quadratic
// terms, the Gamma log terms from the smoothness priors, and the entropies
// of every variational factor.
template <class Scalar>
inline ElboTerms compute_elbo(const VariationalModel<Scalar>& model,
                              const DataMoments<Scalar>& data) {
  using T = ScalarTraits<Scalar>;
  constexpr int comps = T::components;
  const double w = T::data_weight;
  const Eigen::Index n = data.rows();
  ElboTerms out;

  const PredictorCache<Scalar> cache = rebuild_cache(model, data);
  for (int j = 0; j < model.p; ++j) {
    const DiagState& d = model.diags[j];
    for (Eigen::Index t = 0; t < n; ++t) {
      const double quad = diag_quadratic_gradient(model, cache, data, j, t);
      out.data_terms += w * d.beliefs.mean(t) - w * data.x2bar(t, j) * d.exp_pos(t) -
                        2.0 * w * T::real(T::conj(data.xbar(t, j)) * cache.r(t, j)) +
                        quad * d.exp_neg(t);
    }
  }
  detail::require_finite(out.data_terms, "data");

  const HyperState& h = model.hypers;
  for (const auto& e : model.edges) {
    out.spike_terms += e.s_marginal(0) * h.log_pi1 + (1.0 - e.s_marginal(0)) * h.log_1m_pi1;
    for (Eigen::Index t = 0; t < n - 1; ++t)
      out.spike_terms += e.s_pairwise(t, 0) * h.log_a00 + e.s_pairwise(t, 1) * h.log_1m_a00 +
                         e.s_pairwise(t, 2) * h.log_1m_a11 + e.s_pairwise(t, 3) * h.log_a11;
    out.smoothness_terms -= 0.5 * e.alpha_mean() * e.slab_squared_diff_sum();
    out.gamma_log_terms += (0.5 * comps * (n - 1) - 1.0) *
                           detail::gamma_log_expectation(e.alpha_shape, e.alpha_rate);
    out.entropy_terms += detail::binary_chain_entropy_from_moments(e.s_marginal, e.s_pairwise);
    // slab chain entropy from the cached precision log-determinant; the
    // moment route cancels catastrophically on near-improper prior-only
    // chains of spiked-out edges
    constexpr double log_2pi_e = 2.8378770664093454835606594728112;
    out.entropy_terms += comps * (0.5 * n * log_2pi_e - 0.5 * e.j_logdet);
    out.entropy_terms += detail::gamma_entropy(e.alpha_shape, e.alpha_rate);
  }
  detail::require_finite(out.spike_terms, "spike");

  for (const auto& d : model.diags) {
    out.smoothness_terms -= 0.5 * h.beta_mean * chains::squared_difference_sum(d.beliefs);
    out.entropy_terms += chains::gauss_chain_entropy(d.beliefs);
  }
  out.gamma_log_terms += (0.5 * model.p * (n - 1) - 1.0) *
                         detail::gamma_log_expectation(h.beta_shape, h.beta_rate);
  out.entropy_terms += detail::beta_entropy(h.pi1_a, h.pi1_b) +
                       detail::beta_entropy(h.a00_c, h.a00_d) +
                       detail::beta_entropy(h.a11_c, h.a11_d) +
                       detail::gamma_entropy(h.beta_shape, h.beta_rate);
  detail::require_finite(out.smoothness_terms, "smoothness");
  detail::require_finite(out.gamma_log_terms, "gamma-log");
  detail::require_finite(out.entropy_terms, "entropy");

  if constexpr (comps == 1) {
    constexpr double log_2pi_e = 2.8378770664093454835606594728112;
    for (Eigen::Index t = 0; t < n; ++t)
      for (Eigen::Index j = 0; j < data.cols(); ++j)
        if (!data.mask(t, j)) out.missing_entropy += 0.5 * (log_2pi_e + std::log(data.xvar(t, j)));
    detail::require_finite(out.missing_entropy, "missing-entropy");
  }
  return out;
}

// ---------------------------------------------------------------------------
// fit loop

template <class Scalar>
struct FitResult {
  VariationalModel<Scalar> model;
  std::vector<double> elbo_trace;     // initial value followed by one entry per sweep
  std::vector<double> accepted_trace; // per-sweep fraction of accepted proposals
  std::vector<double> rate_trace;
  int iterations_run = 0;
  bool converged = false;
  double anneal_acceptance_rate = 0.0;
  double wall_time_seconds = 0.0;
  long spd_jitter_events = 0;
  long stalled_coordinates = 0;
};

// Observer invoked after every sweep with the live incremental cache and the
// effective data it was maintained against (diagnostics and audits).
template <class Scalar>
using SweepObserver = std::function<void(int iter, const VariationalModel<Scalar>&,
                                         const PredictorCache<Scalar>&, const DataMoments<Scalar>&)>;

namespace detail {

template <class Scalar>
inline void run_sweep(VariationalModel<Scalar>& model, PredictorCache<Scalar>& cache,
                      const SweepContext<Scalar>& ctx, const FitConfig& cfg,
                      EdgeWorkspace<Scalar>& ws, SweepStats& stats) {
  for (int j = 0; j < model.p; ++j)
    for (int k = j + 1; k < model.p; ++k) update_edge_chain_ctx(model, cache, ctx, j, k, ws, stats);
  for (int j = 0; j < model.p; ++j)
    update_diag_chain_ctx(model, cache, ctx, j, std::nullopt, cfg.line_search_shrink,
                          cfg.line_search_max_steps, stats);
}

template <class Scalar>
inline FitResult<Scalar> run_fit(VariationalModel<Scalar> model, DataMoments<Scalar> eff,
                                 const FitConfig& cfg, std::optional<AnnealDriver> anneal,
                                 const SweepObserver<Scalar>& observer) {
  const auto t_start = std::chrono::steady_clock::now();
  if (anneal && cfg.max_iters < anneal->n_anneal)
    throw std::invalid_argument("fit: max_iters must be >= anneal_iters");

  FitResult<Scalar> result;
  SweepStats stats;
  EdgeWorkspace<Scalar> ws;
  PredictorCache<Scalar> cache = rebuild_cache(model, eff);
  double elbo = compute_elbo(model, eff).total();
  result.elbo_trace.push_back(elbo);

  detail::EdgeWorkspace<Scalar> ws_noisy;
  int iter = 1;
  for (; iter <= cfg.max_iters; ++iter) {
    const bool annealing = anneal.has_value() && iter <= anneal->n_anneal;
    if (annealing) {
      const double rate = anneal->rate_for(iter);
      const HyperSample sample = perturb_hyperparameters(model, anneal->rng);
      const auto idx = bootstrap_indices(eff.rows(), rate, anneal->rng);
      const DataMoments<Scalar> booted = gather_rows(eff, idx);
      const SweepContext<Scalar> ctx_true = make_context(model, eff);
      const SweepContext<Scalar> ctx_noisy = make_perturbed_context(model, booted, sample, rate);
      PredictorCache<Scalar> noisy_cache = rebuild_cache(model, booted);

      const long proposals_before = anneal->proposal_count;
      const long accepted_before = anneal->acceptance_count;
      for (int j = 0; j < model.p; ++j)
        for (int k = j + 1; k < model.p; ++k)
          update_edge_chain_annealed(model, cache, noisy_cache, ctx_true, ctx_noisy, j, k, rate,
                                     *anneal, ws, ws_noisy, stats);
      for (int j = 0; j < model.p; ++j)
        update_diag_chain_annealed(model, cache, noisy_cache, ctx_true, ctx_noisy, j, rate,
                                   *anneal, cfg.line_search_shrink, cfg.line_search_max_steps,
                                   stats);
      update_hyperparameters(model);
      if constexpr (ScalarTraits<Scalar>::components == 1) {
        if (eff.has_missing()) update_missing_values(model, cache, eff);
      }
      elbo = compute_elbo(model, eff).total();
      result.elbo_trace.push_back(elbo);
      const long proposals = anneal->proposal_count - proposals_before;
      const long accepted = anneal->acceptance_count - accepted_before;
      result.accepted_trace.push_back(proposals > 0 ? static_cast<double>(accepted) / proposals
                                                    : 1.0);
      result.rate_trace.push_back(rate);
      if (observer) observer(iter, model, cache, eff);
    } else {
      const SweepContext<Scalar> ctx = make_context(model, eff);
      run_sweep(model, cache, ctx, cfg, ws, stats);
      update_hyperparameters(model);
      if constexpr (ScalarTraits<Scalar>::components == 1) {
        if (eff.has_missing()) update_missing_values(model, cache, eff);
      }
      const double elbo_new = compute_elbo(model, eff).total();
      result.elbo_trace.push_back(elbo_new);
      result.accepted_trace.push_back(1.0);
      result.rate_trace.push_back(1.0);
      if (observer) observer(iter, model, cache, eff);
      const bool converged = std::abs(elbo_new - elbo) <= cfg.elbo_rel_tol * std::max(1.0, std::abs(elbo));
      elbo = elbo_new;
      if (converged) {
        result.converged = true;
        ++iter;
        break;
      }
    }
  }

  result.iterations_run = std::min(iter - 1, cfg.max_iters);
  result.anneal_acceptance_rate = anneal ? anneal->acceptance_rate() : 0.0;
  result.spd_jitter_events = stats.spd_jitter_events;
  result.stalled_coordinates = stats.stalled_coordinates;
  result.model = std::move(model);
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace detail

// Full coordinate-ascent fit on time-domain observations. The data should be
// standardized first (the CLI does this); the initial diagonal chains are
// matched to the per-variable sample scale either way.
inline FitResult<double> fit(const ObservationSet& data, const FitConfig& cfg,
                             std::optional<AnnealDriver> anneal = std::nullopt,
                             const SweepObserver<double>& observer = {}) {
  if (data.rows() < 2 || data.cols() < 2)
    throw std::invalid_argument("fit: need at least 2 variables and 2 time points");
  DataMoments<double> eff = make_data_moments(data);
  Eigen::VectorXd col_var(data.cols());
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    double sum = 0.0, ss = 0.0;
    long count = 0;
    for (Eigen::Index t = 0; t < data.rows(); ++t)
      if (data.mask(t, j)) {
        sum += data.values(t, j);
        ++count;
      }
    const double mean = count > 0 ? sum / count : 0.0;
    for (Eigen::Index t = 0; t < data.rows(); ++t)
      if (data.mask(t, j)) {
        const double d = data.values(t, j) - mean;
        ss += d * d;
      }
    col_var(j) = count > 1 ? ss / (count - 1) : 1.0;
  }
  VariationalModel<double> model =
      make_initial_model<double>(static_cast<int>(data.cols()), static_cast<int>(data.rows()),
                                 Domain::time, col_var);
  return detail::run_fit(std::move(model), std::move(eff), cfg, std::move(anneal), observer);
}

}  // namespace badge

#endif  // BADGE_ENGINE_HPP
