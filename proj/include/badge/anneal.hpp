#ifndef BADGE_ANNEAL_HPP
#define BADGE_ANNEAL_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "badge/data.hpp"
#include "badge/model.hpp"
#include "badge/rng.hpp"

// Simulated annealing support for the coordinate-ascent loop: the inverse
// temperature schedule, bootstrap resampling of observations as gradient
// noise, hyperparameter sampling noise, and Metropolis acceptance. All
// operations are reproducible under a fixed seed.

namespace badge {

// R = min(1, 10*floor((iter-1)/10)/n_anneal): starts at 0, rises by
// 10/n_anneal after every completed block of ten iterations, clamps at 1.
inline double annealing_rate(int iter, int n_anneal) {
  if (iter < 1) throw std::invalid_argument("annealing_rate: iter must be >= 1");
  if (n_anneal <= 0) return 1.0;
  const double blocks = static_cast<double>((iter - 1) / 10);
  return std::min(1.0, 10.0 * blocks / static_cast<double>(n_anneal));
}

// Half-width of the bootstrap window; shrinks to zero as R -> 1.
// Rounded half to even for determinism.
inline Eigen::Index bootstrap_halfwidth(double rate, Eigen::Index n) {
  return static_cast<Eigen::Index>(std::nearbyint((1.0 - rate) * static_cast<double>(n) / 2.0));
}

// tau(t) uniform on {t-w, ..., t+w} clamped to {0, ..., n-1}.
inline std::vector<Eigen::Index> bootstrap_indices(Eigen::Index n, double rate, Rng& rng) {
  const Eigen::Index w = bootstrap_halfwidth(rate, n);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t) {
    if (w == 0) {
      idx[t] = t;
      continue;
    }
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - w);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, t + w);
    idx[t] = lo + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  return idx;
}

// Row-wise resample of the observations inside the shrinking window;
// the identity once R = 1.
inline ObservationSet bootstrap_resample(const ObservationSet& data, double rate, Rng& rng) {
  const auto idx = bootstrap_indices(data.rows(), rate, rng);
  ObservationSet out = data;
  for (Eigen::Index t = 0; t < data.rows(); ++t) {
    out.values.row(t) = data.values.row(idx[t]);
    out.mask.row(t) = data.mask.row(idx[t]);
  }
  return out;
}

// One joint draw of (pi1, A00, A11, all alpha_jk, beta) from the current
// Beta/Gamma posteriors.
struct HyperSample {
  double pi1 = 0.5;
  double a00 = 0.5;
  double a11 = 0.5;
  double beta = 1.0;
  Eigen::VectorXd alphas;
};

template <class Scalar>
inline HyperSample perturb_hyperparameters(const VariationalModel<Scalar>& model, Rng& rng) {
  HyperSample s;
  s.pi1 = rng.beta(model.hypers.pi1_a, model.hypers.pi1_b);
  s.a00 = rng.beta(model.hypers.a00_c, model.hypers.a00_d);
  s.a11 = rng.beta(model.hypers.a11_c, model.hypers.a11_d);
  s.beta = rng.gamma(model.hypers.beta_shape, model.hypers.beta_rate);
  s.alphas.resize(static_cast<Eigen::Index>(model.edges.size()));
  for (std::size_t e = 0; e < model.edges.size(); ++e)
    s.alphas(static_cast<Eigen::Index>(e)) =
        rng.gamma(model.edges[e].alpha_shape, model.edges[e].alpha_rate);
  return s;
}

// Accept with probability min{1, exp[(elbo_new - elbo_old)/(1 - R)]};
// at R = 1 the stochastic branch degenerates to pure ascent.
inline bool metropolis_accept(double elbo_new, double elbo_old, double rate, Rng& rng) {
  if (elbo_new >= elbo_old) return true;
  if (rate >= 1.0) return false;
  const double log_p = (elbo_new - elbo_old) / (1.0 - rate);
  return std::log(1.0 - rng.uniform()) < log_p;
}

// Owns the annealing schedule state for one fit.
struct AnnealDriver {
  int n_anneal = 500;
  Rng rng;
  double current_rate = 0.0;
  long acceptance_count = 0;
  long proposal_count = 0;

  AnnealDriver(int n_anneal_, std::uint64_t seed) : n_anneal(n_anneal_), rng(seed) {}

  double rate_for(int iter) {
    current_rate = annealing_rate(iter, n_anneal);
    return current_rate;
  }

  void record(bool accepted) {
    ++proposal_count;
    if (accepted) ++acceptance_count;
  }

  double acceptance_rate() const {
    return proposal_count > 0 ? static_cast<double>(acceptance_count) / proposal_count : 0.0;
  }
};

}  // namespace badge

#endif  // BADGE_ANNEAL_HPP
