#ifndef BADGE_SPECTRAL_HPP
#define BADGE_SPECTRAL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>

#include "badge/engine.hpp"
#include "badge/graph.hpp"

// Frequency-domain mode: normalized DFT of stationary multivariate series,
// the complex-Gaussian pseudo-likelihood fit over the frequency axis, and
// band-level graph extraction by common zero patterns.

namespace badge {

struct SpectralCoefficients {
  Eigen::VectorXd freqs;    // omega_n in (0, pi)
  Eigen::MatrixXcd coeffs;  // N_f x P

  Eigen::Index bins() const { return coeffs.rows(); }
  Eigen::Index cols() const { return coeffs.cols(); }
};

struct FrequencyBand {
  double lo = 0.0;  // Hz (or cycles per sample when sample_rate = 1)
  double hi = 0.0;
  double sample_rate = 1.0;

  void validate() const {
    if (!(0.0 < lo && lo < hi && hi <= sample_rate / 2.0 + 1e-12))
      throw std::invalid_argument("FrequencyBand: need 0 < lo < hi <= sample_rate/2");
  }
};

// f_j(omega_n) = N^{-1/2} sum_t y_j^(t) exp(-i omega_n t) on the interior
// grid omega_n = 2 pi n / N, n = 1..floor((N-1)/2). DC and Nyquist are
// excluded: their coefficients are real and fall outside the circular
// complex-Gaussian model.
inline SpectralCoefficients normalized_dft(const Eigen::MatrixXd& series) {
  const Eigen::Index n = series.rows(), p = series.cols();
  if (n < 5) throw std::invalid_argument("normalized_dft: need at least 5 samples");
  const Eigen::Index nf = (n - 1) / 2;
  SpectralCoefficients out;
  out.freqs.resize(nf);
  out.coeffs.resize(nf, p);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index b = 0; b < nf; ++b) {
    const double omega = 2.0 * M_PI * static_cast<double>(b + 1) / static_cast<double>(n);
    out.freqs(b) = omega;
    // accumulate e^{-i omega t} for t = 1..N by repeated rotation
    const std::complex<double> step(std::cos(omega), -std::sin(omega));
    std::complex<double> phase = step;
    Eigen::RowVectorXcd acc = Eigen::RowVectorXcd::Zero(p);
    for (Eigen::Index t = 0; t < n; ++t) {
      acc += phase * series.row(t);
      phase *= step;
    }
    out.coeffs.row(b) = scale * acc;
  }
  return out;
}

// Whittle-model fit: the engine runs over the frequency axis with the
// complex pseudo-likelihood variant (complex slabs whose real and imaginary
// chains share one smoothness parameter, real diagonal chains, no half
// factors on the data terms).
inline FitResult<std::complex<double>> fit_spectral(const SpectralCoefficients& coeffs,
                                                    const FitConfig& cfg,
                                                    std::optional<AnnealDriver> anneal = std::nullopt,
                                                    const SweepObserver<std::complex<double>>& observer = {}) {
  const Eigen::Index nf = coeffs.bins(), p = coeffs.cols();
  if (nf < 2 || p < 2)
    throw std::invalid_argument("fit_spectral: need at least 2 variables and 2 frequency bins");
  if (!coeffs.coeffs.allFinite()) throw std::invalid_argument("fit_spectral: non-finite coefficients");

  DataMoments<std::complex<double>> eff;
  eff.xbar = coeffs.coeffs;
  eff.x2bar = coeffs.coeffs.cwiseAbs2();
  eff.xvar = Eigen::MatrixXd::Zero(nf, p);
  eff.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nf, p, true);

  Eigen::VectorXd col_power(p);
  for (Eigen::Index j = 0; j < p; ++j) col_power(j) = eff.x2bar.col(j).mean();
  VariationalModel<std::complex<double>> model = make_initial_model<std::complex<double>>(
      static_cast<int>(p), static_cast<int>(nf), Domain::frequency, col_power);
  model.freqs = coeffs.freqs;
  return detail::run_fit(std::move(model), std::move(eff), cfg, std::move(anneal), observer);
}

// Static graph over the whole fitted grid: an edge is present unless it is
// spiked out at every frequency.
template <class Scalar>
inline GraphTrajectory spectral_union_graph(const VariationalModel<Scalar>& model, double threshold) {
  GraphTrajectory g(model.p, 1);
  for (int j = 0; j < model.p; ++j)
    for (int k = j + 1; k < model.p; ++k)
      if (model.edge(j, k).s_marginal.maxCoeff() > threshold) g.set(0, j, k, true);
  return g;
}

// Edge (j,k) present iff max over omega in the band of <s_jk^(omega)>
// exceeds the threshold. Bin n maps to n * sample_rate / N in physical
// units, i.e. omega * sample_rate / (2 pi).
template <class Scalar>
inline GraphTrajectory band_graph(const VariationalModel<Scalar>& model, const FrequencyBand& band,
                                  double threshold) {
  band.validate();
  if (model.freqs.size() != model.n)
    throw std::invalid_argument("band_graph: model carries no frequency grid");
  std::vector<Eigen::Index> bins;
  for (Eigen::Index b = 0; b < model.freqs.size(); ++b) {
    const double hz = model.freqs(b) * band.sample_rate / (2.0 * M_PI);
    if (hz >= band.lo && hz <= band.hi) bins.push_back(b);
  }
  if (bins.empty()) throw std::invalid_argument("band_graph: band does not overlap the fitted grid");
  GraphTrajectory g(model.p, 1);
  for (int j = 0; j < model.p; ++j)
    for (int k = j + 1; k < model.p; ++k) {
      double best = 0.0;
      const auto& s = model.edge(j, k).s_marginal;
      for (const Eigen::Index b : bins) best = std::max(best, s(b));
      if (best > threshold) g.set(0, j, k, true);
    }
  return g;
}

// Inverse spectral density of the VAR(1) process y^(t) = A y^(t-1) + e^(t):
// K(omega) = I + A'A + exp(-i omega) A + exp(i omega) A'.
inline Eigen::MatrixXcd var1_inverse_spectrum(const Eigen::MatrixXd& a, double omega) {
  const Eigen::Index p = a.rows();
  const std::complex<double> em(std::cos(omega), -std::sin(omega));
  Eigen::MatrixXcd k = (Eigen::MatrixXd::Identity(p, p) + a.transpose() * a).cast<std::complex<double>>();
  k += em * a.cast<std::complex<double>>();
  k += std::conj(em) * a.transpose().cast<std::complex<double>>();
  return k;
}

// Ground-truth static graph for the VAR(1) benchmark: union of the supports
// of K(omega) over the interior DFT grid of a length-n series.
inline GraphTrajectory var1_truth_graph(const Eigen::MatrixXd& a, Eigen::Index n) {
  const int p = static_cast<int>(a.rows());
  const Eigen::Index nf = (n - 1) / 2;
  GraphTrajectory g(p, 1);
  for (Eigen::Index b = 0; b < nf; ++b) {
    const double omega = 2.0 * M_PI * static_cast<double>(b + 1) / static_cast<double>(n);
    const Eigen::MatrixXcd k = var1_inverse_spectrum(a, omega);
    for (int j = 0; j < p; ++j)
      for (int kcol = j + 1; kcol < p; ++kcol)
        if (std::abs(k(j, kcol)) > 1e-12) g.set(0, j, kcol, true);
  }
  return g;
}

}  // namespace badge

#endif  // BADGE_SPECTRAL_HPP
