#ifndef BADGE_METRICS_HPP
#define BADGE_METRICS_HPP

#include <stdexcept>
#include <vector>

#include "badge/graph.hpp"
#include "badge/model.hpp"

// Structure-recovery metrics and graph extraction from a fitted model.

namespace badge {

// Edge (j,k,t) present iff <s_jk^(t)> > threshold (strict, so ties at the
// threshold stay absent).
template <class Scalar>
inline GraphTrajectory extract_graphs(const VariationalModel<Scalar>& model, double threshold) {
  GraphTrajectory g(model.p, model.n);
  for (int j = 0; j < model.p; ++j)
    for (int k = j + 1; k < model.p; ++k) {
      const auto& s = model.edge(j, k).s_marginal;
      for (int t = 0; t < model.n; ++t)
        if (s(t) > threshold) g.set(t, j, k, true);
    }
  return g;
}

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<int> per_time_edge_counts;
  double wall_time_seconds = 0.0;
};

namespace detail {

struct Counts {
  long tp = 0, est = 0, truth = 0;
};

inline double precision_of(const Counts& c) {
  if (c.est > 0) return static_cast<double>(c.tp) / static_cast<double>(c.est);
  return c.truth > 0 ? 0.0 : 1.0;
}

inline double recall_of(const Counts& c) {
  if (c.truth > 0) return static_cast<double>(c.tp) / static_cast<double>(c.truth);
  return c.est > 0 ? 0.0 : 1.0;
}

inline double f1_of(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

}  // namespace detail

// Micro-averaged precision/recall/F1 pooled over all (t, j<k) slots; the
// macro variant averages the per-slice scores instead.
inline MetricsReport structure_metrics(const GraphTrajectory& est, const GraphTrajectory& truth,
                                       bool macro = false) {
  if (est.p != truth.p || est.n != truth.n)
    throw std::invalid_argument("structure_metrics: dimension mismatch");
  MetricsReport report;
  report.per_time_edge_counts.resize(est.n);

  double psum = 0.0, rsum = 0.0, fsum = 0.0;
  detail::Counts pooled;
  for (int t = 0; t < est.n; ++t) {
    detail::Counts c;
    for (int j = 0; j < est.p; ++j)
      for (int k = j + 1; k < est.p; ++k) {
        const bool e = est.at(t, j, k), g = truth.at(t, j, k);
        c.est += e;
        c.truth += g;
        c.tp += (e && g);
      }
    report.per_time_edge_counts[t] = static_cast<int>(c.est);
    pooled.tp += c.tp;
    pooled.est += c.est;
    pooled.truth += c.truth;
    const double p = detail::precision_of(c), r = detail::recall_of(c);
    psum += p;
    rsum += r;
    fsum += detail::f1_of(p, r);
  }
  if (macro) {
    report.precision = psum / est.n;
    report.recall = rsum / est.n;
    report.f1 = fsum / est.n;
  } else {
    report.precision = detail::precision_of(pooled);
    report.recall = detail::recall_of(pooled);
    report.f1 = detail::f1_of(report.precision, report.recall);
  }
  return report;
}

}  // namespace badge

#endif  // BADGE_METRICS_HPP
