#ifndef BADGE_GRAPH_HPP
#define BADGE_GRAPH_HPP

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace badge {

// Sequence of symmetric adjacency matrices without self-loops, one per
// covariate point (n = 1 for static graphs).
struct GraphTrajectory {
  int p = 0;
  int n = 0;
  std::vector<std::uint8_t> adj;  // n * p * p, symmetric slices

  GraphTrajectory() = default;
  GraphTrajectory(int p_, int n_) : p(p_), n(n_), adj(static_cast<std::size_t>(n_) * p_ * p_, 0) {}

  bool at(int t, int j, int k) const {
    return adj[(static_cast<std::size_t>(t) * p + j) * p + k] != 0;
  }

  void set(int t, int j, int k, bool value) {
    if (j == k) throw std::invalid_argument("GraphTrajectory: no self-loops");
    adj[(static_cast<std::size_t>(t) * p + j) * p + k] = value ? 1 : 0;
    adj[(static_cast<std::size_t>(t) * p + k) * p + j] = value ? 1 : 0;
  }

  int edge_count(int t) const {
    int c = 0;
    for (int j = 0; j < p; ++j)
      for (int k = j + 1; k < p; ++k) c += at(t, j, k) ? 1 : 0;
    return c;
  }

  long total_edges() const {
    long c = 0;
    for (int t = 0; t < n; ++t) c += edge_count(t);
    return c;
  }

  double density() const {
    const double slots = static_cast<double>(n) * p * (p - 1) / 2.0;
    return slots > 0 ? static_cast<double>(total_edges()) / slots : 0.0;
  }

  friend bool operator==(const GraphTrajectory& a, const GraphTrajectory& b) {
    return a.p == b.p && a.n == b.n && a.adj == b.adj;
  }
};

}  // namespace badge

#endif  // BADGE_GRAPH_HPP
