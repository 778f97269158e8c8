#ifndef BADGE_DATA_HPP
#define BADGE_DATA_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "badge/graph.hpp"
#include "badge/rng.hpp"

// Observation containers, the synthetic generators used by the benchmarks,
// CSV/JSON ingestion and unit-variance standardization.

namespace badge {

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Axis { time, frequency };

struct ObservationSet {
  Eigen::MatrixXd values;                       // N x P
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // true = observed
  Axis axis = Axis::time;
  std::optional<double> sample_rate;
  std::vector<std::string> names;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  bool has_missing() const { return !mask.all(); }

  void require_consistent() const {
    if (mask.rows() != values.rows() || mask.cols() != values.cols())
      throw std::invalid_argument("ObservationSet: mask and values dimensions differ");
    for (Eigen::Index j = 0; j < cols(); ++j)
      if (!mask.col(j).any())
        throw std::invalid_argument("ObservationSet: variable " + variable_name(j) +
                                    " has no observed values");
  }

  std::string variable_name(Eigen::Index j) const {
    if (j < static_cast<Eigen::Index>(names.size())) return names[j];
    return "v" + std::to_string(j + 1);
  }
};

struct GroundTruth {
  enum class Kind { time_varying, var1 };
  Kind kind = Kind::time_varying;
  std::vector<Eigen::MatrixXd> precision_trajectory;  // time mode
  Eigen::MatrixXd a_matrix;                           // var1 mode
  GraphTrajectory support;                            // per-t support (empty for var1)
};

namespace detail {

// uniform on [-1,-0.5] u [0.5,1]
inline double bimodal_coefficient(Rng& rng) {
  const double mag = rng.uniform(0.5, 1.0);
  return rng.uniform() < 0.5 ? -mag : mag;
}

}  // namespace detail

// Sinusoidal off-diagonal trajectories, a single global magnitude threshold
// chosen by bisection so the average active-pair count matches n_edges,
// diagonals set to the absolute row sum plus 0.1, and one Gaussian draw per
// time point from the resulting precision matrix.
inline std::pair<ObservationSet, GroundTruth> simulate_time_varying(int p, int n, int n_edges,
                                                                    std::uint64_t seed) {
  const int pe = p * (p - 1) / 2;
  if (p < 2 || n < 2) throw std::invalid_argument("simulate_time_varying: need p >= 2 and n >= 2");
  if (n_edges <= 0 || n_edges > pe)
    throw std::invalid_argument("simulate_time_varying: n_edges must lie in (0, p(p-1)/2]");

  Rng rng(seed);
  Eigen::MatrixXd raw(n, pe);  // off-diagonal values per pair, before thresholding
  {
    int e = 0;
    for (int j = 0; j < p; ++j)
      for (int k = j + 1; k < p; ++k, ++e) {
        const double a = detail::bimodal_coefficient(rng);
        const double b = detail::bimodal_coefficient(rng);
        const double c = detail::bimodal_coefficient(rng);
        const double d = rng.uniform(-0.25, 0.25);
        for (int t = 1; t <= n; ++t) {
          const double tt = static_cast<double>(t);
          raw(t - 1, e) = a * std::sin(M_PI * tt / (2.0 * n)) + b * std::cos(M_PI * tt / (2.0 * n)) +
                          c * std::sin(M_PI * (tt / n + d));
        }
      }
  }

  // bisection on the global threshold; active slots are |K| > threshold
  std::vector<double> mags(raw.size());
  Eigen::Map<Eigen::ArrayXd>(mags.data(), raw.size()) = raw.array().abs().reshaped();
  std::sort(mags.begin(), mags.end());
  const auto active_count = [&](double thr) {
    return static_cast<double>(mags.end() - std::upper_bound(mags.begin(), mags.end(), thr));
  };
  const double target = static_cast<double>(n_edges) * n;
  double thr = 0.0;
  if (active_count(0.0) > target) {
    double lo = 0.0, hi = mags.back();
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (active_count(mid) > target)
        lo = mid;
      else
        hi = mid;
    }
    thr = std::abs(active_count(lo) - target) <= std::abs(active_count(hi) - target) ? lo : hi;
  }

  GroundTruth truth;
  truth.kind = GroundTruth::Kind::time_varying;
  truth.support = GraphTrajectory(p, n);
  truth.precision_trajectory.assign(n, Eigen::MatrixXd::Zero(p, p));
  for (int t = 0; t < n; ++t) {
    Eigen::MatrixXd& prec = truth.precision_trajectory[t];
    int e = 0;
    for (int j = 0; j < p; ++j)
      for (int k = j + 1; k < p; ++k, ++e) {
        const double v = std::abs(raw(t, e)) > thr ? raw(t, e) : 0.0;
        prec(j, k) = prec(k, j) = v;
        if (v != 0.0) truth.support.set(t, j, k, true);
      }
    for (int j = 0; j < p; ++j) prec(j, j) = prec.row(j).cwiseAbs().sum() + 0.1;
  }

  ObservationSet data;
  data.values.resize(n, p);
  data.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, p, true);
  Eigen::VectorXd u(p);
  for (int t = 0; t < n; ++t) {
    const Eigen::LLT<Eigen::MatrixXd> llt(truth.precision_trajectory[t]);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("simulate_time_varying: generated precision not SPD");
    for (int j = 0; j < p; ++j) u(j) = rng.normal();
    data.values.row(t) = llt.matrixU().solve(u).transpose();
  }
  return {std::move(data), std::move(truth)};
}

// First-order vector autoregression with n_edges off-diagonal coefficients,
// rescaled to spectral radius <= 0.95, unit innovation covariance, and a
// 10*p burn-in from the zero state.
inline std::pair<ObservationSet, GroundTruth> simulate_var1(int p, int n, int n_edges,
                                                            std::uint64_t seed) {
  if (p < 2 || n < 2) throw std::invalid_argument("simulate_var1: need p >= 2 and n >= 2");
  const int slots = p * (p - 1);
  if (n_edges < 0 || n_edges > slots)
    throw std::invalid_argument("simulate_var1: n_edges must lie in [0, p(p-1)]");

  Rng rng(seed);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  {
    // uniform draw of n_edges distinct off-diagonal positions
    std::vector<int> pos(slots);
    for (int i = 0, s = 0; i < p * p; ++i) {
      if (i / p != i % p) pos[s++] = i;
    }
    for (int i = 0; i < n_edges; ++i) {
      const int r = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(slots - i)));
      std::swap(pos[i], pos[r]);
      const int row = pos[i] / p, col = pos[i] % p;
      const double mag = rng.uniform(0.2, 0.5);
      a(row, col) = rng.uniform() < 0.5 ? -mag : mag;
    }
  }
  const double radius = a.eigenvalues().cwiseAbs().maxCoeff();
  if (radius > 1e-12) a *= 0.95 / std::max(1.0, radius);

  ObservationSet data;
  data.values.resize(n, p);
  data.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, p, true);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(p), eps(p);
  const int burn_in = 10 * p;
  for (int t = -burn_in; t < n; ++t) {
    for (int j = 0; j < p; ++j) eps(j) = rng.normal();
    y = a * y + eps;
    if (t >= 0) data.values.row(t) = y.transpose();
  }

  GroundTruth truth;
  truth.kind = GroundTruth::Kind::var1;
  truth.a_matrix = std::move(a);
  return {std::move(data), std::move(truth)};
}

// ---------------------------------------------------------------------------
// file ingestion

namespace detail {

inline std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trimmed(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trimmed(cur));
  return out;
}

inline ObservationSet load_observations_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw parse_error("empty file");
  ObservationSet data;
  data.names = split_csv_line(line);
  const std::size_t p = data.names.size();
  if (p == 0 || (p == 1 && data.names[0].empty())) throw parse_error("missing header row");

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> observed;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trimmed(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != p)
      throw parse_error("row " + std::to_string(lineno) + ": expected " + std::to_string(p) +
                        " columns, found " + std::to_string(cells.size()));
    std::vector<double> vals(p, 0.0);
    std::vector<bool> obs(p, true);
    for (std::size_t j = 0; j < p; ++j) {
      if (cells[j].empty()) {
        obs[j] = false;
        continue;
      }
      const char* first = cells[j].data();
      const char* last = first + cells[j].size();
      const auto res = std::from_chars(first, last, vals[j]);
      if (res.ec != std::errc() || res.ptr != last)
        throw parse_error("row " + std::to_string(lineno) + ", column " + std::to_string(j + 1) +
                          ": not a number: '" + cells[j] + "'");
    }
    rows.push_back(std::move(vals));
    observed.push_back(std::move(obs));
  }
  if (rows.empty()) throw parse_error("no data rows");

  data.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
  data.mask.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t j = 0; j < p; ++j) {
      data.values(t, j) = rows[t][j];
      data.mask(t, j) = observed[t][j];
    }
  data.require_consistent();
  return data;
}

inline ObservationSet load_observations_json(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("invalid JSON: ") + e.what());
  }
  if (doc.value("format", "") != "badge-data-v1") throw parse_error("expected format badge-data-v1");
  ObservationSet data;
  data.axis = doc.value("axis", "time") == std::string("frequency") ? Axis::frequency : Axis::time;
  if (doc.contains("sample_rate") && !doc["sample_rate"].is_null())
    data.sample_rate = doc["sample_rate"].get<double>();
  if (doc.contains("names")) data.names = doc["names"].get<std::vector<std::string>>();
  const auto& values = doc.at("values");
  const std::size_t n = values.size();
  if (n == 0) throw parse_error("no data rows");
  const std::size_t p = values.at(0).size();
  data.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  data.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
      static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p), true);
  for (std::size_t t = 0; t < n; ++t) {
    if (values.at(t).size() != p) throw parse_error("row " + std::to_string(t + 1) + ": ragged row");
    for (std::size_t j = 0; j < p; ++j) {
      const auto& cell = values.at(t).at(j);
      if (cell.is_null()) {
        data.values(t, j) = 0.0;
        data.mask(t, j) = false;
      } else {
        data.values(t, j) = cell.get<double>();
      }
    }
  }
  if (doc.contains("mask")) {
    const auto& mask = doc["mask"];
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = 0; j < p; ++j) data.mask(t, j) = mask.at(t).at(j).get<int>() != 0;
  }
  data.require_consistent();
  return data;
}

}  // namespace detail

// CSV (header row of variable names, one row per covariate point, empty cell
// = missing) or the badge-data-v1 JSON document.
inline ObservationSet load_observations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  return json ? detail::load_observations_json(in) : detail::load_observations_csv(in);
}

inline void save_observations_csv(const ObservationSet& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write " + path);
  for (Eigen::Index j = 0; j < data.cols(); ++j)
    out << (j ? "," : "") << data.variable_name(j);
  out << "\n";
  char buf[32];
  for (Eigen::Index t = 0; t < data.rows(); ++t) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (j) out << ",";
      if (data.mask(t, j)) {
        std::snprintf(buf, sizeof(buf), "%.17g", data.values(t, j));
        out << buf;
      }
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

struct StandardizeRecord {
  Eigen::VectorXd scales;  // per-variable observed-sample standard deviation
  Eigen::VectorXd means;   // per-variable observed mean (zero if not subtracted)
};

// Rescales every column by its observed-sample standard deviation. Time
// pipelines also subtract the observed mean (the model assumes zero mean);
// spectral pipelines leave means untouched.
inline std::pair<ObservationSet, StandardizeRecord> standardize(const ObservationSet& data,
                                                                bool subtract_mean) {
  ObservationSet out = data;
  StandardizeRecord rec;
  const Eigen::Index p = data.cols();
  rec.scales.resize(p);
  rec.means = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double sum = 0.0;
    long count = 0;
    for (Eigen::Index t = 0; t < data.rows(); ++t)
      if (data.mask(t, j)) {
        sum += data.values(t, j);
        ++count;
      }
    if (count < 2)
      throw std::invalid_argument("standardize: variable " + data.variable_name(j) +
                                  " needs at least two observed values");
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Eigen::Index t = 0; t < data.rows(); ++t)
      if (data.mask(t, j)) {
        const double d = data.values(t, j) - mean;
        ss += d * d;
      }
    const double sd = std::sqrt(ss / static_cast<double>(count - 1));
    if (!(sd > 0.0))
      throw std::invalid_argument("standardize: variable " + data.variable_name(j) +
                                  " has zero variance");
    rec.scales(j) = sd;
    if (subtract_mean) rec.means(j) = mean;
    for (Eigen::Index t = 0; t < data.rows(); ++t) {
      if (data.mask(t, j))
        out.values(t, j) = (data.values(t, j) - rec.means(j)) / sd;
      else
        out.values(t, j) = 0.0;
    }
  }
  return {std::move(out), std::move(rec)};
}

}  // namespace badge

#endif  // BADGE_DATA_HPP
