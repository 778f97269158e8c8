#ifndef BADGE_SERIALIZE_HPP
#define BADGE_SERIALIZE_HPP

#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "badge/data.hpp"
#include "badge/engine.hpp"
#include "badge/graph.hpp"
#include "badge/metrics.hpp"
#include "badge/model.hpp"

// Versioned JSON documents: fitted models (checkpoint + export), graph
// trajectories, ground truth, observation sets and metric reports.

namespace badge {

namespace detail {

inline nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json scalar_series_json(const Eigen::Matrix<double, Eigen::Dynamic, 1>& v) {
  return vec_json(v);
}

inline nlohmann::json scalar_series_json(const Eigen::Matrix<std::complex<double>, Eigen::Dynamic, 1>& v) {
  nlohmann::json j;
  std::vector<double> re(v.size()), im(v.size());
  for (Eigen::Index t = 0; t < v.size(); ++t) {
    re[t] = v(t).real();
    im[t] = v(t).imag();
  }
  j["re"] = re;
  j["im"] = im;
  return j;
}

inline void scalar_series_from(const nlohmann::json& j, Eigen::Matrix<double, Eigen::Dynamic, 1>& v) {
  v = vec_from(j);
}

inline void scalar_series_from(const nlohmann::json& j,
                               Eigen::Matrix<std::complex<double>, Eigen::Dynamic, 1>& v) {
  const Eigen::VectorXd re = vec_from(j.at("re"));
  const Eigen::VectorXd im = vec_from(j.at("im"));
  v.resize(re.size());
  for (Eigen::Index t = 0; t < re.size(); ++t) v(t) = {re(t), im(t)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// model + fit result

template <class Scalar>
inline nlohmann::json model_to_json(const VariationalModel<Scalar>& m) {
  nlohmann::json doc;
  doc["format"] = "badge-model-v1";
  doc["domain"] = m.domain_tag == Domain::frequency ? "frequency" : "time";
  doc["p"] = m.p;
  doc["n"] = m.n;
  if (m.freqs.size() > 0) doc["freqs"] = detail::vec_json(m.freqs);

  const HyperState& h = m.hypers;
  doc["hypers"] = {{"pi1", {{"a", h.pi1_a}, {"b", h.pi1_b}}},
                   {"a00", {{"a", h.a00_c}, {"b", h.a00_d}}},
                   {"a11", {{"a", h.a11_c}, {"b", h.a11_d}}},
                   {"beta_smooth", {{"shape", h.beta_shape}, {"rate", h.beta_rate}}}};

  nlohmann::json edges = nlohmann::json::array();
  for (int j = 0; j < m.p; ++j)
    for (int k = j + 1; k < m.p; ++k) {
      const EdgeState<Scalar>& e = m.edge(j, k);
      nlohmann::json je;
      je["j"] = j;
      je["k"] = k;
      je["s_marginal"] = detail::vec_json(e.s_marginal);
      std::vector<std::vector<double>> pw(e.s_pairwise.rows());
      for (Eigen::Index t = 0; t < e.s_pairwise.rows(); ++t)
        pw[t] = {e.s_pairwise(t, 0), e.s_pairwise(t, 1), e.s_pairwise(t, 2), e.s_pairwise(t, 3)};
      je["s_pairwise"] = pw;
      je["j_mean"] = detail::scalar_series_json(e.j_mean);
      je["j_var"] = detail::vec_json(e.j_var);
      je["j_lag_cov"] = detail::vec_json(e.j_lag_cov);
      je["j_logdet_precision"] = e.j_logdet;
      je["alpha_shape"] = e.alpha_shape;
      je["alpha_rate"] = e.alpha_rate;
      edges.push_back(std::move(je));
    }
  doc["edges"] = std::move(edges);

  nlohmann::json diags = nlohmann::json::array();
  for (const DiagState& d : m.diags) {
    nlohmann::json jd;
    jd["omega_diag"] = detail::vec_json(d.chain.omega_diag);
    jd["omega_off"] = detail::vec_json(d.chain.omega_off);
    jd["potential"] = detail::vec_json(d.chain.potential);
    jd["mean"] = detail::vec_json(d.beliefs.mean);
    jd["variance"] = detail::vec_json(d.beliefs.variance);
    jd["lag_cov"] = detail::vec_json(d.beliefs.lag_cov);
    jd["logdet_precision"] = d.beliefs.logdet_precision;
    jd["exp_pos"] = detail::vec_json(d.exp_pos);
    jd["exp_neg"] = detail::vec_json(d.exp_neg);
    diags.push_back(std::move(jd));
  }
  doc["diags"] = std::move(diags);
  return doc;
}

template <class Scalar>
inline nlohmann::json fit_result_to_json(const FitResult<Scalar>& r) {
  nlohmann::json doc = model_to_json(r.model);
  doc["fit"] = {{"elbo_trace", r.elbo_trace},
                {"accepted", r.accepted_trace},
                {"rates", r.rate_trace},
                {"iterations_run", r.iterations_run},
                {"converged", r.converged},
                {"anneal_acceptance_rate", r.anneal_acceptance_rate},
                {"spd_jitter_events", r.spd_jitter_events},
                {"stalled_coordinates", r.stalled_coordinates},
                {"wall_time_seconds", r.wall_time_seconds}};
  return doc;
}

template <class Scalar>
inline VariationalModel<Scalar> model_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "badge-model-v1") throw parse_error("expected format badge-model-v1");
  const bool frequency = doc.value("domain", "time") == std::string("frequency");
  if (frequency != (ScalarTraits<Scalar>::components == 2))
    throw parse_error("model domain does not match the requested scalar type");

  VariationalModel<Scalar> m;
  m.p = doc.at("p").get<int>();
  m.n = doc.at("n").get<int>();
  m.domain_tag = frequency ? Domain::frequency : Domain::time;
  if (doc.contains("freqs")) m.freqs = detail::vec_from(doc["freqs"]);

  const auto& h = doc.at("hypers");
  m.hypers.pi1_a = h.at("pi1").at("a").get<double>();
  m.hypers.pi1_b = h.at("pi1").at("b").get<double>();
  m.hypers.a00_c = h.at("a00").at("a").get<double>();
  m.hypers.a00_d = h.at("a00").at("b").get<double>();
  m.hypers.a11_c = h.at("a11").at("a").get<double>();
  m.hypers.a11_d = h.at("a11").at("b").get<double>();
  m.hypers.beta_shape = h.at("beta_smooth").at("shape").get<double>();
  m.hypers.beta_rate = h.at("beta_smooth").at("rate").get<double>();
  hyper_expectations(m.hypers);

  m.edges.resize(m.edge_count());
  for (const auto& je : doc.at("edges")) {
    const int j = je.at("j").get<int>(), k = je.at("k").get<int>();
    EdgeState<Scalar>& e = m.edge(j, k);
    e.s_marginal = detail::vec_from(je.at("s_marginal"));
    const auto pw = je.at("s_pairwise").get<std::vector<std::vector<double>>>();
    e.s_pairwise.resize(static_cast<Eigen::Index>(pw.size()), 4);
    for (std::size_t t = 0; t < pw.size(); ++t)
      for (int c = 0; c < 4; ++c) e.s_pairwise(static_cast<Eigen::Index>(t), c) = pw[t][c];
    detail::scalar_series_from(je.at("j_mean"), e.j_mean);
    e.j_var = detail::vec_from(je.at("j_var"));
    e.j_lag_cov = detail::vec_from(je.at("j_lag_cov"));
    e.j_logdet = je.at("j_logdet_precision").get<double>();
    e.alpha_shape = je.at("alpha_shape").get<double>();
    e.alpha_rate = je.at("alpha_rate").get<double>();
  }

  m.diags.resize(m.p);
  int j = 0;
  for (const auto& jd : doc.at("diags")) {
    DiagState& d = m.diags[j++];
    d.chain.omega_diag = detail::vec_from(jd.at("omega_diag"));
    d.chain.omega_off = detail::vec_from(jd.at("omega_off"));
    d.chain.potential = detail::vec_from(jd.at("potential"));
    d.beliefs.mean = detail::vec_from(jd.at("mean"));
    d.beliefs.variance = detail::vec_from(jd.at("variance"));
    d.beliefs.lag_cov = detail::vec_from(jd.at("lag_cov"));
    d.beliefs.logdet_precision = jd.at("logdet_precision").get<double>();
    d.exp_pos = detail::vec_from(jd.at("exp_pos"));
    d.exp_neg = detail::vec_from(jd.at("exp_neg"));
  }
  return m;
}

// ---------------------------------------------------------------------------
// graphs, ground truth, metrics, observations

inline nlohmann::json graph_to_json(const GraphTrajectory& g) {
  nlohmann::json doc;
  doc["format"] = "badge-graph-v1";
  doc["p"] = g.p;
  doc["n"] = g.n;
  nlohmann::json edges = nlohmann::json::array();
  for (int t = 0; t < g.n; ++t)
    for (int j = 0; j < g.p; ++j)
      for (int k = j + 1; k < g.p; ++k)
        if (g.at(t, j, k)) edges.push_back({t, j, k});
  doc["edges"] = std::move(edges);
  return doc;
}

inline GraphTrajectory graph_from_json(const nlohmann::json& doc) {
  const std::string format = doc.value("format", "");
  GraphTrajectory g(doc.at("p").get<int>(), doc.at("n").get<int>());
  const char* key = format == "badge-truth-v1" ? "support" : "edges";
  if (format != "badge-graph-v1" && format != "badge-truth-v1")
    throw parse_error("expected a badge-graph-v1 or badge-truth-v1 document");
  for (const auto& e : doc.at(key)) {
    g.set(e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>(), true);
  }
  return g;
}

inline nlohmann::json truth_to_json(const GroundTruth& truth, const GraphTrajectory& support) {
  nlohmann::json doc;
  doc["format"] = "badge-truth-v1";
  doc["kind"] = truth.kind == GroundTruth::Kind::var1 ? "var1" : "time_varying";
  doc["p"] = support.p;
  doc["n"] = support.n;
  nlohmann::json edges = nlohmann::json::array();
  for (int t = 0; t < support.n; ++t)
    for (int j = 0; j < support.p; ++j)
      for (int k = j + 1; k < support.p; ++k)
        if (support.at(t, j, k)) edges.push_back({t, j, k});
  doc["support"] = std::move(edges);
  if (truth.kind == GroundTruth::Kind::var1) {
    std::vector<std::vector<double>> a(truth.a_matrix.rows());
    for (Eigen::Index r = 0; r < truth.a_matrix.rows(); ++r) {
      a[r].resize(truth.a_matrix.cols());
      for (Eigen::Index c = 0; c < truth.a_matrix.cols(); ++c) a[r][c] = truth.a_matrix(r, c);
    }
    doc["a_matrix"] = a;
  }
  return doc;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  return {{"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"per_time_edge_counts", r.per_time_edge_counts},
          {"wall_time_seconds", r.wall_time_seconds}};
}

inline nlohmann::json observations_to_json(const ObservationSet& data) {
  nlohmann::json doc;
  doc["format"] = "badge-data-v1";
  doc["axis"] = data.axis == Axis::frequency ? "frequency" : "time";
  if (data.sample_rate)
    doc["sample_rate"] = *data.sample_rate;
  else
    doc["sample_rate"] = nullptr;
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < data.cols(); ++j) names.push_back(data.variable_name(j));
  doc["names"] = names;
  nlohmann::json values = nlohmann::json::array();
  for (Eigen::Index t = 0; t < data.rows(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (data.mask(t, j))
        row.push_back(data.values(t, j));
      else
        row.push_back(nullptr);
    }
    values.push_back(std::move(row));
  }
  doc["values"] = std::move(values);
  return doc;
}

// ---------------------------------------------------------------------------
// file helpers

inline void write_json_file(const nlohmann::json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write " + path);
  out << doc.dump(1) << "\n";
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(path + ": invalid JSON: " + e.what());
  }
  return doc;
}

}  // namespace badge

#endif  // BADGE_SERIALIZE_HPP
